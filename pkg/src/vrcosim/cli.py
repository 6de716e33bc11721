"""Command-line entry point: ``vrcosim <command> [options]``.

Configuration is a YAML file merged over built-in defaults, then
environment overrides, then command-line flags. Schema::

    seed: 0                      # master seed, propagated to ppo.seed and eval
    output_dir: runs/default
    model: null                  # arm model YAML (null = built-in default)
    bridge:
      address: null              # host:port or unix:/path; null = in-process loopback
      spawn_server: true         # start an app server child process at that address
    game: {}                     # GameConfig overrides used by the app
    env: {}                      # EnvConfig fields (placement may be "random")
    ppo: {}                      # PpoConfig fields
    train: {checkpoint_every: 10, max_updates: null, record_session: false}
    eval: {checkpoint: null, n_rounds: 1, random_baseline: true}

Environment overrides: ``VRCOSIM_OUTPUT_DIR``, ``VRCOSIM_BRIDGE_ADDRESS``.

Exit codes: 0 success, 1 run failure (divergence, crashed environment),
2 invalid input or configuration, 3 bridge/server failure.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import signal
import socket
import subprocess
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import yaml

from . import __version__
from .armsim.model import load_model
from .bridge.codec import iter_frames
from .bridge.dump import DumpFrame, FrameRecorder
from .bridge.errors import BridgeError
from .bridge.messages import Hello, Reset, StateUpdateMsg
from .bridge.net import make_server, parse_address
from .trainer.checkpoint import CheckpointError
from .trainer.config import EnvConfig, PpoConfig
from .trainer.evaluate import evaluate_policy
from .trainer.ppo import TrainingDiverged
from .trainer.rollout import EnvFailure
from .trainer.train import Trainer, load_policy
from .whacapp.app import WhacApp
from .whacapp.config import GameConfig

log = logging.getLogger("vrcosim")

EXIT_OK, EXIT_FAILURE, EXIT_INVALID, EXIT_BRIDGE = 0, 1, 2, 3

DEFAULTS: dict = {
    "seed": 0,
    "output_dir": "runs/default",
    "model": None,
    "bridge": {"address": None, "spawn_server": True},
    "game": {},
    "env": {},
    "ppo": {},
    "train": {"checkpoint_every": 10, "max_updates": None, "record_session": False},
    "eval": {"checkpoint": None, "n_rounds": 1, "random_baseline": True},
}


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INVALID):
        super().__init__(message)
        self.code = code


# sections whose keys are checked by the corresponding dataclass, not here
OPEN_SECTIONS = ("game", "env", "ppo")


def _merge(base: dict, over: dict, path: str = "", strict: bool = True) -> dict:
    out = copy.deepcopy(base)
    for key, value in (over or {}).items():
        if strict and key not in base:
            raise CliError(f"unknown config key {path + key!r}")
        if isinstance(out.get(key), dict) and (strict or isinstance(value, dict)):
            if not isinstance(value, dict):
                raise CliError(f"config key {path + key!r} must be a mapping")
            open_section = not path and key in OPEN_SECTIONS
            out[key] = _merge(out[key], value, f"{path}{key}.", strict and not open_section)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _parse_set(items: list[str]) -> dict:
    """``a.b=value`` pairs (values parsed as YAML scalars) into a nested dict."""
    result: dict = {}
    for item in items or []:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise CliError(f"--set expects key=value, got {item!r}")
        node = result
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = yaml.safe_load(raw)
    return result


def load_config(path: str | None, args: argparse.Namespace) -> dict:
    data: dict = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                data = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise CliError(f"cannot read config {path}: {exc.strerror}") from exc
        except yaml.YAMLError as exc:
            raise CliError(f"config {path} is not valid YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise CliError(f"config {path} must be a mapping at top level")
    cfg = _merge(DEFAULTS, data)
    env_over: dict = {}
    if os.environ.get("VRCOSIM_OUTPUT_DIR"):
        env_over["output_dir"] = os.environ["VRCOSIM_OUTPUT_DIR"]
    if os.environ.get("VRCOSIM_BRIDGE_ADDRESS"):
        env_over["bridge"] = {"address": os.environ["VRCOSIM_BRIDGE_ADDRESS"]}
    cfg = _merge(cfg, env_over)
    cfg = _merge(cfg, _parse_set(getattr(args, "set", None)))
    flags: dict = {}
    if getattr(args, "output_dir", None):
        flags["output_dir"] = args.output_dir
    if getattr(args, "seed", None) is not None:
        flags["seed"] = args.seed
    if getattr(args, "bridge_address", None):
        flags["bridge"] = {"address": args.bridge_address}
    cfg = _merge(cfg, flags)
    cfg["ppo"] = dict(cfg["ppo"], seed=int(cfg["seed"]))
    _validate(cfg)
    # resolve defaults so the effective config is complete
    cfg["ppo"] = PpoConfig.from_dict(cfg["ppo"]).to_dict()
    cfg["game"] = GameConfig.from_dict(cfg["game"]).to_dict()
    env = EnvConfig.from_dict(cfg["env"]).to_dict()
    env.pop("game")
    env.pop("address")
    cfg["env"] = env
    return cfg


def _validate(cfg: dict) -> None:
    try:
        PpoConfig.from_dict(cfg["ppo"])
        EnvConfig.from_dict(_env_dict(cfg))
        GameConfig.from_dict(cfg["game"])
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid config: {exc}") from exc
    if cfg["model"] is not None and not Path(cfg["model"]).is_file():
        raise CliError(f"arm model file {cfg['model']} does not exist")
    if cfg["bridge"]["address"]:
        try:
            parse_address(cfg["bridge"]["address"])
        except ValueError as exc:
            raise CliError(str(exc)) from exc


def _env_dict(cfg: dict) -> dict:
    env = dict(cfg["env"])
    env.setdefault("game", cfg["game"])
    if cfg["bridge"]["address"]:
        env["address"] = cfg["bridge"]["address"]
    return env


def _print_config(cfg: dict) -> None:
    sys.stdout.write(yaml.safe_dump(cfg, sort_keys=True))


def _write_metadata(out: Path, command: str, cfg: dict, outputs: list[str]) -> None:
    meta = {"command": command, "version": __version__, "finished_at": datetime.now(timezone.utc).isoformat(),
            "outputs": outputs}
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")
    (out / "effective_config.yaml").write_text(yaml.safe_dump(cfg, sort_keys=True), encoding="utf-8")


# -- app server child process ------------------------------------------------
class ServerProcess:
    """An app server running as a child process, terminated on exit or signal."""

    def __init__(self, address: str, game: dict):
        self.address = address
        family, addr = parse_address(address)
        if family == socket.AF_INET:
            probe = socket.socket(family, socket.SOCK_STREAM)
            try:
                probe.bind(addr)
            except OSError as exc:
                raise CliError(f"bridge address {address} unavailable: {exc.strerror}", EXIT_BRIDGE) from exc
            finally:
                probe.close()
        cmd = [sys.executable, "-m", "vrcosim", "serve", "--address", address, "--game", json.dumps(game)]
        self.proc = subprocess.Popen(cmd)
        self._wait_ready(family, addr)

    def _wait_ready(self, family, addr, timeout: float = 30.0) -> None:
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            if self.proc.poll() is not None:
                raise CliError(f"app server exited with code {self.proc.returncode}", EXIT_BRIDGE)
            s = socket.socket(family, socket.SOCK_STREAM)
            try:
                s.connect(addr)
                return
            except OSError:
                time.sleep(0.05)
            finally:
                s.close()
        self.stop()
        raise CliError(f"app server at {self.address} did not come up", EXIT_BRIDGE)

    def stop(self) -> None:
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.stop()


class _NullContext:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def _server_for(cfg: dict):
    address = cfg["bridge"]["address"]
    if address and cfg["bridge"]["spawn_server"]:
        return ServerProcess(address, cfg["game"])
    return _NullContext()


def _terminate_on_signal() -> None:
    def handler(signum, frame):
        raise KeyboardInterrupt(f"signal {signum}")

    signal.signal(signal.SIGTERM, handler)


# -- commands ----------------------------------------------------------------
def cmd_train(cfg: dict, resume: str | None = None) -> int:
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "train_log.jsonl"
    ckpt_path = out / "checkpoint.vrck"
    tcfg = cfg["train"]
    model = load_model(cfg["model"])
    with _server_for(cfg):
        recorder = FrameRecorder(out / "session0.dump") if tcfg["record_session"] else None
        try:
            if resume:
                trainer = Trainer.load(resume)
            else:
                if log_path.exists():
                    log_path.unlink()
                trainer = Trainer(PpoConfig.from_dict(cfg["ppo"]), EnvConfig.from_dict(_env_dict(cfg)), model,
                                  recorder=recorder)
            try:
                trainer.train(log_path=log_path, checkpoint_path=ckpt_path,
                              checkpoint_every=int(tcfg["checkpoint_every"]), max_updates=tcfg["max_updates"])
                trainer.save(ckpt_path)
            finally:
                trainer.close()
        except TrainingDiverged as exc:
            raise CliError(f"training diverged: {exc}; checkpoint at {exc.checkpoint_path}", EXIT_FAILURE) from exc
        except EnvFailure as exc:
            raise CliError(f"{exc}; checkpoint at {ckpt_path}", EXIT_BRIDGE) from exc
        finally:
            if recorder is not None:
                recorder.close()
    outputs = [log_path.name, ckpt_path.name] + (["session0.dump"] if tcfg["record_session"] else [])
    _write_metadata(out, "train", cfg, outputs)
    print(f"training finished: {trainer.steps} steps, {trainer.update} updates -> {ckpt_path}")
    return EXIT_OK


def cmd_eval(cfg: dict, checkpoint: str | None, random_only: bool = False) -> int:
    from .tools.metrics import metrics_from_records
    from .tools.report import write_report

    out = Path(cfg["output_dir"])
    ecfg = cfg["eval"]
    checkpoint = checkpoint or ecfg["checkpoint"]
    policy = rms = None
    env_cfg = EnvConfig.from_dict(_env_dict(cfg))
    if not random_only:
        if not checkpoint:
            raise CliError("eval needs --checkpoint (or eval.checkpoint in the config) unless --random is given")
        if not Path(checkpoint).is_file():
            raise CliError(f"checkpoint {checkpoint} does not exist")
        try:
            policy, rms, header = load_policy(checkpoint)
        except (CheckpointError, KeyError) as exc:
            raise CliError(f"checkpoint {checkpoint} is not usable: {exc}") from exc
        trained_env = dict(header["env"])
        trained_env.pop("address", None)
        env_cfg = replace(EnvConfig.from_dict(trained_env), address=env_cfg.address)
    out.mkdir(parents=True, exist_ok=True)
    model = load_model(cfg["model"])
    n_rounds = int(ecfg["n_rounds"])
    records: list[dict] = []
    with _server_for(cfg):
        if policy is not None:
            records += evaluate_policy(policy, rms, env_cfg, n_rounds, cfg["seed"], model=model, user_label="policy")
        if random_only or ecfg["random_baseline"]:
            records += evaluate_policy(None, None, env_cfg, n_rounds, cfg["seed"], model=model, user_label="random")
    log_path = out / "eval_log.jsonl"
    with log_path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    summary = write_report(metrics_from_records(records), out / "report")
    for c in summary["configs"]:
        print(f"{c['user']:>7} {c['difficulty']:>6}/{c['placement']:<4} hits {c['mean_hits']:.2f} "
              f"misses {c['mean_misses']:.2f}")
    _write_metadata(out, "eval", cfg, [log_path.name, "report/"])
    return EXIT_OK


def cmd_replay(dump: str, game: dict, difficulty: str | None = None, realtime: bool = False) -> int:
    from .bridge.dump import replay_dump

    try:
        data = Path(dump).read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read dump {dump}: {exc.strerror}") from exc
    frames: list[DumpFrame] = []
    broken: str | None = None
    try:
        for i, off, raw, msg in iter_frames(data):
            frames.append(DumpFrame(i, off, raw, msg))
    except BridgeError as exc:
        broken = str(exc)
    if not frames or not isinstance(frames[0].message, Hello):
        raise CliError(f"dump {dump} does not start with a HELLO frame")
    if difficulty is not None:
        for f in frames:
            if isinstance(f.message, Reset):
                recorded = dict(f.message.config).get("difficulty", GameConfig.from_dict(game).difficulty)
                if recorded != difficulty:
                    raise CliError(f"difficulty mismatch: dump frame {f.index} resets to {recorded!r}, "
                                   f"replay requested {difficulty!r}")
    throttle = None
    if realtime:
        def throttle(msg):
            if isinstance(msg, StateUpdateMsg):
                time.sleep(max(0.0, msg.t_next - msg.t_current))

    result = replay_dump(frames, WhacApp(GameConfig.from_dict(game)), throttle)
    if result.matched and broken is not None:
        # the decodable prefix replays cleanly, so the recording breaks at the next frame
        print(f"replay diverged at frame {len(frames)} after {result.frames_checked} app frames: "
              f"undecodable frame ({broken})")
        return EXIT_FAILURE
    if not result.matched:
        print(f"replay diverged at frame {result.first_divergence} after {result.frames_checked} "
              f"app frames: {result.detail}")
        return EXIT_FAILURE
    print(f"replay matched: {result.frames_checked} app frames identical")
    return EXIT_OK


def cmd_envelope(cfg: dict, resolution: int, variant: str, tolerance: float) -> int:
    from .tools.envelope import check_targets, reach_envelope, whac_targets

    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    model = load_model(cfg["model"])
    cloud = reach_envelope(model, resolution=resolution, variant=variant)
    rows = []
    for placement, pts in whac_targets(model).items():
        for k, chk in enumerate(check_targets(cloud, pts, tolerance)):
            rows.append({"placement": placement, "cell": k, "target": [float(v) for v in chk.target],
                         "status": chk.status, "distance": chk.distance, "angular_gap": chk.angular_gap})
    with (out / "envelope_points.csv").open("w", encoding="utf-8") as fh:
        fh.write("x,y,z\n")
        for p in cloud.points:
            fh.write(f"{p[0]!r},{p[1]!r},{p[2]!r}\n")
    (out / "envelope_meta.json").write_text(json.dumps(cloud.metadata(), indent=2, sort_keys=True), encoding="utf-8")
    (out / "target_check.json").write_text(json.dumps(rows, indent=2, sort_keys=True), encoding="utf-8")
    counts: dict[str, int] = {}
    for r in rows:
        counts[r["status"]] = counts.get(r["status"], 0) + 1
    print("targets:", ", ".join(f"{k} {v}" for k, v in sorted(counts.items())))
    _write_metadata(out, "envelope", cfg, ["envelope_points.csv", "envelope_meta.json", "target_check.json"])
    return EXIT_OK


def cmd_reward_scale(cfg: dict, scenario: str, horizon: int) -> int:
    from .tools.reward_scale import SCENARIOS, ScalingScenario, reward_scale_report

    if scenario not in SCENARIOS:
        raise CliError(f"scenario must be one of {SCENARIOS}")
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    game = GameConfig.from_dict(cfg["game"])
    model = load_model(cfg["model"])
    report = reward_scale_report(game.weights, ScalingScenario(kind=scenario, horizon=horizon), model.fatigue)
    (out / f"reward_scale_{scenario}.csv").write_text(report.to_csv(), encoding="utf-8")
    summary = report.summary()
    (out / f"reward_scale_{scenario}.json").write_text(json.dumps(summary, indent=2, sort_keys=True),
                                                       encoding="utf-8")
    print(json.dumps(summary, sort_keys=True))
    _write_metadata(out, "reward-scale", cfg, [f"reward_scale_{scenario}.csv", f"reward_scale_{scenario}.json"])
    return EXIT_OK


def cmd_report(cfg: dict, logs: list[str], dumps: list[str]) -> int:
    from .tools.metrics import MetricsError, metrics_from_log
    from .tools.report import write_report

    if not logs and not dumps:
        raise CliError("report needs at least one evaluation log or session dump")
    for p in [*logs, *dumps]:
        if not Path(p).is_file():
            raise CliError(f"input {p} does not exist")
    try:
        rounds = metrics_from_log(logs, dumps)
    except (MetricsError, BridgeError) as exc:
        raise CliError(str(exc)) from exc
    out = Path(cfg["output_dir"])
    summary = write_report(rounds, out)
    print(f"report with {len(summary['configs'])} configurations written to {out}")
    _write_metadata(out, "report", cfg, ["report.json"])
    return EXIT_OK


def cmd_tools(name: str, cfg: dict, args: argparse.Namespace) -> int:
    if name == "envelope":
        return cmd_envelope(cfg, args.resolution, args.variant, args.tolerance)
    if name == "reward-scale":
        return cmd_reward_scale(cfg, args.scenario, args.horizon)
    if name == "report":
        return cmd_report(cfg, args.logs, args.dump)
    raise CliError(f"unknown tool {name!r}")


def cmd_serve(address: str, game: dict) -> int:
    try:
        server = make_server(address, lambda: WhacApp(GameConfig.from_dict(game)))
    except OSError as exc:
        raise CliError(f"cannot listen on {address}: {exc.strerror}", EXIT_BRIDGE) from exc
    _terminate_on_signal()
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


# -- argument parsing --------------------------------------------------------
def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config entry, e.g. --set ppo.total_steps=2000 (repeatable)")
    p.add_argument("--output-dir", help="output directory (overrides VRCOSIM_OUTPUT_DIR)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--bridge-address", help="host:port or unix:/path (overrides VRCOSIM_BRIDGE_ADDRESS)")
    p.add_argument("--print-effective-config", action="store_true",
                   help="print the merged configuration and exit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vrcosim", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a policy with PPO")
    _common(p)
    p.add_argument("--resume", metavar="CHECKPOINT", help="continue training from a checkpoint")

    p = sub.add_parser("eval", help="evaluate a checkpoint over the six-configuration grid and write a report")
    _common(p)
    p.add_argument("--checkpoint", help="checkpoint file")
    p.add_argument("--random", action="store_true", help="evaluate only the uniform random policy")
    p.add_argument("--n-rounds", type=int, help="rounds per configuration")

    p = sub.add_parser("replay", help="replay a recorded session dump against a fresh app")
    _common(p)
    p.add_argument("dump", help="session dump file")
    p.add_argument("--difficulty", help="fail cleanly if the recording uses a different difficulty")
    p.add_argument("--realtime", action="store_true", help="throttle playback to simulated time")

    p = sub.add_parser("envelope", help="reach envelope and target reachability check")
    _common(p)
    p.add_argument("--resolution", type=int, default=100, help="samples per shoulder DOF (default 100)")
    p.add_argument("--variant", choices=("controller", "bare"), default="controller")
    p.add_argument("--tolerance", type=float, default=0.005, help="boundary band in metres")

    p = sub.add_parser("reward-scale", help="reward component magnitudes for a scripted scenario")
    _common(p)
    p.add_argument("--scenario", default="worst_case",
                   help="worst_case | best_case | linear_interp | quadratic_interp")
    p.add_argument("--horizon", type=int, default=1200, help="number of steps")

    p = sub.add_parser("report", help="report bundle from evaluation logs and/or session dumps")
    _common(p)
    p.add_argument("logs", nargs="*", help="evaluation JSON-lines logs")
    p.add_argument("--dump", action="append", default=[], help="session dump (repeatable)")

    p = sub.add_parser("serve", help="run the app as a bridge server")
    p.add_argument("--address", required=True, help="host:port or unix:/path")
    p.add_argument("--game", default="{}", help="GameConfig overrides as JSON")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "serve":
            try:
                game = json.loads(args.game)
                GameConfig.from_dict(game)
            except (ValueError, TypeError) as exc:
                raise CliError(f"invalid --game: {exc}") from exc
            return cmd_serve(args.address, game)
        cfg = load_config(args.config, args)
        if args.command == "eval" and args.n_rounds is not None:
            cfg["eval"]["n_rounds"] = args.n_rounds
        if args.print_effective_config:
            _print_config(cfg)
            return EXIT_OK
        _terminate_on_signal()
        if args.command == "train":
            return cmd_train(cfg, args.resume)
        if args.command == "eval":
            return cmd_eval(cfg, args.checkpoint, args.random)
        if args.command == "replay":
            return cmd_replay(args.dump, cfg["game"], args.difficulty, args.realtime)
        return cmd_tools(args.command, cfg, args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
