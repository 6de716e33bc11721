"""Command-line interface: configuration, commands, outputs and exit codes."""
from __future__ import annotations

import json
import socket

import pytest
import yaml

from vrcosim.cli import main

TINY = {
    "seed": 1,
    "env": {"difficulty": "easy", "placement": "mid", "round_duration": 1.0},
    "ppo": {"n_envs": 2, "steps_per_env": 30, "batch_size": 30, "total_steps": 180, "n_epochs": 2,
            "hidden": [16]},
    "train": {"checkpoint_every": 1},
    "eval": {"n_rounds": 1},
}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(TINY))
    return path


def run(*argv) -> int:
    return main([str(a) for a in argv])


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_effective_config_precedence(config, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("VRCOSIM_OUTPUT_DIR", str(tmp_path / "from_env"))
    assert run("train", "--config", config, "--set", "ppo.lr_initial=0.001", "--set", "env.constrained=true",
               "--seed", 9, "--print-effective-config") == 0
    cfg = yaml.safe_load(capsys.readouterr().out)
    assert cfg["output_dir"] == str(tmp_path / "from_env")
    assert cfg["ppo"]["lr_initial"] == 0.001 and cfg["ppo"]["n_envs"] == 2
    assert cfg["seed"] == 9 and cfg["ppo"]["seed"] == 9
    assert cfg["env"]["constrained"] is True
    # defaults are filled in for everything the file leaves out
    assert cfg["ppo"]["kl_limit"] == 1.0 and cfg["game"]["velocity_threshold"] == 0.8

    assert run("train", "--config", config, "--output-dir", tmp_path / "flag", "--print-effective-config") == 0
    assert yaml.safe_load(capsys.readouterr().out)["output_dir"] == str(tmp_path / "flag")


@pytest.mark.parametrize("argv", [
    ["--set", "ppo.learning_rate=1"],
    ["--set", "env.placement=sideways"],
    ["--set", "nonsense"],
    ["--set", "ppo.batch_size=1000"],
])
def test_invalid_configuration_exits_2(config, argv, capsys):
    assert run("train", "--config", config, *argv, "--print-effective-config") == 2
    assert "error:" in capsys.readouterr().err


def test_missing_config_file_exits_2(tmp_path, capsys):
    assert run("train", "--config", tmp_path / "nope.yaml") == 2


def test_train_is_reproducible_and_resumable(config, tmp_path, capsys):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert run("train", "--config", config, "--output-dir", a, "--set", "train.record_session=true") == 0
    assert run("train", "--config", config, "--output-dir", b) == 0
    log_a = (a / "train_log.jsonl").read_text()
    assert log_a == (b / "train_log.jsonl").read_text()
    assert len(log_a.splitlines()) == 3
    assert (a / "checkpoint.vrck").read_bytes() == (b / "checkpoint.vrck").read_bytes()
    meta = json.loads((a / "metadata.json").read_text())
    assert meta["command"] == "train" and "session0.dump" in meta["outputs"]
    assert (a / "effective_config.yaml").exists()

    assert run("train", "--config", config, "--output-dir", c, "--set", "train.max_updates=1") == 0
    assert len((c / "train_log.jsonl").read_text().splitlines()) == 1
    assert run("train", "--config", config, "--output-dir", c, "--resume", c / "checkpoint.vrck") == 0
    assert (c / "train_log.jsonl").read_text() == log_a
    assert (c / "checkpoint.vrck").read_bytes() == (a / "checkpoint.vrck").read_bytes()


def test_eval_report_and_replay(config, tmp_path, capsys):
    run_dir, ev = tmp_path / "run", tmp_path / "eval"
    assert run("train", "--config", config, "--output-dir", run_dir, "--set", "train.record_session=true") == 0
    ckpt = run_dir / "checkpoint.vrck"

    assert run("eval", "--config", config, "--output-dir", ev, "--checkpoint", ckpt) == 0
    recs = [json.loads(line) for line in (ev / "eval_log.jsonl").read_text().splitlines()]
    assert len(recs) == 12
    assert {r["user"] for r in recs} == {"policy", "random"}
    assert [(r["difficulty"], r["placement"]) for r in recs if r["user"] == "policy"] == [
        ("easy", "mid"), ("medium", "mid"), ("hard", "mid"), ("medium", "low"), ("medium", "mid"),
        ("medium", "high")]
    assert all(r["steps"] == 20 for r in recs)
    report = json.loads((ev / "report" / "report.json").read_text())
    assert report["warnings"] == []
    assert "policy" in capsys.readouterr().out

    assert run("eval", "--config", config, "--output-dir", ev, "--checkpoint", tmp_path / "missing.vrck") == 2
    assert run("eval", "--config", config, "--output-dir", ev) == 2
    (tmp_path / "junk.vrck").write_bytes(b"not a checkpoint")
    assert run("eval", "--config", config, "--output-dir", ev, "--checkpoint", tmp_path / "junk.vrck") == 2

    rep = tmp_path / "rep"
    assert run("report", "--config", config, "--output-dir", rep, ev / "eval_log.jsonl",
               "--dump", run_dir / "session0.dump") == 0
    assert (rep / "hits_misses.csv").exists() and (rep / "report.json").exists()

    dump = run_dir / "session0.dump"
    capsys.readouterr()
    assert run("replay", "--config", config, dump) == 0
    assert "matched" in capsys.readouterr().out
    assert run("replay", "--config", config, dump, "--difficulty", "hard") == 2
    data = bytearray(dump.read_bytes())
    data[len(data) // 2] ^= 0xFF
    bad = tmp_path / "bad.dump"
    bad.write_bytes(bytes(data))
    assert run("replay", "--config", config, bad) == 1
    assert "diverged at frame" in capsys.readouterr().out
    assert run("replay", "--config", config, tmp_path / "none.dump") == 2


def test_random_only_eval_with_constrained_flag(config, tmp_path):
    ev = tmp_path / "ev"
    assert run("eval", "--config", config, "--output-dir", ev, "--random", "--set", "env.constrained=true",
               "--set", "env.round_duration=0.5") == 0
    recs = [json.loads(line) for line in (ev / "eval_log.jsonl").read_text().splitlines()]
    assert len(recs) == 6 and all(r["user"] == "random" and r["constrained"] for r in recs)


def test_analysis_tools(config, tmp_path, capsys):
    out = tmp_path / "tools"
    assert run("envelope", "--config", config, "--output-dir", out, "--resolution", 20) == 0
    check = json.loads((out / "target_check.json").read_text())
    assert len(check) == 27 and all(c["status"] != "unreachable" for c in check)
    assert (out / "envelope_points.csv").read_text().count("\n") == 401

    assert run("reward-scale", "--config", config, "--output-dir", out, "--scenario", "best_case",
               "--horizon", 100) == 0
    summary = json.loads((out / "reward_scale_best_case.json").read_text())
    assert summary["cumulative"]["C_d"] == 0.0
    assert (out / "reward_scale_best_case.csv").exists()
    assert run("reward-scale", "--config", config, "--output-dir", out, "--scenario", "nope") == 2


def test_training_over_a_spawned_tcp_server_matches_loopback(config, tmp_path):
    tcp, loop = tmp_path / "tcp", tmp_path / "loop"
    assert run("train", "--config", config, "--output-dir", tcp, "--bridge-address",
               f"127.0.0.1:{free_port()}") == 0
    assert run("train", "--config", config, "--output-dir", loop) == 0
    assert (tcp / "train_log.jsonl").read_text() == (loop / "train_log.jsonl").read_text()


def test_port_in_use_exits_3(config, tmp_path, capsys):
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        s.listen()
        port = s.getsockname()[1]
        assert run("train", "--config", config, "--output-dir", tmp_path, "--bridge-address",
                   f"127.0.0.1:{port}") == 3
    assert "unavailable" in capsys.readouterr().err


def test_random_placement_training_runs(config, tmp_path):
    out = tmp_path / "rand"
    assert run("train", "--config", config, "--output-dir", out, "--set", "env.placement=random",
               "--set", "ppo.total_steps=60") == 0
    assert len((out / "train_log.jsonl").read_text().splitlines()) == 1
