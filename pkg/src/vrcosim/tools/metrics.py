"""Per-round performance, effort and strategy metrics.

Accepted inputs:

* JSON-lines round records, as written by the app's episode log or by
  policy evaluation (keys ``hits``, ``misses``, ``per_cell`` and optionally
  ``slow_contacts``, ``hit_speeds``, ``hammer_depths``, ``max_fatigue``)
* bridge frame dumps, from which rounds are rebuilt out of the per-step
  observation log entries and the ``fatigue`` state-update extension
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..bridge.dump import read_dump
from ..bridge.messages import ObservationMsg, Reset, ResetAck, StateUpdateMsg
from ..whacapp.config import GRID_SIZE, N_CELLS


class MetricsError(ValueError):
    pass


@dataclass
class RoundMetrics:
    hits: int
    misses: int
    slow_contacts: int
    hit_rate: float
    hitting_speeds: list[float]
    hammer_depths: list[float]
    per_cell_hit_rate: np.ndarray  # (3, 3); NaN where nothing spawned
    per_cell_spawns: np.ndarray  # (3, 3)
    per_cell_hits: np.ndarray  # (3, 3)
    max_fatigued: float
    labels: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        rate = [[None if np.isnan(v) else float(v) for v in row] for row in self.per_cell_hit_rate]
        return {
            **self.labels,
            "hits": self.hits,
            "misses": self.misses,
            "slow_contacts": self.slow_contacts,
            "hit_rate": self.hit_rate,
            "hitting_speeds": list(self.hitting_speeds),
            "hammer_depths": list(self.hammer_depths),
            "per_cell_hit_rate": rate,
            "per_cell_spawns": self.per_cell_spawns.astype(int).tolist(),
            "per_cell_hits": self.per_cell_hits.astype(int).tolist(),
            "max_fatigued": self.max_fatigued,
        }


LABEL_KEYS = ("user", "sweep", "difficulty", "placement", "constrained", "round", "episode", "seed", "config_index")


def hit_rate(hits: int, misses: int) -> float:
    return hits / (hits + misses) if hits + misses > 0 else 0.0


def round_from_record(rec: dict) -> RoundMetrics:
    try:
        hits = int(rec["hits"])
        misses = int(rec["misses"])
        cells = rec["per_cell"]
        if len(cells) != N_CELLS:
            raise MetricsError(f"per_cell must have {N_CELLS} entries")
        spawns = np.array([int(c["spawns"]) for c in cells], dtype=float).reshape(GRID_SIZE, GRID_SIZE)
        cell_hits = np.array([int(c["hits"]) for c in cells], dtype=float).reshape(GRID_SIZE, GRID_SIZE)
    except (KeyError, TypeError) as exc:
        raise MetricsError(f"missing or malformed field: {exc}") from None
    if np.any(cell_hits > spawns):
        raise MetricsError("a cell has more hits than spawns")
    with np.errstate(invalid="ignore", divide="ignore"):
        rate = np.where(spawns > 0, cell_hits / spawns, np.nan)
    return RoundMetrics(
        hits=hits,
        misses=misses,
        slow_contacts=int(rec.get("slow_contacts", 0)),
        hit_rate=hit_rate(hits, misses),
        hitting_speeds=[float(v) for v in rec.get("hit_speeds", [])],
        hammer_depths=[float(v) for v in rec.get("hammer_depths", [])],
        per_cell_hit_rate=rate,
        per_cell_spawns=spawns,
        per_cell_hits=cell_hits,
        max_fatigued=float(rec.get("max_fatigue", rec.get("final_fatigue", 0.0))),
        labels={k: rec[k] for k in LABEL_KEYS if k in rec},
    )


def read_records(path: str | Path) -> list[dict]:
    """Parse a JSON-lines file; blank lines are skipped, bad lines raise with their number."""
    records = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MetricsError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise MetricsError(f"{path}:{lineno}: expected an object")
            rec["_line"] = lineno
            records.append(rec)
    return records


def metrics_from_records(records) -> list[RoundMetrics]:
    out = []
    for i, rec in enumerate(records):
        try:
            out.append(round_from_record(rec))
        except MetricsError as exc:
            raise MetricsError(f"record {rec.get('_line', i + 1)}: {exc}") from None
    return out


def records_from_dump(source) -> list[dict]:
    """Rebuild round records from a frame dump (one round per RESET, plus the default round)."""
    rounds: list[dict] = []
    current: dict | None = None
    pending_cfg: dict = {}
    fatigue = 0.0

    def start(cfg):
        rec = {"hits": 0, "misses": 0, "slow_contacts": 0, "per_cell": [{"spawns": 0, "hits": 0}] * N_CELLS,
               "hit_speeds": [], "hammer_depths": [], "max_fatigue": 0.0}
        for key in ("difficulty", "placement", "seed"):
            if key in cfg:
                rec[key] = cfg[key]
        if "constrained" in cfg:
            rec["constrained"] = cfg["constrained"] in ("1", "true", "True")
        rounds.append(rec)
        return rec

    for frame in read_dump(source):
        msg = frame.message
        if isinstance(msg, Reset):
            pending_cfg = msg.as_dict()
        elif isinstance(msg, ResetAck):
            current = start(pending_cfg)
            _apply_log(current, msg.observation)
        elif isinstance(msg, StateUpdateMsg):
            fatigue = float(msg.extension("fatigue", 0.0))
        elif isinstance(msg, ObservationMsg):
            if current is None:
                current = start({})
            current["max_fatigue"] = max(current["max_fatigue"], fatigue)
            log = _apply_log(current, msg)
            if log.get("step_hits", 0.0) > 0:
                current["hit_speeds"].extend([log.get("v_h", 0.0)] * int(log["step_hits"]))
            if "hammer_depth" in log:
                current["hammer_depths"].append(log["hammer_depth"])
    return [r for r in rounds if r.get("_steps", 0) > 0 or r["hits"] or r["misses"]]


def _apply_log(rec: dict, obs: ObservationMsg) -> dict:
    log = obs.log()
    for key in ("hits", "misses", "slow_contacts"):
        if key in log:
            rec[key] = int(log[key])
    rec["per_cell"] = [{"spawns": int(log.get(f"cell/{k}/spawns", 0)), "hits": int(log.get(f"cell/{k}/hits", 0))}
                       for k in range(N_CELLS)]
    if "v_h" in log:
        rec["_steps"] = rec.get("_steps", 0) + 1
    return log


def metrics_from_log(paths=(), dumps=()) -> list[RoundMetrics]:
    """Metrics for every round found in JSON-lines files ``paths`` and frame dumps ``dumps``."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    if isinstance(dumps, (str, Path, bytes)):
        dumps = [dumps]
    out = []
    for p in paths:
        out.extend(metrics_from_records(read_records(p)))
    for d in dumps:
        out.extend(metrics_from_records(records_from_dump(d)))
    return out
