"""Report bundle over an evaluation grid.

Output files (CSV: comma separated, ``.`` decimal, header row):

``hits_misses.csv``        user, sweep, difficulty, placement, n_rounds, mean/std hits, misses, slow contacts
``hit_rate.csv``           user, difficulty, placement, round, hits, misses, hit_rate
``heatmaps.csv``           user, difficulty, placement, row, col, spawns, hits, rate (pooled over rounds)
``hitting_speeds.csv``     user, difficulty, placement, round, speed
``hammer_depths.csv``      user, difficulty, placement, round, step, depth
``fatigue.csv``            user, placement, round, max_fatigued
``report.json``            aggregates, 3x3 heatmap matrices, Wilcoxon comparisons, warnings
"""
from __future__ import annotations

import csv
import json
import logging
from collections import defaultdict
from pathlib import Path

import numpy as np

from ..whacapp.config import GRID_SIZE
from .metrics import RoundMetrics
from .stats import wilcoxon_signed_rank

log = logging.getLogger(__name__)

EXPECTED_CONFIGS = (
    ("easy", "mid"), ("medium", "mid"), ("hard", "mid"),
    ("medium", "low"), ("medium", "high"),
)
FATIGUE_COMPARISONS = (("low", "mid"), ("mid", "high"), ("low", "high"))


def _key(m: RoundMetrics) -> tuple[str, str, str]:
    lab = m.labels
    return str(lab.get("user", "policy")), str(lab.get("difficulty", "?")), str(lab.get("placement", "?"))


def pooled_heatmap(rounds: list[RoundMetrics]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    spawns = np.sum([r.per_cell_spawns for r in rounds], axis=0)
    hits = np.sum([r.per_cell_hits for r in rounds], axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        rate = np.where(spawns > 0, hits / spawns, np.nan)
    return spawns, hits, rate


def _nan_to_none(a: np.ndarray):
    return [[None if np.isnan(v) else float(v) for v in row] for row in a]


def fatigue_comparisons(rounds: list[RoundMetrics]) -> list[dict]:
    """Paired one-sided tests of max fatigue between placements (pairs = same user and round)."""
    by = defaultdict(dict)
    for m in rounds:
        user, difficulty, placement = _key(m)
        if difficulty != "medium":
            continue
        by[placement][(user, m.labels.get("round", 0))] = m.max_fatigued
    out = []
    for a, b in FATIGUE_COMPARISONS:
        keys = sorted(set(by.get(a, {})) & set(by.get(b, {})), key=str)
        entry = {"comparison": f"{a}<{b}", "n_pairs": len(keys)}
        if keys:
            res = wilcoxon_signed_rank([by[a][k] for k in keys], [by[b][k] for k in keys], "less")
            entry.update(statistic=res.statistic, z=res.z_score, p=res.p_value, n=res.n, method=res.method,
                         degenerate=res.degenerate)
        else:
            entry.update(statistic=None, z=None, p=None, n=0, method=None, degenerate=True)
        out.append(entry)
    return out


def build_report(rounds: list[RoundMetrics]) -> dict:
    groups: dict[tuple, list[RoundMetrics]] = defaultdict(list)
    for m in rounds:
        groups[_key(m)].append(m)
    present = {(d, p) for (_, d, p) in groups}
    warnings = [f"missing configuration difficulty={d} placement={p}" for d, p in EXPECTED_CONFIGS
                if (d, p) not in present]
    for w in warnings:
        log.warning(w)
    configs = []
    for (user, difficulty, placement), ms in sorted(groups.items()):
        spawns, hits, rate = pooled_heatmap(ms)
        speeds = [s for m in ms for s in m.hitting_speeds]
        depths = [d for m in ms for d in m.hammer_depths]
        configs.append({
            "user": user,
            "difficulty": difficulty,
            "placement": placement,
            "n_rounds": len(ms),
            "mean_hits": float(np.mean([m.hits for m in ms])),
            "mean_misses": float(np.mean([m.misses for m in ms])),
            "mean_slow_contacts": float(np.mean([m.slow_contacts for m in ms])),
            "mean_hit_rate": float(np.mean([m.hit_rate for m in ms])),
            "mean_max_fatigued": float(np.mean([m.max_fatigued for m in ms])),
            "heatmap": {"spawns": spawns.astype(int).tolist(), "hits": hits.astype(int).tolist(),
                        "rate": _nan_to_none(rate)},
            "hitting_speed": _describe(speeds),
            "hammer_depth": _describe(depths),
        })
    return {"configs": configs, "fatigue_tests": fatigue_comparisons(rounds), "warnings": warnings}


def _describe(values) -> dict:
    if not values:
        return {"n": 0, "mean": None, "std": None, "min": None, "q25": None, "median": None, "q75": None, "max": None}
    a = np.asarray(values, dtype=float)
    q = np.quantile(a, [0.0, 0.25, 0.5, 0.75, 1.0])
    return {"n": int(a.size), "mean": float(a.mean()), "std": float(a.std()), "min": float(q[0]),
            "q25": float(q[1]), "median": float(q[2]), "q75": float(q[3]), "max": float(q[4])}


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def write_report(rounds: list[RoundMetrics], out_dir: str | Path) -> dict:
    """Write the CSV/JSON bundle into ``out_dir`` and return the JSON summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = build_report(rounds)

    groups: dict[tuple, list[RoundMetrics]] = defaultdict(list)
    for m in rounds:
        groups[_key(m)].append(m)

    rows = []
    for (user, d, p), ms in sorted(groups.items()):
        sweep = ms[0].labels.get("sweep", "")
        h = np.array([m.hits for m in ms], dtype=float)
        mi = np.array([m.misses for m in ms], dtype=float)
        sl = np.array([m.slow_contacts for m in ms], dtype=float)
        rows.append([user, sweep, d, p, len(ms), float(h.mean()), float(h.std()), float(mi.mean()), float(mi.std()),
                     float(sl.mean())])
    _write_csv(out / "hits_misses.csv", ["user", "sweep", "difficulty", "placement", "n_rounds", "mean_hits",
                                         "std_hits", "mean_misses", "std_misses", "mean_slow_contacts"], rows)

    _write_csv(out / "hit_rate.csv", ["user", "difficulty", "placement", "round", "hits", "misses", "hit_rate"],
               [[*_key(m), m.labels.get("round", i), m.hits, m.misses, float(m.hit_rate)]
                for i, m in enumerate(rounds)])

    heat_rows = []
    for (user, d, p), ms in sorted(groups.items()):
        spawns, hits, rate = pooled_heatmap(ms)
        for r in range(GRID_SIZE):
            for c in range(GRID_SIZE):
                heat_rows.append([user, d, p, r, c, int(spawns[r, c]), int(hits[r, c]),
                                  "" if np.isnan(rate[r, c]) else float(rate[r, c])])
    _write_csv(out / "heatmaps.csv", ["user", "difficulty", "placement", "row", "col", "spawns", "hits", "rate"],
               heat_rows)

    _write_csv(out / "hitting_speeds.csv", ["user", "difficulty", "placement", "round", "speed"],
               [[*_key(m), m.labels.get("round", i), float(s)] for i, m in enumerate(rounds) for s in m.hitting_speeds])
    _write_csv(out / "hammer_depths.csv", ["user", "difficulty", "placement", "round", "step", "depth"],
               [[*_key(m), m.labels.get("round", i), k, float(v)]
                for i, m in enumerate(rounds) for k, v in enumerate(m.hammer_depths)])
    _write_csv(out / "fatigue.csv", ["user", "placement", "round", "max_fatigued"],
               [[_key(m)[0], _key(m)[2], m.labels.get("round", i), float(m.max_fatigued)]
                for i, m in enumerate(rounds) if _key(m)[1] == "medium"])

    (out / "report.json").write_text(json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8")
    return summary
