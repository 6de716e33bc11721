"""Envelope, statistics, reward scaling, metrics and report tools."""
from __future__ import annotations

import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from vrcosim.armsim import ArmModel, forward_kinematics
from vrcosim.bridge import ClientSession, LoopbackTransport, MemoryRecorder, Pose, StateUpdateMsg
from vrcosim.bridge.coords import CoordinateMap
from vrcosim.bridge.messages import Hello
from vrcosim.tools import (
    SCENARIOS,
    MetricsError,
    ScalingScenario,
    build_report,
    check_targets,
    fatigue_comparisons,
    hammer_path,
    ks_normality_test,
    metrics_from_log,
    metrics_from_records,
    reach_envelope,
    read_records,
    reward_scale_report,
    round_from_record,
    whac_targets,
    wilcoxon_signed_rank,
    write_report,
)
from vrcosim.tools.envelope import BOUNDARY, REACHABLE, UNREACHABLE
from vrcosim.whacapp import GameConfig, RewardWeights, WhacApp

from oracles import RefinedEnvelope, envelope_agreement, wilcoxon_enumeration


# -- envelope -----------------------------------------------------------------

@pytest.fixture(scope="module")
def cloud():
    return reach_envelope(resolution=60)


@pytest.fixture(scope="module")
def refined():
    return RefinedEnvelope(resolution=180)


def test_envelope_shape_and_metadata(cloud):
    assert cloud.points.shape == (3600, 3)
    meta = cloud.metadata()
    assert meta["resolution"] == 60 and meta["variant"] == "controller" and "extension" in meta
    dist = np.linalg.norm(cloud.points - cloud.shoulder, axis=1)
    assert dist.max() == pytest.approx(cloud.radius)
    bare = reach_envelope(resolution=10, variant="bare")
    np.testing.assert_allclose(np.linalg.norm(bare.points - bare.shoulder, axis=1), bare.radius, rtol=1e-12)
    with pytest.raises(ValueError):
        reach_envelope(resolution=1)
    with pytest.raises(ValueError):
        reach_envelope(variant="glove")


def test_points_inside_the_extended_shell_are_reachable(cloud):
    model = ArmModel()
    cmap = CoordinateMap()
    rng = np.random.default_rng(0)
    pts = []
    for _ in range(300):
        e = rng.uniform(model.joint_lower[0], model.joint_upper[0])
        a = rng.uniform(model.joint_lower[1], model.joint_upper[1])
        tip = np.asarray(cmap.apply_point(forward_kinematics(model, (e, a, 0.0))[1].position))
        pts.append(cloud.shoulder + rng.uniform(0.1, 1.0) * (tip - cloud.shoulder))
    assert all(c.reachable for c in check_targets(cloud, pts))


def test_far_points_are_unreachable(cloud):
    rng = np.random.default_rng(1)
    u = rng.normal(size=(100, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    pts = cloud.shoulder + u * (cloud.radius + 0.05)
    assert all(c.status == UNREACHABLE for c in check_targets(cloud, pts))
    assert check_targets(cloud, []) == []
    assert check_targets(cloud, [cloud.shoulder])[0].status == REACHABLE


def test_envelope_agrees_with_refined_oracle(cloud, refined):
    rng = np.random.default_rng(2)
    u = rng.normal(size=(3000, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    pts = cloud.shoulder + u * rng.uniform(0.05, 1.2 * cloud.radius, size=(3000, 1))
    checks = check_targets(cloud, pts)
    frac, n = envelope_agreement(cloud, checks, refined, pts)
    assert n > 2000
    assert frac >= 0.99
    assert any(c.status == BOUNDARY for c in checks)


def test_game_targets_are_reachable(cloud):
    targets = whac_targets()
    assert sorted(targets) == ["high", "low", "mid"]
    pts = np.concatenate(list(targets.values()))
    assert pts.shape == (27, 3)
    assert all(c.reachable for c in check_targets(cloud, pts))


# -- Wilcoxon -----------------------------------------------------------------

def test_wilcoxon_strictly_ordered_n10():
    x = np.arange(10.0)
    res = wilcoxon_signed_rank(x, x + np.arange(1, 11), "less")
    assert res.p_value == 1 / 1024 and res.method == "exact" and res.statistic == 0.0
    assert wilcoxon_signed_rank(x, x + np.arange(1, 11), "greater").p_value == 1.0
    assert wilcoxon_signed_rank(x, x + np.arange(1, 11)).p_value == 2 / 1024


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 12).flatmap(lambda n: st.tuples(
    st.lists(st.integers(-4, 4), min_size=n, max_size=n),
    st.lists(st.integers(-4, 4), min_size=n, max_size=n))),
    st.sampled_from(["less", "greater", "two_sided"]))
def test_wilcoxon_exact_matches_enumeration(pair, alternative):
    x, y = (np.array(v, dtype=float) for v in pair)
    res = wilcoxon_signed_rank(x, y, alternative)
    assert abs(res.p_value - wilcoxon_enumeration(x, y, alternative)) <= 1e-12


def test_wilcoxon_normal_branch_and_degenerate():
    rng = np.random.default_rng(4)
    x, y = rng.normal(size=40), rng.normal(0.3, 1.0, size=40)
    res = wilcoxon_signed_rank(x, y, "less")
    assert res.method == "normal" and res.n == 40
    ref = sps.wilcoxon(x, y, alternative="less", method="approx", correction=False)
    assert res.p_value == pytest.approx(ref.pvalue, rel=1e-9)
    deg = wilcoxon_signed_rank([1.0, 2.0], [1.0, 2.0])
    assert deg.degenerate and deg.p_value == 1.0
    with pytest.raises(ValueError):
        wilcoxon_signed_rank([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        wilcoxon_signed_rank([1.0], [2.0], "sideways")


def test_ks_normality():
    rng = np.random.default_rng(5)
    x = rng.normal(3.0, 2.0, size=200)
    res = ks_normality_test(x)
    z = (x - x.mean()) / x.std(ddof=1)
    ref = sps.kstest(z, "norm", method="asymp")
    assert res.statistic == pytest.approx(ref.statistic, abs=1e-12)
    assert res.p_value == pytest.approx(ref.pvalue, rel=1e-6)
    assert res.lilliefors_p > 0.05
    assert ks_normality_test(rng.exponential(size=200)).lilliefors_p < 0.01
    assert ks_normality_test([1.0, 1.0, 1.0]).degenerate
    with pytest.raises(ValueError):
        ks_normality_test([1.0, 2.0])


# -- reward scaling ------------------------------------------------------------

def test_best_case_distance_column_is_zero():
    rep = reward_scale_report(scenario=ScalingScenario("best_case", horizon=1200))
    assert np.all(rep.raw["C_d"] == 0.0) and np.all(rep.weighted["C_d"] == 0.0)
    assert rep.raw["S"].sum() == 60
    rows = list(csv.DictReader(rep.to_csv().splitlines()))
    assert len(rows) == 1200 and all(float(r["C_d"]) == 0.0 for r in rows)


def test_worst_case_and_interpolations():
    sc = ScalingScenario("worst_case", horizon=100)
    rep = reward_scale_report(scenario=sc)
    d0 = math.dist(sc.initial_position, sc.target_position)
    np.testing.assert_allclose(rep.raw["C_d"], -d0)
    assert rep.raw["S"].sum() == 0
    c = rep.cumulative()
    assert c["total"][-1] == pytest.approx(sum(c[k][-1] for k in ("S", "C_c", "C_d", "C_e")))
    assert sum(rep.shares().values()) == pytest.approx(1.0)

    lin, hits = hammer_path(ScalingScenario("linear_interp", horizon=40))
    quad, _ = hammer_path(ScalingScenario("quadratic_interp", horizon=40))
    np.testing.assert_allclose(lin[19], sc.target_position)
    assert hits.sum() == 2 and hits[19] and hits[39]
    # quadratic easing lags the linear path until arrival
    assert np.linalg.norm(quad[9] - sc.target_position) > np.linalg.norm(lin[9] - sc.target_position)
    with pytest.raises(ValueError):
        ScalingScenario("teleport")


@pytest.mark.parametrize("kind", SCENARIOS)
def test_scale_report_recomposes(kind):
    w = RewardWeights(10.0, 2.5, 1.0, 0.1)
    rep = reward_scale_report(w, ScalingScenario(kind, horizon=200))
    total = sum(rep.weighted[c] for c in ("S", "C_c", "C_d", "C_e"))
    np.testing.assert_allclose(rep.total, total, rtol=0, atol=1e-12)
    assert np.all(np.diff(rep.raw["C_e"]) <= 1e-12)
    summary = rep.summary()
    assert summary["scenario"] == kind and json.dumps(summary)


# -- metrics and report -------------------------------------------------------

def _record(hits=3, misses=2, placement="mid", difficulty="medium", rnd=0, fatigue=0.1, user="u1"):
    cells = [{"spawns": 0, "hits": 0} for _ in range(9)]
    cells[0] = {"spawns": hits + misses, "hits": hits}
    return {"hits": hits, "misses": misses, "slow_contacts": 1, "per_cell": cells, "hit_speeds": [1.0] * hits,
            "hammer_depths": [0.1, 0.2], "max_fatigue": fatigue, "placement": placement, "difficulty": difficulty,
            "round": rnd, "user": user}


def test_round_metrics_fixture():
    m = round_from_record(_record())
    assert m.hit_rate == 0.6
    assert m.per_cell_hit_rate[0, 0] == 0.6 and np.isnan(m.per_cell_hit_rate[1, 1])
    assert m.labels["placement"] == "mid"
    d = m.to_dict()
    assert d["per_cell_hit_rate"][1][1] is None and json.dumps(d)
    bad = _record()
    bad["per_cell"] = bad["per_cell"][:4]
    with pytest.raises(MetricsError):
        round_from_record(bad)
    bad = _record()
    bad["per_cell"][0]["hits"] = 99
    with pytest.raises(MetricsError):
        round_from_record(bad)
    with pytest.raises(MetricsError):
        round_from_record({"hits": 1})


def test_read_records_reports_line_numbers(tmp_path):
    p = tmp_path / "log.jsonl"
    p.write_text(json.dumps(_record()) + "\n\n{oops\n")
    with pytest.raises(MetricsError, match=":3:"):
        read_records(p)
    p.write_text(json.dumps(_record()) + "\n\n" + json.dumps({"hits": 1}) + "\n")
    with pytest.raises(MetricsError, match="record 3"):
        metrics_from_records(read_records(p))


def test_metrics_from_app_log_and_dump_agree(tmp_path):
    log = tmp_path / "app.jsonl"
    rec = MemoryRecorder()
    app = WhacApp(GameConfig(round_duration=3.0), log_path=log)
    session = ClientSession(LoopbackTransport(app), Hello(1, 0.05, 0, 0, 4), recorder=rec)
    session.connect()
    session.reset_handshake({"seed": "3", "difficulty": "easy", "placement": "low"})
    for k in range(60):
        t = k * 0.05
        target = app.game.active[0].position
        fatigue = min(1.0, t / 10)
        session.step_exchange(StateUpdateMsg(t, (k + 1) * 0.05, Pose(), (Pose(tuple(target)),),
                                             (("fatigue", fatigue),)))
    session.close()
    from_log = metrics_from_log(paths=[log])
    from_dump = metrics_from_log(dumps=[rec.getvalue()])
    assert len(from_log) == len(from_dump) == 1
    a, b = from_log[0], from_dump[0]
    assert a.hits == b.hits > 0
    assert (a.misses, a.slow_contacts) == (b.misses, b.slow_contacts)
    np.testing.assert_array_equal(a.per_cell_spawns, b.per_cell_spawns)
    assert a.hitting_speeds == pytest.approx(b.hitting_speeds)
    assert a.hammer_depths == pytest.approx(b.hammer_depths)
    assert a.max_fatigued == pytest.approx(b.max_fatigued)
    assert b.labels["placement"] == "low"


def test_report_groups_and_fatigue_tests(tmp_path, caplog):
    recs = []
    for r in range(10):
        for k, placement in enumerate(("low", "mid", "high")):
            recs.append(_record(placement=placement, rnd=r, fatigue=0.1 * k + 0.01 * r))
    rounds = metrics_from_records(recs)
    fat = fatigue_comparisons(rounds)
    assert [f["comparison"] for f in fat] == ["low<mid", "mid<high", "low<high"]
    assert all(f["n_pairs"] == 10 and f["p"] == 1 / 1024 for f in fat)

    with caplog.at_level("WARNING"):
        summary = write_report(rounds, tmp_path / "rep")
    assert len(summary["warnings"]) == 2
    assert any("difficulty=easy" in m for m in caplog.messages)
    cfgs = {(c["difficulty"], c["placement"]): c for c in summary["configs"]}
    assert cfgs[("medium", "mid")]["n_rounds"] == 10
    assert cfgs[("medium", "mid")]["heatmap"]["rate"][0][0] == 0.6
    assert cfgs[("medium", "mid")]["hitting_speed"]["n"] == 30
    for name in ("hits_misses.csv", "hit_rate.csv", "heatmaps.csv", "hitting_speeds.csv", "hammer_depths.csv",
                 "fatigue.csv", "report.json"):
        assert (tmp_path / "rep" / name).exists()
    assert json.loads((tmp_path / "rep" / "report.json").read_text()) == json.loads(json.dumps(summary))
    assert build_report([])["fatigue_tests"][0]["degenerate"]
