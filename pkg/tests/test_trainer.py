"""GAE, policy gradients, PPO update, checkpoints and trainer determinism."""
from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vrcosim.trainer import (
    Adam,
    CheckpointError,
    EnvConfig,
    Layout,
    Policy,
    PpoConfig,
    RunningMeanStd,
    Trainer,
    compute_gae,
    decode_checkpoint,
    encode_checkpoint,
    load_policy,
    lr_schedule,
    normalize_advantages,
    ppo_update,
)

from oracles import brute_force_gae, finite_difference_grad, random_gae_instance


# -- GAE ----------------------------------------------------------------------

def test_gae_matches_brute_force_on_random_instances():
    rng = np.random.default_rng(0)
    for _ in range(100):
        r, v, d, gamma, lam, last = random_gae_instance(rng)
        adv, ret = compute_gae(r, v, d, gamma, lam, last)
        np.testing.assert_allclose(adv, brute_force_gae(r, v, d, gamma, lam, last), rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(ret, adv + v, rtol=0, atol=0)


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=30), st.floats(0.0, 1.0))
def test_gae_lambda_one_is_monte_carlo(rewards, gamma):
    r = np.array(rewards)
    v = np.zeros_like(r)
    d = np.zeros_like(r)
    d[-1] = 1.0
    adv, _ = compute_gae(r, v, d, gamma, 1.0, last_value=123.0)
    mc = [sum(gamma ** (k - t) * r[k] for k in range(t, len(r))) for t in range(len(r))]
    np.testing.assert_allclose(adv, mc, rtol=1e-9, atol=1e-9)


def test_gae_lambda_zero_is_td_residual():
    r, v = np.array([1.0, 2.0, 3.0]), np.array([0.5, 0.25, 0.125])
    adv, _ = compute_gae(r, v, np.zeros(3), 0.9, 0.0, last_value=2.0)
    np.testing.assert_allclose(adv, [1 + 0.9 * 0.25 - 0.5, 2 + 0.9 * 0.125 - 0.25, 3 + 0.9 * 2.0 - 0.125])
    with pytest.raises(ValueError):
        compute_gae([1.0], [1.0, 2.0], [0.0], 0.9, 0.9)


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=200))
def test_normalized_advantages(values):
    out = normalize_advantages(np.array(values))
    assert abs(out.mean()) < 1e-9
    if np.ptp(values) > 1e-6:
        assert out.std() == pytest.approx(1.0, abs=1e-9)


# -- policy gradient ----------------------------------------------------------

def _loss_fixture(seed: int = 0):
    rng = np.random.default_rng(seed)
    layout = Layout(5, 3, (8, 6))
    policy = Policy.initialize(layout, rng, init_log_std=-0.5)
    policy.flat += 0.3 * rng.normal(size=layout.size)
    n = 32
    obs = rng.normal(size=(n, 5))
    actions, _, _ = policy.act(obs, rng)
    # behaviour policy slightly different so ratios spread around 1
    behaviour = Policy(layout, policy.flat + 0.05 * rng.normal(size=layout.size))
    mean_b, _, _ = behaviour.forward(obs)
    old_logp = behaviour.log_prob(actions, mean_b)
    return policy, (obs, actions, old_logp, rng.normal(size=n), rng.normal(size=n))


def test_policy_gradient_matches_finite_differences():
    policy, data = _loss_fixture()
    args = (0.2, 0.5, 0.01)
    _, grad, stats = policy.ppo_loss(*data, *args)
    assert 0.0 < stats["clip_fraction"] < 1.0
    fd = finite_difference_grad(lambda: policy.ppo_loss(*data, *args, need_grad=False)[0], policy.flat)
    err = np.abs(fd - grad) / np.maximum(1.0, np.abs(fd))
    assert err.max() < 1e-4


def test_policy_means_and_log_prob():
    rng = np.random.default_rng(1)
    layout = Layout(4, 2, (5,))
    policy = Policy.initialize(layout, rng)
    obs = rng.normal(size=(10, 4)) * 100
    mean, value, _ = policy.forward(obs)
    assert np.all((mean > 0) & (mean < 1)) and value.shape == (10,)
    a, logp, _ = policy.act(obs, rng)
    std = np.exp(policy.views["log_std"])
    ref = np.sum(-0.5 * ((a - mean) / std) ** 2 - np.log(std) - 0.5 * np.log(2 * np.pi), axis=1)
    np.testing.assert_allclose(logp, ref, rtol=1e-12)
    det, _, _ = policy.act(obs)
    np.testing.assert_array_equal(det, mean)
    with pytest.raises(ValueError):
        Policy(layout, np.zeros(3))


# -- PPO update ---------------------------------------------------------------

def _batch(seed: int = 2, n: int = 400):
    policy, (obs, actions, _, adv, ret) = _loss_fixture(seed)
    mean, _, _ = policy.forward(obs)
    logp = policy.log_prob(actions, mean)
    big = lambda a: np.concatenate([a] * (n // len(a)))
    return policy, {"obs": big(obs), "actions": big(actions), "logp": big(logp),
                    "advantages": big(adv), "returns": big(ret)}


def test_kl_limit_rolls_back_the_offending_epoch():
    policy, batch = _batch()
    start = policy.flat.copy()
    cfg = PpoConfig(n_envs=1, steps_per_env=400, batch_size=50, kl_limit=1e-12, n_epochs=5)
    stats = ppo_update(policy, Adam(policy.layout.size), batch, cfg, 1e-2, np.random.default_rng(0))
    assert stats["stopped_early"] and stats["epochs"] == 0
    np.testing.assert_array_equal(policy.flat, start)


def test_kl_stays_within_limit_after_early_stop():
    policy, batch = _batch()
    old = policy.copy()
    cfg = PpoConfig(n_envs=1, steps_per_env=400, batch_size=50, kl_limit=0.02, n_epochs=50, max_grad_norm=0.0)
    stats = ppo_update(policy, Adam(policy.layout.size), batch, cfg, 2e-3, np.random.default_rng(0))
    assert stats["stopped_early"] and 0 < stats["epochs"] < 50
    _, _, full = policy.ppo_loss(batch["obs"], batch["actions"], batch["logp"],
                                 normalize_advantages(batch["advantages"]), batch["returns"], 0.2, 0.5, 0.0,
                                 need_grad=False)
    assert full["approx_kl"] <= cfg.kl_limit
    assert not np.array_equal(policy.flat, old.flat)


def test_update_reduces_loss():
    policy, batch = _batch()
    args = (batch["obs"], batch["actions"], batch["logp"], normalize_advantages(batch["advantages"]),
            batch["returns"], 0.2, 0.5, 0.0)
    before, _, _ = policy.ppo_loss(*args, need_grad=False)
    cfg = PpoConfig(n_envs=1, steps_per_env=400, batch_size=100, n_epochs=4)
    ppo_update(policy, Adam(policy.layout.size), batch, cfg, 1e-3, np.random.default_rng(0))
    after, _, _ = policy.ppo_loss(*args, need_grad=False)
    assert after < before


def test_lr_schedule():
    cfg = PpoConfig(lr_initial=1e-3, lr_final=1e-5, lr_decay_start_fraction=0.2)
    assert lr_schedule(0, 1000, cfg) == 1e-3
    assert lr_schedule(199, 1000, cfg) == 1e-3
    assert lr_schedule(600, 1000, cfg) == pytest.approx(0.5 * (1e-3 + 1e-5))
    assert lr_schedule(1000, 1000, cfg) == pytest.approx(1e-5)
    with pytest.raises(ValueError):
        lr_schedule(1001, 1000, cfg)


def test_adam_first_step_is_sign_scaled():
    adam = Adam(3)
    p = np.zeros(3)
    adam.step(p, np.array([2.0, -0.5, 0.0]), 0.1)
    np.testing.assert_allclose(p, [-0.1, 0.1, 0.0], atol=1e-8)


def test_config_validation():
    with pytest.raises(ValueError):
        PpoConfig(n_envs=2, steps_per_env=10, batch_size=21)
    with pytest.raises(ValueError):
        PpoConfig(lr_initial=1e-6, lr_final=1e-5)
    with pytest.raises(ValueError):
        PpoConfig.from_dict({"learning_rate": 1.0})
    with pytest.raises(ValueError):
        EnvConfig(placement="left")
    with pytest.raises(ValueError):
        EnvConfig.from_dict({"colour": 1})
    cfg = PpoConfig(hidden=[16, 8])
    assert PpoConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_random_placement_is_seeded_and_covers_all():
    env = EnvConfig(placement="random")
    picks = [env.placement_for(s) for s in range(60)]
    assert set(picks) == {"low", "mid", "high"}
    assert picks == [env.placement_for(s) for s in range(60)]
    assert env.episode_config(7)["placement"] == picks[7]
    assert EnvConfig(placement="high").placement_for(3) == "high"


@settings(max_examples=50)
@given(st.lists(st.integers(1, 20), min_size=1, max_size=6), st.integers(0, 1000))
def test_running_mean_std_matches_numpy(sizes, seed):
    rng = np.random.default_rng(seed)
    rms = RunningMeanStd(3)
    chunks = [rng.normal(2.0, 3.0, size=(n, 3)) for n in sizes]
    for c in chunks:
        rms.update(c)
    allx = np.concatenate(chunks)
    # the initial state acts as a pseudo-sample of weight 1e-4, mean 0, variance 1
    w = 1e-4
    total = w + len(allx)
    mean = allx.sum(axis=0) / total
    var = (w * (1.0 + mean**2) + ((allx - mean) ** 2).sum(axis=0)) / total
    np.testing.assert_allclose(rms.mean, mean, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(rms.var, var, rtol=1e-9, atol=1e-12)


# -- checkpoints --------------------------------------------------------------

def test_checkpoint_roundtrip_and_corruption():
    header = {"x": 0.1, "rng": {"s": [1, 2, 3]}, "name": "p"}
    arrays = {"b": np.arange(6.0).reshape(2, 3), "a": np.array([np.pi, -0.0, 1e-300])}
    raw = encode_checkpoint(header, arrays)
    h, a = decode_checkpoint(raw)
    assert h == header
    assert set(a) == set(arrays)
    for k in arrays:
        assert a[k].tobytes() == arrays[k].tobytes()
    assert encode_checkpoint(h, a) == raw
    with pytest.raises(CheckpointError):
        decode_checkpoint(b"XXXX" + raw[4:])
    with pytest.raises(CheckpointError):
        decode_checkpoint(raw[:-8])
    with pytest.raises(CheckpointError):
        decode_checkpoint(raw + b"\0")
    with pytest.raises(CheckpointError):
        decode_checkpoint(raw[:4] + b"\x09\x00" + raw[6:])


TINY_PPO = dict(n_envs=2, steps_per_env=40, batch_size=40, total_steps=320, n_epochs=2, hidden=(16,),
                lr_initial=1e-3, seed=5)
TINY_ENV = dict(round_duration=1.0)


def _trainer(**overrides) -> Trainer:
    return Trainer(PpoConfig(**{**TINY_PPO, **overrides}), EnvConfig(**TINY_ENV))


def test_training_is_deterministic():
    a = _trainer().train()
    b = _trainer().train()
    assert len(a) == 4
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    assert a[-1]["steps"] == 320 and a[-1]["episodes"] > 0
    c = _trainer(seed=6).train(max_updates=1)
    assert c[0] != a[0]


def test_resume_continues_bit_identically(tmp_path):
    full = _trainer()
    ref = full.train()
    ref_params = full.policy.flat.copy()

    part = _trainer()
    part.train(max_updates=2)
    ckpt = part.save(tmp_path / "mid.vrck")
    resumed = Trainer.load(ckpt)
    rest = resumed.train()
    assert json.dumps(rest, sort_keys=True) == json.dumps(ref[2:], sort_keys=True)
    assert resumed.policy.flat.tobytes() == ref_params.tobytes()

    policy, rms, header = load_policy(ckpt)
    assert header["update"] == 2
    assert policy.flat.tobytes() == part.policy.flat.tobytes()
    assert rms.mean.tobytes() == part.obs_rms.mean.tobytes()
