"""Synthetic interactive environment: catalog, rewards, abandonment."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsrm_hrl.config import EnvConfig
from dsrm_hrl.env import (GROUP_LONGTAIL, GROUP_POPULAR, InvalidActionError,
                          ItemCatalog, RecEnv, _exposure_weight, _sigmoid,
                          encode_observed, update_abandonment)


def small_cfg(**kw):
    base = dict(d=8, n_items=40, slate_k=3, max_len=10, history_window=4,
                init_exposure=100, seed=0)
    base.update(kw)
    return EnvConfig(**base)


def test_catalog_invariants():
    cfg = small_cfg()
    cat = ItemCatalog.build(cfg, np.random.default_rng(0))
    norms = np.linalg.norm(cat.embeddings, axis=1)
    assert np.allclose(norms, 1.0, atol=1e-12)
    assert np.all(cat.exposure >= 0)
    assert np.all(cat.initial_popularity > 0)
    n_pop = int(np.ceil(0.2 * cfg.n_items))
    assert np.sum(cat.group == GROUP_POPULAR) == n_pop
    assert np.sum(cat.group == GROUP_LONGTAIL) == cfg.n_items - n_pop
    # popular group = top items by initial popularity
    top = set(np.argsort(-cat.initial_popularity)[:n_pop])
    assert set(cat.popular_ids()) == top
    assert cat.exposure.max() == cfg.init_exposure


def test_catalog_popular_items_share_direction():
    cat = ItemCatalog.build(small_cfg(n_items=200), np.random.default_rng(1))
    pop_mean = cat.embeddings[cat.popular_ids()].mean(axis=0)
    tail_mean = cat.embeddings[cat.longtail_ids()].mean(axis=0)
    assert np.linalg.norm(pop_mean) > 2 * np.linalg.norm(tail_mean)


def test_reset_determinism():
    env1, env2 = RecEnv(small_cfg()), RecEnv(small_cfg())
    o1, o2 = env1.reset(42), env2.reset(42)
    assert np.array_equal(o1.vec, o2.vec)
    assert np.array_equal(env1._user.latent_pref, env2._user.latent_pref)
    o3 = env2.reset(43)
    assert not np.array_equal(o1.vec, o3.vec)


def test_latent_pref_unit_norm():
    env = RecEnv(small_cfg())
    env.reset(0)
    assert np.linalg.norm(env._user.latent_pref) == pytest.approx(1.0)


def test_step_reward_formula_oracle():
    """With obs noise off, per-item rewards follow the documented closed form."""
    cfg = small_cfg(obs_noise=0.0)
    env = RecEnv(cfg)
    env.reset(5)
    slate = np.array([0, 7, 23])
    exp_before = env.catalog.exposure.copy()
    u = env._user.latent_pref
    rewards, _, _ = env.step(slate)
    w = np.log1p(exp_before[slate]) / np.log1p(exp_before.max())
    expected = np.clip(_sigmoid(cfg.kappa * env.catalog.embeddings[slate] @ u)
                       + cfg.bias_strength * w, 0.0, 1.0)
    assert np.allclose(rewards, expected, atol=1e-12)


def test_bias_monotone_in_exposure():
    w = _exposure_weight(np.array([0, 10, 100, 1000]), 1000)
    assert np.all(np.diff(w) > 0)
    assert _exposure_weight(np.array([5]), 0)[0] == 0.0


def test_step_exposure_conservation():
    env = RecEnv(small_cfg())
    env.reset(1)
    before = env.catalog.exposure.sum()
    slate = env.random_slate()
    env.step(slate)
    after = env.catalog.exposure.sum()
    assert after - before == env.config.slate_k
    assert np.all(np.diff(np.sort(env.catalog.exposure)) >= 0)


def test_step_consumes_argmax_item():
    cfg = small_cfg(obs_noise=0.0, noise_scale=0.0)
    env = RecEnv(cfg)
    env.reset(2)
    slate = env.random_slate()
    rewards, _, _ = env.step(slate)
    item, r = env._user.history[-1]
    assert item == slate[int(np.argmax(rewards))]
    assert r == pytest.approx(np.max(rewards))


def test_invalid_slates_rejected():
    env = RecEnv(small_cfg())
    env.reset(0)
    with pytest.raises(InvalidActionError):
        env.step([0, 0, 1])            # duplicate
    with pytest.raises(InvalidActionError):
        env.step([0, 1, 999])          # out of range
    with pytest.raises(InvalidActionError):
        env.step([0, 1])               # wrong size


def test_history_window_cap():
    cfg = small_cfg(history_window=4, max_len=10)
    env = RecEnv(cfg)
    env.reset(3)
    for _ in range(6):
        if env.done:
            break
        env.step(env.random_slate())
    assert len(env._user.history) <= 4


def test_episode_terminates_at_max_len():
    cfg = small_cfg(max_len=5, threshold_a=1.0)  # abandonment can't fire
    env = RecEnv(cfg)
    env.reset(0)
    steps = 0
    while not env.done:
        env.step(env.random_slate())
        steps += 1
    assert steps == 5
    assert not env.abandoned


def test_encode_cold_start_is_prior():
    cat = ItemCatalog.build(small_cfg(), np.random.default_rng(0))
    obs = encode_observed([], cat, 0.0, np.random.default_rng(0))
    assert np.allclose(obs.vec, cat.prior)


def test_encode_noise_free_weighted_mean():
    cat = ItemCatalog.build(small_cfg(), np.random.default_rng(0))
    history = [(3, 1.0), (7, 0.0)]
    obs = encode_observed(history, cat, 0.0, np.random.default_rng(0))
    expected = (2.0 * cat.embeddings[3] + 1.0 * cat.embeddings[7]) / 3.0
    assert np.allclose(obs.vec, expected, atol=1e-12)


def test_encode_rejects_unknown_items():
    cat = ItemCatalog.build(small_cfg(), np.random.default_rng(0))
    with pytest.raises(Exception):
        encode_observed([(999, 1.0)], cat, 0.0, np.random.default_rng(0))


def test_abandonment_hand_simulation():
    """window=2 slates of all-popular items, threshold 0.4, decay 0.5:
    satisfaction 1.0 -> 0.5 -> 0.0 -> abandoned."""
    cfg = small_cfg(window_a=2, threshold_a=0.4, decay_a=0.5)
    window = [np.array([GROUP_POPULAR] * 3)] * 2
    s, ab = update_abandonment(1.0, window, cfg)
    assert s == pytest.approx(0.5) and not ab
    s, ab = update_abandonment(s, window, cfg)
    assert s == 0.0 and ab


def test_abandonment_below_threshold_no_decay():
    cfg = small_cfg(window_a=2, threshold_a=0.6, decay_a=0.5)
    window = [np.array([GROUP_POPULAR, GROUP_LONGTAIL, GROUP_LONGTAIL])]
    s, ab = update_abandonment(1.0, window, cfg)
    assert s == 1.0 and not ab


def test_abandonment_validation():
    cfg = small_cfg()
    with pytest.raises(ValueError):
        update_abandonment(1.5, [], cfg)
    cfg2 = small_cfg(abandon_prob=0.5)
    with pytest.raises(ValueError):
        update_abandonment(1.0, [], cfg2)  # stochastic exit without rng


def test_full_episode_determinism():
    results = []
    for _ in range(2):
        env = RecEnv(small_cfg(seed=9))
        env.reset(17)
        rs = []
        while not env.done:
            r, obs, _ = env.step(env.random_slate())
            rs.append((r.copy(), obs.vec.copy()))
        results.append(rs)
    assert len(results[0]) == len(results[1])
    for (r1, v1), (r2, v2) in zip(*results):
        assert np.array_equal(r1, r2) and np.array_equal(v1, v2)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_rewards_bounded(session_seed):
    env = RecEnv(small_cfg())
    env.reset(session_seed)
    rewards, _, _ = env.step(env.random_slate())
    assert np.all((rewards >= 0.0) & (rewards <= 1.0))
