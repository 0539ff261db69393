"""Diffusion schedule identities, forward/reverse kernels, purification."""

import numpy as np
import pytest

from dsrm_hrl.config import DsrmConfig
from dsrm_hrl.diffusion import (Denoiser, ScheduleError, collect_pairs,
                                dsrm_loss, forward_diffuse, make_schedule,
                                purify, reverse_step, time_embedding,
                                train_dsrm)
from dsrm_hrl.nn import gradient_check


def test_schedule_identities_exact():
    s = make_schedule(20, 1e-4, 0.02)
    assert np.array_equal(s.alpha, 1.0 - s.beta)
    assert np.array_equal(s.alpha_bar, np.cumprod(s.alpha))
    prev = np.concatenate(([1.0], s.alpha_bar[:-1]))
    expected = np.sqrt(s.beta * (1.0 - prev) / (1.0 - s.alpha_bar))
    expected[0] = 0.0
    assert np.array_equal(s.sigma, expected)
    assert s.sigma[0] == 0.0
    assert np.all(np.diff(s.alpha_bar) < 0)


def test_schedule_constant_beta_hand_case():
    # beta = 0.1 for 3 steps: alpha_bar = [0.9, 0.81, 0.729] exactly
    s = make_schedule(3, 0.1, 0.1)
    assert np.allclose(s.alpha_bar, [0.9, 0.81, 0.729], atol=1e-15)


def test_schedule_validation():
    with pytest.raises(ScheduleError):
        make_schedule(0, 1e-4, 0.02)
    with pytest.raises(ScheduleError):
        make_schedule(5, 0.0, 0.02)
    with pytest.raises(ScheduleError):
        make_schedule(5, 0.03, 0.02)
    with pytest.raises(ScheduleError):
        make_schedule(5, 0.5, 1.0)


def test_forward_marginal_matches_iterated_kernel_moments():
    """The closed-form marginal at step k must agree with composing k
    single-step kernels s_j = sqrt(alpha_j) s_{j-1} + sqrt(beta_j) eps_j,
    in mean and variance, within 4 standard errors over 10k chains."""
    sched = make_schedule(8, 0.05, 0.3)
    rng = np.random.default_rng(0)
    s0 = np.array([1.0, -0.5, 0.25])
    n = 10_000
    s = np.tile(s0, (n, 1))
    for j in range(1, sched.k_steps + 1):
        s = (np.sqrt(sched.alpha[j - 1]) * s
             + np.sqrt(sched.beta[j - 1]) * rng.standard_normal(s.shape))
    ab = sched.alpha_bar[-1]
    true_mean = np.sqrt(ab) * s0
    true_var = 1.0 - ab
    se_mean = np.sqrt(true_var / n)
    assert np.all(np.abs(s.mean(axis=0) - true_mean) < 4 * se_mean)
    se_var = true_var * np.sqrt(2.0 / (n - 1))
    assert np.all(np.abs(s.var(axis=0) - true_var) < 4 * se_var)


def test_forward_diffuse_range_check():
    sched = make_schedule(5, 0.01, 0.1)
    with pytest.raises(IndexError):
        forward_diffuse(np.zeros(2), 0, np.zeros(2), sched)
    with pytest.raises(IndexError):
        forward_diffuse(np.zeros(2), 6, np.zeros(2), sched)


class _OracleDenoiser:
    """Stub that predicts the exact noise used in the forward pass."""

    def __init__(self, eps):
        self.eps = eps

    def predict(self, s_k, k, cond):
        return self.eps


def test_one_step_reverse_inverts_forward_exactly():
    """With the true noise known, one reverse step at k=1 recovers s0 to
    machine precision (sigma_1 = 0)."""
    sched = make_schedule(1, 0.2, 0.2)
    rng = np.random.default_rng(1)
    s0 = rng.standard_normal(6)
    eps = rng.standard_normal(6)
    s1 = forward_diffuse(s0, 1, eps, sched)
    rec = reverse_step(s1, 1, s0, _OracleDenoiser(eps), sched, np.zeros(6))
    assert np.max(np.abs(rec - s0)) < 1e-10


def test_time_embedding_shape_and_bounds():
    e = time_embedding(3, 20, 8)
    assert e.shape == (8,)
    assert np.all(np.abs(e) <= 1.0)
    assert not np.array_equal(time_embedding(3, 20, 8), time_embedding(4, 20, 8))


def test_purify_deterministic_repeatable():
    rng = np.random.default_rng(2)
    den = Denoiser(4, hidden=(8,), time_dim=4, k_steps=5, rng=rng)
    sched = make_schedule(5, 0.01, 0.1)
    x = rng.standard_normal(4)
    a = purify(x, den, sched)
    b = purify(x, den, sched)
    assert np.array_equal(a, b)
    assert np.all(np.isfinite(a))


def test_purify_identity_without_denoiser():
    x = np.arange(4.0)
    out = purify(x, None, None)
    assert np.array_equal(out, x)
    assert out is not x  # must be a copy


def test_purify_stochastic_needs_rng():
    rng = np.random.default_rng(3)
    den = Denoiser(4, hidden=(8,), time_dim=4, k_steps=5, rng=rng)
    sched = make_schedule(5, 0.01, 0.1)
    with pytest.raises(ValueError):
        purify(np.zeros(4), den, sched, mode="stochastic")
    with pytest.raises(ValueError):
        purify(np.zeros(4), den, sched, mode="bogus")
    out = purify(np.zeros(4), den, sched, mode="stochastic",
                 rng=np.random.default_rng(0))
    assert np.all(np.isfinite(out))


def test_dsrm_loss_zero_network_equals_noise_energy():
    """A denoiser with all-zero weights predicts 0, so the loss is exactly
    the mean squared norm of the injected noise."""
    den = Denoiser(4, hidden=(8,), time_dim=4, k_steps=5,
                   rng=np.random.default_rng(4))
    den.net.set_parameters({k: np.zeros_like(v)
                            for k, v in den.net.parameters().items()})
    sched = make_schedule(5, 0.01, 0.1)
    rng = np.random.default_rng(5)
    s0 = rng.standard_normal((6, 4))
    cond = rng.standard_normal((6, 4))
    eps = rng.standard_normal((6, 4))
    ks = np.array([1, 2, 3, 4, 5, 3])
    loss, _ = dsrm_loss(den, s0, cond, sched, None, eps=eps, ks=ks)
    assert loss == pytest.approx(np.mean(np.sum(eps ** 2, axis=1)), rel=1e-12)


def test_dsrm_loss_gradients_match_finite_differences():
    den = Denoiser(3, hidden=(6,), time_dim=4, k_steps=4,
                   rng=np.random.default_rng(6))
    sched = make_schedule(4, 0.05, 0.2)
    rng = np.random.default_rng(7)
    s0 = rng.standard_normal((4, 3))
    cond = rng.standard_normal((4, 3))
    eps = rng.standard_normal((4, 3))
    ks = np.array([1, 2, 3, 4])
    params = den.net.parameters()
    _, grads = dsrm_loss(den, s0, cond, sched, None, eps=eps, ks=ks)
    h = 1e-6
    worst = 0.0
    for key, p in params.items():
        flat = p.reshape(-1)
        gflat = grads[key].reshape(-1)
        for idx in range(0, flat.size, 7):  # probe a subset
            orig = flat[idx]
            flat[idx] = orig + h
            lp, _ = dsrm_loss(den, s0, cond, sched, None, eps=eps, ks=ks)
            flat[idx] = orig - h
            lm, _ = dsrm_loss(den, s0, cond, sched, None, eps=eps, ks=ks)
            flat[idx] = orig
            num = (lp - lm) / (2 * h)
            denom = max(abs(num), abs(gflat[idx]), 1e-8)
            worst = max(worst, abs(num - gflat[idx]) / denom)
    assert worst < 1e-4


def test_train_dsrm_reduces_loss_and_is_deterministic():
    rng = np.random.default_rng(8)
    clean = rng.standard_normal((300, 4))
    noisy = clean + 0.5 * rng.standard_normal((300, 4))
    cfg = DsrmConfig(k_steps=5, hidden=(16,), time_dim=4, epochs=5,
                     batch=64, n_pairs=300, min_pairs=64)
    den1, sched1, curve1 = train_dsrm(clean, noisy, cfg, seed=0)
    den2, _, curve2 = train_dsrm(clean, noisy, cfg, seed=0)
    assert curve1 == curve2
    assert curve1[-1] < curve1[0]
    p1, p2 = den1.net.parameters(), den2.net.parameters()
    assert all(np.array_equal(p1[k], p2[k]) for k in p1)


def test_train_dsrm_zero_lr_constant_curve():
    rng = np.random.default_rng(9)
    clean = rng.standard_normal((100, 4))
    noisy = clean.copy()
    cfg = DsrmConfig(k_steps=5, hidden=(16,), time_dim=4, epochs=3,
                     batch=64, n_pairs=100, min_pairs=64, lr=0.0)
    _, _, curve = train_dsrm(clean, noisy, cfg, seed=0)
    assert len(curve) == 3
    assert curve[0] == pytest.approx(curve[1]) == pytest.approx(curve[2])


def test_train_dsrm_k0_disables_module():
    rng = np.random.default_rng(10)
    clean = rng.standard_normal((100, 4))
    cfg = DsrmConfig(k_steps=0, n_pairs=100, min_pairs=64)
    den, sched, curve = train_dsrm(clean, clean.copy(), cfg, seed=0)
    assert sched is None and curve == []


def test_train_dsrm_too_few_pairs_rejected():
    clean = np.zeros((10, 4))
    cfg = DsrmConfig(n_pairs=10, min_pairs=256)
    with pytest.raises(ValueError):
        train_dsrm(clean, clean.copy(), cfg, seed=0)


def test_collect_pairs_shapes():
    from dsrm_hrl.config import EnvConfig
    from dsrm_hrl.env import RecEnv
    env = RecEnv(EnvConfig(d=8, n_items=40, slate_k=3, max_len=6,
                           init_exposure=100, seed=0))
    clean, noisy, sessions = collect_pairs(env, 50, np.random.default_rng(0))
    assert clean.shape == (50, 8) and noisy.shape == (50, 8)
    assert np.all(np.isfinite(clean)) and np.all(np.isfinite(noisy))
    assert not np.allclose(clean, noisy)
    assert sessions.shape == (50,)
    assert np.all(np.diff(sessions) >= 0)
