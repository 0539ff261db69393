"""Diffusion-based state purification: variance schedule, closed-form
forward corruption, conditional noise-prediction training, and the
iterative reverse projection that maps a corrupted user state back toward
the clean preference representation."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .config import DsrmConfig
from .nn import Adam, Mlp


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class DiffusionSchedule:
    """beta/alpha/alpha_bar/sigma sequences, 1-indexed by diffusion step k
    (arrays are 0-indexed internally; index k-1 holds step k)."""

    k_steps: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    sigma: np.ndarray


def make_schedule(k_steps: int, beta_min: float, beta_max: float) -> DiffusionSchedule:
    if k_steps < 1:
        raise ScheduleError(f"k_steps must be >= 1, got {k_steps}")
    if not 0 < beta_min <= beta_max < 1:
        raise ScheduleError(
            f"require 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"
        )
    beta = np.linspace(beta_min, beta_max, k_steps)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    # Posterior std of the reverse kernel; zero at the first step so the
    # final reverse draw is deterministic.
    prev_bar = np.concatenate(([1.0], alpha_bar[:-1]))
    sigma = np.sqrt(beta * (1.0 - prev_bar) / (1.0 - alpha_bar))
    sigma[0] = 0.0
    return DiffusionSchedule(k_steps, beta, alpha, alpha_bar, sigma)


def forward_diffuse(s0: np.ndarray, k: int, eps: np.ndarray,
                    schedule: DiffusionSchedule) -> np.ndarray:
    """Closed-form marginal sample at step k: sqrt(abar_k) s0 + sqrt(1-abar_k) eps."""
    if not 1 <= k <= schedule.k_steps:
        raise IndexError(f"diffusion step {k} out of range [1, {schedule.k_steps}]")
    ab = schedule.alpha_bar[k - 1]
    return np.sqrt(ab) * s0 + np.sqrt(1.0 - ab) * eps


def time_embedding(k: int, k_steps: int, dim: int) -> np.ndarray:
    """Sinusoidal embedding of the (normalized) diffusion step."""
    half = dim // 2
    t = k / max(k_steps, 1)
    freqs = np.exp(np.linspace(0.0, np.log(1000.0), half))
    ang = t * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)])


class Denoiser:
    """Conditional noise predictor: concat(noisy state, time embedding,
    corrupted observation) -> predicted noise."""

    def __init__(self, d: int, hidden=(64, 64), time_dim: int = 8,
                 k_steps: int = 20, rng=None, activation="tanh"):
        self.d = d
        self.time_dim = time_dim
        self.k_steps = k_steps
        sizes = [2 * d + time_dim, *hidden, d]
        self.net = Mlp(sizes, activation=activation, rng=rng)
        self._temb = [time_embedding(k, k_steps, time_dim) for k in range(k_steps + 1)]

    def _inputs(self, s_k, k, cond):
        s_k = np.asarray(s_k, dtype=np.float64)
        cond = np.asarray(cond, dtype=np.float64)
        temb = self._temb[k]
        if s_k.ndim == 1:
            return np.concatenate([s_k, temb, cond])
        b = s_k.shape[0]
        return np.concatenate([s_k, np.tile(temb, (b, 1)), cond], axis=1)

    def predict(self, s_k, k: int, cond):
        y, _ = self.net.forward(self._inputs(s_k, k, cond))
        return y

    def predict_with_cache(self, s_k, k: int, cond):
        return self.net.forward(self._inputs(s_k, k, cond))


def reverse_step(s_k: np.ndarray, k: int, cond: np.ndarray, denoiser: Denoiser,
                 schedule: DiffusionSchedule, z: np.ndarray) -> np.ndarray:
    """One reverse-projection step: remove the predicted noise at step k and
    add the posterior-scaled perturbation z."""
    if not 1 <= k <= schedule.k_steps:
        raise IndexError(f"diffusion step {k} out of range [1, {schedule.k_steps}]")
    a = schedule.alpha[k - 1]
    ab = schedule.alpha_bar[k - 1]
    eps_hat = denoiser.predict(s_k, k, cond)
    mean = (s_k - (1.0 - a) / np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(a)
    return mean + schedule.sigma[k - 1] * z


def _state_hash_rng(vec: np.ndarray) -> np.random.Generator:
    digest = hashlib.blake2b(np.ascontiguousarray(vec, dtype=np.float64).tobytes(),
                             digest_size=8).digest()
    return np.random.default_rng(int.from_bytes(digest, "little"))


def purify(observed_vec: np.ndarray, denoiser: Denoiser | None,
           schedule: DiffusionSchedule | None, mode: str = "deterministic",
           rng: np.random.Generator | None = None,
           ancestral: bool = False) -> np.ndarray:
    """Run the full reverse chain conditioned on the observation.

    The chain starts from the diffused observation (or pure noise when
    ancestral=True). Deterministic mode derives the start noise from a hash
    of the observation and uses z=0, so repeated calls are bit-identical.
    """
    vec = np.asarray(observed_vec, dtype=np.float64)
    if schedule is None or denoiser is None or schedule.k_steps == 0:
        return vec.copy()
    if mode not in ("deterministic", "stochastic"):
        raise ValueError(f"unknown purify mode {mode!r}")
    if mode == "deterministic":
        rng = _state_hash_rng(vec)
    elif rng is None:
        raise ValueError("stochastic purify requires an rng")

    k_steps = schedule.k_steps
    eps = rng.standard_normal(vec.shape)
    if ancestral:
        s = eps.copy()
    else:
        s = forward_diffuse(vec, k_steps, eps, schedule)
    zeros = np.zeros_like(vec)
    for k in range(k_steps, 0, -1):
        z = zeros if (mode == "deterministic" or k == 1) else rng.standard_normal(vec.shape)
        s = reverse_step(s, k, vec, denoiser, schedule, z)
    if not np.all(np.isfinite(s)):
        raise FloatingPointError("purification produced non-finite values")
    return s


def dsrm_loss(denoiser: Denoiser, s0_batch: np.ndarray, cond_batch: np.ndarray,
              schedule: DiffusionSchedule, rng: np.random.Generator,
              eps: np.ndarray | None = None, ks: np.ndarray | None = None):
    """Noise-reconstruction loss E||eps - predicted||^2 over a batch, with
    gradients for the denoiser net. eps/ks are injectable for tests."""
    s0_batch = np.atleast_2d(np.asarray(s0_batch, dtype=np.float64))
    cond_batch = np.atleast_2d(np.asarray(cond_batch, dtype=np.float64))
    b, d = s0_batch.shape
    if b == 0:
        raise ValueError("empty batch")
    if ks is None:
        ks = rng.integers(1, schedule.k_steps + 1, size=b)
    if eps is None:
        eps = rng.standard_normal((b, d))

    # Group by k so each group is one batched forward pass.
    grads = {key: np.zeros_like(val) for key, val in denoiser.net.parameters().items()}
    total = 0.0
    for k in np.unique(ks):
        sel = ks == k
        nk = int(sel.sum())
        s_k = forward_diffuse(s0_batch[sel], int(k), eps[sel], schedule)
        pred, cache = denoiser.predict_with_cache(s_k, int(k), cond_batch[sel])
        resid = pred - eps[sel]
        total += float(np.sum(resid * resid))
        # d(mean over batch of ||resid||^2)/dpred = 2 resid / b
        gk, _ = denoiser.net.backward(cache, 2.0 * resid / b)
        for key in grads:
            grads[key] += gk[key]
        del nk
    loss = total / b
    return loss, grads


def collect_pairs(env, n_pairs: int, rng: np.random.Generator):
    """Paired training data from uniform-random-policy rollouts: clean
    encodings (zero observation noise on the same history) and the
    corrupted observations actually emitted by the environment."""
    clean, noisy, session_ids = [], [], []
    session = 0
    while len(clean) < n_pairs:
        seed = int(rng.integers(0, 2**31 - 1))
        obs = env.reset(seed)
        done = False
        while not done and len(clean) < n_pairs:
            slate = env.random_slate()
            _, nxt, done = env.step(slate)
            clean.append(env.clean_state())
            noisy.append(nxt.vec.copy())
            session_ids.append(session)
            obs = nxt
        session += 1
    return np.array(clean), np.array(noisy), np.array(session_ids)


def train_dsrm(clean: np.ndarray, noisy: np.ndarray, cfg: DsrmConfig,
               seed: int = 0):
    """Stage-one training: fit the conditional denoiser on paired data with
    Adam to a fixed epoch budget. Returns (denoiser, schedule, loss_curve)."""
    clean = np.asarray(clean, dtype=np.float64)
    noisy = np.asarray(noisy, dtype=np.float64)
    if clean.shape != noisy.shape:
        raise ValueError("clean/noisy shape mismatch")
    if clean.shape[0] < cfg.min_pairs:
        raise ValueError(
            f"need at least {cfg.min_pairs} training pairs, got {clean.shape[0]}"
        )
    d = clean.shape[1]
    rng = np.random.default_rng(seed)
    denoiser = Denoiser(d, hidden=tuple(cfg.hidden), time_dim=cfg.time_dim,
                        k_steps=cfg.k_steps, rng=rng)
    if cfg.k_steps == 0:
        return denoiser, None, []
    schedule = make_schedule(cfg.k_steps, cfg.beta_min, cfg.beta_max)
    opt = Adam(denoiser.net.parameters(), lr=cfg.lr)
    n = clean.shape[0]
    curve = []
    for _ in range(cfg.epochs):
        # Same draws every epoch: each sample keeps a fixed (k, eps) target,
        # which makes the loss curve a pure function of the parameters.
        epoch_rng = np.random.default_rng([seed, 0x5eed])
        order = epoch_rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, cfg.batch):
            idx = order[start:start + cfg.batch]
            loss, grads = dsrm_loss(denoiser, clean[idx], noisy[idx], schedule, epoch_rng)
            opt.step(denoiser.net.parameters(), grads)
            epoch_loss += loss
            n_batches += 1
        curve.append(epoch_loss / n_batches)
    return denoiser, schedule, curve
