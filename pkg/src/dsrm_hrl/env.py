"""Synthetic interactive-recommendation environment with ground-truth
latent preferences.

The observed user state is a corrupted projection of the true preference:
a history encoding plus structured noise drifting toward heavily-exposed
item directions plus isotropic Gaussian noise. Observed rewards are
inflated by item exposure, which closes the popularity feedback loop, and
sessions abandon early when slates are dominated by popular items.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import EnvConfig

GROUP_POPULAR = 0
GROUP_LONGTAIL = 1


class EnvError(RuntimeError):
    pass


class InvalidActionError(EnvError):
    pass


@dataclass
class ItemCatalog:
    """Items with unit-norm embeddings, cumulative exposure counts, a
    heavy-tailed initial popularity, and a popular/long-tail split (top 20%
    by initial popularity, ties broken by ascending item id)."""

    n_items: int
    embeddings: np.ndarray          # (n_items, d), rows unit-norm
    exposure: np.ndarray            # (n_items,) non-negative ints
    initial_popularity: np.ndarray  # (n_items,) positive reals
    group: np.ndarray               # (n_items,) GROUP_POPULAR / GROUP_LONGTAIL
    prior: np.ndarray = field(default=None)  # cold-start state vector

    @classmethod
    def build(cls, cfg: EnvConfig, rng: np.random.Generator) -> "ItemCatalog":
        n, d = cfg.n_items, cfg.d
        emb = rng.standard_normal((n, d))
        emb /= np.linalg.norm(emb, axis=1, keepdims=True)
        # Zipf popularity over a random rank assignment.
        ranks = rng.permutation(n)
        pop = (ranks + 1.0) ** (-cfg.zipf_s)
        # Mainstream geometry: popular items cluster around a shared
        # direction, graded by popularity rank (rank 0 pulled hardest, the
        # long tail not at all). Popularity noise therefore drags observed
        # states toward the whole popular cluster, not single items.
        v_main = rng.standard_normal(d)
        v_main /= np.linalg.norm(v_main)
        n_pop = int(np.ceil(0.2 * n))
        pull = np.clip(1.0 - ranks / n_pop, 0.0, 1.0)
        emb = emb + pull[:, None] * v_main
        emb /= np.linalg.norm(emb, axis=1, keepdims=True)
        # Exposure warm start proportional to popularity: the catalog enters
        # the run with a pre-existing rich-get-richer imbalance.
        exposure = np.round(cfg.init_exposure * pop / pop.max()).astype(np.int64)
        order = np.lexsort((np.arange(n), -pop))
        group = np.full(n, GROUP_LONGTAIL, dtype=np.int64)
        group[order[:n_pop]] = GROUP_POPULAR
        prior = emb.mean(axis=0)
        prior = prior / np.linalg.norm(prior)
        return cls(n, emb, exposure, pop, group, prior)

    def popular_ids(self) -> np.ndarray:
        return np.flatnonzero(self.group == GROUP_POPULAR)

    def longtail_ids(self) -> np.ndarray:
        return np.flatnonzero(self.group == GROUP_LONGTAIL)


@dataclass
class UserProfile:
    latent_pref: np.ndarray                 # unit-norm ground truth, fixed per session
    history: list = field(default_factory=list)  # [(item_id, reward)], capped at window
    satisfaction: float = 1.0


@dataclass
class ObservedState:
    vec: np.ndarray
    step: int


@dataclass
class SessionOutcome:
    length: int
    rewards: list
    exposure_log: list                      # one slate (list of item ids) per step
    terminated_by_abandonment: bool


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _exposure_weight(exposure, max_exposure):
    if max_exposure <= 0:
        return np.zeros_like(np.asarray(exposure, dtype=np.float64))
    return np.log1p(exposure) / np.log1p(max_exposure)


# Ratio of the popularity-aligned drift to noise_scale; the drift is the
# dominant, structured part of the corruption (white noise alone would be
# un-learnable in direction).
POP_DRIFT_RATIO = 2.0


def popularity_drift_direction(catalog: ItemCatalog,
                               rng: np.random.Generator) -> np.ndarray:
    """Unit vector drawn from the cone of heavily-exposed item directions:
    a random non-negative combination of item embeddings with
    exposure-share weights. Exposure follows a heavy tail, so the draw is
    dominated by the handful of most-served items."""
    total = catalog.exposure.sum()
    n = catalog.n_items
    if total <= 0:
        return np.zeros(catalog.embeddings.shape[1])
    share = catalog.exposure / total
    v = (share * np.abs(rng.standard_normal(n))) @ catalog.embeddings
    norm = np.linalg.norm(v)
    if norm < 1e-12:
        return np.zeros(catalog.embeddings.shape[1])
    return v / norm


def encode_observed(history, catalog: ItemCatalog, noise_scale: float,
                    rng: np.random.Generator, prior: np.ndarray | None = None,
                    step: int = 0) -> ObservedState:
    """History encoding plus popularity-structured corruption.

    Signal: reward-weighted mean of the embeddings of recently consumed
    items. Corruption: a half-normal drift along the global popularity
    direction (exposure-weighted mean embedding) plus a small isotropic
    Gaussian whose expected norm is about noise_scale.
    """
    prior = catalog.prior if prior is None else prior
    d = catalog.embeddings.shape[1]
    if history:
        ids = np.array([i for i, _ in history], dtype=np.int64)
        if ids.min() < 0 or ids.max() >= catalog.n_items:
            raise EnvError("history references unknown item id")
        w = 1.0 + np.array([r for _, r in history])
        base = (w[:, None] * catalog.embeddings[ids]).sum(axis=0) / w.sum()
    else:
        base = prior.copy()
    vec = base
    if noise_scale > 0:
        mag = np.abs(rng.standard_normal())
        drift = mag * popularity_drift_direction(catalog, rng)
        vec = vec + noise_scale * POP_DRIFT_RATIO * drift
        vec = vec + (noise_scale / np.sqrt(d)) * rng.standard_normal(d)
    return ObservedState(vec=np.asarray(vec, dtype=np.float64), step=step)


def update_abandonment(satisfaction: float, slate_groups_window, config: EnvConfig,
                       rng: np.random.Generator | None = None):
    """Windowed popularity penalty on satisfaction plus an optional
    stochastic early exit. Deterministic when abandon_prob == 0."""
    if not 0 <= satisfaction <= 1:
        raise ValueError(f"satisfaction must be in [0,1], got {satisfaction}")
    if slate_groups_window:
        flat = np.concatenate(slate_groups_window)
        p = float(np.mean(flat == GROUP_POPULAR))
        if p > config.threshold_a:
            satisfaction = max(0.0, satisfaction - config.decay_a)
    abandoned = satisfaction <= 0.0
    if not abandoned and config.abandon_prob > 0:
        if rng is None:
            raise ValueError("abandon_prob > 0 requires an rng")
        abandoned = rng.random() < config.abandon_prob * (1.0 - satisfaction)
    return satisfaction, abandoned


class RecEnv:
    """Single-threaded environment instance owning the catalog (with
    cumulative exposure across sessions) and the current session state."""

    def __init__(self, config: EnvConfig):
        config.validate()
        self.config = config
        self.catalog = ItemCatalog.build(config, np.random.default_rng(config.seed))
        self._user: UserProfile | None = None
        self._rng: np.random.Generator | None = None
        self._step = 0
        self._done = True
        self._slate_groups: list = []

    # -- session control ---------------------------------------------------

    def reset(self, seed: int) -> ObservedState:
        """Start a fresh session with a new user; deterministic given
        (seed, config)."""
        self._rng = np.random.default_rng([self.config.seed, seed])
        pref = self._rng.standard_normal(self.config.d)
        pref /= np.linalg.norm(pref)
        self._user = UserProfile(latent_pref=pref)
        self._step = 0
        self._done = False
        self._slate_groups = []
        return encode_observed([], self.catalog, self.config.noise_scale,
                               self._rng, step=0)

    @property
    def done(self) -> bool:
        return self._done

    def ground_truth_state(self) -> np.ndarray:
        """Sim-only oracle: the session's true preference vector."""
        if self._user is None:
            raise EnvError("no active session")
        return self._user.latent_pref

    def clean_state(self) -> np.ndarray:
        """Sim-only oracle: noise-free encoding of the current history."""
        if self._user is None:
            raise EnvError("no active session")
        return encode_observed(self._user.history, self.catalog, 0.0,
                               self._rng, step=self._step).vec

    def random_slate(self) -> np.ndarray:
        return self._rng.choice(self.catalog.n_items, size=self.config.slate_k,
                                replace=False)

    # -- dynamics ----------------------------------------------------------

    def step(self, slate):
        """Serve a slate of distinct item ids; returns (per-item rewards,
        next ObservedState, done)."""
        if self._done or self._user is None:
            raise EnvError("step() on a finished or unstarted session")
        slate = np.asarray(slate, dtype=np.int64)
        if slate.shape != (self.config.slate_k,):
            raise InvalidActionError(
                f"slate must have exactly {self.config.slate_k} items")
        if len(np.unique(slate)) != len(slate):
            raise InvalidActionError("slate contains duplicate item ids")
        if slate.min() < 0 or slate.max() >= self.catalog.n_items:
            raise InvalidActionError("slate contains unknown item ids")
        cfg = self.config
        cat = self.catalog

        align = cat.embeddings[slate] @ self._user.latent_pref
        bias = cfg.bias_strength * _exposure_weight(cat.exposure[slate],
                                                    cat.exposure.max())
        noise = cfg.obs_noise * self._rng.standard_normal(len(slate)) \
            if cfg.obs_noise > 0 else 0.0
        rewards = np.clip(_sigmoid(cfg.kappa * align) + bias + noise, 0.0, 1.0)

        cat.exposure[slate] += 1

        consumed = int(np.argmax(rewards))  # ties -> lowest slate index
        self._user.history.append((int(slate[consumed]), float(rewards[consumed])))
        if len(self._user.history) > cfg.history_window:
            self._user.history = self._user.history[-cfg.history_window:]

        self._slate_groups.append(cat.group[slate].copy())
        if len(self._slate_groups) > cfg.window_a:
            self._slate_groups = self._slate_groups[-cfg.window_a:]
        self._user.satisfaction, abandoned = update_abandonment(
            self._user.satisfaction, self._slate_groups, cfg, self._rng)

        self._step += 1
        self._done = abandoned or self._step >= cfg.max_len
        self._abandoned = abandoned
        nxt = encode_observed(self._user.history, cat, cfg.noise_scale,
                              self._rng, step=self._step)
        return rewards, nxt, self._done

    @property
    def abandoned(self) -> bool:
        return getattr(self, "_abandoned", False)
