"""Fairness and utility metrics: Gini coefficient, group Absolute
Difference, and session statistics. Definitions are deliberately simple
enough to brute-force check."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import GROUP_LONGTAIL, GROUP_POPULAR, ItemCatalog, SessionOutcome


@dataclass
class MetricsReport:
    variant: str
    seed: int
    max_len: int
    len_mean: float
    len_std: float
    r_each_mean: float
    r_each_std: float
    r_cum_mean: float
    r_cum_std: float
    ad_mean: float
    ad_std: float
    f_pop: float
    f_tail: float
    n_episodes: int

    CSV_COLUMNS = ("variant", "seed", "max_len", "len_mean", "len_std",
                   "r_each_mean", "r_each_std", "r_cum_mean", "r_cum_std",
                   "ad_mean", "ad_std", "f_pop", "f_tail", "n_episodes")


def gini(counts) -> float:
    """Gini coefficient of a non-negative vector:
    sum_ij |x_i - x_j| / (2 n sum x). All-zero input is defined as 0."""
    x = np.asarray(counts, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("gini expects a non-empty 1-d vector")
    if np.any(x < 0):
        raise ValueError("gini expects non-negative values")
    total = x.sum()
    if total == 0:
        return 0.0
    n = x.size
    xs = np.sort(x)
    # sum_ij |xi - xj| = 2 * sum_i (2i - n + 1) x_(i)  (0-based i)
    coef = 2.0 * np.arange(n) - n + 1.0
    return float((coef @ xs) / (n * total))


def group_coverage(exposure_log, catalog: ItemCatalog, mode: str = "coverage"):
    """Per-episode group statistics (f_pop, f_tail).

    coverage: fraction of the group's items that appeared at least once in
    the episode's recommendation lists. exposure-share: the group's share
    of all recommendation slots in the episode.
    """
    if not exposure_log:
        raise ValueError("empty exposure log")
    shown = np.concatenate([np.asarray(s, dtype=np.int64) for s in exposure_log])
    pop_ids = catalog.popular_ids()
    tail_ids = catalog.longtail_ids()
    if len(pop_ids) == 0 or len(tail_ids) == 0:
        raise ValueError("catalog must contain both popular and long-tail items")
    if mode == "coverage":
        distinct = np.unique(shown)
        groups = catalog.group[distinct]
        f_pop = np.sum(groups == GROUP_POPULAR) / len(pop_ids)
        f_tail = np.sum(groups == GROUP_LONGTAIL) / len(tail_ids)
    elif mode == "exposure-share":
        groups = catalog.group[shown]
        f_pop = np.mean(groups == GROUP_POPULAR)
        f_tail = np.mean(groups == GROUP_LONGTAIL)
    else:
        raise ValueError(f"unknown coverage mode {mode!r}")
    return float(f_pop), float(f_tail)


def absolute_difference(exposure_log, catalog: ItemCatalog,
                        mode: str = "coverage") -> float:
    """|f(popular) - f(long-tail)| for one episode."""
    f_pop, f_tail = group_coverage(exposure_log, catalog, mode)
    return abs(f_pop - f_tail)


def session_stats(outcomes: list[SessionOutcome], catalog: ItemCatalog,
                  variant: str = "", seed: int = 0, max_len: int = 0,
                  coverage_mode: str = "coverage") -> MetricsReport:
    """Aggregate episode outcomes. Stds are population standard deviations.
    Zero-length episodes count toward Len (as 0) but are excluded from the
    per-step reward average."""
    if not outcomes:
        raise ValueError("no outcomes to aggregate")
    lens = np.array([o.length for o in outcomes], dtype=np.float64)
    r_cum = np.array([float(np.sum(o.rewards)) for o in outcomes])
    nonzero = [o for o in outcomes if o.length > 0]
    r_each = np.array([float(np.mean(o.rewards)) for o in nonzero]) \
        if nonzero else np.array([0.0])
    ads, fpops, ftails = [], [], []
    for o in nonzero:
        f_pop, f_tail = group_coverage(o.exposure_log, catalog, coverage_mode)
        fpops.append(f_pop)
        ftails.append(f_tail)
        ads.append(abs(f_pop - f_tail))
    ads = np.array(ads) if ads else np.array([0.0])
    f_pop_mean = float(np.mean(fpops)) if fpops else 0.0
    f_tail_mean = float(np.mean(ftails)) if ftails else 0.0
    return MetricsReport(
        variant=variant, seed=seed, max_len=max_len,
        len_mean=float(lens.mean()), len_std=float(lens.std()),
        r_each_mean=float(r_each.mean()), r_each_std=float(r_each.std()),
        r_cum_mean=float(r_cum.mean()), r_cum_std=float(r_cum.std()),
        ad_mean=float(ads.mean()), ad_std=float(ads.std()),
        f_pop=f_pop_mean, f_tail=f_tail_mean, n_episodes=len(outcomes),
    )
