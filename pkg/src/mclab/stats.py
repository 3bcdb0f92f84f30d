"""Monte Carlo summaries and the distribution tests used by the experiments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .errors import InvalidInputError

__all__ = [
    "EstimateWithCI",
    "estimate_from_samples",
    "chi2_gof",
    "chi2_homogeneity",
    "ks_two_sample",
    "ks_one_sided",
]


@dataclass(frozen=True)
class EstimateWithCI:
    """Sample mean with its standard error."""

    mean: float
    std_error: float
    reps: int

    def __post_init__(self) -> None:
        if self.reps < 1:
            raise InvalidInputError(f"reps must be >= 1, got {self.reps}")
        if not self.std_error >= 0:
            raise InvalidInputError("std_error must be >= 0")

    def radius(self, sigmas: float = 3.0) -> float:
        return sigmas * self.std_error


def estimate_from_samples(values: np.ndarray) -> EstimateWithCI:
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 1:
        raise InvalidInputError("need at least one sample")
    mean = float(values.mean())
    se = float(values.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return EstimateWithCI(mean=mean, std_error=se, reps=n)


def chi2_gof(observed: np.ndarray, probs: np.ndarray) -> tuple[float, float]:
    """Goodness-of-fit chi-squared of category counts against exact probabilities.

    Categories with tiny expected counts are pooled into their neighbours to
    keep the asymptotics honest.  Returns (statistic, p_value).
    """
    observed = np.asarray(observed, dtype=float)
    probs = np.asarray(probs, dtype=float)
    n = observed.sum()
    expected = probs * n
    obs, exp = _pool_small_bins(observed, expected, min_expected=5.0)
    if len(obs) < 2:
        return 0.0, 1.0
    stat, p = sps.chisquare(obs, exp)
    return float(stat), float(p)


def chi2_homogeneity(counts_a: dict, counts_b: dict) -> tuple[float, float]:
    """Two-sample chi-squared: are two category-count tables drawn from one law?"""
    keys = sorted(set(counts_a) | set(counts_b))
    table = np.array(
        [[counts_a.get(k, 0) for k in keys], [counts_b.get(k, 0) for k in keys]],
        dtype=float,
    )
    keep = table.sum(axis=0) > 0
    table = table[:, keep]
    if table.shape[1] < 2:
        return 0.0, 1.0
    stat, p, _, _ = sps.chi2_contingency(table)
    return float(stat), float(p)


def ks_two_sample(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """Two-sided two-sample Kolmogorov-Smirnov statistic and p-value."""
    res = sps.ks_2samp(np.asarray(a, float), np.asarray(b, float), method="asymp")
    return float(res.statistic), float(res.pvalue)


def ks_one_sided(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """One-sided KS check that the empirical CDF of ``a`` never exceeds that of ``b``.

    Statistic D = sup_z (F_a(z) - F_b(z)) clipped at 0; a large value is
    evidence against "a stochastically dominates b from above".  The p-value
    uses the classical one-sided large-sample formula exp(-2 m n D^2/(m+n)).
    """
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    d = max(0.0, float(np.max(fa - fb)))
    mn = a.size * b.size / (a.size + b.size)
    p = float(np.exp(-2.0 * mn * d * d))
    return d, p


def _pool_small_bins(observed, expected, min_expected):
    """Merge low-expectation categories (ascending by expectation) into one bin."""
    order = np.argsort(expected)
    obs_sorted, exp_sorted = observed[order], expected[order]
    cum = np.cumsum(exp_sorted)
    # pool the smallest categories until the pooled bin reaches the threshold
    k = int(np.searchsorted(cum, min_expected, side="left"))
    if k == 0:
        return observed, expected
    k = min(k, len(cum) - 1)
    pooled_obs = np.concatenate([[obs_sorted[: k + 1].sum()], obs_sorted[k + 1 :]])
    pooled_exp = np.concatenate([[exp_sorted[: k + 1].sum()], exp_sorted[k + 1 :]])
    return pooled_obs, pooled_exp
