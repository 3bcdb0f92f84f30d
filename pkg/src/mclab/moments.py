"""Exact constants, moment bounds, generator identities and bound verdicts.

The constants C_n (n-point connection bound) satisfy the exact integer
recursion

    C_{n+1} = 2 * n! * sum_{l=1}^{n-1} C_{l+1} C_{n-l+1} + n C_n,   C_2 = 1,

and D_n sums C_{|pi|} over all set partitions pi of [n], evaluated through
Stirling numbers of the second kind.  C_1 := 1 by convention (the one-class
partition contributes a trivial connection probability of 1), which makes
the default D_2 = 2; every check that uses D_2 takes it as a configurable
constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .core import MassVector, s_k
from .errors import DomainError, InvalidInputError
from .graphsim import sample_components, simulate_coalescent
from .rng import Seed, substream
from .stats import EstimateWithCI, estimate_from_samples

__all__ = [
    "ConstantsTable",
    "BoundReport",
    "constants",
    "stirling2",
    "bound_connect",
    "bound_npoint",
    "bound_Sn",
    "bound_negative_time",
    "estimate_ESk",
    "estimate_joint_moment",
    "estimate_norm_power",
    "generator_direct",
    "generator_closed_odd",
    "generator_closed_product",
    "martingale_residual",
    "check_bound",
]


@dataclass(frozen=True)
class ConstantsTable:
    """Exact integer tables of C_n and D_n."""

    C: Mapping[int, int]
    D: Mapping[int, int]

    def __post_init__(self):
        object.__setattr__(self, "C", MappingProxyType(dict(self.C)))
        object.__setattr__(self, "D", MappingProxyType(dict(self.D)))


def stirling2(n: int, p: int) -> int:
    """Number of partitions of an n-set into p non-empty classes."""
    if n < 0 or p < 0:
        raise InvalidInputError("Stirling numbers need n, p >= 0")
    if p > n:
        return 0
    # S(k, q) = S(k-1, q-1) + q * S(k-1, q)
    row = [1]  # S(0, 0)
    for k in range(1, n + 1):
        row = [0] + [row[q - 1] + q * row[q] if q < k else row[q - 1] for q in range(1, k + 1)]
    return row[p]


def constants(n_max: int, c1: int = 1) -> ConstantsTable:
    """Exact C_n for n <= n_max via the integer recursion, and D_n from them.

    ``c1`` is the convention for the never-recursed base C_1 (default 1).
    """
    if n_max < 2:
        raise InvalidInputError(f"n_max must be >= 2, got {n_max}")
    C: dict[int, int] = {1: int(c1), 2: 1}
    for n in range(2, n_max):
        cross = sum(C[l + 1] * C[n - l + 1] for l in range(1, n))
        C[n + 1] = 2 * math.factorial(n) * cross + n * C[n]
    D = {
        n: sum(stirling2(n, p) * C[p] for p in range(1, n + 1))
        for n in range(2, n_max + 1)
    }
    return ConstantsTable(C=C, D=D)


def _check_window(x: MassVector, t: float) -> float:
    """Validate t * ||x||^2 < 1 and return the squared norm."""
    nsq = x.norm_sq
    if t < 0:
        raise DomainError(f"bounds require t >= 0, got {t}")
    if t * nsq >= 1.0:
        raise DomainError(
            f"outside the subcritical window: t * ||x||^2 = {t * nsq} >= 1"
        )
    return nsq


def bound_connect(x: MassVector, t: float) -> float:
    """Pair-connection bound factor t / (1 - t ||x||^2).

    The caller multiplies by x_i x_j for the pair of interest.
    """
    nsq = _check_window(x, t)
    return t / (1.0 - t * nsq)


def bound_npoint(x: MassVector, t: float, targets, table: ConstantsTable) -> float:
    """n-point connection bound C_n x_{i_1}...x_{i_n} t^{n/2} / (1-t||x||^2)^{2n-3}."""
    nsq = _check_window(x, t)
    targets = sorted(set(int(i) for i in targets))
    n = len(targets)
    if n < 2:
        raise InvalidInputError("n-point bound needs at least two targets")
    prod = 1.0
    for i in targets:
        prod *= x[i]
    return table.C[n] * prod * t ** (n / 2.0) / (1.0 - t * nsq) ** (2 * n - 3)


def bound_Sn(x: MassVector, t: float, n: int, table: ConstantsTable) -> float:
    """Moment bound D_n ||x||^n / (1 - t ||x||^2)^(2n-3) for E S_n(t)."""
    if n < 2:
        raise InvalidInputError(f"moment order must be >= 2, got {n}")
    nsq = _check_window(x, t)
    return table.D[n] * x.norm ** n / (1.0 - t * nsq) ** (2 * n - 3)


def bound_negative_time(t: float, table: ConstantsTable | None = None, d2: float | None = None) -> float:
    """Excursion bound D_2 / (-t) for t < 0 (D_2 = 2 under the C_1 := 1 convention)."""
    if t >= 0:
        raise DomainError(f"negative-time bound needs t < 0, got {t}")
    if d2 is None:
        d2 = (table or constants(2)).D[2]
    return d2 / (-t)


def _mc_statistic(x, t, reps, seed, fn) -> EstimateWithCI:
    if reps < 2:
        raise InvalidInputError(f"reps must be >= 2, got {reps}")
    vals = np.empty(reps)
    for r in range(reps):
        part = sample_components(x, t, substream(seed, r))
        vals[r] = fn(part.component_masses)
    return estimate_from_samples(vals)


def estimate_ESk(x: MassVector, t: float, k: int, reps: int, seed: Seed) -> EstimateWithCI:
    """Monte Carlo estimate of E S_k(t) over percolation replicates."""
    return _mc_statistic(x, t, reps, seed, lambda y: s_k(y, k))


def estimate_joint_moment(
    x: MassVector, t: float, n: int, m: int, reps: int, seed: Seed
) -> EstimateWithCI:
    """Monte Carlo estimate of the joint moment E[S_n(t) S_m(t)]."""
    return _mc_statistic(x, t, reps, seed, lambda y: s_k(y, n) * s_k(y, m))


def estimate_norm_power(
    x: MassVector, t: float, n: int, reps: int, seed: Seed
) -> EstimateWithCI:
    """Monte Carlo estimate of E ||X(t)||^n = E (S_2(t))^(n/2)."""
    return _mc_statistic(x, t, reps, seed, lambda y: s_k(y, 2) ** (n / 2.0))


# -- generator ---------------------------------------------------------------
#
# A functional is tagged ("s", k) for x -> s_k(x), or ("s2prod", n, m) for
# x -> s_2(x)^n * s_m(x).


def _eval_tag(tag, powersums) -> float:
    if tag[0] == "s":
        return powersums(tag[1])
    if tag[0] == "s2prod":
        _, n, m = tag
        return powersums(2) ** n * powersums(m)
    raise InvalidInputError(f"unsupported functional tag {tag!r}")


def generator_direct(x: MassVector, tag) -> float:
    """Exact pair sum sum_{i<j} x_i x_j (g(x^{i,j}) - g(x)).

    x^{i,j} merges blocks i and j; only power sums of the merged vector are
    needed, so each term is evaluated in O(1) from the power sums of x.
    """
    arr = x.as_array()
    n = len(arr)
    if tag[0] == "s":
        if tag[1] < 1:
            raise InvalidInputError("power-sum order must be >= 1")
        orders = [tag[1]]
    elif tag[0] == "s2prod":
        orders = [2, tag[2]]
    else:
        raise InvalidInputError(f"unsupported functional tag {tag!r}")
    base = {k: s_k(x, k) for k in set(orders)}
    g_x = _eval_tag(tag, lambda k: base[k])
    total = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            xi, xj = arr[i], arr[j]
            merged = {
                k: base[k] - xi**k - xj**k + (xi + xj) ** k for k in base
            }
            total += xi * xj * (_eval_tag(tag, lambda k: merged[k]) - g_x)
    return total


def generator_closed_odd(x: MassVector, k: int) -> float:
    """Closed form of the generator on s_{2k+1}:

        sum_{l=1}^{k} binom(2k+1, l) s_{l+1} s_{2k-l+2}  -  (2^{2k+1} - 2)/2 * s_{2k+3}.
    """
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    s = lambda j: s_k(x, j)
    acc = sum(math.comb(2 * k + 1, l) * s(l + 1) * s(2 * k - l + 2) for l in range(1, k + 1))
    return acc - (2 ** (2 * k + 1) - 2) / 2.0 * s(2 * k + 3)


def generator_closed_product(x: MassVector, n: int, m: int) -> float:
    """Closed form of the generator on s_2^n * s_m (n >= 1, m >= 2).

    Assembled from the three-part expansion of the merged-pair binomials,
    with the even-m middle terms carrying binom(m, m/2) and an extra 1/2
    from the symmetric i != j sum.
    """
    if n < 1 or m < 2:
        raise InvalidInputError("need n >= 1 and m >= 2")
    s = lambda j: s_k(x, j)
    s2 = s(2)
    m_half = (m - 1) // 2
    even = m % 2 == 0

    t1 = sum(
        math.comb(m, l) * (s(l + 1) * s(m - l + 1) - s(m + 2))
        for l in range(1, m_half + 1)
    )
    if even:
        t1 += math.comb(m, m // 2) * (s(m // 2 + 1) ** 2 - s(m + 2)) / 2.0
    t1 *= s2**n

    t2 = s(m) * sum(
        math.comb(n, k) * 2 ** (n - k - 1) * s2**k * (s(n - k + 1) ** 2 - s(2 * n - 2 * k + 2))
        for k in range(n)
    )

    t3 = 0.0
    for k in range(n):
        coeff = math.comb(n, k) * s2**k
        for l in range(1, m_half + 1):
            t3 += (
                coeff
                * math.comb(m, l)
                * 2 ** (n - k)
                * (s(n - k + l + 1) * s(n + m - l - k + 1) - s(2 * n - 2 * k + m + 2))
            )
        if even:
            t3 += (
                coeff
                * math.comb(m, m // 2)
                * 2 ** (n - k - 1)
                * (s(n - k + m // 2 + 1) ** 2 - s(2 * n - 2 * k + m + 2))
            )
    return t1 + t2 + t3


def martingale_residual(
    x: MassVector,
    t: float,
    tag,
    reps: int,
    time_grid: int,
    seed: Seed,
) -> EstimateWithCI:
    """Estimate E[g(X(t))] - g(x) - int_0^t E[generator g(X(r))] dr.

    Per replicate the chain state is piecewise constant, so the generator is
    evaluated on the state holding at each grid time; the time integral uses
    the trapezoidal rule on ``time_grid`` points.  The residual should vanish
    (the compensated process is a martingale).
    """
    _check_window(x, t)
    if reps < 2:
        raise InvalidInputError(f"reps must be >= 2, got {reps}")
    if time_grid < 2:
        raise InvalidInputError("time_grid must be >= 2")
    grid = np.linspace(0.0, t, time_grid)
    gamma_cache: dict[tuple, float] = {}
    g_cache: dict[tuple, float] = {}

    def gamma_of(masses: tuple[float, ...]) -> float:
        key = tuple(sorted(masses))
        if key not in gamma_cache:
            gamma_cache[key] = generator_direct(MassVector(tuple(sorted(key, reverse=True))), tag)
        return gamma_cache[key]

    def g_of(masses: tuple[float, ...]) -> float:
        key = tuple(sorted(masses))
        if key not in g_cache:
            arr = np.asarray(key)
            ps = lambda k: float(np.sum(arr**k))
            g_cache[key] = _eval_tag(tag, ps)
        return g_cache[key]

    vals = np.empty(reps)
    for r in range(reps):
        traj = simulate_coalescent(x, t, substream(seed, r))
        states = traj.mass_states()
        times = np.array([s[0] for s in states])
        gammas = np.array([gamma_of(s[1]) for s in states])
        idx = np.searchsorted(times, grid, side="right") - 1
        integral = np.trapezoid(gammas[idx], grid)
        vals[r] = g_of(states[-1][1]) - integral
    est = estimate_from_samples(vals)
    return EstimateWithCI(mean=est.mean - g_of(tuple(x.masses)), std_error=est.std_error, reps=reps)


@dataclass(frozen=True)
class BoundReport:
    """One-sided verdict of a single inequality check.

    pass iff estimate.mean + 3 * std_error <= bound (all the checked bounds
    dominate an expectation from above); for exact estimates the standard
    error is 0 and a 1e-12 float slack applies.
    """

    kind: str
    bound: float
    estimate: EstimateWithCI
    slack_sigmas: float
    verdict: bool
    detail: Mapping[str, float] | None = None


def _verdict(kind, bound, estimate, *, exact=False, detail=None) -> BoundReport:
    slack = 3.0 * estimate.std_error
    tol = 1e-12 if exact else 0.0
    ok = estimate.mean + slack <= bound + tol
    sigmas = (
        float("inf")
        if estimate.std_error == 0.0
        else (bound - estimate.mean) / estimate.std_error
    )
    return BoundReport(
        kind=kind,
        bound=float(bound),
        estimate=estimate,
        slack_sigmas=sigmas,
        verdict=bool(ok),
        detail=detail,
    )


def check_bound(kind: str, *, table: ConstantsTable | None = None, **instance) -> BoundReport:
    """Uniform bound-vs-estimate wrapper.

    kind:
      "connect"       x, t, pair            exact oracle vs pair bound
      "npoint"        x, t, targets         exact oracle vs n-point bound
      "Sn"            x, t, n, reps, seed   MC estimate vs moment bound
      "joint"         x, t, n, m, reps, seed, x_refined
                                            truncation stability: |difference
                                            of estimates| vs 3 * joint SE
      "negative_time" kappa, t, c, reps, seed [, horizon, n_steps, d2]
                                            MC excursion sum vs D_2 / (-t)
    """
    from .graphsim import exact_connect_prob  # local to keep import cycle away

    table = table or constants(6)
    if kind == "connect":
        x, t, pair = instance["x"], instance["t"], instance["pair"]
        i, j = pair
        bound = bound_connect(x, t) * x[i] * x[j]
        exact = exact_connect_prob(x, t, {i, j})
        est = EstimateWithCI(mean=exact, std_error=0.0, reps=1)
        return _verdict(kind, bound, est, exact=True)
    if kind == "npoint":
        x, t, targets = instance["x"], instance["t"], instance["targets"]
        bound = bound_npoint(x, t, targets, table)
        exact = exact_connect_prob(x, t, targets)
        est = EstimateWithCI(mean=exact, std_error=0.0, reps=1)
        return _verdict(kind, bound, est, exact=True)
    if kind == "Sn":
        x, t, n = instance["x"], instance["t"], instance["n"]
        bound = bound_Sn(x, t, n, table)
        est = estimate_ESk(x, t, n, instance["reps"], instance["seed"])
        return _verdict(kind, bound, est)
    if kind == "joint":
        x, x_refined = instance["x"], instance["x_refined"]
        t, n, m = instance["t"], instance["n"], instance["m"]
        reps, seed = instance["reps"], instance["seed"]
        a = estimate_joint_moment(x, t, n, m, reps, substream(seed, 0))
        b = estimate_joint_moment(x_refined, t, n, m, reps, substream(seed, 1))
        joint_se = float(np.hypot(a.std_error, b.std_error))
        est = EstimateWithCI(mean=abs(a.mean - b.mean), std_error=0.0, reps=2 * reps)
        return _verdict(
            kind,
            3.0 * joint_se,
            est,
            exact=True,
            detail={"coarse": a.mean, "refined": b.mean, "joint_se": joint_se},
        )
    if kind == "negative_time":
        from .excursion import excursion_sum_sq_samples

        t = instance["t"]
        d2 = instance.get("d2")
        bound = bound_negative_time(t, table=table, d2=d2)
        sums, censored_frac = excursion_sum_sq_samples(
            kappa=instance["kappa"],
            t=t,
            c=instance["c"],
            reps=instance["reps"],
            seed=instance["seed"],
            horizon=instance.get("horizon"),
            n_steps=instance.get("n_steps", 10_000),
        )
        est = estimate_from_samples(sums)
        return _verdict(kind, bound, est, detail={"censored_fraction": censored_frac})
    raise InvalidInputError(f"unknown bound kind {kind!r}")
