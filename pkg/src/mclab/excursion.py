"""Samplers for the drift-diffusion-jump paths and their excursion structure.

The driving path is

    W(s) = sqrt(kappa) * BM(s) + t s - kappa s^2 / 2 + V(s),
    V(s) = sum_i (c_i 1{xi_i <= s} - c_i^2 s),    xi_i ~ Exp(c_i) independent,

reflected above its running minimum to give a non-negative process B whose
excursion lengths are the object of interest.  Paths are sampled on a uniform
grid by an Euler scheme (i.i.d. Gaussian increments per step, jumps applied
at the first grid point past their exact arrival time); a zero of B on the
grid is a strict new running minimum of W.  Grid-refinement stability is
checked by the experiments rather than assumed.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .core import MassVector, ParamTriple, ord_masses
from .errors import InvalidInputError
from .rng import Seed, as_seed_sequence, substream

__all__ = [
    "SampledPath",
    "ExcursionList",
    "VDecomposition",
    "sample_V",
    "sample_W",
    "reflect",
    "extract_excursions",
    "sum_sq_excursions",
    "sigma_sample",
    "shift_identity_check",
    "eta_thinned_W",
    "aldous_limic_sequence",
    "decompose_V",
    "default_horizon",
    "sample_excursion_lengths",
    "excursion_sum_sq_samples",
]


@dataclass(frozen=True)
class SampledPath:
    """Discretized path on the grid 0, h, 2h, ..., horizon.

    jump_times holds the exactly realized (arrival time, jump size) pairs in
    [0, horizon]; each jump is applied to ``values`` from the first grid
    point at or past its arrival.  None means the path carries no jump
    information (for example hand-built test paths).
    """

    grid_step: float
    horizon: float
    values: np.ndarray
    jump_times: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.grid_step <= 0 or self.horizon <= 0:
            raise InvalidInputError("grid_step and horizon must be > 0")
        n = int(round(self.horizon / self.grid_step))
        if len(values) != n + 1:
            raise InvalidInputError(
                f"values length {len(values)} does not match horizon/grid_step = {n} steps"
            )
        if self.jump_times is not None:
            for time, _size in self.jump_times:
                if not 0.0 <= time <= self.horizon:
                    raise InvalidInputError("jump times must lie within [0, horizon]")

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.values)) * self.grid_step


def _grid(T: float, h: float) -> int:
    if h <= 0 or T <= 0:
        raise InvalidInputError("need horizon T > 0 and grid step h > 0")
    n_steps = int(math.floor(T / h + 1e-9))
    if n_steps < 1:
        raise InvalidInputError("horizon shorter than one grid step")
    return n_steps


def _jump_values(c: MassVector, n_steps: int, h: float, rng, keep=None):
    """Compensated-jump contribution on the grid plus the realized jump list.

    ``keep`` optionally masks which jump clocks actually fire (thinning); the
    compensator always sums c_i^2 over all entries.  Returns (None, ()) when
    there are no jump rates at all.
    """
    rates = c.as_array()
    if rates.size == 0:
        return None, ()
    values = np.zeros(n_steps + 1)
    end = n_steps * h
    jumps: list[tuple[float, float]] = []
    total_sq = float(np.sum(rates**2))
    for i, rate in enumerate(rates):
        if rate <= 0.0:
            continue
        xi = rng.exponential(1.0 / rate)
        if keep is not None and not keep[i]:
            continue
        if xi <= end:
            idx = int(math.ceil(xi / h))
            values[idx:] += rate
            jumps.append((float(xi), float(rate)))
    if total_sq:
        values -= total_sq * np.arange(n_steps + 1) * h
    jumps.sort()
    return values, tuple(jumps)


def sample_V(c: MassVector, T: float, h: float, seed: Seed) -> SampledPath:
    """Compensated jump path V(s) = sum_i (c_i 1{xi_i <= s} - c_i^2 s)."""
    n_steps = _grid(T, h)
    rng = np.random.default_rng(as_seed_sequence(seed))
    values, jumps = _jump_values(c, n_steps, h, rng)
    if values is None:
        values = np.zeros(n_steps + 1)
    return SampledPath(grid_step=h, horizon=n_steps * h, values=values, jump_times=jumps)


def _raw_w_values(p: ParamTriple, n_steps: int, h: float, seed: Seed):
    """Grid values of the driving path plus the realized jump list."""
    ss_bm, ss_jump = as_seed_sequence(seed).spawn(2)
    rng_bm = np.random.default_rng(ss_bm)
    rng_jump = np.random.default_rng(ss_jump)
    times = np.arange(n_steps + 1) * h
    values = p.t * times - 0.5 * p.kappa * times**2
    if p.kappa > 0:
        increments = rng_bm.standard_normal(n_steps) * math.sqrt(p.kappa * h)
        values[1:] += np.cumsum(increments)
    jump_vals, jumps = _jump_values(p.c, n_steps, h, rng_jump)
    if jump_vals is not None:
        values += jump_vals
    return values, jumps


def sample_W(p: ParamTriple, T: float, h: float, seed: Seed) -> SampledPath:
    """Path of sqrt(kappa) BM + t s - kappa s^2/2 + V on the grid.

    The Brownian and jump randomness come from separate substreams of
    ``seed``, so the jump pattern is unchanged when only the grid varies.
    """
    n_steps = _grid(T, h)
    values, jumps = _raw_w_values(p, n_steps, h, seed)
    return SampledPath(grid_step=h, horizon=n_steps * h, values=values, jump_times=jumps)


def reflect(w: SampledPath) -> SampledPath:
    """Reflection above the running minimum: B(s) = W(s) - min_{r <= s} W(r)."""
    values = w.values - np.minimum.accumulate(w.values)
    return SampledPath(
        grid_step=w.grid_step,
        horizon=w.horizon,
        values=values,
        jump_times=w.jump_times,
    )


@dataclass(frozen=True)
class ExcursionList:
    """Disjoint ordered excursion intervals of a non-negative grid path.

    ``censored`` is the final interval still in progress at the horizon (if
    the path ends strictly positive); it is reported whatever its length and
    never enters the squared-length sum.
    """

    intervals: tuple[tuple[float, float], ...]
    censored: tuple[float, float] | None
    horizon: float
    grid_step: float

    @property
    def lengths(self) -> np.ndarray:
        return np.array([r - l for l, r in self.intervals])

    @property
    def censored_length(self) -> float:
        if self.censored is None:
            return 0.0
        return self.censored[1] - self.censored[0]


def _run_bounds(values: np.ndarray):
    """Index bounds of the maximal positive runs: (lefts, rights, censored_left).

    lefts/rights are the adjacent-zero indices of each completed run;
    censored_left is the left zero index of a trailing positive run, or None.
    """
    pos = (values > 0).view(np.int8)
    d = np.diff(pos)
    starts = np.flatnonzero(d == 1) + 1
    ends = np.flatnonzero(d == -1)  # last positive index of each run
    if pos[0]:
        starts = np.concatenate([[0], starts])
    censored_left = None
    if pos[-1]:
        censored_left = max(int(starts[-1]) - 1, 0)
        starts = starts[:-1]
    lefts = np.maximum(starts - 1, 0)
    rights = ends + 1
    return lefts, rights, censored_left


def _raw_excursion_lengths(values: np.ndarray, h: float, min_len: float):
    """Lengths of completed excursions >= min_len, plus (censored_length or None)."""
    lefts, rights, censored_left = _run_bounds(values)
    lengths = (rights - lefts) * h
    lengths = lengths[lengths >= min_len]
    censored_length = None
    if censored_left is not None:
        censored_length = (len(values) - 1 - censored_left) * h
    return lengths, censored_length


def extract_excursions(b: SampledPath, min_len: float = 0.0) -> ExcursionList:
    """Maximal grid intervals where b > 0, endpoints at the adjacent grid zeros.

    Intervals shorter than ``min_len`` are discarded.  A leading run with
    b(0) > 0 starts at 0; a trailing run with b(horizon) > 0 is censored.
    """
    if min_len < 0:
        raise InvalidInputError("min_len must be >= 0")
    v = b.values
    if np.any(v < 0):
        raise InvalidInputError("excursion extraction needs a non-negative path")
    h = b.grid_step
    lefts, rights, censored_left = _run_bounds(v)
    keep = (rights - lefts) * h >= min_len
    intervals = tuple(
        (l * h, r * h) for l, r in zip(lefts[keep].tolist(), rights[keep].tolist())
    )
    censored = None if censored_left is None else (censored_left * h, b.horizon)
    return ExcursionList(
        intervals=intervals,
        censored=censored,
        horizon=b.horizon,
        grid_step=h,
    )


def sum_sq_excursions(e: ExcursionList) -> float:
    """Sum of squared lengths over completed (non-censored) excursions."""
    if not e.intervals:
        return 0.0
    return float(np.sum(e.lengths**2))


def _require_positive_params(p: ParamTriple) -> float:
    if p.kappa <= 0 or p.t <= 0:
        raise InvalidInputError("this construction needs kappa > 0 and t > 0")
    return 2.0 * p.t / p.kappa


def _grid_with_tprime(t_prime: float, h: float, T: float) -> tuple[int, int, float]:
    """Adjust h so that t' falls exactly on the grid; return (n', n_total, h)."""
    if h <= 0 or T <= 0:
        raise InvalidInputError("need T > 0 and h > 0")
    n_prime = max(1, int(round(t_prime / h)))
    h_adj = t_prime / n_prime
    n_total = n_prime + int(math.ceil(T / h_adj - 1e-9))
    return n_prime, n_total, h_adj


def sigma_sample(p: ParamTriple, T: float, h: float, seed: Seed) -> float | None:
    """First grid time s >= 0 with B(t' + s) = 0, where t' = 2t/kappa.

    Zero means a strict new running minimum of W at or past t'.  Returns
    None when no zero occurs before t' + T (censored).
    """
    t_prime = _require_positive_params(p)
    n_prime, n_total, h_adj = _grid_with_tprime(t_prime, h, T)
    values, _ = _raw_w_values(p, n_total, h_adj, seed)
    b = values - np.minimum.accumulate(values)
    hits = np.flatnonzero(b[n_prime:] == 0.0)
    if hits.size == 0:
        return None
    return float(hits[0] * h_adj)


def shift_identity_check(
    p: ParamTriple, T: float, h: float, seed: Seed, *, tol: float = 1e-9
) -> bool:
    """Pathwise check that B(t' + s) equals the origin-shifted reflection for s >= sigma.

    Both sides are built from one realization of the driving path: the
    shifted process translates the origin to (t', W(t')) and reflects from
    there.  Censored sigma (no zero before t' + T) makes the check vacuous
    and counts as a pass.
    """
    t_prime = _require_positive_params(p)
    n_prime, n_total, h_adj = _grid_with_tprime(t_prime, h, T)
    values, _ = _raw_w_values(p, n_total, h_adj, seed)
    b = values - np.minimum.accumulate(values)
    hits = np.flatnonzero(b[n_prime:] == 0.0)
    if hits.size == 0:
        return True
    sigma_idx = int(hits[0])
    w_shift = values[n_prime:] - values[n_prime]
    b_shift = w_shift - np.minimum.accumulate(w_shift)
    diff = np.abs(b[n_prime + sigma_idx :] - b_shift[sigma_idx:])
    return bool(np.max(diff) <= tol)


def eta_thinned_W(p: ParamTriple, T: float, h: float, seed: Seed) -> SampledPath:
    """Thinned path sqrt(kappa) BM - t s - kappa s^2/2 + sum(eta_i c_i 1{xi_i<=s} - c_i^2 s).

    eta_i are independent Bernoulli(exp(-c_i t')) marks with t' = 2t/kappa;
    the compensator keeps every c_i^2 term.  Equal in law to the origin-shift
    of the un-thinned path to (t', W(t')).
    """
    t_prime = _require_positive_params(p)
    n_steps = _grid(T, h)
    ss_bm, ss_jump, ss_marks = as_seed_sequence(seed).spawn(3)
    rng_bm = np.random.default_rng(ss_bm)
    rng_jump = np.random.default_rng(ss_jump)
    rng_marks = np.random.default_rng(ss_marks)
    rates = p.c.as_array()
    keep = rng_marks.random(len(rates)) < np.exp(-rates * t_prime)
    times = np.arange(n_steps + 1) * h
    values = -p.t * times - 0.5 * p.kappa * times**2
    if p.kappa > 0:
        increments = rng_bm.standard_normal(n_steps) * math.sqrt(p.kappa * h)
        values[1:] += np.cumsum(increments)
    jump_vals, jumps = _jump_values(p.c, n_steps, h, rng_jump, keep=keep)
    if jump_vals is not None:
        values += jump_vals
    return SampledPath(grid_step=h, horizon=n_steps * h, values=values, jump_times=jumps)


def aldous_limic_sequence(
    kappa: float, c: MassVector, n: int, l_n: int, *, zero_kappa: bool = False
) -> MassVector:
    """Approximating mass vector whose coalescent state converges to the excursion law.

    kappa > 0: n entries of kappa^(-1/3) n^(-2/3) preceded by the entries
    c_i kappa^(-2/3) n^(-1/3), i <= l_n.  With ``zero_kappa`` the vector has
    only the entries c_i n^(-1/3), i <= l_n.
    """
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    if not 0 <= l_n <= len(c):
        raise InvalidInputError(f"l_n must lie in [0, len(c)], got {l_n}")
    if zero_kappa:
        if kappa != 0:
            raise InvalidInputError("zero_kappa mode requires kappa == 0")
        return ord_masses([c[i] * n ** (-1.0 / 3.0) for i in range(l_n)])
    if kappa <= 0:
        raise InvalidInputError(f"kappa must be > 0, got {kappa}")
    bulk = [kappa ** (-1.0 / 3.0) * n ** (-2.0 / 3.0)] * n
    prefix = [c[i] * kappa ** (-2.0 / 3.0) * n ** (-1.0 / 3.0) for i in range(l_n)]
    return ord_masses(prefix + bulk)


@dataclass(frozen=True)
class VDecomposition:
    """Supermartingale split V = M - A with the predictable bracket of M.

    A(s) = sum c_i^2 (s - xi_i)^+ is non-decreasing from 0, and
    <M>_s = sum c_i^3 (xi_i ^ s); clocks that never fired within the horizon
    contribute c_i^3 s.
    """

    grid_step: float
    horizon: float
    M_path: np.ndarray
    A_path: np.ndarray
    bracket_path: np.ndarray


def decompose_V(v: SampledPath, c: MassVector) -> VDecomposition:
    """Doob-Meyer pieces of a sampled compensated-jump path."""
    if v.jump_times is None:
        raise InvalidInputError("path carries no jump information")
    times = v.times
    A = np.zeros_like(times)
    bracket = np.zeros_like(times)
    realized = Counter(size for _t, size in v.jump_times)
    for xi, size in v.jump_times:
        A += size**2 * np.clip(times - xi, 0.0, None)
        bracket += size**3 * np.minimum(times, xi)
    for rate in c:
        if rate <= 0.0:
            continue
        if realized[rate] > 0:
            realized[rate] -= 1
        else:  # clock fired past the horizon: xi ^ s = s on the whole grid
            bracket += rate**3 * times
    M = v.values + A
    return VDecomposition(
        grid_step=v.grid_step,
        horizon=v.horizon,
        M_path=M,
        A_path=A,
        bracket_path=bracket,
    )


def default_horizon(kappa: float, t: float, c: MassVector | None = None) -> float:
    """Adaptive horizon for negative-time excursion experiments.

    Smallest T (rounded up) at which the parabolic drift t T - kappa T^2 / 2
    sits below -10 sqrt(kappa T); past this depth excursions are effectively
    extinct and the censored remainder is negligible.
    """
    if t >= 0:
        raise InvalidInputError("adaptive horizon is for t < 0")
    if kappa <= 0:
        return math.ceil(20.0 / (-t))

    def deep_enough(T: float) -> bool:
        return t * T - 0.5 * kappa * T * T <= -10.0 * math.sqrt(kappa * T)

    T = 1.0
    while not deep_enough(T):
        T *= 2.0
        if T > 1e6:
            raise InvalidInputError("no admissible horizon found")
    lo, hi = T / 2.0, T
    for _ in range(60):
        mid = (lo + hi) / 2.0
        if deep_enough(mid):
            hi = mid
        else:
            lo = mid
    return math.ceil(hi * 10.0) / 10.0


def sample_excursion_lengths(
    kappa: float,
    t: float,
    c: MassVector,
    reps: int,
    seed: Seed,
    *,
    horizon: float | None = None,
    n_steps: int = 10_000,
    min_len_steps: int = 5,
    start: int = 0,
) -> tuple[list[np.ndarray], int, int]:
    """Excursion-length vectors of B over independent replicates.

    Returns (lengths per replicate, censored count, total excursion count);
    the censored excursion of a path is counted but its length is not
    included in that path's vector.  Replicate i draws from the substream
    (seed, start + i), so batches can be split across workers freely.
    """
    if reps < 1:
        raise InvalidInputError("reps must be >= 1")
    if horizon is None:
        horizon = default_horizon(kappa, t, c)
    h = horizon / n_steps
    params = ParamTriple(kappa, t, c)
    min_len = min_len_steps * h
    out: list[np.ndarray] = []
    censored = 0
    total = 0
    for r in range(start, start + reps):
        values, _ = _raw_w_values(params, n_steps, h, substream(seed, r))
        b = values - np.minimum.accumulate(values)
        lengths, censored_length = _raw_excursion_lengths(b, h, min_len)
        out.append(lengths)
        total += len(lengths)
        if censored_length is not None:
            censored += 1
            total += 1
    return out, censored, total


def excursion_sum_sq_samples(
    kappa: float,
    t: float,
    c: MassVector,
    reps: int,
    seed: Seed,
    *,
    horizon: float | None = None,
    n_steps: int = 10_000,
    min_len_steps: int = 5,
) -> tuple[np.ndarray, float]:
    """Per-replicate sums of squared excursion lengths, with the censored fraction.

    The censored fraction is the number of censored excursions over all
    excursions seen (kept plus censored) across the replicates.
    """
    lengths, censored, total = sample_excursion_lengths(
        kappa, t, c, reps, seed, horizon=horizon, n_steps=n_steps, min_len_steps=min_len_steps
    )
    sums = np.array([float(np.sum(l**2)) for l in lengths])
    frac = censored / total if total else 0.0
    return sums, frac
