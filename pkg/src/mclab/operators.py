"""Color-and-collapse operator on mass vectors and its consistency experiment.

Blocks receive Poisson marks at rate c*_j per unit mass for each color j;
only the presence of at least one mark matters for merging, so marks reduce
to independent Bernoulli indicators with P(marked) = 1 - exp(-c*_j x_i).
All blocks sharing a color mark are merged, transitively across colors.
Applying a single color c* to the excursion-length state at time u shifts
the excursion parameters to time u + (c*)^2 and jump rates c join (c*).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import MassVector, join, ord_masses
from .errors import InvalidInputError
from .excursion import sample_excursion_lengths
from .rng import Seed, generator, substream
from .stats import estimate_from_samples, ks_two_sample

__all__ = ["ColorMarks", "sample_color_marks", "col", "ColConsistencyReport", "col_consistency_experiment"]


@dataclass(frozen=True)
class ColorMarks:
    """Bernoulli mark indicators, one row per block and one column per color."""

    marks: np.ndarray

    def __post_init__(self):
        marks = np.asarray(self.marks, dtype=bool)
        marks.setflags(write=False)
        object.__setattr__(self, "marks", marks)


def sample_color_marks(x: MassVector, cstar: MassVector, seed: Seed) -> ColorMarks:
    """Sample the void-probability marks: P(block i marked by color j) = 1 - exp(-c*_j x_i)."""
    rates = cstar.as_array()
    if np.any(rates < 0):
        raise InvalidInputError("color rates must be >= 0")
    probs = -np.expm1(-np.outer(x.as_array(), rates))
    rng = generator(seed)
    return ColorMarks(marks=rng.random(probs.shape) < probs)


def col(x: MassVector, cstar: MassVector, seed: Seed) -> MassVector:
    """Color-and-collapse: merge all blocks sharing at least one color mark.

    Total mass is preserved; the second power sum can only grow.
    """
    cstar = ord_masses(cstar) if not isinstance(cstar, MassVector) else cstar
    marks = sample_color_marks(x, cstar, seed).marks
    n = len(x)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for j in range(marks.shape[1]):
        marked = np.flatnonzero(marks[:, j])
        for i in marked[1:]:
            a, b = find(int(marked[0])), find(int(i))
            if a != b:
                parent[max(a, b)] = min(a, b)
    sums: dict[int, float] = {}
    for i, v in enumerate(x):
        r = find(i)
        sums[r] = sums.get(r, 0.0) + v
    return ord_masses(sums.values())


def _colored_sum_sq(lengths: np.ndarray, cstar: float, rng) -> float:
    """Squared-mass sum after a single-color collapse of a raw length vector.

    With one color every marked block joins one merged group, so the result
    is (sum of marked)^2 + sum of squares of the unmarked.
    """
    if lengths.size == 0 or cstar <= 0:
        return float(np.sum(lengths**2))
    marks = rng.random(lengths.size) < -np.expm1(-cstar * lengths)
    marked_total = float(lengths[marks].sum())
    return marked_total**2 + float(np.sum(lengths[~marks] ** 2))


@dataclass(frozen=True)
class ColConsistencyReport:
    """Two-sample comparison of colored vs time-shifted excursion laws."""

    ks_stat: float
    p_value: float
    mean_colored: float
    se_colored: float
    mean_shifted: float
    se_shifted: float
    reps: int
    censored_fraction_colored: float
    censored_fraction_shifted: float
    colored: np.ndarray = None
    shifted: np.ndarray = None

    @property
    def means_compatible(self) -> bool:
        gap = abs(self.mean_colored - self.mean_shifted)
        return gap <= 3.0 * (self.se_colored + self.se_shifted)


def col_consistency_experiment(
    kappa: float,
    u: float,
    c: MassVector,
    cstar: float,
    reps: int,
    T: float | None,
    n_steps: int,
    seed: Seed,
) -> ColConsistencyReport:
    """Compare sum |gamma|^2 after coloring at rate c* with the shifted process.

    Side A samples the excursion lengths of the (kappa, u, c) path and applies
    color-and-collapse at rate c* to the length vector; side B samples the
    (kappa, u + (c*)^2, c join (c*)) path directly.  Both sides must produce
    the same law; censored excursions are excluded from coloring.
    """
    if kappa <= 0:
        raise InvalidInputError("need kappa > 0 so both sides are simulable")
    if cstar < 0:
        raise InvalidInputError("cstar must be >= 0")
    c = ord_masses(c) if not isinstance(c, MassVector) else c
    u_shift = u + cstar**2
    c_shift = join(c, ord_masses([cstar])) if cstar > 0 else c
    if u >= 0 or u_shift >= 0:
        if T is None:
            raise InvalidInputError("non-negative drift times need an explicit horizon")
    if T is None:
        # one common horizon and grid for both sides keeps the length lattice equal
        from .excursion import default_horizon

        T = max(default_horizon(kappa, u, c), default_horizon(kappa, u_shift, c_shift))
    lengths_a, cens_a, tot_a = sample_excursion_lengths(
        kappa, u, c, reps, substream(seed, 0), horizon=T, n_steps=n_steps
    )
    lengths_b, cens_b, tot_b = sample_excursion_lengths(
        kappa, u_shift, c_shift, reps, substream(seed, 1), horizon=T, n_steps=n_steps
    )
    colored = np.empty(reps)
    for r, lens in enumerate(lengths_a):
        colored[r] = _colored_sum_sq(lens, cstar, generator(substream(seed, 2, r)))
    shifted = np.array([float(np.sum(l**2)) for l in lengths_b])
    stat, p = ks_two_sample(colored, shifted)
    est_a = estimate_from_samples(colored)
    est_b = estimate_from_samples(shifted)
    return ColConsistencyReport(
        ks_stat=stat,
        p_value=p,
        mean_colored=est_a.mean,
        se_colored=est_a.std_error,
        mean_shifted=est_b.mean,
        se_shifted=est_b.std_error,
        reps=reps,
        censored_fraction_colored=cens_a / max(tot_a, 1),
        censored_fraction_shifted=cens_b / max(tot_b, 1),
        colored=colored,
        shifted=shifted,
    )
