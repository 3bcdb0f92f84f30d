"""Domain types for mass configurations and the elementary power-sum functionals.

A mass configuration is a finite vector of non-negative block masses kept in
canonical (non-increasing) order.  Infinite configurations are represented by
finite truncations throughout the package; experiments that depend on the tail
re-run over growing truncations instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import InvalidInputError

__all__ = ["MassVector", "ParamTriple", "ord_masses", "s_k", "join", "grind"]


@dataclass(frozen=True)
class MassVector:
    """Finite non-increasing vector of non-negative block masses.

    Canonical order is enforced at construction; all other modules may rely
    on it.  Values are immutable and safe to share across workers.
    """

    masses: tuple[float, ...]

    def __post_init__(self) -> None:
        arr = np.asarray(self.masses, dtype=float)
        object.__setattr__(self, "masses", tuple(arr.tolist()))
        if arr.size == 0:
            return
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise InvalidInputError("block masses must be finite and >= 0")
        if np.any(arr[:-1] < arr[1:]):
            raise InvalidInputError(
                "masses must be non-increasing; use ord_masses() to canonicalize"
            )

    def __len__(self) -> int:
        return len(self.masses)

    def __iter__(self) -> Iterator[float]:
        return iter(self.masses)

    def __getitem__(self, i: int) -> float:
        return self.masses[i]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.masses, dtype=float)

    @property
    def total(self) -> float:
        """Total mass, the first power sum."""
        return float(sum(self.masses))

    @property
    def norm_sq(self) -> float:
        """Squared l2 norm, the second power sum."""
        return s_k(self, 2)

    @property
    def norm(self) -> float:
        return float(np.sqrt(self.norm_sq))


def ord_masses(x: Iterable[float] | MassVector) -> MassVector:
    """Canonicalize a mass sequence: sort non-increasingly.

    Raises InvalidInputError on negative entries.
    """
    if isinstance(x, MassVector):
        return x
    arr = np.sort(np.asarray(list(x), dtype=float))[::-1]
    return MassVector(tuple(arr.tolist()))


def s_k(x: MassVector | Iterable[float], k: int) -> float:
    """k-th power sum of the masses, sum_i x_i**k (k >= 1)."""
    if int(k) != k or k < 1:
        raise InvalidInputError(f"power-sum order must be an integer >= 1, got {k}")
    arr = x.as_array() if isinstance(x, MassVector) else np.asarray(list(x), dtype=float)
    if arr.size == 0:
        return 0.0
    return float(np.sum(arr ** int(k)))


def join(x: MassVector, y: MassVector) -> MassVector:
    """Multiset union of two mass vectors, re-ordered.

    Preserves every power sum: s_k(join(x, y)) = s_k(x) + s_k(y).
    """
    return ord_masses(list(x.masses) + list(y.masses))


def grind(x: MassVector, m: int, M: int) -> MassVector:
    """Split each of the first ``m`` blocks into ``M`` equal pieces.

    Total mass is preserved exactly; the contribution of each ground block
    to the second power sum is divided by ``M``.
    """
    if int(m) != m or not 1 <= m <= len(x):
        raise InvalidInputError(f"m must be an integer in [1, len(x)], got {m}")
    if int(M) != M or M < 1:
        raise InvalidInputError(f"M must be an integer >= 1, got {M}")
    m, M = int(m), int(M)
    pieces: list[float] = []
    for v in x.masses[:m]:
        pieces.extend([v / M] * M)
    pieces.extend(x.masses[m:])
    return ord_masses(pieces)


@dataclass(frozen=True)
class ParamTriple:
    """Parameters (kappa, t, c) of the excursion processes.

    kappa >= 0 is the diffusion coefficient, t the coalescent time, and c a
    finite non-increasing vector of jump rates.  The kappa = 0 regime of the
    full parameter set requires an infinite c and is only approached here
    through growing finite truncations.
    """

    kappa: float
    t: float
    c: MassVector

    def __post_init__(self) -> None:
        object.__setattr__(self, "kappa", float(self.kappa))
        object.__setattr__(self, "t", float(self.t))
        if not np.isfinite(self.kappa) or self.kappa < 0:
            raise InvalidInputError(f"kappa must be finite and >= 0, got {self.kappa}")
        if not np.isfinite(self.t):
            raise InvalidInputError("t must be finite")
        if not isinstance(self.c, MassVector):
            object.__setattr__(self, "c", ord_masses(self.c))
