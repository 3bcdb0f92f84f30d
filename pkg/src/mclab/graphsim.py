"""Coalescent-state samplers and exact small-instance oracles.

Two routes to the state at time t from a finite mass vector x:

* the percolation route: each unordered pair {i, j} is open independently
  with probability 1 - exp(-x_i x_j t); the state is the ordered component
  masses of the resulting graph;
* the clock route: a continuous-time Markov chain in which the pair (i, j)
  of current components merges at rate y_i y_j.

Both are checked against each other and against exact enumeration over all
edge configurations, which is feasible up to ENUMERATION_CAP vertices.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import MassVector, ord_masses
from .errors import CapacityError, InvalidInputError
from .rng import Seed, as_seed_sequence, generator, substream
from .stats import EstimateWithCI, estimate_from_samples

__all__ = [
    "ENUMERATION_CAP",
    "ComponentPartition",
    "MergeTrajectory",
    "ExactGraphOracle",
    "sample_components",
    "simulate_coalescent",
    "exact_connect_prob",
    "exact_disjoint_connect_prob",
    "mc_connect_prob",
]

ENUMERATION_CAP = 7  # 2^21 edge configurations, milliseconds per query


class _DisjointSet:
    __slots__ = ("parent",)

    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        parent = self.parent
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    def union(self, i: int, j: int) -> bool:
        ri, rj = self.find(i), self.find(j)
        if ri == rj:
            return False
        if rj < ri:
            ri, rj = rj, ri
        self.parent[rj] = ri
        return True


def _canonical_assignment(roots: list[int]) -> tuple[int, ...]:
    """Relabel component roots by first occurrence (restricted growth string)."""
    seen: dict[int, int] = {}
    out = []
    for r in roots:
        if r not in seen:
            seen[r] = len(seen)
        out.append(seen[r])
    return tuple(out)


@dataclass(frozen=True)
class ComponentPartition:
    """Partition of block indices with the ordered component masses."""

    assignment: tuple[int, ...]
    component_masses: MassVector

    @property
    def n_components(self) -> int:
        return len(self.component_masses)

    def targets_connected(self, targets) -> bool:
        ids = {self.assignment[i] for i in targets}
        return len(ids) <= 1


def _partition_from_dsu(x: np.ndarray, dsu: _DisjointSet) -> ComponentPartition:
    n = len(x)
    roots = [dsu.find(i) for i in range(n)]
    assignment = _canonical_assignment(roots)
    k = max(assignment) + 1 if n else 0
    sums = [0.0] * k
    for i, a in enumerate(assignment):
        sums[a] += x[i]
    return ComponentPartition(assignment=assignment, component_masses=ord_masses(sums))


@lru_cache(maxsize=64)
def _pair_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(n, k=1)


def sample_components(
    x: MassVector,
    t: float,
    seed: Seed,
    *,
    method: str = "auto",
) -> ComponentPartition:
    """Sample the coalescent state at time t via the percolation construction.

    Each pair {i, j} is open independently with probability
    1 - exp(-x_i x_j t).  Deterministic given (x, t, seed).

    method:
      "skip"  - row-major pair loop; pairs already connected through earlier
                open edges are skipped without drawing (law unchanged,
                connectivity being monotone in the edge set);
      "dense" - draw all pair indicators at once, then union the open ones;
      "auto"  - "skip" for small instances, "dense" for large ones.
    """
    if t < 0:
        raise InvalidInputError(f"time must be >= 0, got {t}")
    arr = x.as_array()
    n = len(arr)
    rng = generator(seed)
    if method == "auto":
        method = "skip" if n <= 24 else "dense"
    dsu = _DisjointSet(n)
    if method == "skip":
        for i in range(n - 1):
            xi_t = arr[i] * t
            if xi_t == 0.0:
                continue
            for j in range(i + 1, n):
                if dsu.find(i) == dsu.find(j):
                    continue
                p = -np.expm1(-xi_t * arr[j])
                if rng.random() < p:
                    dsu.union(i, j)
    elif method == "dense":
        ii, jj = _pair_indices(n)
        p = -np.expm1(-arr[ii] * arr[jj] * t)
        open_mask = rng.random(p.size) < p
        for i, j in zip(ii[open_mask], jj[open_mask]):
            dsu.union(int(i), int(j))
    else:
        raise InvalidInputError(f"unknown sampling method {method!r}")
    return _partition_from_dsu(arr, dsu)


@dataclass(frozen=True)
class MergeTrajectory:
    """Time-ordered merge events of the exponential-clock chain.

    Each event is (time, id_a, id_b) where a component id is the smallest
    original block index it contains.
    """

    initial: MassVector
    events: tuple[tuple[float, int, int], ...]
    final_state: ComponentPartition

    def mass_states(self) -> list[tuple[float, tuple[float, ...]]]:
        """Replay the chain: [(event_time, component masses after the event)].

        The first entry is (0.0, initial masses).
        """
        masses = {i: v for i, v in enumerate(self.initial)}
        out = [(0.0, tuple(masses.values()))]
        for time, a, b in self.events:
            merged = masses.pop(a) + masses.pop(b)
            masses[min(a, b)] = merged
            out.append((time, tuple(masses.values())))
        return out


def simulate_coalescent(x: MassVector, horizon: float, seed: Seed) -> MergeTrajectory:
    """Run the merge chain: components of mass y_i, y_j coalesce at rate y_i y_j.

    The total merge rate at state y is (s_1(y)^2 - s_2(y)) / 2; the merging
    pair is chosen with probability proportional to y_i y_j (sampled as
    first index ~ y_i (s_1 - y_i), partner ~ y_j among j != i).  Stops at the
    horizon or when a single block remains.
    """
    if horizon < 0:
        raise InvalidInputError(f"horizon must be >= 0, got {horizon}")
    rng = generator(seed)
    n = len(x)
    members: dict[int, list[int]] = {i: [i] for i in range(n)}
    masses: dict[int, float] = {i: v for i, v in enumerate(x)}
    events: list[tuple[float, int, int]] = []
    now = 0.0
    while len(masses) > 1:
        ids = np.array(sorted(masses))
        y = np.array([masses[i] for i in ids])
        s1 = y.sum()
        total_rate = (s1 * s1 - np.sum(y * y)) / 2.0
        if total_rate <= 0.0:
            break
        now += rng.exponential(1.0 / total_rate)
        if now > horizon:
            break
        w_first = y * (s1 - y)
        a_pos = rng.choice(len(ids), p=w_first / w_first.sum())
        w_second = y.copy()
        w_second[a_pos] = 0.0
        b_pos = rng.choice(len(ids), p=w_second / w_second.sum())
        a, b = int(ids[a_pos]), int(ids[b_pos])
        a, b = min(a, b), max(a, b)
        events.append((now, a, b))
        masses[a] = masses.pop(a) + masses.pop(b)
        members[a].extend(members.pop(b))
    dsu = _DisjointSet(n)
    for root, group in members.items():
        for i in group:
            dsu.union(root, i)
    final = _partition_from_dsu(x.as_array(), dsu)
    return MergeTrajectory(initial=x, events=tuple(events), final_state=final)


class ExactGraphOracle:
    """Exact probabilities on a small instance by full edge-configuration sums.

    Enumerates all 2^(n(n-1)/2) open/closed patterns once; the probability of
    any connection event is the sum of configuration probabilities over the
    patterns realizing it.
    """

    def __init__(self, x: MassVector, t: float):
        if t < 0:
            raise InvalidInputError(f"time must be >= 0, got {t}")
        arr = x.as_array()
        n = len(arr)
        if n > ENUMERATION_CAP:
            raise CapacityError(
                f"exact enumeration capped at {ENUMERATION_CAP} vertices, got {n}"
            )
        self.n = n
        self.masses = arr
        ii, jj = _pair_indices(n)
        self.pairs = list(zip(ii.tolist(), jj.tolist()))
        self.edge_probs = -np.expm1(-arr[ii] * arr[jj] * t)
        m = len(self.pairs)
        configs = np.arange(1 << m, dtype=np.uint32)
        probs = np.ones(len(configs))
        for e in range(m):
            bit = (configs >> e) & 1
            probs *= np.where(bit == 1, self.edge_probs[e], 1.0 - self.edge_probs[e])
        self.config_probs = probs
        # min-label flood: after n-1 sweeps over all edges every component
        # shares the label of its smallest vertex
        labels = np.broadcast_to(
            np.arange(n, dtype=np.int8), (len(configs), n)
        ).copy()
        for _ in range(max(n - 1, 0)):
            for e, (i, j) in enumerate(self.pairs):
                is_open = ((configs >> e) & 1) == 1
                lo = np.minimum(labels[:, i], labels[:, j])
                labels[is_open, i] = lo[is_open]
                labels[is_open, j] = lo[is_open]
        self.labels = labels

    def connect_prob(self, targets) -> float:
        """P(all targets lie in one connected component); singletons give 1."""
        targets = sorted(set(int(i) for i in targets))
        if not targets:
            raise InvalidInputError("need at least one target index")
        if targets[0] < 0 or targets[-1] >= self.n:
            raise InvalidInputError(f"target out of range for {self.n} vertices")
        if len(targets) == 1:
            return 1.0
        ref = self.labels[:, targets[0]]
        mask = np.ones(len(ref), dtype=bool)
        for i in targets[1:]:
            mask &= self.labels[:, i] == ref
        return float(self.config_probs[mask].sum())

    def partition_distribution(self) -> dict[tuple[int, ...], float]:
        """Exact law of the component partition (small n only)."""
        if self.n > 5:
            raise CapacityError(
                f"exact partition law capped at 5 vertices, got {self.n}"
            )
        out: dict[tuple[int, ...], float] = {}
        for row, p in zip(self.labels, self.config_probs):
            key = _canonical_assignment(row.tolist())
            out[key] = out.get(key, 0.0) + float(p)
        return out

    def disjoint_connect_prob(self, pairs) -> float:
        """P(all pairs are connected via mutually edge-disjoint paths)."""
        pairs = [(int(a), int(b)) for a, b in pairs]
        for a, b in pairs:
            if a == b:
                raise InvalidInputError("disjoint-connection pairs need distinct endpoints")
            if not (0 <= a < self.n and 0 <= b < self.n):
                raise InvalidInputError(f"pair index out of range for {self.n} vertices")
        if not pairs:
            return 1.0
        # prefilter: all pairs must at least be connected
        mask = np.ones(len(self.config_probs), dtype=bool)
        for a, b in pairs:
            mask &= self.labels[:, a] == self.labels[:, b]
        total = 0.0
        m = len(self.pairs)
        candidates = np.flatnonzero(mask)
        configs = candidates.astype(np.uint64)
        for config, prob in zip(configs, self.config_probs[candidates]):
            open_edges = [self.pairs[e] for e in range(m) if (int(config) >> e) & 1]
            if _has_disjoint_path_system(self.n, open_edges, pairs):
                total += float(prob)
        return total


def _simple_paths(adj, src, dst, banned) -> list[frozenset]:
    """All vertex-simple paths src -> dst as edge sets, avoiding banned edges."""
    results: list[frozenset] = []

    def walk(v, visited, edges):
        if v == dst:
            results.append(frozenset(edges))
            return
        for w in adj[v]:
            ek = (v, w) if v < w else (w, v)
            if w in visited or ek in banned or ek in edges:
                continue
            edges.add(ek)
            visited.add(w)
            walk(w, visited, edges)
            visited.discard(w)
            edges.discard(ek)

    walk(src, {src}, set())
    return results


def _has_disjoint_path_system(n, open_edges, pairs) -> bool:
    """Backtracking search for pairwise edge-disjoint connecting paths."""
    adj: dict[int, list[int]] = {i: [] for i in range(n)}
    for a, b in open_edges:
        adj[a].append(b)
        adj[b].append(a)

    def search(idx: int, used: frozenset) -> bool:
        if idx == len(pairs):
            return True
        src, dst = pairs[idx]
        for path_edges in _simple_paths(adj, src, dst, used):
            if search(idx + 1, used | path_edges):
                return True
        return False

    return search(0, frozenset())


def exact_connect_prob(x: MassVector, t: float, targets) -> float:
    """Exact P(all targets in one component) by edge-configuration enumeration."""
    return ExactGraphOracle(x, t).connect_prob(targets)


def exact_disjoint_connect_prob(x: MassVector, t: float, pairs) -> float:
    """Exact P(all pairs connected via mutually edge-disjoint paths)."""
    return ExactGraphOracle(x, t).disjoint_connect_prob(pairs)


def mc_connect_prob(
    x: MassVector, t: float, targets, reps: int, seed: Seed
) -> EstimateWithCI:
    """Monte Carlo estimate of the joint-connection probability."""
    if reps < 1:
        raise InvalidInputError(f"reps must be >= 1, got {reps}")
    targets = list(targets)
    vals = np.empty(reps)
    for r in range(reps):
        part = sample_components(x, t, substream(seed, r))
        vals[r] = 1.0 if part.targets_connected(targets) else 0.0
    return estimate_from_samples(vals)
