"""Shared plumbing for the experiment catalog: results, config merging, parallel map."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from ..errors import InvalidInputError

GLOBAL_KEYS = {"experiment", "seed", "reps", "threads", "out"}


@dataclass
class ExperimentResult:
    """Everything an experiment hands back to the CLI for reporting."""

    experiment: str
    config: dict
    header: list[str]
    rows: list[tuple]
    estimates: list[dict] = field(default_factory=list)
    bounds: list[dict] = field(default_factory=list)
    verdicts: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(v["passed"] for v in self.verdicts)


def merge_config(defaults: dict, *layers: dict) -> dict:
    """Layer user config over defaults, rejecting unknown keys."""
    allowed = set(defaults) | GLOBAL_KEYS
    merged = dict(defaults)
    for layer in layers:
        for key, value in layer.items():
            if value is None:
                continue
            if key not in allowed:
                raise InvalidInputError(f"unknown config key {key!r}; allowed: {sorted(allowed)}")
            merged[key] = value
    return merged


def resolve_threads(threads) -> int:
    if threads is None:
        return os.cpu_count() or 1
    threads = int(threads)
    if threads < 1:
        raise InvalidInputError("threads must be >= 1")
    return threads


def map_replicates(worker, payload: dict, reps: int, threads) -> list:
    """Run ``worker(payload, lo, hi)`` over [0, reps) in index chunks.

    Results are concatenated in chunk order, and every replicate derives its
    randomness from its absolute index, so the output is identical for any
    thread count.  Falls back to in-process execution if the pool cannot be
    used.
    """
    threads = resolve_threads(threads)
    if threads <= 1 or reps < 4 * threads:
        return list(worker(payload, 0, reps))
    step = (reps + threads - 1) // threads
    spans = [(lo, min(lo + step, reps)) for lo in range(0, reps, step)]
    try:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(worker, payload, lo, hi) for lo, hi in spans]
            chunks = [f.result() for f in futures]
    except (OSError, RuntimeError):
        return list(worker(payload, 0, reps))
    out: list = []
    for chunk in chunks:
        out.extend(chunk)
    return out
