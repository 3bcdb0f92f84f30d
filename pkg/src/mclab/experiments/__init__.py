"""Catalog of named, seeded, reproducible verification experiments.

Every experiment checks one quantitative statement through exact oracles or
seeded Monte Carlo, writes one CSV row per replicate (or per instance for
scans), and reports one verdict per claim checked.
"""

from __future__ import annotations

from ..errors import InvalidInputError
from . import graphs, paths
from ._common import ExperimentResult, merge_config

_REGISTRY: dict[str, tuple] = {
    "sampler-agreement": (
        graphs.run_sampler_agreement,
        {"x": [1.0, 1.0, 1.0, 1.0], "t": 0.3, "reps": 100_000, "seed": 0, "threads": None},
    ),
    "lemma21-scan": (
        graphs.run_lemma21_scan,
        {"instances": 100, "max_blocks": 6, "window": 0.9, "seed": 0},
    ),
    "prop22-scan": (
        graphs.run_prop22_scan,
        {"instances": 100, "max_blocks": 6, "window": 0.9, "orders": [2, 3, 4], "seed": 0},
    ),
    "bk-verify": (
        graphs.run_bk_verify,
        {"instances": 100, "max_blocks": 5, "max_pairs": 2, "seed": 0},
    ),
    "lemma31-scan": (
        graphs.run_lemma31_scan,
        {
            "instances": 20,
            "reps": 10_000,
            "orders": [2, 3, 4],
            "max_blocks": 6,
            "window": 0.9,
            "seed": 0,
            "threads": None,
        },
    ),
    "joint-moments": (
        graphs.run_joint_moments,
        {"pairs": [[2, 3], [3, 3]], "L": 32, "reps": 10_000, "t_frac": 0.5, "seed": 0},
    ),
    "generator-oracle": (
        graphs.run_generator_oracle,
        {
            "vectors": 1000,
            "max_len": 10,
            "k_max": 3,
            "n_max": 2,
            "m_max": 4,
            "rel_tol": 1e-10,
            "seed": 0,
        },
    ),
    "martingale-residual": (
        graphs.run_martingale_residual,
        {
            "cases": [[[1, 1], "s2"], [[1, 1], "s3"], [[1, 1, 1], "s2"], [[1, 1, 1], "s3"]],
            "t": 0.2,
            "reps": 100_000,
            "time_grid": 64,
            "closed_form_check": True,
            "seed": 0,
        },
    ),
    "theorem11-moments": (
        graphs.run_theorem11_moments,
        {
            "sizes": [64, 128, 256, 512],
            "t": 0.5,
            "powers": [2, 4, 6],
            "reps": 4000,
            "seed": 0,
            "threads": None,
        },
    ),
    "grind-domination": (
        graphs.run_grind_domination,
        {
            "x": [1.0, 0.8],
            "m": 1,
            "M": 2,
            "t": 0.7,
            "reps": 2000,
            "max_tries": 500,
            "seed": 0,
            "threads": None,
        },
    ),
    "negative-time": (
        paths.run_negative_time,
        {
            "kappa": 1.0,
            "t": -1.0,
            "c": [],
            "reps": 10_000,
            "n_steps": 10_000,
            "horizon": None,
            "d2": 2.0,
            "censor_limit": 0.01,
            "seed": 0,
            "threads": None,
        },
    ),
    "sequence-convergence": (
        graphs.run_sequence_convergence,
        {
            "kappa": 1.0,
            "t": -1.0,
            "c": [],
            "sizes": [50, 100, 200, 400],
            "reps": 1000,
            "excursion_reps": 4000,
            "n_steps": 10_000,
            "seed": 0,
            "threads": None,
        },
    ),
    "sigma-tails": (
        paths.run_sigma_tails,
        {
            "kappa": 1.0,
            "t": 1.0,
            "c": [],
            "reps": 10_000,
            "T": 12.0,
            "grid_ratio": 10_000,
            "slope_limit": -0.1,
            "quantile": 0.9,
            "min_tail": 30,
            "seed": 0,
            "threads": None,
        },
    ),
    "shift-identity": (
        paths.run_shift_identity,
        {
            "kappa": 1.0,
            "t": 1.0,
            "c": [0.5, 0.25],
            "reps": 1000,
            "T": 5.0,
            "grid_ratio": 10_000,
            "seed": 0,
            "threads": None,
        },
    ),
    "eta-thinning": (
        paths.run_eta_thinning,
        {
            "kappa": 1.0,
            "t": 1.0,
            "c": [0.5, 0.25],
            "s0": 1.0,
            "reps": 10_000,
            "grid_ratio": 10_000,
            "seed": 0,
            "threads": None,
        },
    ),
    "col-consistency": (
        paths.run_col_consistency,
        {
            "kappa": 1.0,
            "u": -1.0,
            "c": [],
            "cstar": 0.5,
            "reps": 10_000,
            "horizon": 40.0,
            "n_steps": 200_000,
            "seed": 0,
            "threads": None,
        },
    ),
    "v-decomposition": (
        paths.run_v_decomposition,
        {
            "c": [0.8, 0.5, 0.25],
            "T": 3.0,
            "n_steps": 3000,
            "reps": 10_000,
            "seed": 0,
            "threads": None,
        },
    ),
}


def experiment_names() -> list[str]:
    return list(_REGISTRY)


def experiment_defaults(name: str) -> dict:
    if name not in _REGISTRY:
        raise InvalidInputError(f"unknown experiment {name!r}; known: {experiment_names()}")
    return dict(_REGISTRY[name][1])


def run_experiment(name: str, *config_layers: dict) -> ExperimentResult:
    """Merge config layers over the experiment defaults and run it."""
    if name not in _REGISTRY:
        raise InvalidInputError(f"unknown experiment {name!r}; known: {experiment_names()}")
    func, defaults = _REGISTRY[name]
    cfg = merge_config(defaults, *config_layers)
    cfg.pop("experiment", None)
    cfg.pop("out", None)
    return func(cfg)


__all__ = ["ExperimentResult", "experiment_names", "experiment_defaults", "run_experiment"]
