"""Experiments driven by the reflected-path samplers."""

from __future__ import annotations

import math

import numpy as np

from ..core import ParamTriple, ord_masses
from ..excursion import (
    _grid_with_tprime,
    _raw_w_values,
    decompose_V,
    default_horizon,
    sample_V,
    sample_excursion_lengths,
    shift_identity_check,
    sigma_sample,
)
from ..moments import bound_negative_time, constants
from ..operators import col_consistency_experiment
from ..rng import substream
from ..stats import estimate_from_samples, ks_two_sample
from ._common import ExperimentResult, map_replicates


# -- negative-time ------------------------------------------------------------

def _negative_time_chunk(payload, lo, hi):
    lengths, censored, total = sample_excursion_lengths(
        payload["kappa"],
        payload["t"],
        ord_masses(payload["c"]),
        hi - lo,
        substream(payload["seed"], payload["level"]),
        horizon=payload["horizon"],
        n_steps=payload["n_steps"],
        start=lo,
    )
    rows = [
        (payload["level"], lo + i, float(np.sum(l**2))) for i, l in enumerate(lengths)
    ]
    return [(rows, censored, total)]


def _run_negative_time_level(cfg, level: int, n_steps: int):
    horizon = cfg["horizon"] or default_horizon(cfg["kappa"], cfg["t"], ord_masses(cfg["c"]))
    payload = {
        "kappa": cfg["kappa"],
        "t": cfg["t"],
        "c": list(cfg["c"]),
        "seed": cfg["seed"],
        "level": level,
        "horizon": horizon,
        "n_steps": n_steps,
    }
    chunks = map_replicates(_negative_time_chunk, payload, cfg["reps"], cfg["threads"])
    rows = []
    censored = total = 0
    for chunk_rows, c_cnt, t_cnt in chunks:
        rows.extend(chunk_rows)
        censored += c_cnt
        total += t_cnt
    sums = np.array([r[2] for r in rows])
    frac = censored / total if total else 0.0
    return rows, estimate_from_samples(sums), frac


def run_negative_time(cfg) -> ExperimentResult:
    bound = bound_negative_time(cfg["t"], d2=cfg["d2"])
    rows_a, est_a, frac_a = _run_negative_time_level(cfg, 0, cfg["n_steps"])
    rows_b, est_b, frac_b = _run_negative_time_level(cfg, 1, 2 * cfg["n_steps"])
    gap = abs(est_a.mean - est_b.mean)
    joint = math.hypot(est_a.std_error, est_b.std_error)
    verdicts = [
        {
            "name": "excursion_bound_coarse",
            "passed": est_a.mean + 3 * est_a.std_error <= bound,
            "mean": est_a.mean,
        },
        {
            "name": "excursion_bound_refined",
            "passed": est_b.mean + 3 * est_b.std_error <= bound,
            "mean": est_b.mean,
        },
        {
            "name": "censoring_under_limit",
            "passed": max(frac_a, frac_b) < cfg["censor_limit"],
            "coarse": frac_a,
            "refined": frac_b,
        },
        {"name": "grid_refinement_stable", "passed": gap <= 3 * joint, "gap": gap},
    ]
    return ExperimentResult(
        experiment="negative-time",
        config=cfg,
        header=["grid_level", "replicate", "sum_sq_lengths"],
        rows=rows_a + rows_b,
        estimates=[
            {"name": "sum_sq_coarse", "mean": est_a.mean, "se": est_a.std_error},
            {"name": "sum_sq_refined", "mean": est_b.mean, "se": est_b.std_error},
        ],
        bounds=[{"name": "negative_time", "value": bound, "d2": cfg["d2"]}],
        verdicts=verdicts,
    )


# -- sigma-tails ----------------------------------------------------------------

def _sigma_chunk(payload, lo, hi):
    params = ParamTriple(payload["kappa"], payload["t"], ord_masses(payload["c"]))
    h = 2.0 * params.t / params.kappa / payload["grid_ratio"]
    rows = []
    for r in range(lo, hi):
        sigma = sigma_sample(params, payload["T"], h, substream(payload["seed"], r))
        rows.append((r, -1.0 if sigma is None else sigma, sigma is None))
    return rows


def _survival_slope(sigmas: np.ndarray, n_total: int, q_lo: float, min_tail: int):
    """Least-squares slope of log empirical survival beyond the q_lo quantile."""
    s = np.sort(sigmas)
    lo = float(np.quantile(s, q_lo))
    # survival among *all* paths (censored count as >= any observed value)
    pts = [(v, (n_total - i) / n_total) for i, v in enumerate(s) if v >= lo]
    pts = [(v, p) for v, p in pts if p * n_total >= min_tail]
    if len(pts) < 10:
        return None
    xs = np.array([v for v, _ in pts])
    ys = np.log(np.array([p for _, p in pts]))
    slope = float(np.polyfit(xs, ys, 1)[0])
    return slope


def run_sigma_tails(cfg) -> ExperimentResult:
    payload = {
        "kappa": cfg["kappa"],
        "t": cfg["t"],
        "c": list(cfg["c"]),
        "T": cfg["T"],
        "grid_ratio": cfg["grid_ratio"],
        "seed": cfg["seed"],
    }
    rows = map_replicates(_sigma_chunk, payload, cfg["reps"], cfg["threads"])
    sigmas = np.array([v for _r, v, cens in rows if not cens])
    n_censored = sum(1 for _r, _v, cens in rows if cens)
    slope = _survival_slope(sigmas, len(rows), cfg["quantile"], cfg["min_tail"])
    ok = slope is not None and slope <= cfg["slope_limit"]
    return ExperimentResult(
        experiment="sigma-tails",
        config=cfg,
        header=["replicate", "sigma", "censored"],
        rows=rows,
        estimates=[
            {"name": "tail_slope", "value": slope},
            {"name": "censored", "value": n_censored},
            {"name": "q90", "value": float(np.quantile(sigmas, 0.9))},
        ],
        verdicts=[
            {
                "name": "log_survival_slope",
                "passed": bool(ok),
                "slope": slope,
                "limit": cfg["slope_limit"],
            }
        ],
    )


# -- shift-identity -------------------------------------------------------------

def _shift_chunk(payload, lo, hi):
    params = ParamTriple(payload["kappa"], payload["t"], ord_masses(payload["c"]))
    h = 2.0 * params.t / params.kappa / payload["grid_ratio"]
    rows = []
    for r in range(lo, hi):
        ok = shift_identity_check(params, payload["T"], h, substream(payload["seed"], r))
        rows.append((r, ok))
    return rows


def run_shift_identity(cfg) -> ExperimentResult:
    payload = {
        "kappa": cfg["kappa"],
        "t": cfg["t"],
        "c": list(cfg["c"]),
        "T": cfg["T"],
        "grid_ratio": cfg["grid_ratio"],
        "seed": cfg["seed"],
    }
    rows = map_replicates(_shift_chunk, payload, cfg["reps"], cfg["threads"])
    n_pass = sum(1 for _r, ok in rows if ok)
    return ExperimentResult(
        experiment="shift-identity",
        config=cfg,
        header=["seed_index", "pass"],
        rows=rows,
        estimates=[{"name": "pass_rate", "value": n_pass / len(rows)}],
        verdicts=[{"name": "pathwise_identity", "passed": n_pass == len(rows)}],
    )


# -- eta-thinning ---------------------------------------------------------------

def _eta_chunk(payload, lo, hi):
    """Marginal of the thinned path at s0 (side 'eta') or of the shifted original."""
    params = ParamTriple(payload["kappa"], payload["t"], ord_masses(payload["c"]))
    t_prime = 2.0 * params.t / params.kappa
    h_req = t_prime / payload["grid_ratio"]
    n_prime, _, h = _grid_with_tprime(t_prime, h_req, payload["s0"])
    idx_s0 = max(1, int(round(payload["s0"] / h)))
    rows = []
    if payload["side"] == "shifted":
        n_total = n_prime + idx_s0
        for r in range(lo, hi):
            values, _ = _raw_w_values(params, n_total, h, substream(payload["seed"], 0, r))
            rows.append(("shifted", r, float(values[n_prime + idx_s0] - values[n_prime])))
    else:
        from ..excursion import eta_thinned_W

        for r in range(lo, hi):
            path = eta_thinned_W(params, idx_s0 * h, h, substream(payload["seed"], 1, r))
            rows.append(("eta", r, float(path.values[-1])))
    return rows


def run_eta_thinning(cfg) -> ExperimentResult:
    base = {
        "kappa": cfg["kappa"],
        "t": cfg["t"],
        "c": list(cfg["c"]),
        "s0": cfg["s0"],
        "grid_ratio": cfg["grid_ratio"],
        "seed": cfg["seed"],
    }
    rows_shift = map_replicates(_eta_chunk, dict(base, side="shifted"), cfg["reps"], cfg["threads"])
    rows_eta = map_replicates(_eta_chunk, dict(base, side="eta"), cfg["reps"], cfg["threads"])
    a = np.array([v for _s, _r, v in rows_eta])
    b = np.array([v for _s, _r, v in rows_shift])
    stat, p = ks_two_sample(a, b)
    return ExperimentResult(
        experiment="eta-thinning",
        config=cfg,
        header=["side", "replicate", "value"],
        rows=rows_eta + rows_shift,
        estimates=[
            {"name": "ks_stat", "value": stat},
            {"name": "p_value", "value": p},
            {"name": "mean_eta", "value": float(a.mean())},
            {"name": "mean_shifted", "value": float(b.mean())},
        ],
        verdicts=[{"name": "thinned_marginal_matches", "passed": p > 0.01, "p_value": p}],
    )


# -- col-consistency --------------------------------------------------------------

def run_col_consistency(cfg) -> ExperimentResult:
    report = col_consistency_experiment(
        cfg["kappa"],
        cfg["u"],
        ord_masses(cfg["c"]),
        cfg["cstar"],
        reps=cfg["reps"],
        T=cfg["horizon"],
        n_steps=cfg["n_steps"],
        seed=cfg["seed"],
    )
    rows = [("colored", i, float(v)) for i, v in enumerate(report.colored)]
    rows += [("shifted", i, float(v)) for i, v in enumerate(report.shifted)]
    return ExperimentResult(
        experiment="col-consistency",
        config=cfg,
        header=["side", "index", "value"],
        rows=rows,
        estimates=[
            {"name": "ks_stat", "value": report.ks_stat},
            {"name": "p_value", "value": report.p_value},
            {"name": "mean_colored", "value": report.mean_colored, "se": report.se_colored},
            {"name": "mean_shifted", "value": report.mean_shifted, "se": report.se_shifted},
        ],
        verdicts=[
            {"name": "col_law_matches", "passed": report.p_value > 0.01, "p_value": report.p_value},
            {"name": "means_compatible", "passed": report.means_compatible},
        ],
    )


# -- v-decomposition ----------------------------------------------------------

def _vdec_chunk(payload, lo, hi):
    c = ord_masses(payload["c"])
    T, n_steps = payload["T"], payload["n_steps"]
    h = T / n_steps
    mid = n_steps // 2
    rows = []
    for r in range(lo, hi):
        v = sample_V(c, T, h, substream(payload["seed"], r))
        dec = decompose_V(v, c)
        pointwise = float(np.max(np.abs(v.values - (dec.M_path - dec.A_path))))
        mono_a = float(np.min(np.diff(dec.A_path)))
        mono_b = float(np.min(np.diff(dec.bracket_path)))
        rows.append((r, float(dec.M_path[mid]), float(dec.M_path[-1]), pointwise, mono_a, mono_b))
    return rows


def run_v_decomposition(cfg) -> ExperimentResult:
    payload = {"c": list(cfg["c"]), "T": cfg["T"], "n_steps": cfg["n_steps"], "seed": cfg["seed"]}
    rows = map_replicates(_vdec_chunk, payload, cfg["reps"], cfg["threads"])
    m_mid = estimate_from_samples(np.array([r[1] for r in rows]))
    m_end = estimate_from_samples(np.array([r[2] for r in rows]))
    worst_pointwise = max(r[3] for r in rows)
    min_increment = min(min(r[4] for r in rows), min(r[5] for r in rows))
    verdicts = [
        {"name": "V_equals_M_minus_A", "passed": worst_pointwise <= 1e-12, "worst": worst_pointwise},
        {"name": "A_and_bracket_nondecreasing", "passed": min_increment >= -1e-15},
        {
            "name": "martingale_mean_zero_mid",
            "passed": abs(m_mid.mean) <= 4 * m_mid.std_error,
            "mean": m_mid.mean,
            "se": m_mid.std_error,
        },
        {
            "name": "martingale_mean_zero_end",
            "passed": abs(m_end.mean) <= 4 * m_end.std_error,
            "mean": m_end.mean,
            "se": m_end.std_error,
        },
    ]
    return ExperimentResult(
        experiment="v-decomposition",
        config=cfg,
        header=["replicate", "M_mid", "M_end", "pointwise_gap", "min_dA", "min_dBracket"],
        rows=rows,
        estimates=[
            {"name": "E_M_mid", "mean": m_mid.mean, "se": m_mid.std_error},
            {"name": "E_M_end", "mean": m_end.mean, "se": m_end.std_error},
        ],
        verdicts=verdicts,
    )
