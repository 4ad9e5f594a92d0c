"""Iterated-logarithm statistics across path ensembles.

The running statistic is sup over n in [n0, N] of S_n / sqrt(2 n loglog n)
(one-sided, and with |S_n| for the two-sided version).  The limsup theory
is asymptotic; at desk scale the harness therefore reports

* running suprema calibrated against an independent iid oracle band,
* the fast-converging variance proxy Var(S_n)/n against the squared
  increment-norm reference,
* the decay of the limit-remainder second moment E[R_n^2]/n.

Ensembles are deterministic: path i draws only from stream i, and
aggregation happens in path order regardless of worker scheduling.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .chains import ChainKind, ChainSpec, Path, RngStream, simulate_path
from .functionals import Functional, make_functional
from .transfer import resolvent

__all__ = [
    "DEFAULT_CHECKPOINTS",
    "DEFAULT_N0",
    "LilStatistic",
    "lil_statistic",
    "stout_check",
    "EnsembleReport",
    "run_ensemble",
    "variance_scaling",
    "remainder_decay",
    "resolve_threads",
]

DEFAULT_N0 = 100
DEFAULT_CHECKPOINTS = tuple(2**j for j in range(8, 21, 2))


def _denominators(n: int, n0: int) -> np.ndarray:
    idx = np.arange(n0, n + 1, dtype=np.float64)
    return np.sqrt(2.0 * idx * np.log(np.log(idx)))


@dataclass
class LilStatistic:
    n0: int
    checkpoints: tuple[int, ...]
    running_sup: float
    running_sup_abs: float
    checkpoint_sup: np.ndarray       # prefix suprema (one-sided) at checkpoints
    checkpoint_sup_abs: np.ndarray
    checkpoint_ratio: np.ndarray     # pointwise S_n / denom at checkpoints
    checkpoint_ratio_abs: np.ndarray


def lil_statistic(path_or_sums, n0: int = DEFAULT_N0,
                  checkpoints=None) -> LilStatistic:
    """Exact running suprema of the LIL ratio over every n in [n0, N].

    ``n0`` must be at least 3 so that loglog n is positive.  Checkpoints
    record prefix suprema and pointwise ratios; the returned suprema use
    the whole range, not just the checkpoints.
    """
    if n0 < 3:
        raise ValueError("n0 must be >= 3 so that loglog n is positive")
    S = path_or_sums.partial_sums if isinstance(path_or_sums, Path) else np.asarray(path_or_sums)
    n = S.size
    if n < n0:
        raise ValueError("path shorter than n0")
    if checkpoints is None:
        checkpoints = tuple(c for c in DEFAULT_CHECKPOINTS if c <= n)
    checkpoints = tuple(int(c) for c in checkpoints)
    if any(c > n for c in checkpoints):
        raise ValueError("checkpoint beyond path length")
    denom = _denominators(n, n0)
    ratio = S[n0 - 1:] / denom
    sup_run = np.maximum.accumulate(ratio)
    sup_abs_run = np.maximum.accumulate(np.abs(ratio))
    cp_sup = np.full(len(checkpoints), np.nan)
    cp_sup_abs = np.full(len(checkpoints), np.nan)
    cp_ratio = np.full(len(checkpoints), np.nan)
    cp_ratio_abs = np.full(len(checkpoints), np.nan)
    for i, c in enumerate(checkpoints):
        if c >= n0:
            cp_sup[i] = sup_run[c - n0]
            cp_sup_abs[i] = sup_abs_run[c - n0]
            cp_ratio[i] = ratio[c - n0]
            cp_ratio_abs[i] = abs(ratio[c - n0])
    return LilStatistic(
        n0=n0, checkpoints=checkpoints,
        running_sup=float(sup_run[-1]), running_sup_abs=float(sup_abs_run[-1]),
        checkpoint_sup=cp_sup, checkpoint_sup_abs=cp_sup_abs,
        checkpoint_ratio=cp_ratio, checkpoint_ratio_abs=cp_ratio_abs,
    )


@dataclass
class StoutReport:
    n0: int
    checkpoints: tuple[int, ...]
    checkpoint_sup_abs: np.ndarray
    empirical_variance: float
    variance_ok: bool
    warning: str = ""


def stout_check(increments, checkpoints=None, n0: int = DEFAULT_N0) -> StoutReport:
    """Running two-sided suprema for a normalized stationary MDS.

    The caller normalizes to unit variance; a mismatch beyond 5% only
    warns (the statistic is still reported).  Degenerate all-zero input is
    rejected since the normalization precondition cannot hold.
    """
    inc = np.asarray(increments, dtype=np.float64)
    var = float(inc.var())
    if var == 0.0:
        raise ValueError("increments have zero variance; normalize first")
    warning = ""
    ok = abs(var - 1.0) <= 0.05
    if not ok:
        warning = f"empirical variance {var:.4f} is off unit by more than 5%"
    stat = lil_statistic(np.cumsum(inc), n0=n0, checkpoints=checkpoints)
    return StoutReport(
        n0=n0, checkpoints=stat.checkpoints,
        checkpoint_sup_abs=stat.checkpoint_sup_abs,
        empirical_variance=var, variance_ok=ok, warning=warning,
    )


# ----------------------------------------------------------------------
# ensembles
# ----------------------------------------------------------------------

@dataclass
class EnsembleReport:
    seeds: int
    n: int
    n0: int
    checkpoints: tuple[int, ...]
    lil_quantiles: dict            # quantile -> running_sup_abs value at N
    lil_quantiles_one_sided: dict
    sup_abs_medians: np.ndarray    # median prefix supremum per checkpoint
    variance_curve: np.ndarray     # Var(S_n)/n per checkpoint
    variance_se: np.ndarray
    remainder_curve: np.ndarray | None  # E[limit_R^2]/n per checkpoint
    remainder_se: np.ndarray | None
    H_norm_ref: float | None
    ergodic_H_estimate: float | None
    ergodic_H_se: float | None
    per_path: dict = field(default_factory=dict)


def _spec_token(spec: ChainSpec) -> tuple:
    return (spec.kind.value, spec.memory_K)


def _spec_from_token(tok) -> ChainSpec:
    return ChainSpec(ChainKind(tok[0]), tok[1])


def _collect_records(spec: ChainSpec, g: Functional, n: int, master_seed: int,
                     start: int, count: int, n0: int, checkpoints,
                     eps_min: float | None) -> dict:
    ncp = len(checkpoints)
    out = {
        "S_cp": np.empty((count, ncp)),
        "sup": np.empty(count),
        "sup_abs": np.empty(count),
        "sup_abs_cp": np.empty((count, ncp)),
    }
    track_H = eps_min is not None
    if track_H:
        r = resolvent(spec, g, eps_min)
        out["H2_mean"] = np.empty(count)
        out["H2_se"] = np.empty(count)
        out["R_cp"] = np.empty((count, ncp))
    for i in range(count):
        path = simulate_path(spec, g, n, RngStream(master_seed, start + i),
                             retain_states=track_H)
        stat = lil_statistic(path, n0=n0, checkpoints=checkpoints)
        out["S_cp"][i] = path.partial_sums[np.asarray(checkpoints) - 1]
        out["sup"][i] = stat.running_sup
        out["sup_abs"][i] = stat.running_sup_abs
        out["sup_abs_cp"][i] = stat.checkpoint_sup_abs
        if track_H:
            h_vals = r.h_eps(path.states)
            qh_vals = r.Qh_eps(path.states)
            H_inc = h_vals[1:] - qh_vals[:-1]
            M = np.cumsum(H_inc)
            R = path.partial_sums - M
            out["R_cp"][i] = R[np.asarray(checkpoints) - 1]
            sq = H_inc * H_inc
            out["H2_mean"][i] = sq.mean()
            # batch-means standard error (64 batches), robust to weak dependence
            nb = 64
            if n >= 2 * nb:
                bm = sq[: (n // nb) * nb].reshape(nb, -1).mean(axis=1)
                out["H2_se"][i] = bm.std(ddof=1) / math.sqrt(nb)
            else:
                out["H2_se"][i] = sq.std(ddof=1) / math.sqrt(n)
    return out


def _ensemble_worker(args) -> dict:
    tok, g_name, n, master_seed, start, count, n0, checkpoints, eps_min = args
    spec = _spec_from_token(tok)
    g = make_functional(g_name, memory_K=spec.memory_K)
    return _collect_records(spec, g, n, master_seed, start, count, n0,
                            checkpoints, eps_min)


def resolve_threads(threads: int | None = None) -> int:
    env = os.environ.get("MWLIL_THREADS")
    if env:
        return max(1, int(env))
    if threads is None or threads <= 0:
        return os.cpu_count() or 1
    return threads


def run_ensemble(spec: ChainSpec, g, n: int, paths: int, master_seed: int,
                 n0: int = DEFAULT_N0, checkpoints=None,
                 eps_min: float | None = None, H_norm_ref: float | None = None,
                 threads: int = 1) -> EnsembleReport:
    """Simulate ``paths`` independent paths and aggregate LIL diagnostics.

    ``g`` may be a catalog name (required when threads > 1, since workers
    rebuild the functional) or a Functional instance.  Per-path results
    depend only on (master_seed, path index), so the aggregate is
    identical for every thread count.
    """
    if paths < 1:
        raise ValueError("need at least one path")
    if checkpoints is None:
        checkpoints = tuple(c for c in DEFAULT_CHECKPOINTS if c <= n)
    checkpoints = tuple(int(c) for c in checkpoints)
    threads = max(1, threads)
    if isinstance(g, str):
        g_obj = make_functional(g, memory_K=spec.memory_K)
        g_name = g
    else:
        g_obj = g
        g_name = None
    if threads > 1 and g_name is None:
        raise ValueError("parallel ensembles need a catalog functional name")
    if threads == 1:
        chunks = [_collect_records(spec, g_obj, n, master_seed, 0, paths, n0,
                                   checkpoints, eps_min)]
    else:
        step = -(-paths // threads)
        jobs = [(_spec_token(spec), g_name, n, master_seed, s,
                 min(step, paths - s), n0, checkpoints, eps_min)
                for s in range(0, paths, step)]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_ensemble_worker, jobs))
    rec = {k: np.concatenate([c[k] for c in chunks]) for k in chunks[0]}

    qs = (0.10, 0.25, 0.50, 0.75, 0.90)
    lil_q = {q: float(np.quantile(rec["sup_abs"], q)) for q in qs}
    lil_q1 = {q: float(np.quantile(rec["sup"], q)) for q in qs}
    cp = np.asarray(checkpoints, dtype=np.float64)
    var = rec["S_cp"].var(axis=0, ddof=1) if paths > 1 else np.full(len(checkpoints), np.nan)
    var_curve = var / cp
    var_se = var_curve * math.sqrt(2.0 / (paths - 1)) if paths > 1 else np.full(len(checkpoints), np.nan)
    rem_curve = rem_se = None
    erg = erg_se = None
    if eps_min is not None:
        r2 = rec["R_cp"] ** 2
        rem_curve = r2.mean(axis=0) / cp
        rem_se = (r2.std(axis=0, ddof=1) / math.sqrt(paths)) / cp if paths > 1 \
            else np.zeros(len(checkpoints))
        erg = float(rec["H2_mean"].mean())
        if paths > 1:
            erg_se = float(rec["H2_mean"].std(ddof=1)) / math.sqrt(paths)
        else:
            erg_se = float(rec["H2_se"][0])
    return EnsembleReport(
        seeds=paths, n=n, n0=n0, checkpoints=checkpoints,
        lil_quantiles=lil_q, lil_quantiles_one_sided=lil_q1,
        sup_abs_medians=np.nanmedian(rec["sup_abs_cp"], axis=0),
        variance_curve=var_curve, variance_se=var_se,
        remainder_curve=rem_curve, remainder_se=rem_se,
        H_norm_ref=H_norm_ref,
        ergodic_H_estimate=erg, ergodic_H_se=erg_se,
        per_path={"sup_abs": rec["sup_abs"], "sup": rec["sup"],
                  "S_cp": rec["S_cp"]},
    )


@dataclass
class CurveVerdict:
    checkpoints: tuple[int, ...]
    curve: np.ndarray
    std_errors: np.ndarray
    verdict: str
    detail: str = ""


def variance_scaling(report: EnsembleReport, H_norm_ref: float,
                     rel_tol: float = 0.05) -> CurveVerdict:
    """Judge Var(S_n)/n at the final checkpoint against the squared
    reference constant, within rel_tol plus three standard errors."""
    if report.seeds < 1000:
        return CurveVerdict(report.checkpoints, report.variance_curve,
                            report.variance_se, "Inconclusive",
                            "fewer than 1000 paths")
    target = H_norm_ref**2
    final = report.variance_curve[-1]
    band = rel_tol * target + 3.0 * report.variance_se[-1]
    ok = abs(final - target) <= band
    return CurveVerdict(
        report.checkpoints, report.variance_curve, report.variance_se,
        "pass" if ok else "fail",
        f"final {final:.6f} vs target {target:.6f} (band {band:.6f})",
    )


def remainder_decay(report: EnsembleReport, min_ratio: float = 2.0) -> CurveVerdict:
    """Judge E[R_n^2]/n decay: the curve must fall by ``min_ratio`` from the
    first to the last checkpoint, or stay below 1e-3 of the variance proxy."""
    if report.remainder_curve is None:
        raise ValueError("ensemble was run without remainder tracking")
    curve = report.remainder_curve
    se = report.remainder_se
    tiny = np.all(curve <= 1e-3 * np.maximum(report.variance_curve, 1e-300))
    falls = curve[0] >= min_ratio * curve[-1] > 0 or (curve[0] == 0 and curve[-1] == 0)
    ok = bool(tiny or falls)
    return CurveVerdict(
        report.checkpoints, curve, se,
        "pass" if ok else "fail",
        f"first {curve[0]:.3e} last {curve[-1]:.3e}" + (" (tiny)" if tiny else ""),
    )
