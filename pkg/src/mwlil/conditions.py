"""Summability-condition checkers.

Five checkers produce evidence reports:

* ``maxwell_woodroofe``   -- sum n^{-3/2} ||V_n g||
* ``qk_norm``             -- sum k^{delta-1/2} ||Q^k g||
* ``qk_norm_sq``          -- sum k^delta ||Q^k g||^2
* ``log_kernel``          -- double integral of [g(x)-g(y)]^2 / |x-y|
                             * log^delta(1/|x-y|) over the unit square,
                             Monte Carlo with a diagonal exclusion band
                             (Bernoulli chain only)
* ``coefficient_series``  -- sum k^{1+delta} int g_k^2 for finite
                             moving-average functionals (Lebesgue chain)

A finite partial sum is never a proof; verdicts are *evidence*, based on
the fitted term-decay exponent and on stabilization of the partial sums
over the last doubling of the budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chains import AUX_STREAM_BASE, ChainKind, ChainSpec, RngStream
from .functionals import Functional, LinearCoeffs, QAnnihilated, QEigen
from .transfer import ensure_spectral, l2_norm

__all__ = ["CONDITION_IDS", "ConditionReport", "check_condition"]

CONDITION_IDS = (
    "maxwell_woodroofe",
    "qk_norm",
    "qk_norm_sq",
    "log_kernel",
    "coefficient_series",
)

CONVERGENT = "ConvergentEvidence"
DIVERGENT = "DivergentEvidence"
INCONCLUSIVE = "Inconclusive"


@dataclass
class ConditionReport:
    condition_id: str
    delta: float
    partial_sum: float
    terms_computed: int
    tail_estimate: float | None
    verdict: str
    std_error: float = 0.0
    partial_sums_at: dict = field(default_factory=dict)
    band_sensitivity: dict = field(default_factory=dict)
    notes: str = ""


# ----------------------------------------------------------------------
# norm sequences (exact backends, amortized over the whole budget)
# ----------------------------------------------------------------------

def _vn_norm_sequence(spec: ChainSpec, g: Functional, n_max: int) -> np.ndarray:
    ng = l2_norm(spec, g).value
    tag = g.analytic_tag
    n = np.arange(1, n_max + 1, dtype=np.float64)
    if isinstance(tag, QEigen):
        rho = tag.rho
        coef = n if rho == 1.0 else (1.0 - rho**n) / (1.0 - rho)
        return np.abs(coef) * ng
    if isinstance(tag, QAnnihilated):
        return np.full(n_max, ng)
    if isinstance(tag, LinearCoeffs):
        c = np.asarray(tag.coeffs, dtype=np.float64)
        K = c.size - 1
        out = np.empty(n_max)
        d = np.zeros(K + 1)
        for i in range(min(n_max, K + 1)):
            d[: K + 1 - i] += c[i:]
            out[i] = math.sqrt(float(d @ d) / 12.0)
        out[K + 1:] = out[min(n_max, K + 1) - 1]
        return out
    sp = ensure_spectral(g)
    if sp is None:
        raise NotImplementedError(f"no exact norm backend for {g.name}")
    out = np.empty(n_max)
    acc_c = sp.cos.copy()
    acc_s = sp.sin.copy()
    out[0] = math.sqrt(float(acc_c[1:] @ acc_c[1:] + acc_s[1:] @ acc_s[1:]))
    k = 1
    while k < n_max and (1 << k) <= sp.m_max:
        s = 1 << k
        cnt = sp.m_max >> k
        acc_c[1:cnt + 1] += sp.cos[s::s]
        acc_s[1:cnt + 1] += sp.sin[s::s]
        out[k] = math.sqrt(float(acc_c[1:] @ acc_c[1:] + acc_s[1:] @ acc_s[1:]))
        k += 1
    out[k:] = out[k - 1]
    return out


def _qk_norm_sequence(spec: ChainSpec, g: Functional, k_max: int) -> np.ndarray:
    ng = l2_norm(spec, g).value
    tag = g.analytic_tag
    k = np.arange(1, k_max + 1, dtype=np.float64)
    if isinstance(tag, QEigen):
        return np.abs(tag.rho) ** k * ng
    if isinstance(tag, QAnnihilated):
        return np.zeros(k_max)
    if isinstance(tag, LinearCoeffs):
        c = np.asarray(tag.coeffs, dtype=np.float64)
        K = c.size - 1
        out = np.zeros(k_max)
        for i in range(1, min(k_max, K) + 1):
            out[i - 1] = math.sqrt(float(c[i:] @ c[i:]) / 12.0)
        return out
    sp = ensure_spectral(g)
    if sp is None:
        raise NotImplementedError(f"no exact norm backend for {g.name}")
    return np.array([math.sqrt(sp.q_norm_sq(int(i))) for i in range(1, k_max + 1)])


# ----------------------------------------------------------------------
# series verdict machinery
# ----------------------------------------------------------------------

def _decay_exponent(terms: np.ndarray) -> float:
    """Fitted power-law exponent of the positive terms over the last decade."""
    n = np.arange(1, terms.size + 1, dtype=np.float64)
    lo = max(1, terms.size // 10)
    t = terms[lo - 1:]
    m = n[lo - 1:]
    pos = t > 0
    if pos.sum() < 4:
        return float("-inf") if not pos.any() else float("nan")
    slope, _ = np.polyfit(np.log(m[pos]), np.log(t[pos]), 1)
    return float(slope)


def _series_report(condition_id: str, delta: float, terms: np.ndarray) -> ConditionReport:
    sums = np.cumsum(terms)
    total = float(sums[-1])
    n_terms = terms.size
    checkpoints = {}
    m = n_terms
    while m >= 1:
        checkpoints[m] = float(sums[m - 1])
        m //= 2
    # exact-zero tails terminate the series: convergence is then not evidence
    # but arithmetic
    tail_zero = bool(np.all(terms[n_terms // 2:] == 0.0))
    p = _decay_exponent(terms)
    half = float(sums[n_terms // 2 - 1]) if n_terms >= 2 else total
    stabilized = total == 0.0 or abs(total - half) <= 1e-3 * max(abs(total), 1e-300)
    if tail_zero:
        tail = 0.0
        verdict = CONVERGENT
    elif math.isnan(p):
        tail, verdict = None, INCONCLUSIVE
    elif p < -1.0:
        tail = float(terms[-1] * n_terms / (-p - 1.0))
        verdict = CONVERGENT if stabilized else INCONCLUSIVE
    else:
        tail = None
        verdict = DIVERGENT if not stabilized else INCONCLUSIVE
    return ConditionReport(
        condition_id=condition_id,
        delta=delta,
        partial_sum=total,
        terms_computed=n_terms,
        tail_estimate=tail,
        verdict=verdict,
        partial_sums_at=dict(sorted(checkpoints.items())),
        notes=f"term-decay exponent {p:.3f}" if not math.isnan(p) else "",
    )


# ----------------------------------------------------------------------
# checkers
# ----------------------------------------------------------------------

def _check_log_kernel(spec: ChainSpec, g: Functional, delta: float,
                      budget: int, seed: int) -> ConditionReport:
    if spec.kind is not ChainKind.BERNOULLI:
        raise ValueError("the log-kernel check applies to the Bernoulli chain")
    bands = (1e-5, 1e-6, 1e-7)
    gen = RngStream(seed, AUX_STREAM_BASE + 6).generator()
    sums = {b: 0.0 for b in bands}
    sq_sums = {b: 0.0 for b in bands}
    running = {}
    done = 0
    chunk = 1 << 16
    next_mark = chunk
    while done < budget:
        m = min(chunk, budget - done)
        x = gen.random(m)
        y = gen.random(m)
        u = np.abs(x - y)
        gd2 = (g(x) - g(y)) ** 2
        with np.errstate(divide="ignore"):
            f = np.where(u > 0, gd2 / np.maximum(u, 1e-300)
                         * np.log(1.0 / np.maximum(u, 1e-300)) ** delta, 0.0)
        for b in bands:
            vals = np.where(u > b, f, 0.0)
            sums[b] += float(vals.sum())
            sq_sums[b] += float((vals * vals).sum())
        done += m
        if done >= next_mark:
            running[done] = sums[1e-6] / done
            next_mark *= 2
    running[done] = sums[1e-6] / done
    est = {b: sums[b] / done for b in bands}
    se = {b: math.sqrt(max(sq_sums[b] / done - est[b] ** 2, 0.0) / done) for b in bands}
    spread = abs(est[1e-5] - est[1e-7])
    mid = est[1e-6]
    stable_bands = mid > 0 and spread <= 0.05 * mid + 3.0 * (se[1e-5] + se[1e-7])
    vals = sorted(running.items())
    stabilized = len(vals) >= 2 and abs(vals[-1][1] - vals[-2][1]) <= 0.01 * max(abs(vals[-1][1]), 1e-300)
    verdict = CONVERGENT if (stable_bands and stabilized) else INCONCLUSIVE
    return ConditionReport(
        condition_id="log_kernel",
        delta=delta,
        partial_sum=mid,
        terms_computed=done,
        tail_estimate=None,
        verdict=verdict,
        std_error=se[1e-6],
        partial_sums_at={k: v for k, v in vals},
        band_sensitivity={b: {"estimate": est[b], "std_error": se[b]} for b in bands},
        notes="diagonal band widths 1e-5/1e-6/1e-7; estimates must agree",
    )


def _check_coefficient_series(spec: ChainSpec, g: Functional,
                              delta: float) -> ConditionReport:
    if spec.kind is not ChainKind.LEBESGUE or not isinstance(g.analytic_tag, LinearCoeffs):
        raise ValueError("coefficient_series requires a Lebesgue moving-average functional")
    c = np.asarray(g.analytic_tag.coeffs, dtype=np.float64)
    K = c.size - 1
    k = np.arange(1, K + 1, dtype=np.float64)
    terms = k ** (1.0 + delta) * c[1:] ** 2 / 12.0
    total = float(terms.sum())
    return ConditionReport(
        condition_id="coefficient_series",
        delta=delta,
        partial_sum=total,
        terms_computed=K,
        tail_estimate=0.0,
        verdict=CONVERGENT,
        partial_sums_at={int(i): float(terms[:i].sum()) for i in range(1, K + 1)},
        notes="finite moving average: the series terminates exactly",
    )


def check_condition(spec: ChainSpec, g: Functional, condition_id: str,
                    delta: float = 0.0, budget: int = 4096,
                    seed: int = 0) -> ConditionReport:
    """Run one summability checker and return its evidence report."""
    if condition_id not in CONDITION_IDS:
        raise ValueError(f"unknown condition {condition_id!r}; choose from {CONDITION_IDS}")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if budget < 8:
        raise ValueError("budget too small")
    if condition_id == "maxwell_woodroofe":
        v = _vn_norm_sequence(spec, g, budget)
        n = np.arange(1, budget + 1, dtype=np.float64)
        return _series_report(condition_id, delta, n**-1.5 * v)
    if condition_id == "qk_norm":
        q = _qk_norm_sequence(spec, g, budget)
        k = np.arange(1, budget + 1, dtype=np.float64)
        return _series_report(condition_id, delta, k ** (delta - 0.5) * q)
    if condition_id == "qk_norm_sq":
        q = _qk_norm_sequence(spec, g, budget)
        k = np.arange(1, budget + 1, dtype=np.float64)
        return _series_report(condition_id, delta, k**delta * q * q)
    if condition_id == "log_kernel":
        return _check_log_kernel(spec, g, delta, budget, seed)
    return _check_coefficient_series(spec, g, delta)
