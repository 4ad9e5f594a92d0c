"""Transition-operator calculus: Q, V_n, resolvents, bivariate increments.

The Bernoulli-shift operator is always applied analytically through the
two-point formula Qh(x) = (h(x/2) + h((1+x)/2)) / 2; iterates use the
exact 2^k-preimage average up to a cost cap and an unbiased Monte Carlo
preimage sample beyond it.  Tagged functionals (eigenfunctions,
annihilated functions, finite moving averages) get closed forms; the
singular catalog entry routes its norm work through the band-limited
spectral representation.

Key identities used throughout:

* resolvent equation   (1+eps) h_eps = Q h_eps + g
* increment norm       ||f(x1) - Qf(x0)||_1^2 = ||f||^2 - ||Qf||^2
* stability inequality ||H_eps - H_del||_1^2
                         <= (eps+del) (||h_eps||^2 + ||h_del||^2)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chains import AUX_STREAM_BASE, ChainKind, ChainSpec, RngStream
from .functionals import (
    Functional,
    LinearCoeffs,
    QAnnihilated,
    QEigen,
    linear_coeffs_functional,
)
from .quadrature import QuadratureError, simpson_dyadic, singular_sin_l2sq_centered
from .spectral import DyadicSpectral, build_singular_spectral

__all__ = [
    "ChainMismatchError",
    "BudgetExceededError",
    "InternalConsistencyError",
    "NormEstimate",
    "Resolvent",
    "BivariateFunctional",
    "GrowthFit",
    "HLimitResult",
    "apply_Q",
    "apply_Qk_bernoulli",
    "apply_Qk_mc",
    "compute_Vn",
    "l2_norm",
    "vn_norm",
    "qk_norm",
    "resolvent",
    "make_H_eps",
    "norm1_H",
    "norm1_H_mc",
    "estimate_H_limit",
    "fit_growth",
    "fit_resolvent_growth",
    "ensure_spectral",
    "DEFAULT_EPS_GRID",
]

K_MAX_EXACT = 22

DEFAULT_EPS_GRID = tuple(2.0**-j for j in range(1, 13))


class ChainMismatchError(ValueError):
    pass


class BudgetExceededError(RuntimeError):
    pass


class InternalConsistencyError(RuntimeError):
    pass


@dataclass(frozen=True)
class NormEstimate:
    value: float
    std_error: float
    method: str  # dyadic_quadrature | monte_carlo | closed_form | substitution_rule | spectral
    detail: dict = field(default_factory=dict)


@dataclass
class Resolvent:
    epsilon: float
    h_eps: Functional
    Qh_eps: Functional
    truncation_N: int
    tail_bound: float
    std_error: float = 0.0
    extras: dict = field(default_factory=dict)


@dataclass
class BivariateFunctional:
    evaluator: object  # (x0, x1) -> values, vectorized
    norm1: NormEstimate | None = None

    def __call__(self, x0, x1):
        return self.evaluator(x0, x1)


@dataclass(frozen=True)
class GrowthFit:
    alpha_hat: float
    intercept: float
    r_squared: float
    n_range: tuple[float, float]
    degenerate: bool = False


@dataclass
class HLimitResult:
    norm: NormEstimate
    eps_grid: tuple[float, ...]
    h_norms: list[float]
    h1_norms: list[float]
    diffs: list[dict]
    tail_budget: float


def _check_chain(spec: ChainSpec, g: Functional) -> None:
    if g.chain_kind is not spec.kind:
        raise ChainMismatchError(
            f"functional {g.name} lives on {g.chain_kind.value}, spec is {spec.kind.value}"
        )


def ensure_spectral(g: Functional) -> DyadicSpectral | None:
    """Attach (and cache) the spectral proxy for band-limited norm work."""
    if g.spectral is not None:
        return g.spectral
    if g.chain_kind is ChainKind.BERNOULLI and "alpha" in g.params:
        g.spectral = build_singular_spectral(g.params["alpha"])
        return g.spectral
    return None


# ----------------------------------------------------------------------
# operator application
# ----------------------------------------------------------------------

def apply_Q(spec: ChainSpec, g: Functional, mc_samples: int = 4096,
            seed: int = 0) -> Functional:
    """One application of the transition operator to a centered functional."""
    _check_chain(spec, g)
    tag = g.analytic_tag
    if spec.kind is ChainKind.BERNOULLI:
        if isinstance(tag, QEigen):
            rho = tag.rho
            return Functional(
                chain_kind=g.chain_kind,
                name=f"Q[{g.name}]",
                raw=lambda x: rho * g(x),
                analytic_tag=QEigen(rho),
            )
        if isinstance(tag, QAnnihilated):
            return Functional(
                chain_kind=g.chain_kind,
                name=f"Q[{g.name}]",
                raw=lambda x: np.zeros_like(np.asarray(x, dtype=np.float64)),
                analytic_tag=QAnnihilated(),
            )
        sp = g.spectral
        return Functional(
            chain_kind=g.chain_kind,
            name=f"Q[{g.name}]",
            raw=lambda x: 0.5 * (g(np.asarray(x) / 2.0) + g((1.0 + np.asarray(x)) / 2.0)),
            analytic_tag=None,
            quadrature_rule="dyadic",
            spectral=sp.shifted(1) if sp is not None else None,
        )
    # Lebesgue shift
    if isinstance(tag, LinearCoeffs):
        shifted = tag.coeffs[1:] + (0.0,)
        return linear_coeffs_functional(shifted, name=f"Q[{g.name}]")
    # general case: Monte Carlo conditional expectation with a shared
    # fresh-coordinate sample (deterministic given the seed)
    fresh = RngStream(seed, AUX_STREAM_BASE + 1).generator().random(mc_samples)

    def raw(w):
        w = np.asarray(w, dtype=np.float64)
        squeeze = w.ndim == 1
        w2 = np.atleast_2d(w)
        acc = np.zeros(w2.shape[0])
        acc_sq = np.zeros(w2.shape[0])
        shifted = np.empty_like(w2)
        shifted[:, :-1] = w2[:, 1:]
        for f in fresh:
            shifted[:, -1] = f
            vals = g(shifted)
            acc += vals
            acc_sq += vals * vals
        mean = acc / mc_samples
        return mean[0] if squeeze else mean

    out = Functional(
        chain_kind=g.chain_kind,
        name=f"Q[{g.name}]",
        raw=raw,
        analytic_tag=None,
        params={"mc_samples": mc_samples, "mc_seed": seed},
    )
    return out


def apply_Qk_bernoulli(g: Functional, k: int, x, k_max: int = K_MAX_EXACT) -> np.ndarray:
    """Exact Q^k g(x) = 2^-k sum_j g((x+j)/2^k) on the Bernoulli chain."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k > k_max:
        raise BudgetExceededError(
            f"exact Q^{k} needs 2^{k} evaluations per point; cap is k_max={k_max}"
        )
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if k == 0:
        return g(x)
    m = 1 << k
    j = np.arange(m, dtype=np.float64)
    out = np.empty_like(x)
    chunk = max(1, (1 << 24) // m)
    for lo in range(0, x.size, chunk):
        xs = x[lo:lo + chunk]
        out[lo:lo + chunk] = g((xs[:, None] + j[None, :]) / m).mean(axis=1)
    return out


def apply_Qk_mc(g: Functional, k: int, x, rng: np.random.Generator,
                samples: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Unbiased preimage-sampled Q^k g(x) with per-point standard errors."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    u = rng.random(samples)
    j = np.floor(u * 2.0**k)
    vals = g((x[:, None] + j[None, :]) * 2.0**-k)
    mean = vals.mean(axis=1)
    se = vals.std(axis=1, ddof=1) / math.sqrt(samples)
    return mean, se


def compute_Vn(spec: ChainSpec, g: Functional, n: int,
               k_max: int = K_MAX_EXACT, mc_budget: int = 256,
               seed: int = 0) -> Functional:
    """V_n g = sum_{k<n} Q^k g as an evaluable functional."""
    _check_chain(spec, g)
    if n < 1:
        raise ValueError("n must be >= 1")
    tag = g.analytic_tag
    if isinstance(tag, QEigen):
        rho = tag.rho
        coef = float(n) if rho == 1.0 else (1.0 - rho**n) / (1.0 - rho)
        return Functional(
            chain_kind=g.chain_kind,
            name=f"V{n}[{g.name}]",
            raw=lambda x: coef * g(x),
            analytic_tag=QEigen(rho),
        )
    if isinstance(tag, QAnnihilated):
        return Functional(
            chain_kind=g.chain_kind,
            name=f"V{n}[{g.name}]",
            raw=lambda x: g(x),
            analytic_tag=QAnnihilated(),
        )
    if isinstance(tag, LinearCoeffs):
        c = tag.coeffs
        K = len(c) - 1
        d = tuple(sum(c[j + k] for k in range(min(n, K - j + 1))) for j in range(K + 1))
        return linear_coeffs_functional(d, name=f"V{n}[{g.name}]")
    # untagged Bernoulli functional: exact preimage averages while they are
    # affordable, unbiased Monte Carlo beyond
    sp = ensure_spectral(g)
    k_exact = min(n - 1, k_max)
    mc_rng = RngStream(seed, AUX_STREAM_BASE + 2).generator()
    mc_js = [np.floor(mc_rng.random(mc_budget) * 2.0**k)
             for k in range(k_exact + 1, n)]

    def raw(x):
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        acc = np.zeros_like(x)
        for k in range(0, k_exact + 1):
            acc += apply_Qk_bernoulli(g, k, x, k_max=k_max)
        for k, j in zip(range(k_exact + 1, n), mc_js):
            acc += g((x[:, None] + j[None, :]) * 2.0**-k).mean(axis=1)
        return acc

    return Functional(
        chain_kind=g.chain_kind,
        name=f"V{n}[{g.name}]",
        raw=raw,
        analytic_tag=None,
        params={"mc_terms": max(0, n - 1 - k_exact), "mc_budget": mc_budget},
        quadrature_rule=g.quadrature_rule,
        spectral=sp.vn(n) if sp is not None else None,
    )


# ----------------------------------------------------------------------
# norms
# ----------------------------------------------------------------------

def _linear_coeffs_norm(c) -> float:
    arr = np.asarray(c, dtype=np.float64)
    return float(np.sqrt(arr @ arr / 12.0))


def l2_norm(spec: ChainSpec, f: Functional, method: str = "auto",
            level: int = 16, mc_samples: int = 1 << 20,
            seed: int = 0) -> NormEstimate:
    """L2(pi) norm of a functional.

    ``method`` is "auto", "quadrature" (dyadic Simpson; raises
    QuadratureError on singular integrands) or "mc".
    """
    _check_chain(spec, f)
    if method == "auto":
        tag = f.analytic_tag
        if isinstance(tag, LinearCoeffs):
            return NormEstimate(_linear_coeffs_norm(tag.coeffs), 0.0, "closed_form")
        if f.quadrature_rule == "substitution" and "alpha" in f.params:
            val = math.sqrt(singular_sin_l2sq_centered(f.params["alpha"]))
            return NormEstimate(val, 0.0, "substitution_rule",
                                {"alpha": f.params["alpha"]})
        if spec.kind is ChainKind.BERNOULLI:
            method = "quadrature"
        else:
            method = "mc"
    if method == "quadrature":
        if spec.kind is not ChainKind.BERNOULLI:
            raise ValueError("dyadic quadrature applies to the Bernoulli chain only")
        sq, err = simpson_dyadic(lambda x: f(x) ** 2, level=level)
        sq = max(sq, 0.0)
        val = math.sqrt(sq)
        return NormEstimate(val, err / (2.0 * val) if val > 0 else 0.0,
                            "dyadic_quadrature", {"grid_level": level})
    if method == "mc":
        gen = RngStream(seed, AUX_STREAM_BASE + 3).generator()
        if spec.kind is ChainKind.BERNOULLI:
            xs = gen.random(mc_samples)
        else:
            xs = gen.random((mc_samples, spec.memory_K + 1))
        vals = f(xs) ** 2
        est = float(vals.mean())
        se_sq = float(vals.std(ddof=1)) / math.sqrt(mc_samples)
        val = math.sqrt(max(est, 0.0))
        return NormEstimate(val, se_sq / (2.0 * val) if val > 0 else se_sq,
                            "monte_carlo", {"sample_count": mc_samples})
    raise ValueError(f"unknown norm method {method!r}")


def _base_norm(spec: ChainSpec, g: Functional) -> float:
    return l2_norm(spec, g).value


def vn_norm(spec: ChainSpec, g: Functional, n: int, base_norm: float | None = None) -> float:
    """||V_n g|| through the cheapest exact backend available."""
    tag = g.analytic_tag
    if isinstance(tag, QEigen):
        rho = tag.rho
        coef = float(n) if rho == 1.0 else (1.0 - rho**n) / (1.0 - rho)
        return abs(coef) * (base_norm if base_norm is not None else _base_norm(spec, g))
    if isinstance(tag, QAnnihilated):
        return base_norm if base_norm is not None else _base_norm(spec, g)
    if isinstance(tag, LinearCoeffs):
        c = tag.coeffs
        K = len(c) - 1
        d = [sum(c[j + k] for k in range(min(n, K - j + 1))) for j in range(K + 1)]
        return _linear_coeffs_norm(d)
    sp = ensure_spectral(g)
    if sp is None:
        raise NotImplementedError(f"no exact norm backend for {g.name}")
    return math.sqrt(sp.vn(n).norm_sq())


def qk_norm(spec: ChainSpec, g: Functional, k: int, base_norm: float | None = None) -> float:
    """||Q^k g|| through the cheapest exact backend available."""
    tag = g.analytic_tag
    if isinstance(tag, QEigen):
        return abs(tag.rho) ** k * (base_norm if base_norm is not None else _base_norm(spec, g))
    if isinstance(tag, QAnnihilated):
        ng = base_norm if base_norm is not None else _base_norm(spec, g)
        return ng if k == 0 else 0.0
    if isinstance(tag, LinearCoeffs):
        c = tag.coeffs
        return _linear_coeffs_norm(c[k:]) if k <= len(c) - 1 else 0.0
    sp = ensure_spectral(g)
    if sp is None:
        raise NotImplementedError(f"no exact norm backend for {g.name}")
    return math.sqrt(sp.q_norm_sq(k))


# ----------------------------------------------------------------------
# resolvents
# ----------------------------------------------------------------------

def _series_length(norm_g: float, eps: float, tol: float) -> int:
    # geometric tail bound ||g|| / (eps (1+eps)^N) <= tol
    if norm_g == 0.0:
        return 1
    return max(1, int(math.ceil(math.log(norm_g / (eps * tol)) / math.log1p(eps))))


def resolvent(spec: ChainSpec, g: Functional, epsilon: float, tol: float = 1e-10,
              method: str = "auto", k_max: int = K_MAX_EXACT,
              mc_budget: int = 256, seed: int = 0) -> Resolvent:
    """Solve (1+eps) h = Q h + g.

    "auto" uses the closed form attached to the analytic tag (or the
    spectral proxy); "series" sums the defining series truncated by the
    geometric tail bound, which is the independent route the closed forms
    are tested against.
    """
    _check_chain(spec, g)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if tol <= 0:
        raise ValueError("tol must be positive")
    tag = g.analytic_tag

    def _wrap(hr, qhr, N, bound, tag_h=None, tag_qh=None, sp_h=None, sp_qh=None,
              std_error=0.0, extras=None):
        h = Functional(chain_kind=g.chain_kind, name=f"h_eps[{g.name}]",
                       raw=hr, analytic_tag=tag_h, quadrature_rule=g.quadrature_rule,
                       spectral=sp_h)
        qh = Functional(chain_kind=g.chain_kind, name=f"Qh_eps[{g.name}]",
                        raw=qhr, analytic_tag=tag_qh, quadrature_rule=g.quadrature_rule,
                        spectral=sp_qh)
        return Resolvent(epsilon=epsilon, h_eps=h, Qh_eps=qh, truncation_N=N,
                         tail_bound=bound, std_error=std_error, extras=extras or {})

    if isinstance(tag, QEigen):
        rho = tag.rho
        if method == "series":
            N = _series_length(1.0, epsilon, tol)
            r = rho / (1.0 + epsilon)
            # sum_{n=1..N} rho^{n-1}/(1+eps)^n
            c = (1.0 / (1.0 + epsilon)) * (N if r == 1.0 else (1.0 - r**N) / (1.0 - r))
        else:
            N = 0
            c = 1.0 / (1.0 + epsilon - rho)
        return _wrap(lambda x: c * g(x), lambda x: rho * c * g(x), N,
                     tol if method == "series" else 1e-14,
                     tag_h=QEigen(rho), tag_qh=QEigen(rho))
    if isinstance(tag, QAnnihilated):
        c = 1.0 / (1.0 + epsilon)
        zero_raw = lambda x: np.zeros_like(np.asarray(x, dtype=np.float64))
        return _wrap(lambda x: c * g(x), zero_raw, 1, 1e-14,
                     tag_h=QAnnihilated(), tag_qh=QAnnihilated())
    if isinstance(tag, LinearCoeffs):
        c = np.asarray(tag.coeffs, dtype=np.float64)
        K = c.size - 1
        N = _series_length(_linear_coeffs_norm(c), epsilon, tol) if method == "series" else K + 1
        d = np.zeros(K + 1)
        for j in range(K + 1):
            terms = min(N, K - j + 1)
            d[j] = sum(c[j + m - 1] * (1.0 + epsilon) ** -m for m in range(1, terms + 1))
        h = linear_coeffs_functional(tuple(d), name=f"h_eps[{g.name}]")
        qh = linear_coeffs_functional(tuple(d[1:]) + (0.0,), name=f"Qh_eps[{g.name}]")
        return Resolvent(epsilon=epsilon, h_eps=h, Qh_eps=qh,
                         truncation_N=N, tail_bound=1e-14)
    sp = ensure_spectral(g) if method == "auto" else None
    if sp is not None:
        sp_h = sp.resolvent(epsilon)
        sp_qh = sp_h.shifted(1)
        return _wrap(sp_h.evaluate, sp_qh.evaluate, 0, 1e-12,
                     sp_h=sp_h, sp_qh=sp_qh,
                     extras={"proxy_l2_tail_sq": sp.l2_tail_sq})
    # generic truncated series with exact preimage averages up to k_max and
    # unbiased Monte Carlo beyond; the tail bound covers the truncation bias
    if spec.kind is not ChainKind.BERNOULLI:
        raise NotImplementedError("generic series resolvent requires the Bernoulli chain")
    ng = l2_norm(spec, g).value
    N = _series_length(ng, epsilon, tol)
    mc_rng = RngStream(seed, AUX_STREAM_BASE + 4).generator()
    mc_js = {k: np.floor(mc_rng.random(mc_budget) * 2.0**k)
             for k in range(k_max + 1, N + 1)}

    def _series(x, start_power: int):
        # sum_{n>=1..N} Q^{n-1+start_power} g / (1+eps)^n
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        acc = np.zeros_like(x)
        for n in range(1, N + 1):
            k = n - 1 + start_power
            w = (1.0 + epsilon) ** -n
            if k <= k_max:
                acc += w * apply_Qk_bernoulli(g, k, x, k_max=k_max)
            else:
                j = mc_js.get(k)
                if j is None:
                    j = np.floor(mc_rng.random(mc_budget) * 2.0**k)
                    mc_js[k] = j
                acc += w * g((x[:, None] + j[None, :]) * 2.0**-k).mean(axis=1)
        return acc

    se = ng / math.sqrt(mc_budget) if N > k_max else 0.0
    return _wrap(lambda x: _series(x, 0), lambda x: _series(x, 1), N, tol,
                 std_error=se, extras={"mc_terms": max(0, N - k_max)})


# ----------------------------------------------------------------------
# bivariate increments
# ----------------------------------------------------------------------

def make_H_eps(spec: ChainSpec, r: Resolvent) -> BivariateFunctional:
    """H_eps(x0, x1) = h_eps(x1) - Qh_eps(x0); conditionally centered given x0."""

    def evaluator(x0, x1):
        return r.h_eps(x1) - r.Qh_eps(x0)

    return BivariateFunctional(evaluator=evaluator)


def _resolvent_norms(spec: ChainSpec, g: Functional, eps: float,
                     base_norm: float | None = None) -> tuple[float, float]:
    """(||h_eps||, ||Qh_eps||) through the exact backends."""
    tag = g.analytic_tag
    ng = base_norm if base_norm is not None else _base_norm(spec, g)
    if isinstance(tag, QEigen):
        c = 1.0 / (1.0 + eps - tag.rho)
        return c * ng, abs(tag.rho) * c * ng
    if isinstance(tag, QAnnihilated):
        return ng / (1.0 + eps), 0.0
    if isinstance(tag, LinearCoeffs):
        r = resolvent(spec, g, eps)
        hc = r.h_eps.analytic_tag.coeffs
        return _linear_coeffs_norm(hc), _linear_coeffs_norm(hc[1:])
    sp = ensure_spectral(g)
    if sp is None:
        raise NotImplementedError(f"no exact norm backend for {g.name}")
    sph = sp.resolvent(eps)
    return math.sqrt(sph.norm_sq()), math.sqrt(sph.q_norm_sq(1))


def norm1_H(spec: ChainSpec, r: Resolvent, g: Functional | None = None) -> NormEstimate:
    """||H_eps||_1 = sqrt(||h_eps||^2 - ||Qh_eps||^2).

    A radicand that is negative beyond combined tolerance indicates an
    implementation bug and raises InternalConsistencyError.
    """
    nh = l2_norm(spec, r.h_eps)
    nqh = l2_norm(spec, r.Qh_eps)
    rad = nh.value**2 - nqh.value**2
    tol = 4.0 * (nh.value * nh.std_error + nqh.value * nqh.std_error) + 1e-13
    if rad < -tol:
        raise InternalConsistencyError(
            f"negative radicand {rad:.3e} in ||h||^2-||Qh||^2 (tol {tol:.3e})"
        )
    val = math.sqrt(max(rad, 0.0))
    se = 0.0
    if val > 0:
        se = math.sqrt((nh.value * nh.std_error) ** 2
                       + (nqh.value * nqh.std_error) ** 2) / val
    return NormEstimate(val, se, nh.method, {"h": nh, "Qh": nqh})


def norm1_H_mc(spec: ChainSpec, r: Resolvent, samples: int = 1 << 16,
               seed: int = 0) -> NormEstimate:
    """Direct Monte Carlo of ||H_eps||_1^2 under the pair law (independent
    cross-check of the Pythagoras route)."""
    gen = RngStream(seed, AUX_STREAM_BASE + 5).generator()
    H = make_H_eps(spec, r)
    if spec.kind is ChainKind.BERNOULLI:
        x0 = gen.random(samples)
        e = gen.integers(0, 2, size=samples).astype(np.float64)
        x1 = (x0 + e) / 2.0
    else:
        x0 = gen.random((samples, spec.memory_K + 1))
        x1 = np.empty_like(x0)
        x1[:, :-1] = x0[:, 1:]
        x1[:, -1] = gen.random(samples)
    sq = H(x0, x1) ** 2
    est = float(sq.mean())
    se_sq = float(sq.std(ddof=1)) / math.sqrt(samples)
    val = math.sqrt(max(est, 0.0))
    return NormEstimate(val, se_sq / (2.0 * val) if val > 0 else se_sq,
                        "monte_carlo", {"sample_count": samples})


def _diff_norm1_sq(spec: ChainSpec, g: Functional, eps_a: float, eps_b: float,
                   base_norm: float | None = None) -> float:
    """||H_{eps_a} - H_{eps_b}||_1^2 = ||dh||^2 - ||Q dh||^2, dh = h_a - h_b."""
    tag = g.analytic_tag
    ng = base_norm if base_norm is not None else _base_norm(spec, g)
    if isinstance(tag, QEigen):
        rho = tag.rho
        dc = 1.0 / (1.0 + eps_a - rho) - 1.0 / (1.0 + eps_b - rho)
        return dc * dc * (1.0 - rho * rho) * ng * ng
    if isinstance(tag, QAnnihilated):
        dc = 1.0 / (1.0 + eps_a) - 1.0 / (1.0 + eps_b)
        return dc * dc * ng * ng
    if isinstance(tag, LinearCoeffs):
        ra = resolvent(spec, g, eps_a)
        rb = resolvent(spec, g, eps_b)
        da = np.asarray(ra.h_eps.analytic_tag.coeffs)
        db = np.asarray(rb.h_eps.analytic_tag.coeffs)
        d = da - db
        return float(d @ d - d[1:] @ d[1:]) / 12.0
    sp = ensure_spectral(g)
    if sp is None:
        raise NotImplementedError(f"no exact norm backend for {g.name}")
    dh = sp.resolvent(eps_a).plus(sp.resolvent(eps_b), sign=-1.0)
    return dh.norm_sq() - dh.q_norm_sq(1)


def estimate_H_limit(spec: ChainSpec, g: Functional,
                     eps_grid=DEFAULT_EPS_GRID) -> HLimitResult:
    """Track H_eps down a decreasing eps grid.

    Returns the norm at the smallest eps as the limit estimate, the
    Cauchy differences ||H_{eps_j} - H_{eps_{j-1}}||_1 demonstrating
    convergence, the stability inequality checked at every consecutive
    pair, and a geometric extrapolation of the remaining tail.
    """
    _check_chain(spec, g)
    eps_grid = tuple(float(e) for e in eps_grid)
    if len(eps_grid) < 2:
        raise ValueError("eps grid needs at least two points")
    if any(e <= 0 for e in eps_grid) or any(
            b >= a for a, b in zip(eps_grid, eps_grid[1:])):
        raise ValueError("eps grid must be positive and strictly decreasing")
    ng = _base_norm(spec, g)
    h_norms: list[float] = []
    h1_norms: list[float] = []
    for eps in eps_grid:
        nh, nqh = _resolvent_norms(spec, g, eps, base_norm=ng)
        h_norms.append(nh)
        h1_norms.append(math.sqrt(max(nh * nh - nqh * nqh, 0.0)))
    diffs: list[dict] = []
    for j in range(1, len(eps_grid)):
        ea, eb = eps_grid[j], eps_grid[j - 1]
        lhs = _diff_norm1_sq(spec, g, ea, eb, base_norm=ng)
        rhs = (ea + eb) * (h_norms[j] ** 2 + h_norms[j - 1] ** 2)
        diffs.append({
            "j": j,
            "eps_hi": eb,
            "eps_lo": ea,
            "diff_norm1": math.sqrt(max(lhs, 0.0)),
            "r2_lhs": lhs,
            "r2_rhs": rhs,
            "r2_ok": lhs <= rhs * (1.0 + 1e-9) + 1e-15,
        })
    # geometric extrapolation of sum_{j > j_max} diffs from the last decays
    d = [x["diff_norm1"] for x in diffs]
    tail = float("nan")
    if len(d) >= 3 and d[-1] > 0 and d[-2] > 0:
        ratio = d[-1] / d[-2]
        if ratio < 1.0:
            tail = d[-1] * ratio / (1.0 - ratio)
    norm = NormEstimate(h1_norms[-1], 0.0, "closed_form" if g.analytic_tag else "spectral",
                        {"eps_min": eps_grid[-1]})
    return HLimitResult(norm=norm, eps_grid=eps_grid, h_norms=h_norms,
                        h1_norms=h1_norms, diffs=diffs, tail_budget=tail)


# ----------------------------------------------------------------------
# growth fits
# ----------------------------------------------------------------------

def _loglog_fit(xs, ys, x_range) -> GrowthFit:
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if np.any(ys <= 0):
        raise ValueError("growth fit requires positive norms")
    ly = np.log(ys)
    if float(ly.std()) < 1e-12:
        return GrowthFit(0.0, float(ly.mean()), float("nan"), x_range, degenerate=True)
    lx = np.log(xs)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else float("nan")
    return GrowthFit(float(slope), float(intercept), r2, x_range)


def fit_growth(spec: ChainSpec, g: Functional, n_grid) -> GrowthFit:
    """Least-squares slope of log ||V_n g|| against log n."""
    _check_chain(spec, g)
    n_grid = [int(n) for n in n_grid]
    if len(n_grid) < 4 or any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ValueError("n_grid must be increasing with at least 4 points")
    ng = _base_norm(spec, g)
    vals = [vn_norm(spec, g, n, base_norm=ng) for n in n_grid]
    return _loglog_fit(n_grid, vals, (float(n_grid[0]), float(n_grid[-1])))


def fit_resolvent_growth(spec: ChainSpec, g: Functional,
                         eps_grid=DEFAULT_EPS_GRID) -> GrowthFit:
    """Companion fit: slope of log ||h_eps|| against log (1/eps)."""
    _check_chain(spec, g)
    eps_grid = [float(e) for e in eps_grid]
    ng = _base_norm(spec, g)
    vals = [_resolvent_norms(spec, g, e, base_norm=ng)[0] for e in eps_grid]
    inv = [1.0 / e for e in eps_grid]
    return _loglog_fit(inv, vals, (min(inv), max(inv)))
