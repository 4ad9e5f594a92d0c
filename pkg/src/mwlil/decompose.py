"""Martingale/remainder decompositions of simulated paths.

At fixed eps the split is algebraic and exact:

    S_i = M_i(eps) + eps * S_i(h_eps) + R_i(eps)

with M-increments H_eps evaluated at consecutive state pairs and
R_i(eps) = Qh_eps(X_0) - Qh_eps(X_i).  The limit decomposition replaces
H_eps by H_{eps_min} from the dyadic schedule and defines the remainder
as S_i - M_i directly, carrying the Cauchy-tail estimate as its error
budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chains import ChainSpec, Path
from .functionals import Functional
from .transfer import HLimitResult, Resolvent, estimate_H_limit, resolvent

__all__ = [
    "EpsSchedule",
    "eps_schedule",
    "DecompositionTrace",
    "decompose_at_eps",
    "limit_decompose",
    "MartingaleDiagnostic",
    "martingale_check",
]


@dataclass(frozen=True)
class EpsSchedule:
    """The dyadic schedule: k_n is the unique k with 2^(k-1) <= n < 2^k."""

    n: int
    k_n: int
    eps_n: float


def eps_schedule(n: int) -> EpsSchedule:
    if n < 1:
        raise ValueError("n must be >= 1")
    k = int(n).bit_length()  # unique k with 2^(k-1) <= n < 2^k
    if not (2 ** (k - 1) <= n < 2**k):
        k += 1
    return EpsSchedule(n=n, k_n=k, eps_n=2.0**-k)


@dataclass
class DecompositionTrace:
    n: int
    eps: float
    S: np.ndarray
    M_eps: np.ndarray
    R_eps: np.ndarray
    drift: np.ndarray
    identity_residual: float
    limit_eps: float | None = None
    limit_M: np.ndarray | None = None
    limit_R: np.ndarray | None = None
    err_budget: float | None = None
    extras: dict = field(default_factory=dict)

    def residual_ok(self, rel: float = 1e-9) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.S))))
        return self.identity_residual <= rel * scale


def _increment_values(path: Path, r: Resolvent) -> tuple[np.ndarray, np.ndarray]:
    if path.states is None:
        raise ValueError("decomposition needs a path simulated with retain_states=True")
    h_vals = np.asarray(r.h_eps(path.states), dtype=np.float64)
    qh_vals = np.asarray(r.Qh_eps(path.states), dtype=np.float64)
    return h_vals, qh_vals


def decompose_at_eps(path: Path, r: Resolvent) -> DecompositionTrace:
    """Exact split of a retained-state path at fixed eps."""
    if r.h_eps.chain_kind is not path.spec.kind:
        raise ValueError("resolvent and path live on different chains")
    h_vals, qh_vals = _increment_values(path, r)
    S = path.partial_sums
    M = np.cumsum(h_vals[1:] - qh_vals[:-1])
    R = qh_vals[0] - qh_vals[1:]
    drift = r.epsilon * np.cumsum(h_vals[1:])
    residual = float(np.max(np.abs(S - M - drift - R)))
    return DecompositionTrace(
        n=path.n, eps=r.epsilon, S=S, M_eps=M, R_eps=R, drift=drift,
        identity_residual=residual,
        extras={"tail_bound": r.tail_bound, "resolvent_std_error": r.std_error},
    )


def limit_decompose(path: Path, spec: ChainSpec, g: Functional, eps_min: float,
                    h_limit: HLimitResult | None = None) -> DecompositionTrace:
    """Approximate limit split using H at the smallest grid eps.

    ``limit_R := S - limit_M`` by definition; the reported error budget is
    the extrapolated Cauchy tail sum ||H_{eps_min} - H||_1 from the
    stability diagnostic (L2 rate, per increment).
    """
    r = resolvent(spec, g, eps_min)
    trace = decompose_at_eps(path, r)
    trace.limit_eps = eps_min
    trace.limit_M = trace.M_eps
    trace.limit_R = trace.S - trace.M_eps
    if h_limit is None:
        try:
            grid = [2.0**-j for j in range(1, max(2, round(-math.log2(eps_min))) + 1)]
            h_limit = estimate_H_limit(spec, g, grid)
        except NotImplementedError:
            h_limit = None
    if h_limit is not None:
        trace.err_budget = h_limit.tail_budget
    return trace


@dataclass
class MartingaleDiagnostic:
    bin_means: np.ndarray
    bin_std_errors: np.ndarray
    bin_counts: np.ndarray
    max_abs_z: float
    bins_pass: bool
    stationarity_ratio: float | None
    stationarity_pass: bool | None
    verdict: str  # pass | fail | Inconclusive


def martingale_check(trace: DecompositionTrace, path: Path, bins: int = 20,
                     which: str = "eps", min_per_bin: int = 100,
                     z_max: float = 4.0) -> MartingaleDiagnostic:
    """Conditional-mean-zero and stationarity diagnostics for M increments.

    Bins the predecessor states into quantile bins; every bin mean must
    vanish within ``z_max`` standard errors.  For n >= 2^16 the first-half
    versus second-half increment variance ratio must lie in [0.9, 1.1].
    """
    if path.states is None:
        raise ValueError("martingale_check needs retained states")
    M = trace.M_eps if which == "eps" else trace.limit_M
    if M is None:
        raise ValueError(f"trace has no {which!r} martingale part")
    inc = np.diff(M, prepend=0.0)
    pred = path.states[:-1]
    if pred.ndim > 1:
        pred = pred[:, -1]  # newest coordinate drives the next observable
    if path.n < bins * min_per_bin:
        return MartingaleDiagnostic(
            bin_means=np.array([]), bin_std_errors=np.array([]),
            bin_counts=np.array([]), max_abs_z=float("nan"), bins_pass=False,
            stationarity_ratio=None, stationarity_pass=None,
            verdict="Inconclusive",
        )
    edges = np.quantile(pred, np.linspace(0.0, 1.0, bins + 1))
    edges[0], edges[-1] = -np.inf, np.inf
    idx = np.searchsorted(edges, pred, side="right") - 1
    means = np.empty(bins)
    ses = np.empty(bins)
    counts = np.empty(bins, dtype=int)
    for b in range(bins):
        vals = inc[idx == b]
        counts[b] = vals.size
        if vals.size < 2:
            means[b], ses[b] = 0.0, float("inf")
            continue
        means[b] = vals.mean()
        ses[b] = vals.std(ddof=1) / math.sqrt(vals.size)
    degenerate = np.all(inc == inc[0])
    if degenerate:
        # constant increments (for instance g identically zero) are a
        # vacuous pass of the conditional-mean check
        zs = np.zeros(bins) if inc[0] == 0.0 else np.full(bins, np.inf)
        max_z = float(zs.max())
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            zs = np.where(ses > 0, np.abs(means) / ses, np.abs(means) / 1e-300)
        max_z = float(np.max(zs))
    bins_pass = bool(max_z <= z_max)
    ratio = None
    st_pass = None
    if path.n >= 1 << 16:
        half = path.n // 2
        v1 = float(inc[:half].var(ddof=1))
        v2 = float(inc[half:].var(ddof=1))
        ratio = v1 / v2 if v2 > 0 else (1.0 if v1 == 0.0 else float("inf"))
        st_pass = 0.9 <= ratio <= 1.1
    ok = bins_pass and (st_pass is not False)
    return MartingaleDiagnostic(
        bin_means=means, bin_std_errors=ses, bin_counts=counts,
        max_abs_z=max_z, bins_pass=bins_pass,
        stationarity_ratio=ratio, stationarity_pass=st_pass,
        verdict="pass" if ok else "fail",
    )
