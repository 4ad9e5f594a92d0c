"""Observable functionals on chain states.

The catalog is closed: every entry is a named, parameterized functional
with known centering and, where available, an analytic tag describing how
the transition operator acts on it.  Tags are what make the operator
calculus exact:

* ``QEigen(rho)``      -- Qg = rho * g
* ``QAnnihilated``     -- Qg = 0
* ``LinearCoeffs(c)``  -- Lebesgue-shift functional sum c_k (u_{-k} - 1/2);
                          Q shifts the coefficient vector left.

Functionals without a tag (the singular oscillatory example) are handled
pointwise by dyadic preimage averages and, for norm work, by the spectral
representation in :mod:`mwlil.spectral`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .chains import ChainKind
from .quadrature import singular_sin_mean

__all__ = [
    "QEigen",
    "QAnnihilated",
    "LinearCoeffs",
    "Functional",
    "linear_centered",
    "cos2pi",
    "singular_sin",
    "lebesgue_linear",
    "zero",
    "scale",
    "make_functional",
    "CATALOG",
]


@dataclass(frozen=True)
class QEigen:
    rho: float


@dataclass(frozen=True)
class QAnnihilated:
    pass


@dataclass(frozen=True)
class LinearCoeffs:
    coeffs: tuple[float, ...]


@dataclass
class Functional:
    """A centered, vectorized observable g with optional analytic structure.

    ``raw`` evaluates the uncentered function; calling the functional
    subtracts ``centering`` so that the stationary mean is zero.
    ``quadrature_rule`` tells the norm estimator whether plain dyadic
    quadrature converges on g ("dyadic") or a substitution rule is needed
    ("substitution", the singular example).
    """

    chain_kind: ChainKind
    name: str
    raw: Callable[[np.ndarray], np.ndarray]
    centering: float = 0.0
    analytic_tag: QEigen | QAnnihilated | LinearCoeffs | None = None
    params: dict = field(default_factory=dict)
    quadrature_rule: str = "dyadic"
    spectral: object | None = field(default=None, compare=False, repr=False)

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.raw(x), dtype=np.float64) - self.centering


def linear_centered() -> Functional:
    return Functional(
        chain_kind=ChainKind.BERNOULLI,
        name="linear_centered",
        raw=lambda x: np.asarray(x, dtype=np.float64),
        centering=0.5,
        analytic_tag=QEigen(0.5),
    )


def cos2pi() -> Functional:
    return Functional(
        chain_kind=ChainKind.BERNOULLI,
        name="cos2pi",
        raw=lambda x: np.sqrt(2.0) * np.cos(2.0 * np.pi * np.asarray(x, dtype=np.float64)),
        centering=0.0,
        analytic_tag=QAnnihilated(),
    )


def _singular_raw(alpha: float):
    def raw(x):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(x)
        nz = x > 0.0
        xv = x[nz]
        out[nz] = xv**-alpha * np.sin(1.0 / xv)
        return out

    return raw


def singular_sin(alpha: float) -> Functional:
    """g(x) = x^-alpha sin(1/x) - c, 0 < alpha < 1/2 (c cached from the
    substitution rule).  g(0) is set to -c; {0} is a null set."""
    if not 0.0 < alpha < 0.5:
        raise ValueError("singular_sin requires 0 < alpha < 1/2")
    return Functional(
        chain_kind=ChainKind.BERNOULLI,
        name=f"singular_sin({alpha:g})",
        raw=_singular_raw(alpha),
        centering=singular_sin_mean(alpha),
        analytic_tag=None,
        params={"alpha": alpha},
        quadrature_rule="substitution",
    )


def _linear_coeffs_raw(coeffs: tuple[float, ...]):
    # window layout is oldest-first, so c_k multiplies w[..., K-k]
    weights = np.asarray(coeffs, dtype=np.float64)[::-1].copy()

    def raw(w):
        w = np.asarray(w, dtype=np.float64)
        return (w - 0.5) @ weights

    return raw


def lebesgue_linear(q: float, memory_K: int) -> Functional:
    """Moving-average functional sum_k (k+1)^-q (u_{-k} - 1/2), k = 0..K."""
    if memory_K < 0:
        raise ValueError("memory_K must be nonnegative")
    coeffs = tuple(float((k + 1) ** -q) for k in range(memory_K + 1))
    return Functional(
        chain_kind=ChainKind.LEBESGUE,
        name=f"lebesgue_linear({q:g},{memory_K})",
        raw=_linear_coeffs_raw(coeffs),
        centering=0.0,
        analytic_tag=LinearCoeffs(coeffs),
        params={"q": q, "memory_K": memory_K},
    )


def linear_coeffs_functional(coeffs, name: str | None = None) -> Functional:
    """Lebesgue functional with an explicit coefficient vector."""
    coeffs = tuple(float(c) for c in coeffs)
    return Functional(
        chain_kind=ChainKind.LEBESGUE,
        name=name or f"lebesgue_coeffs(K={len(coeffs) - 1})",
        raw=_linear_coeffs_raw(coeffs),
        centering=0.0,
        analytic_tag=LinearCoeffs(coeffs),
        params={"memory_K": len(coeffs) - 1},
    )


def zero(chain_kind: ChainKind = ChainKind.BERNOULLI, memory_K: int = 0) -> Functional:
    if chain_kind is ChainKind.BERNOULLI:
        raw = lambda x: np.zeros_like(np.asarray(x, dtype=np.float64))
        tag = QEigen(0.0)
    else:
        raw = lambda w: np.zeros(np.asarray(w).shape[:-1], dtype=np.float64)
        tag = LinearCoeffs(tuple(0.0 for _ in range(memory_K + 1)))
    return Functional(chain_kind=chain_kind, name="zero", raw=raw, analytic_tag=tag)


def scale(g: Functional, c: float) -> Functional:
    """c * g, propagating the analytic tag."""
    tag = g.analytic_tag
    if isinstance(tag, LinearCoeffs):
        tag = LinearCoeffs(tuple(c * a for a in tag.coeffs))
    base_raw = g.raw

    spectral = None
    if g.spectral is not None:
        spectral = g.spectral.scaled(c)
    return replace(
        g,
        name=f"{c:g}*{g.name}",
        raw=lambda x: c * np.asarray(base_raw(x), dtype=np.float64),
        centering=c * g.centering,
        analytic_tag=tag,
        spectral=spectral,
    )


_CALL_RE = re.compile(r"^([a-z_][a-z0-9_]*)\s*(?:\(([^)]*)\))?$")


def make_functional(name: str, *, memory_K: int | None = None) -> Functional:
    """Parse a catalog entry such as ``singular_sin(0.3)`` or
    ``lebesgue_linear(2,2)``.  Raises ValueError on unknown names or bad
    parameters; the catalog is closed by design."""
    m = _CALL_RE.match(name.strip())
    if not m:
        raise ValueError(f"cannot parse functional name {name!r}")
    base, argstr = m.group(1), m.group(2)
    args = [a.strip() for a in argstr.split(",")] if argstr else []
    if base == "linear_centered":
        if args:
            raise ValueError("linear_centered takes no parameters")
        return linear_centered()
    if base == "cos2pi":
        if args:
            raise ValueError("cos2pi takes no parameters")
        return cos2pi()
    if base == "singular_sin":
        if len(args) != 1:
            raise ValueError("singular_sin takes one parameter: alpha")
        return singular_sin(float(args[0]))
    if base == "lebesgue_linear":
        if len(args) == 2:
            q, K = float(args[0]), int(args[1])
        elif len(args) == 1 and memory_K is not None:
            q, K = float(args[0]), memory_K
        else:
            raise ValueError("lebesgue_linear takes parameters (q, K)")
        return lebesgue_linear(q, K)
    raise ValueError(f"unknown functional {base!r}")


CATALOG = ("linear_centered", "cos2pi", "singular_sin(alpha)", "lebesgue_linear(q,K)")
