"""Deterministic quadrature rules used by the norm estimators.

Two families:

* dyadic composite Simpson on [0,1] with a Richardson error check, for
  smooth integrands;
* a substitution rule for the singular oscillatory family
  ``x^-alpha * sin(1/x)``: mapping t = 1/x turns moments into tails
  ``int_1^inf t^p trig(w t) dt`` which are summed over half-periods and
  accelerated by iterated averaging of the alternating partial sums.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

__all__ = [
    "QuadratureError",
    "simpson_dyadic",
    "oscillatory_tail",
    "singular_sin_mean",
    "singular_sin_l2sq_raw",
    "singular_sin_l2sq_centered",
]


class QuadratureError(RuntimeError):
    """Raised when a rule fails to converge on the supplied integrand."""


_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def simpson_dyadic(f, level: int = 16, a: float = 0.0, b: float = 1.0,
                   rtol: float = 1e-9) -> tuple[float, float]:
    """Composite Simpson at 2^level+1 nodes with a Richardson check.

    Returns (value, error_estimate); the estimate is the Richardson
    difference |I_level - I_{level-1}| / 15.  Raises QuadratureError when
    the two finest levels disagree beyond ``rtol`` (relative to scale),
    which is the signal the caller must switch to a substitution or
    Monte Carlo rule.
    """
    if level < 3:
        raise ValueError("level must be >= 3")
    n = 1 << level
    x = np.linspace(a, b, n + 1)
    y = np.asarray(f(x), dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise QuadratureError("integrand not finite on dyadic nodes")
    h = (b - a) / n

    def _simpson(vals, step):
        return step / 3.0 * (vals[0] + vals[-1] + 4.0 * vals[1:-1:2].sum()
                             + 2.0 * vals[2:-2:2].sum())

    fine = _simpson(y, h)
    coarse = _simpson(y[::2], 2 * h)
    err = abs(fine - coarse) / 15.0
    scale = max(1.0, abs(fine))
    if err > rtol * scale:
        raise QuadratureError(
            f"Simpson did not converge: levels {level - 1}/{level} differ by {err:.3e}"
        )
    return float(fine), float(err)


def oscillatory_tail(power: float, freq: float, t0: float, trig="sin",
                     n_panels: int = 80, n_avg: int = 40) -> tuple[float, float]:
    """``int_{t0}^inf t^power trig(freq * t) dt`` for power < -1.

    Half-period panels between consecutive zeros of the trig factor are
    integrated with 16-point Gauss-Legendre; the alternating sequence of
    partial sums is then collapsed by iterated averaging.  Returns
    (value, remainder_bound) where the bound is the spread of the last
    averaging stage.
    """
    if power >= -1:
        raise ValueError("tail integral requires power < -1")
    tfun = np.sin if trig == "sin" else np.cos
    # zeros of trig(freq*t): sin at k*pi/freq, cos at (k+1/2)*pi/freq
    shift = 0.0 if trig == "sin" else 0.5
    k0 = int(np.ceil(freq * t0 / np.pi - shift))
    zeros = (np.arange(k0, k0 + n_panels + 1) + shift) * np.pi / freq
    bounds = np.concatenate([[t0], zeros]) if zeros[0] > t0 else zeros
    a, b = bounds[:-1], bounds[1:]
    mid, half = (a + b) / 2.0, (b - a) / 2.0
    tt = mid[:, None] + half[:, None] * _GL_X[None, :]
    panels = (half[:, None] * _GL_W[None, :] * tt**power * tfun(freq * tt)).sum(axis=1)
    sums = np.cumsum(panels)
    seq = sums[-(n_avg + 1):]
    while seq.size > 2:
        seq = 0.5 * (seq[1:] + seq[:-1])
    value = float(0.5 * (seq[0] + seq[-1]))
    bound = float(abs(seq[-1] - seq[0])) + abs(panels[-1]) * 2.0**-n_avg
    return value, bound


@lru_cache(maxsize=None)
def singular_sin_mean(alpha: float) -> float:
    """Centering constant ``int_0^1 x^-alpha sin(1/x) dx`` (= tail with t = 1/x)."""
    if not 0.0 < alpha < 0.5:
        raise ValueError("alpha must lie in (0, 1/2)")
    value, _ = oscillatory_tail(alpha - 2.0, 1.0, 1.0, "sin")
    return value


@lru_cache(maxsize=None)
def singular_sin_l2sq_raw(alpha: float) -> float:
    """``int_0^1 x^-2alpha sin^2(1/x) dx`` via sin^2 = (1 - cos 2t)/2 in t = 1/x."""
    if not 0.0 < alpha < 0.5:
        raise ValueError("alpha must lie in (0, 1/2)")
    exact = 1.0 / (2.0 * (1.0 - 2.0 * alpha))
    osc, _ = oscillatory_tail(2.0 * alpha - 2.0, 2.0, 1.0, "cos")
    return exact - 0.5 * osc


def singular_sin_l2sq_centered(alpha: float) -> float:
    m = singular_sin_mean(alpha)
    return singular_sin_l2sq_raw(alpha) - m * m
