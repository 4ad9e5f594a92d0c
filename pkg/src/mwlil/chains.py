"""Chain definitions, stationary sampling and seeded path simulation.

Two stationary ergodic Markov chains are supported:

* the binary shift on [0,1]: ``X_{n+1} = (X_n + e_{n+1}) / 2`` with a fair
  coin ``e``, whose stationary law is uniform on [0,1];
* a finite-memory uniform shift: the state is a window of K+1 iid
  uniforms, advanced by dropping the oldest coordinate and appending a
  fresh one.

All randomness flows through counter-based Philox streams keyed by
``(master_seed, stream_id)``, so a path is a pure function of its spec,
functional, length and stream.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

__all__ = [
    "ChainKind",
    "ChainSpec",
    "RngStream",
    "Path",
    "bernoulli",
    "lebesgue",
    "sample_stationary",
    "step",
    "simulate_path",
]

# stream ids >= AUX_STREAM_BASE are reserved for non-path draws (norm
# estimation, condition checkers); path streams use 0..paths-1.
AUX_STREAM_BASE = 1 << 48

_U64 = (1 << 64) - 1


class ChainKind(enum.Enum):
    BERNOULLI = "bernoulli"
    LEBESGUE = "lebesgue"


@dataclass(frozen=True)
class ChainSpec:
    """Which chain to simulate.

    ``memory_K`` is the truncation window length and applies to the
    Lebesgue shift only; the Bernoulli shift has scalar states.
    """

    kind: ChainKind
    memory_K: int = 0

    def __post_init__(self) -> None:
        if self.kind is ChainKind.BERNOULLI and self.memory_K != 0:
            raise ValueError("memory_K applies to the Lebesgue shift only")
        if self.memory_K < 0:
            raise ValueError("memory_K must be nonnegative")

    @property
    def state_dim(self) -> int:
        return 1 if self.kind is ChainKind.BERNOULLI else self.memory_K + 1


def bernoulli() -> ChainSpec:
    return ChainSpec(ChainKind.BERNOULLI)


def lebesgue(memory_K: int = 32) -> ChainSpec:
    return ChainSpec(ChainKind.LEBESGUE, memory_K)


@dataclass(frozen=True)
class RngStream:
    """Counter-based stream; distinct (master_seed, stream_id) pairs are
    statistically independent, identical pairs reproduce bit-identical draws."""

    master_seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = [self.master_seed & _U64, self.stream_id & _U64]
        return np.random.Generator(np.random.Philox(key=key))

    def spawn(self, index: int) -> "RngStream":
        return RngStream(self.master_seed, self.stream_id + index)


@dataclass
class Path:
    """A simulated trajectory.

    ``observables`` holds g(X_1)..g(X_n); ``partial_sums`` its running sums
    (exact prefix sums of the observables).  ``states`` is X_0..X_n when
    retained: shape (n+1,) for the Bernoulli chain, (n+1, K+1) for the
    Lebesgue chain with the oldest coordinate first.
    """

    spec: ChainSpec
    n: int
    observables: np.ndarray
    partial_sums: np.ndarray
    states: np.ndarray | None = None
    master_seed: int = 0
    stream_id: int = 0
    extras: dict = field(default_factory=dict)


def sample_stationary(spec: ChainSpec, rng: RngStream | np.random.Generator):
    """Draw X_0 from the stationary law: uniform on [0,1], or K+1 iid uniforms."""
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    if spec.kind is ChainKind.BERNOULLI:
        return float(gen.random())
    return gen.random(spec.memory_K + 1)


def step(spec: ChainSpec, x, rng: RngStream | np.random.Generator):
    """Advance the chain one step from state ``x``."""
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    if spec.kind is ChainKind.BERNOULLI:
        e = int(gen.integers(0, 2))
        return (float(x) + e) / 2.0
    w = np.asarray(x, dtype=np.float64)
    if w.shape != (spec.memory_K + 1,):
        raise ValueError(f"state must have shape ({spec.memory_K + 1},)")
    out = np.empty_like(w)
    out[:-1] = w[1:]
    out[-1] = gen.random()
    return out


def _bernoulli_states(x0: float, bits: np.ndarray) -> np.ndarray:
    # X_i = 0.5*X_{i-1} + 0.5*e_i; both halvings are exact, so the filtered
    # recurrence is bit-identical to the scalar loop.
    return lfilter([0.5], [1.0, -0.5], bits, zi=np.array([0.5 * x0]))[0]


def simulate_path(
    spec: ChainSpec,
    g,
    n: int,
    rng: RngStream,
    retain_states: bool = False,
) -> Path:
    """Simulate X_0..X_n from stationarity and accumulate S_i = sum g(X_1..X_i).

    ``g`` is any vectorized callable on states (see functionals.Functional).
    Draw order per stream: X_0 first, then the n innovations, which pins
    the determinism contract.
    """
    if n < 1:
        raise ValueError("path length n must be >= 1")
    gen = rng.generator()
    if spec.kind is ChainKind.BERNOULLI:
        x0 = float(gen.random())
        bits = gen.integers(0, 2, size=n).astype(np.float64)
        xs = _bernoulli_states(x0, bits)
        obs = np.asarray(g(xs), dtype=np.float64)
        states = np.concatenate([[x0], xs]) if retain_states else None
    else:
        k = spec.memory_K
        u = gen.random(n + k + 1)
        windows = np.lib.stride_tricks.sliding_window_view(u, k + 1)
        obs = np.asarray(g(windows[1:]), dtype=np.float64)
        states = windows.copy() if retain_states else None
    partial = np.cumsum(obs)
    return Path(
        spec=spec,
        n=n,
        observables=obs,
        partial_sums=partial,
        states=states,
        master_seed=rng.master_seed,
        stream_id=rng.stream_id,
    )
