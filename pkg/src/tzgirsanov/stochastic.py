"""Reproducible samplers: Brownian motion, Brownian motion with drift and
Euler-Maruyama solutions of the three diffusions used by the invariance checks.

Every path draws its Gaussian increments from its own counter-based stream,
keyed by ``(master seed, path ordinal)``.  A path therefore depends on
nothing but its ordinal, which makes runs independent of shard layout,
chunking and evaluation order.

The single-path functions (:func:`sample_bm`, :func:`sample_bm_drift`,
:func:`euler_maruyama`) return :class:`~tzgirsanov.paths.Path` objects.  The
Monte Carlo engine instead works on stacks of increments, through
:func:`bm_increments`, :func:`bm_from_increments` and
:func:`euler_maruyama_batch`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .paths import DomainError, Path, RangeError, TimeGrid
from .specfun import log_bessel_table

__all__ = [
    "RngSpec",
    "DriftKind",
    "DriftSpec",
    "bm_increments",
    "bm_from_increments",
    "coarsen_increments",
    "euler_maruyama_batch",
    "sample_bm",
    "sample_bm_drift",
    "euler_maruyama",
]

_U64 = 1 << 64


@dataclass(frozen=True)
class RngSpec:
    """Master seed plus a stream number.

    Path ``i`` uses a Philox generator keyed by ``(seed, i)``; ``stream``
    occupies the top counter word, so distinct streams never share draws.
    """

    seed: int = 42
    stream: int = 0

    def __post_init__(self):
        if not (0 <= int(self.seed) < _U64) or int(self.seed) != self.seed:
            raise DomainError(f"seed must be an integer in [0, 2^64), got {self.seed!r}")
        if not 0 <= int(self.stream) < _U64:
            raise DomainError(f"stream must be in [0, 2^64), got {self.stream!r}")

    def generator(self, ordinal: int) -> np.random.Generator:
        if not 0 <= ordinal < _U64:
            raise DomainError(f"path ordinal must be in [0, 2^64), got {ordinal!r}")
        bits = np.random.Philox(
            key=np.array([self.seed, ordinal], dtype=np.uint64),
            counter=np.array([0, 0, 0, self.stream], dtype=np.uint64),
        )
        return np.random.Generator(bits)

    def child(self, k: int = 1) -> "RngSpec":
        """Independent stream ``k`` under the same master seed."""
        return RngSpec(self.seed, self.stream + k)


class DriftKind(enum.Enum):
    ZERO = "zero"
    CONSTANT = "constant"
    TANH = "tanh"
    BESSEL_K = "besselk"
    TIME_INHOM = "timeinhom"


@dataclass(frozen=True)
class DriftSpec:
    """Drift ``b(s, x, A_s)`` of ``dX = dB + b ds``.

    ``mu`` is used by CONSTANT, TANH and BESSEL_K; ``lam`` by BESSEL_K;
    ``t_end`` (the horizon) by TIME_INHOM.
    """

    kind: DriftKind = DriftKind.ZERO
    mu: float = 0.0
    lam: float = 1.0
    t_end: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", DriftKind(self.kind))
        if self.kind is DriftKind.BESSEL_K and not self.lam > 0:
            raise DomainError(f"BesselK drift needs lambda > 0, got {self.lam!r}")
        if self.kind is DriftKind.TIME_INHOM and not (self.t_end and self.t_end > 0):
            raise DomainError("TimeInhom drift needs the horizon t_end")

    @property
    def is_path_dependent(self) -> bool:
        """Whether the drift depends on the state (needs a time stepper)."""
        return self.kind in (DriftKind.TANH, DriftKind.BESSEL_K, DriftKind.TIME_INHOM)

    def label(self) -> str:
        k = self.kind
        if k is DriftKind.ZERO:
            return "BM"
        if k is DriftKind.CONSTANT:
            return f"BM drift {self.mu:g}"
        if k is DriftKind.TANH:
            return f"tanh SDE mu={self.mu:g}"
        if k is DriftKind.BESSEL_K:
            return f"Bessel SDE lambda={self.lam:g} mu={self.mu:g}"
        return f"time-inhomogeneous SDE t={self.t_end:g}"

    def evaluate(self, s: float, x: np.ndarray, A: np.ndarray) -> np.ndarray:
        """Drift at time ``s`` for state ``x`` and running integral ``A``."""
        k = self.kind
        if k is DriftKind.ZERO:
            return np.zeros_like(x)
        if k is DriftKind.CONSTANT:
            return np.full_like(x, self.mu)
        if k is DriftKind.TANH:
            return self.mu * np.tanh(self.mu * x)
        if k is DriftKind.BESSEL_K:
            # lam e^x K_{mu+1}/K_mu at lam e^x, through the log tables
            y = math.log(self.lam) + x
            lr = log_bessel_table(abs(self.mu + 1.0))(y) - log_bessel_table(abs(self.mu))(y)
            b = self.mu - np.exp(y + lr)
            if not np.all(np.isfinite(b)):
                bad = int(np.flatnonzero(~np.isfinite(b))[0])
                raise RangeError(f"Bessel drift is not finite at x = {x.flat[bad]!r}")
            return b
        # TIME_INHOM: 2 c e^{2x} / (2 A + c e^{2x}) with c = e^{2(t-s)} - 1
        c = math.expm1(2.0 * (self.t_end - s))
        if c <= 0.0:
            return np.zeros_like(x)
        e2 = c * np.exp(2.0 * x)
        return 2.0 * e2 / (2.0 * A + e2)


# -- batch kernels ----------------------------------------------------------


def bm_increments(rng: RngSpec, ordinals, grid: TimeGrid) -> np.ndarray:
    """Increments of shape ``(len(ordinals), n)``; row ``i`` is the increment
    sequence of path ``ordinals[i]`` and depends on nothing else."""
    ordinals = [int(o) for o in ordinals]
    out = np.empty((len(ordinals), grid.n_steps))
    scale = math.sqrt(grid.ds)
    for row, o in enumerate(ordinals):
        rng.generator(o).standard_normal(out=out[row])
    out *= scale
    return out


def bm_from_increments(dB: np.ndarray, mu: float = 0.0, grid: TimeGrid | None = None) -> np.ndarray:
    """Cumulate increments into paths starting at 0, plus ``mu * s_k``."""
    dB = np.atleast_2d(dB)
    out = np.zeros((dB.shape[0], dB.shape[1] + 1))
    np.cumsum(dB, axis=1, out=out[:, 1:])
    if mu:
        if grid is None:
            raise DomainError("a drift needs the grid")
        out += mu * grid.nodes
    return out


def coarsen_increments(dB: np.ndarray, factor: int = 2) -> np.ndarray:
    """Increments on a grid ``factor`` times coarser, from the same paths."""
    m, n = dB.shape
    if n % factor:
        raise DomainError(f"cannot coarsen {n} increments by {factor}")
    return dB.reshape(m, n // factor, factor).sum(axis=2)


def euler_maruyama_batch(drift: DriftSpec, dB: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Euler-Maruyama paths driven by the increment stack ``dB``.

    ``X_{k+1} = X_k + b(s_k, X_k, A_k) ds + dB_k`` with ``A`` the running
    trapezoid of ``exp(2 X)``, updated one step at a time.
    """
    dB = np.atleast_2d(dB)
    if dB.shape[1] != grid.n_steps:
        raise DomainError(f"{dB.shape[1]} increments for a grid of {grid.n_steps} steps")
    if drift.kind is DriftKind.ZERO:
        return bm_from_increments(dB)
    if drift.kind is DriftKind.CONSTANT:
        return bm_from_increments(dB, drift.mu, grid)
    if drift.kind is DriftKind.TIME_INHOM and not math.isclose(drift.t_end, grid.t_end):
        raise DomainError("TimeInhom drift horizon differs from the grid horizon")
    m, n = dB.shape
    ds = grid.ds
    s = grid.nodes
    X = np.zeros((m, n + 1))
    A = np.zeros(m)
    x = X[:, 0]
    e_prev = np.exp(2.0 * x)
    for k in range(n):
        b = drift.evaluate(s[k], x, A)
        x = x + b * ds + dB[:, k]
        X[:, k + 1] = x
        e_next = np.exp(2.0 * x)
        A = A + 0.5 * ds * (e_prev + e_next)
        e_prev = e_next
    if not np.all(np.isfinite(X)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(X), axis=1))[0])
        raise RangeError(f"{drift.label()} left the floating range on row {bad}")
    return X


# -- single-path API --------------------------------------------------------


def sample_bm(grid: TimeGrid, rng: RngSpec, ordinal: int) -> Path:
    """Standard Brownian path number ``ordinal``."""
    return Path(grid, bm_from_increments(bm_increments(rng, [ordinal], grid))[0])


def sample_bm_drift(mu: float, grid: TimeGrid, rng: RngSpec, ordinal: int) -> Path:
    """``B_s + mu s`` built on the same increments as :func:`sample_bm`."""
    return Path(grid, bm_from_increments(bm_increments(rng, [ordinal], grid), mu, grid)[0])


def euler_maruyama(drift: DriftSpec, grid: TimeGrid, rng: RngSpec, ordinal: int) -> Path:
    """Euler-Maruyama solution driven by the increments of path ``ordinal``."""
    X = euler_maruyama_batch(drift, bm_increments(rng, [ordinal], grid), grid)
    return Path(grid, X[0])
