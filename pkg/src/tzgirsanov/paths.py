"""Sampled paths on a uniform grid and their exponential functionals.

A path is a real function on ``[0, t]`` sampled at ``n + 1`` equally spaced
nodes.  Attached to it are the running integral

.. math:: A_s = \\int_0^s e^{2\\phi_u}\\,du

and the ratio :math:`Z_s = e^{-\\phi_s} A_s`.  The integral is evaluated with
the composite trapezoid rule on the path's own grid.  That rule is additive
over intervals, which is what makes the time-reversal relations hold exactly
at the nodes.
"""

from __future__ import annotations

import csv
import enum
import io
import os
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DomainError",
    "RangeError",
    "TimeGrid",
    "Path",
    "ProfileMode",
    "FunctionalProfile",
    "EXP_GUARD",
    "cumulative_trapezoid_exp2",
    "exp_functional_A",
    "time_reverse",
    "path_endpoint_state",
    "read_path_csv",
    "write_path_csv",
]

#: Largest ``|2 phi|`` accepted before ``exp(2 phi)`` is considered out of range.
EXP_GUARD = 700.0


class DomainError(ValueError):
    """An argument lies outside the set where an operation is defined."""


class RangeError(ArithmeticError):
    """A result would overflow or underflow the floating range."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``s_k = k * t_end / n_steps`` on ``[0, t_end]``."""

    t_end: float
    n_steps: int

    def __post_init__(self):
        if not np.isfinite(self.t_end) or self.t_end <= 0:
            raise DomainError(f"t_end must be positive, got {self.t_end!r}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise DomainError(f"n_steps must be an integer >= 2, got {self.n_steps!r}")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "t_end", float(self.t_end))

    @property
    def ds(self) -> float:
        return self.t_end / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        # k * t / n rather than k * ds keeps the grid symmetric under k -> n - k
        s = np.arange(self.n_steps + 1) * self.t_end / self.n_steps
        s[-1] = self.t_end
        return s

    def index_of(self, s: float) -> int:
        """Index of node ``s``; raises if ``s`` is not (close to) a node."""
        k = round(s / self.ds)
        if not 0 <= k <= self.n_steps or abs(k * self.ds - s) > 1e-9 * self.t_end:
            raise DomainError(f"time {s!r} is not a node of {self}")
        return k

    def coarsen(self, factor: int = 2) -> "TimeGrid":
        if self.n_steps % factor:
            raise DomainError(f"cannot coarsen {self.n_steps} steps by {factor}")
        return TimeGrid(self.t_end, self.n_steps // factor)


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Path:
    """A real-valued path sampled on ``grid``.  Immutable."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        if values.shape != (self.grid.n_steps + 1,):
            raise DomainError(
                f"expected {self.grid.n_steps + 1} values, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise DomainError(f"non-finite path value at node {bad}")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: TimeGrid, func) -> "Path":
        return cls(grid, np.broadcast_to(func(grid.nodes), grid.nodes.shape))

    @property
    def endpoint(self) -> float:
        return float(self.values[-1])

    def at(self, s: float) -> float:
        return float(self.values[self.grid.index_of(s)])

    def coarsen(self, factor: int = 2) -> "Path":
        """Keep every ``factor``-th node (exact restriction of the sampled path)."""
        return Path(self.grid.coarsen(factor), self.values[::factor])


class ProfileMode(enum.Enum):
    QUADRATURE = "quadrature"
    INDUCED = "induced"


@dataclass(frozen=True)
class FunctionalProfile:
    """Arrays ``A`` and ``Z`` over the grid nodes of one path.

    ``Z[0]`` is stored as 0 and never read: the ratio is undefined at the
    origin where ``A`` vanishes.
    """

    A: np.ndarray
    Z: np.ndarray
    mode: ProfileMode = ProfileMode.QUADRATURE

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(self.A))
        object.__setattr__(self, "Z", _frozen(self.Z))

    @property
    def A_end(self) -> float:
        return float(self.A[-1])

    @property
    def Z_end(self) -> float:
        return float(self.Z[-1])


def cumulative_trapezoid_exp2(values: np.ndarray, ds: float) -> np.ndarray:
    """Running trapezoid integral of ``exp(2 * values)`` along the last axis.

    Works on a single path or on a stack of paths.  The first entry is 0.
    """
    values = np.asarray(values, dtype=float)
    over = np.abs(2.0 * values) > EXP_GUARD
    if np.any(over):
        idx = np.argwhere(over)[0]
        node = int(idx[-1])
        where = f"node {node}" if values.ndim == 1 else f"node {node} of path {tuple(idx[:-1])}"
        raise RangeError(
            f"exp(2*phi) out of floating range at {where} (phi = {values[tuple(idx)]:.6g})"
        )
    e = np.exp(2.0 * values)
    A = np.empty_like(e)
    A[..., 0] = 0.0
    np.cumsum((e[..., 1:] + e[..., :-1]) * (0.5 * ds), axis=-1, out=A[..., 1:])
    return A


def _z_from_a(values: np.ndarray, A: np.ndarray) -> np.ndarray:
    Z = np.exp(-values) * A
    Z[..., 0] = 0.0
    return Z


def exp_functional_A(path: Path) -> FunctionalProfile:
    """Trapezoid profile ``(A, Z)`` of ``path``.

    Raises :class:`RangeError` naming the node where ``|2 phi|`` exceeds the
    exponent guard.
    """
    A = cumulative_trapezoid_exp2(path.values, path.grid.ds)
    return FunctionalProfile(A, _z_from_a(path.values, A), ProfileMode.QUADRATURE)


def time_reverse(path: Path) -> Path:
    """``R(phi)(s) = phi(t - s) - phi(t)``.  An involution."""
    v = path.values
    return Path(path.grid, v[::-1] - v[-1])


def path_endpoint_state(path: Path, profile: FunctionalProfile) -> tuple[float, float]:
    """Terminal pair ``(phi_t, Z_t)``."""
    return path.endpoint, profile.Z_end


# -- CSV -------------------------------------------------------------------

_SPACING_RTOL = 1e-9


def _grid_from_nodes(s: np.ndarray) -> TimeGrid:
    if s.size < 3:
        raise DomainError("a path needs at least 3 nodes")
    n = s.size - 1
    t_end = float(s[-1])
    if abs(s[0]) > _SPACING_RTOL * abs(t_end) or t_end <= 0:
        raise DomainError(f"time column must start at 0 and increase (got {s[0]!r}..{t_end!r})")
    grid = TimeGrid(t_end, n)
    if np.max(np.abs(s - grid.nodes)) > _SPACING_RTOL * t_end:
        raise DomainError("time column is not uniformly spaced")
    return grid


def read_path_csv(source) -> Path:
    """Read a ``s,phi`` CSV from a filename, path-like or text stream."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="") as fh:
            return read_path_csv(fh)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["s", "phi"]:
        raise DomainError(f"expected header 's,phi', got {header!r}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise DomainError(f"line {lineno}: expected 2 fields, got {len(row)}")
        try:
            rows.append((float(row[0]), float(row[1])))
        except ValueError as exc:
            raise DomainError(f"line {lineno}: {exc}") from None
    data = np.array(rows, dtype=float).reshape(-1, 2)
    grid = _grid_from_nodes(data[:, 0])
    return Path(grid, data[:, 1])


def write_path_csv(path: Path, target=None) -> str | None:
    """Write ``path`` as ``s,phi`` CSV.  Returns the text if ``target`` is None."""
    buf = io.StringIO() if target is None else None
    if isinstance(target, (str, os.PathLike)):
        with open(target, "w", newline="") as fh:
            write_path_csv(path, fh)
        return None
    out = buf if buf is not None else target
    out.write("s,phi\n")
    for s, v in zip(path.grid.nodes, path.values):
        out.write(f"{float(s)!r},{float(v)!r}\n")
    return buf.getvalue() if buf is not None else None
