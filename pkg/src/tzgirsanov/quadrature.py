"""Small numerical kernels shared by the balance solver and the Monte Carlo
engine: Simpson rules, a bracketing root finder and Gauss-Legendre panels.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "ConvergenceError",
    "composite_simpson",
    "simpson_doubling",
    "bisect_secant",
    "gauss_legendre",
]


class ConvergenceError(RuntimeError):
    """An iterative numerical method did not reach its tolerance."""


def composite_simpson(y: np.ndarray, h: float, axis: int = -1) -> np.ndarray:
    """Composite Simpson sum of samples ``y`` with spacing ``h``.

    The number of intervals along ``axis`` must be even.
    """
    y = np.moveaxis(np.asarray(y, dtype=float), axis, -1)
    n = y.shape[-1] - 1
    if n < 2 or n % 2:
        raise ValueError(f"Simpson needs an even number of intervals, got {n}")
    return (h / 3.0) * (y[..., 0] + y[..., -1] + 4.0 * y[..., 1:-1:2].sum(-1) + 2.0 * y[..., 2:-1:2].sum(-1))


def simpson_doubling(f, a: float, b: float, rtol: float, min_panels: int = 64,
                     max_panels: int = 1 << 16):
    """Composite Simpson on ``[a, b]`` with panel doubling.

    Successive Simpson sums are combined by one Richardson step,
    ``(16 S_2n - S_n) / 15``, which cancels the fourth-order error term.
    Doubling stops when two successive extrapolated values agree to ``rtol``
    (relative).

    Returns ``(x, y, integral)`` for the final grid so callers can reuse the
    samples.
    """
    panels = max(2, min_panels)
    panels += panels % 2
    x = np.linspace(a, b, panels + 1)
    y = f(x)
    prev = composite_simpson(y, (b - a) / panels)
    prev_ext = None
    while True:
        if panels * 2 > max_panels:
            raise ConvergenceError(
                f"Simpson did not converge on [{a:.6g}, {b:.6g}] with {panels} panels"
            )
        # reuse the old samples; new nodes sit at the midpoints
        mid = 0.5 * (x[:-1] + x[1:])
        ym = f(mid)
        xn = np.empty(2 * panels + 1)
        yn = np.empty(2 * panels + 1)
        xn[0::2], xn[1::2] = x, mid
        yn[0::2], yn[1::2] = y, ym
        panels *= 2
        x, y = xn, yn
        cur = composite_simpson(y, (b - a) / panels)
        ext = cur + (cur - prev) / 15.0
        if prev_ext is not None and abs(ext - prev_ext) <= rtol * abs(ext):
            return x, y, ext
        prev, prev_ext = cur, ext


def bisect_secant(func, lo: float, hi: float, xtol: float, switch_width: float = 1e-3,
                  flo: float | None = None, fhi: float | None = None,
                  max_iter: int = 500) -> float:
    """Root of an increasing function on the bracket ``[lo, hi]``.

    Plain bisection runs until the bracket is narrower than ``switch_width``;
    after that each step is a secant step through the bracket ends, with the
    Illinois down-weighting so that neither end stalls.  Every step keeps a
    valid bracket, so convergence is guaranteed for a monotone function.
    """
    flo = func(lo) if flo is None else flo
    fhi = func(hi) if fhi is None else fhi
    if flo > 0 or fhi < 0:
        raise ValueError(f"[{lo!r}, {hi!r}] does not bracket a root ({flo!r}, {fhi!r})")
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    side = 0
    for _ in range(max_iter):
        width = hi - lo
        if width <= xtol:
            break
        if width > switch_width:
            x = 0.5 * (lo + hi)
        else:
            x = hi - fhi * width / (fhi - flo)
            if not lo < x < hi:
                x = 0.5 * (lo + hi)
        fx = func(x)
        if fx == 0:
            return x
        if fx < 0:
            lo, flo = x, fx
            if side == -1:
                fhi *= 0.5
            side = -1
        else:
            hi, fhi = x, fx
            if side == 1:
                flo *= 0.5
            side = 1
    else:
        raise ConvergenceError(f"root not isolated to {xtol} after {max_iter} steps")
    return 0.5 * (lo + hi)


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_legendre(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the ``k``-point rule on ``[0, 1]``."""
    if k not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(k)
        _GL_CACHE[k] = (0.5 * (x + 1.0), 0.5 * w)
    return _GL_CACHE[k]
