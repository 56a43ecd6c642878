"""Modified Bessel functions of the third kind and the conditional density of
the endpoint given the ratio process.

``K_nu`` is evaluated from

.. math:: K_\\nu(x) = \\int_0^\\infty e^{-x\\cosh u}\\cosh(\\nu u)\\,du .

The integrand is an even, entire function of ``u`` decaying doubly
exponentially, so the trapezoid rule on ``[0, U]`` converges geometrically in
the node count.  All work is done in log scale: the integrand is divided by
its maximum before summation, and :func:`bessel_k_log` is the primitive from
which every other quantity is derived.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline

from .paths import DomainError, RangeError

__all__ = [
    "BesselEvaluator",
    "bessel_k_log",
    "bessel_k",
    "bessel_k_ratio",
    "log_conditional_density",
    "conditional_density",
    "LogBesselTable",
    "log_bessel_table",
]

_LOG_TINY = -745.0  # exp() of anything below this underflows to zero


@dataclass(frozen=True)
class BesselEvaluator:
    """Quadrature settings for the integral representation.

    Attributes
    ----------
    min_nodes, max_nodes : int
        Trapezoid node budget; the count doubles from ``min_nodes`` until
        successive sums agree to ``rtol``.
    cutoff : float
        Number of e-folds below the integrand maximum at which the integral
        is truncated.
    rtol : float
        Relative tolerance between successive refinements.
    """

    min_nodes: int = 32
    max_nodes: int = 1 << 15
    cutoff: float = 60.0
    rtol: float = 1e-12


_DEFAULT = BesselEvaluator()


def _log_integrand(u, nu, x):
    # log(e^{-x (cosh u - 1)} cosh(nu u)); the constant e^{-x} is restored by
    # the caller.  cosh u - 1 = 2 sinh^2(u/2) avoids cancellation at large x.
    return -2.0 * x * np.sinh(0.5 * u) ** 2 + nu * u + np.log1p(np.exp(-2.0 * nu * u)) - np.log(2.0)


def bessel_k_log(nu, x, evaluator: BesselEvaluator = _DEFAULT):
    """``log K_nu(x)`` for ``x > 0``; ``nu`` is replaced by ``|nu|``.

    Accepts arrays (broadcast together).  Returns a float for scalar input.
    """
    nu_arr, x_arr = np.broadcast_arrays(np.abs(np.asarray(nu, dtype=float)),
                                        np.asarray(x, dtype=float))
    scalar = nu_arr.ndim == 0
    nu_v = np.atleast_1d(nu_arr).ravel().copy()
    x_v = np.atleast_1d(x_arr).ravel().copy()
    if np.any(~np.isfinite(x_v)) or np.any(x_v <= 0):
        raise DomainError("K_nu(x) needs finite x > 0")
    if np.any(~np.isfinite(nu_v)):
        raise DomainError("K_nu(x) needs a finite order")

    # location and value of the log-integrand maximum
    u_star = np.arcsinh(nu_v / x_v)
    g_max = np.maximum(_log_integrand(u_star, nu_v, x_v), _log_integrand(0.0, nu_v, x_v))
    # cutoff: first u past the maximum where the integrand has dropped enough
    # start just past the maximum, pull in while the drop still exceeds the
    # cutoff (large x makes the peak very narrow), then push out until it does
    # the peak has width of order 1/sqrt(x)
    d = np.minimum(1.0, 4.0 * np.sqrt((evaluator.cutoff + 1.0) / x_v))
    for _ in range(200):
        far = _log_integrand(u_star + 0.5 * d, nu_v, x_v) <= g_max - evaluator.cutoff
        if not far.any():
            break
        d[far] *= 0.5
    U = u_star + d
    for _ in range(200):
        short = _log_integrand(U, nu_v, x_v) > g_max - evaluator.cutoff
        if not short.any():
            break
        U[short] = 2.0 * U[short] + 1.0
    else:  # pragma: no cover - doubly exponential decay makes this unreachable
        raise RangeError("could not bracket the Bessel integrand tail")

    out = np.empty_like(x_v)
    todo = np.arange(x_v.size)
    nodes = evaluator.min_nodes
    prev = None
    while todo.size:
        if nodes > evaluator.max_nodes:
            raise RangeError(
                f"K_nu quadrature did not converge for x = {x_v[todo[0]]!r}, nu = {nu_v[todo[0]]!r}"
            )
        h = U[todo] / nodes
        u = h[:, None] * np.arange(nodes + 1)
        w = np.ones(nodes + 1)
        w[0] = 0.5
        vals = np.exp(_log_integrand(u, nu_v[todo, None], x_v[todo, None]) - g_max[todo, None])
        s = h * (vals @ w)
        if prev is not None:
            done = np.abs(s - prev) <= evaluator.rtol * s
            out[todo[done]] = g_max[todo[done]] - x_v[todo[done]] + np.log(s[done])
            todo, s = todo[~done], s[~done]
        prev = s
        nodes *= 2
    return float(out[0]) if scalar else out.reshape(nu_arr.shape)


def bessel_k(nu, x, evaluator: BesselEvaluator = _DEFAULT):
    """``K_nu(x)``.  Raises :class:`RangeError` where the value underflows;
    use :func:`bessel_k_log` there."""
    lk = bessel_k_log(nu, x, evaluator)
    if np.any(np.asarray(lk) < _LOG_TINY):
        raise RangeError("K_nu(x) underflows; use bessel_k_log for large x")
    return np.exp(lk)


def bessel_k_ratio(mu, z, evaluator: BesselEvaluator = _DEFAULT):
    """``K_{mu+1}(z) / K_mu(z)`` as one exponential of a log difference."""
    mu = np.asarray(mu, dtype=float)
    return np.exp(bessel_k_log(mu + 1.0, z, evaluator) - bessel_k_log(mu, z, evaluator))


def log_conditional_density(xi, zeta, evaluator: BesselEvaluator = _DEFAULT):
    """Log of ``exp(-cosh(xi)/zeta) / (2 K_0(1/zeta))``."""
    xi = np.asarray(xi, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    if np.any(zeta <= 0) or np.any(~np.isfinite(1.0 / zeta)):
        raise DomainError("zeta must be positive with finite 1/zeta")
    # -cosh(xi)/zeta - log K_0(1/zeta), both halves carry -1/zeta: cancel it
    lk0 = bessel_k_log(0.0, 1.0 / zeta, evaluator)
    return -2.0 * np.sinh(0.5 * xi) ** 2 / zeta - (lk0 + 1.0 / zeta) - np.log(2.0)


def conditional_density(xi, zeta, evaluator: BesselEvaluator = _DEFAULT):
    """Density in ``xi`` of the endpoint of a Brownian path given its ratio
    process, evaluated at terminal ratio ``zeta``."""
    return np.exp(log_conditional_density(xi, zeta, evaluator))


class LogBesselTable:
    """Cubic-spline table of ``log K_nu(e^y)`` over ``y`` in ``[lo, hi]``.

    Built once from :func:`bessel_k_log`; points outside the table fall back
    to direct evaluation.  Used where ``K`` is needed millions of times (the
    Bessel weight inside the balance solver and the Bessel SDE drift).
    """

    def __init__(self, nu: float, lo: float = -40.0, hi: float = 12.0, step: float = 0.01,
                 evaluator: BesselEvaluator = _DEFAULT):
        self.nu = abs(float(nu))
        self.lo, self.hi = float(lo), float(hi)
        self.evaluator = evaluator
        y = np.linspace(lo, hi, int(round((hi - lo) / step)) + 1)
        self._spline = CubicSpline(y, bessel_k_log(self.nu, np.exp(y), evaluator))

    def __call__(self, log_z):
        log_z = np.asarray(log_z, dtype=float)
        out = self._spline(log_z)
        outside = (log_z < self.lo) | (log_z > self.hi)
        if np.any(outside):
            out = np.array(out, dtype=float)
            out[outside] = bessel_k_log(self.nu, np.exp(log_z[outside]), self.evaluator)
        return out


@lru_cache(maxsize=16)
def log_bessel_table(nu: float) -> LogBesselTable:
    """Shared table for order ``|nu|`` (built on first use)."""
    return LogBesselTable(abs(float(nu)))
