"""Endpoint maps ``h``, positive weights ``Lambda`` and the balance solver.

An :class:`HFamily` is a map ``h(xi, zeta)`` invertible in ``xi``; it decides
which shift ``T_{xi - h}`` is applied to a path ending at ``xi`` with terminal
ratio ``zeta``.  The density of the resulting change of measure is

.. math:: \\exp\\{(\\cosh\\xi - \\cosh h(\\xi,\\zeta))/\\zeta\\}\\,|h'(\\xi,\\zeta)| .

A :class:`WeightLambda` induces its own map ``h_Lambda``, the balance point at
which the ``Lambda``-weighted mass of ``exp(-cosh(x)/zeta)`` to the left of
``h`` equals the mass to the right of ``xi``.  Two independent solvers
compute it:

* :meth:`HLambdaSolver.solve` -- scalar reference.  Composite Simpson with
  panel doubling and a Richardson step for the masses, carried in log
  scale; bisection followed by bracketed secant steps for the root.
* :meth:`HLambdaSolver.solve_batch` -- vectorized over many ``(xi, zeta)``
  pairs for Monte Carlo use.  Gauss-Legendre panels and a safeguarded
  Newton iteration.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .paths import DomainError, RangeError
from .quadrature import (
    ConvergenceError,
    bisect_secant,
    gauss_legendre,
    simpson_doubling,
)
from .specfun import bessel_k_log, log_bessel_table, log_conditional_density

__all__ = [
    "SolverError",
    "HKind",
    "HFamily",
    "builtin_h",
    "cosh_diff",
    "log_girsanov_density",
    "girsanov_density",
    "WeightLambda",
    "lambda_one",
    "lambda_cameron_martin",
    "lambda_cosh",
    "lambda_bessel",
    "lambda_quadratic_variation",
    "bundled_lambdas",
    "HLambdaSolver",
    "solve_h_lambda",
    "solve_h_lambda_batch",
    "k_mu",
    "k_mu_batch",
    "check_integrability",
    "conditional_expectation_batch",
]

_EXP_MAX = 709.0


class SolverError(RuntimeError):
    """The balance solver could not produce ``h_Lambda``."""


def cosh_diff(a, b):
    """``cosh(a) - cosh(b)`` as a product of sinh terms (no cancellation)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return 2.0 * np.sinh(0.5 * (a + b)) * np.sinh(0.5 * (a - b))


# ---------------------------------------------------------------------------
# h families


class HKind(enum.IntEnum):
    """The six endpoint maps in the catalog."""

    SHIFT_LOG1P = 1       # xi - log(1 + alpha zeta)
    RUNNING_LOG1P = 2     # -log(e^{-xi} + alpha zeta)
    CONSTANT_SHIFT = 3    # xi - z
    REFLECTION = 4        # -xi
    LOG_PLUS = 5          # log(e^{-xi} + 2 x zeta)
    NEG_LOG_PLUS = 6      # -log(e^{xi} + 2 x zeta)


def _always(xi, zeta):
    return np.asarray(zeta, dtype=float) > 0


@dataclass(frozen=True)
class HFamily:
    """A first-variable-invertible map ``h(xi, zeta)`` with its derivative,
    inverse and the predicates for its domain and image.

    All callables accept broadcastable arrays.  ``inverse`` is only
    meaningful where ``in_image`` holds.
    """

    label: str
    eval: Callable
    deriv: Callable
    inverse: Callable
    in_domain: Callable = _always
    in_image: Callable = _always
    kind: HKind | None = None
    params: dict = field(default_factory=dict)

    def __call__(self, xi, zeta):
        return self.eval(xi, zeta)

    def inverse_deriv(self, xi, zeta):
        """Derivative of the inverse, ``1 / h'(h^{-1}(xi))``."""
        return 1.0 / self.deriv(self.inverse(xi, zeta), zeta)


def builtin_h(kind, alpha: float = 1.0, x: float = 0.25, z: float = 0.5) -> HFamily:
    """One of the six catalog maps.

    Parameters
    ----------
    kind : HKind or int
        Which map.  ``alpha`` is used by kinds 1-2, ``x`` by kinds 5-6 and
        ``z`` by kind 3.
    alpha, x : float
        Nonnegative parameters.
    z : float
        Real shift.
    """
    try:
        kind = HKind(kind)
    except ValueError:
        raise DomainError(f"unknown h kind {kind!r}") from None
    if alpha < 0 or x < 0:
        raise DomainError("alpha and x must be nonnegative")
    a, xx, zz = float(alpha), float(x), float(z)
    e, log = np.exp, np.log

    if kind is HKind.SHIFT_LOG1P:
        return HFamily(
            f"xi - log(1 + {a:g} zeta)",
            eval=lambda xi, zeta: xi - np.log1p(a * zeta),
            deriv=lambda xi, zeta: np.ones(np.broadcast(xi, zeta).shape),
            inverse=lambda xi, zeta: xi + np.log1p(a * zeta),
            kind=kind, params={"alpha": a},
        )
    if kind is HKind.RUNNING_LOG1P:
        return HFamily(
            f"-log(e^-xi + {a:g} zeta)",
            eval=lambda xi, zeta: xi - np.log1p(a * e(xi) * zeta),
            deriv=lambda xi, zeta: 1.0 / (1.0 + a * e(xi) * zeta),
            inverse=lambda xi, zeta: xi - log(1.0 - a * e(xi) * zeta),
            in_image=lambda xi, zeta: (np.asarray(zeta) > 0) & (a * e(xi) * zeta < 1.0),
            kind=kind, params={"alpha": a},
        )
    if kind is HKind.CONSTANT_SHIFT:
        return HFamily(
            f"xi - {zz:g}",
            eval=lambda xi, zeta: np.asarray(xi, dtype=float) - zz + 0.0 * np.asarray(zeta),
            deriv=lambda xi, zeta: np.ones(np.broadcast(xi, zeta).shape),
            inverse=lambda xi, zeta: np.asarray(xi, dtype=float) + zz + 0.0 * np.asarray(zeta),
            kind=kind, params={"z": zz},
        )
    if kind is HKind.REFLECTION:
        return HFamily(
            "-xi",
            eval=lambda xi, zeta: -np.asarray(xi, dtype=float) + 0.0 * np.asarray(zeta),
            deriv=lambda xi, zeta: -np.ones(np.broadcast(xi, zeta).shape),
            inverse=lambda xi, zeta: -np.asarray(xi, dtype=float) + 0.0 * np.asarray(zeta),
            kind=kind,
        )
    if kind is HKind.LOG_PLUS:
        return HFamily(
            f"log(e^-xi + {2 * xx:g} zeta)",
            eval=lambda xi, zeta: log(e(-xi) + 2.0 * xx * zeta),
            deriv=lambda xi, zeta: -1.0 / (1.0 + 2.0 * xx * e(xi) * zeta),
            inverse=lambda xi, zeta: -log(e(xi) - 2.0 * xx * zeta),
            in_image=lambda xi, zeta: (np.asarray(zeta) > 0) & (2.0 * xx * zeta < e(xi)),
            kind=kind, params={"x": xx},
        )
    # NEG_LOG_PLUS
    return HFamily(
        f"-log(e^xi + {2 * xx:g} zeta)",
        eval=lambda xi, zeta: -log(e(xi) + 2.0 * xx * zeta),
        deriv=lambda xi, zeta: -1.0 / (1.0 + 2.0 * xx * e(-xi) * zeta),
        inverse=lambda xi, zeta: log(e(-xi) - 2.0 * xx * zeta),
        in_image=lambda xi, zeta: (np.asarray(zeta) > 0) & (2.0 * xx * zeta < e(-xi)),
        kind=kind, params={"x": xx},
    )


def log_girsanov_density(h: HFamily, xi, zeta):
    """``(cosh xi - cosh h(xi, zeta)) / zeta + log|h'(xi, zeta)|``."""
    return cosh_diff(xi, h.eval(xi, zeta)) / zeta + np.log(np.abs(h.deriv(xi, zeta)))


def girsanov_density(h: HFamily, xi, zeta):
    """Change-of-measure density of ``h`` at ``(xi, zeta)``, one exponential.

    Raises
    ------
    DomainError
        ``(xi, zeta)`` is outside the domain of ``h``.
    RangeError
        The exponent exceeds the floating range.
    """
    if not np.all(h.in_domain(xi, zeta)):
        raise DomainError(f"({xi!r}, {zeta!r}) is outside the domain of {h.label}")
    lg = log_girsanov_density(h, xi, zeta)
    if np.any(lg > _EXP_MAX):
        raise RangeError(f"density exponent {np.max(lg):.4g} overflows at ({xi!r}, {zeta!r})")
    out = np.exp(lg)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# weights


@dataclass(frozen=True)
class WeightLambda:
    """Positive weight ``Lambda(xi, zeta)`` given through its logarithm.

    ``log_eval`` must broadcast over array arguments.  ``even`` records that
    ``Lambda(., zeta)`` is even, in which case the balance map is ``-xi``.
    """

    label: str
    log_eval: Callable
    t: float = 1.0
    params: dict = field(default_factory=dict)
    even: bool = False

    def eval(self, xi, zeta):
        return np.exp(self.log_eval(xi, zeta))


def lambda_one(t: float = 1.0) -> WeightLambda:
    return WeightLambda("1", lambda x, zeta: np.zeros(np.broadcast(x, zeta).shape), t, {}, True)


def lambda_cameron_martin(mu: float, t: float = 1.0) -> WeightLambda:
    """``exp(mu xi - mu^2 t / 2)``: the density of Brownian motion with drift ``mu``."""
    mu = float(mu)
    c = 0.5 * mu * mu * t
    return WeightLambda(
        f"exp({mu:g} xi - {c:g})",
        lambda x, zeta: mu * np.asarray(x, dtype=float) - c + 0.0 * np.asarray(zeta),
        t, {"mu": mu}, mu == 0.0,
    )


def lambda_cosh(mu: float, t: float = 1.0) -> WeightLambda:
    """``cosh(mu xi) exp(-mu^2 t / 2)``; even in ``xi``."""
    mu = float(mu)
    c = 0.5 * mu * mu * t

    def log_eval(x, zeta):
        ax = np.abs(mu * np.asarray(x, dtype=float))
        return ax + np.log1p(np.exp(-2.0 * ax)) - math.log(2.0) - c + 0.0 * np.asarray(zeta)

    return WeightLambda(f"cosh({mu:g} xi) exp(-{c:g})", log_eval, t, {"mu": mu}, True)


def lambda_bessel(lam: float, mu: float, t: float = 1.0) -> WeightLambda:
    """``K_mu(lam e^xi) / K_mu(lam) * exp(-lam^2 e^xi zeta / 2 - mu^2 t / 2)``."""
    lam, mu = float(lam), float(mu)
    if lam <= 0:
        raise DomainError("lambda must be positive")
    table = log_bessel_table(abs(mu))
    log_lam = math.log(lam)
    const = -bessel_k_log(abs(mu), lam) - 0.5 * mu * mu * t

    def log_eval(x, zeta):
        x = np.asarray(x, dtype=float)
        return table(log_lam + x) - 0.5 * lam * lam * np.exp(x) * zeta + const

    return WeightLambda(f"Bessel(lambda={lam:g}, mu={mu:g})", log_eval, t,
                        {"lam": lam, "mu": mu})


def lambda_quadratic_variation(t: float = 1.0) -> WeightLambda:
    """``2 e^xi zeta / (e^{2t} - 1)``, i.e. ``2 A_t / (e^{2t} - 1)`` along a path."""
    c = math.log(2.0) - math.log(math.expm1(2.0 * t))
    return WeightLambda(
        "2 e^xi zeta / (e^2t - 1)",
        lambda x, zeta: np.asarray(x, dtype=float) + np.log(zeta) + c,
        t, {},
    )


def bundled_lambdas(t: float = 1.0, mu: float = 0.5, lam: float = 1.0,
                    bessel_mu: float = 0.75) -> list[WeightLambda]:
    """The five weights shipped with the package."""
    return [
        lambda_one(t),
        lambda_cameron_martin(mu, t),
        lambda_cosh(1.0, t),
        lambda_bessel(lam, bessel_mu, t),
        lambda_quadratic_variation(t),
    ]


# ---------------------------------------------------------------------------
# balance solver


@dataclass(frozen=True)
class HLambdaSolver:
    """Configuration of the balance solver.

    Attributes
    ----------
    c0 : float
        Window edges sit where the log-integrand ``log Lambda - cosh(x)/zeta``
        has dropped ``c0`` below its peak.
    tol_q : float
        Relative tolerance of the window mass (panel doubling stops here).
    tol_r : float
        Absolute tolerance of the root in ``xi`` units.
    secant_width : float
        Bracket width below which the scalar root finder takes secant steps.
    batch_panels, batch_order : int
        Gauss-Legendre panel layout of the vectorized route.
    batch_min_share : float
        Rows whose target mass is a smaller share of the window mass than
        this are handed to the scalar route.
    """

    c0: float = 60.0
    tol_q: float = 1e-12
    tol_r: float = 1e-10
    min_panels: int = 64
    max_panels: int = 1 << 16
    secant_width: float = 1e-3
    batch_panels: int = 96
    batch_order: int = 8
    batch_chunk: int = 4096
    batch_min_share: float = 1e-12

    def half_width(self, zeta, xi_ref: float = 0.0):
        """``arccosh(c0 zeta + cosh xi_ref)``: where ``exp(-cosh x / zeta)``
        is ``e^{-c0}`` below its value at ``xi_ref``."""
        return np.arccosh(self.c0 * np.asarray(zeta, dtype=float) + np.cosh(xi_ref))

    # -- scalar route --------------------------------------------------------

    def _log_integrand(self, lam, zeta):
        def g(x):
            with np.errstate(over="ignore"):
                lv = np.asarray(lam.log_eval(x, zeta), dtype=float)
                out = lv - np.cosh(x) / zeta
            if np.any(np.isnan(lv)) or np.any(lv == np.inf):
                raise DomainError(f"non-finite weight {lam.label} at zeta = {zeta!r}")
            return out
        return g

    def window(self, lam: WeightLambda, zeta: float, xi: float | None = None):
        """Integration window ``(a, b, peak)`` for one ``zeta``.

        Starts from ``[-half_width, half_width]`` and pushes each edge outward
        until the log-integrand there is ``c0`` below the running peak.  If
        ``xi`` is given the window is widened to hold it with the same margin.
        """
        g = self._log_integrand(lam, zeta)
        X0 = float(self.half_width(zeta))
        a, b = -X0, X0
        for _ in range(64):
            xs = np.linspace(a, b, 257)
            gs = g(xs)
            k = int(np.argmax(gs))
            peak, c = float(gs[k]), float(xs[k])
            if peak == -np.inf:
                raise SolverError(
                    f"integrand of {lam.label} underflows on the whole window at zeta = {zeta:.4g};"
                    " widen the window (c0) or rescale the weight"
                )
            moved = False
            if g(b) > peak - self.c0:
                b, moved = c + 2.0 * (b - c) + 1.0, True
            if g(a) > peak - self.c0:
                a, moved = c - 2.0 * (c - a) - 1.0, True
            if not moved:
                break
        else:
            raise SolverError(f"window for {lam.label} did not close at zeta = {zeta:.4g}")
        if xi is not None:
            level = min(float(g(xi)), peak) - self.c0
            step = max(b - a, 1.0)
            while b <= xi or g(b) > level:
                b = max(b, xi) + step
            while a >= xi or g(a) > level:
                a = min(a, xi) - step
        return a, b, peak

    def solve(self, lam: WeightLambda, xi: float, zeta: float) -> float:
        """Scalar reference route for ``h_Lambda(xi, zeta)``.

        The balance condition ``L(h) = R(xi)`` is equivalent to
        ``R(h) = L(xi)``.  The solver always works with whichever of the two
        is the smaller mass, mirroring the problem through ``x -> -x`` when
        ``xi`` lies left of the median, so a difference of two nearly equal
        masses is never formed.  Masses are carried as logarithms, each
        normalized by its own maximum, so targets far below the peak of the
        integrand keep full relative precision.
        """
        xi, zeta = float(xi), float(zeta)
        if not (math.isfinite(xi) and math.isfinite(zeta) and zeta > 0):
            raise DomainError(f"need finite xi and zeta > 0, got ({xi!r}, {zeta!r})")
        a, b, peak = self.window(lam, zeta, xi)
        g = self._log_integrand(lam, zeta)

        def f(x):
            return np.exp(g(x) - peak)

        try:
            x, y, W = simpson_doubling(f, a, b, self.tol_q, self.min_panels, self.max_panels)
        except ConvergenceError as exc:
            raise SolverError(str(exc)) from None
        if not W > 0:
            raise SolverError(f"zero mass for {lam.label} at zeta = {zeta:.4g}")
        k = min(int(np.searchsorted(x, xi)), x.size - 1)
        right_est = (x[1] - x[0]) * float(np.sum(y[k:]))
        if right_est <= 0.5 * W:
            return self._balance_left(g, a, b, xi)

        def g_mirror(u):
            return g(-np.asarray(u))

        return -self._balance_left(g_mirror, -b, -a, -xi)

    def _log_mass(self, g, lo: float, hi: float) -> float:
        """``log`` of the integral of ``exp(g)`` over ``[lo, hi]``.

        The interval is first trimmed to where ``g`` is within ``c0`` of its
        maximum there (one-sided masses can live in a layer much thinner than
        the window when ``zeta`` is small), then integrated with Simpson panel
        doubling relative to that maximum.
        """
        if not hi > lo:
            return -math.inf
        samples = 1025
        for _ in range(8):
            xs = np.linspace(lo, hi, samples)
            with np.errstate(over="ignore"):
                gs = g(xs)
            top = float(np.max(gs))
            if top == -math.inf:
                return -math.inf
            keep = np.flatnonzero(gs >= top - self.c0)
            i0, i1 = max(keep[0] - 1, 0), min(keep[-1] + 1, samples - 1)
            if i1 - i0 >= samples // 4:
                break
            lo, hi = float(xs[i0]), float(xs[i1])

        def f(u):
            return np.exp(g(u) - top)

        # g itself carries rounding of order eps * |g|; where |g| is large the
        # requested tolerance is unreachable and is relaxed to that floor.
        rtol = max(self.tol_q, 16.0 * np.finfo(float).eps * float(np.max(np.abs(gs[keep]))))
        try:
            mass = simpson_doubling(f, lo, hi, rtol, self.min_panels, self.max_panels)[2]
        except ConvergenceError as exc:
            raise SolverError(str(exc)) from None
        return top + math.log(mass) if mass > 0 else -math.inf

    def _balance_left(self, g, a, b, xi) -> float:
        """Root ``h`` of ``L(h) = R(xi)`` when ``R(xi)`` is at most half the mass.

        Solved as ``log L(h) - log R(xi) = 0``, which is increasing in ``h``
        and well scaled however deep in a tail the target sits.
        """
        log_target = self._log_mass(g, xi, b)
        if log_target == -math.inf:
            raise SolverError(f"mass beyond xi = {xi!r} underflows")
        # the left tail must reach c0 e-folds below the target, not the peak
        step = max(b - a, 1.0)
        for _ in range(64):
            if float(g(a)) <= log_target - self.c0:
                break
            a -= step
            step *= 2.0
        else:
            raise SolverError(f"left tail does not fall below the target at xi = {xi!r}")

        def F(yv):
            return self._log_mass(g, a, yv) - log_target

        fhi = F(b)
        if not fhi > 0:
            return b
        try:
            return bisect_secant(F, a, b, self.tol_r, self.secant_width, -math.inf, fhi)
        except ConvergenceError as exc:
            raise SolverError(str(exc)) from None

    # -- vectorized route ----------------------------------------------------

    def _batch_window(self, lam, xi, zeta):
        """Vectorized version of :meth:`window` for many ``zeta`` at once."""
        m = zeta.size
        X0 = self.half_width(zeta)
        a, b = -X0.copy(), X0.copy()
        zc = zeta[:, None]
        u = np.linspace(0.0, 1.0, 129)

        def g(xv, zz):
            with np.errstate(over="ignore"):
                return lam.log_eval(xv, zz) - np.cosh(xv) / zz

        active = np.ones(m, dtype=bool)
        peak = np.empty(m)
        c = np.empty(m)
        for _ in range(64):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            xs = a[idx, None] + (b - a)[idx, None] * u
            gs = g(xs, zc[idx])
            k = np.argmax(gs, axis=1)
            peak[idx] = gs[np.arange(idx.size), k]
            c[idx] = xs[np.arange(idx.size), k]
            if np.any(peak[idx] == -np.inf):
                bad = idx[peak[idx] == -np.inf][0]
                raise SolverError(
                    f"integrand of {lam.label} underflows on the whole window at zeta = {zeta[bad]:.4g}"
                )
            gb = g(b[idx], zeta[idx])
            ga = g(a[idx], zeta[idx])
            mv_b = gb > peak[idx] - self.c0
            mv_a = ga > peak[idx] - self.c0
            ib, ia = idx[mv_b], idx[mv_a]
            b[ib] = c[ib] + 2.0 * (b[ib] - c[ib]) + 1.0
            a[ia] = c[ia] - 2.0 * (c[ia] - a[ia]) - 1.0
            active[:] = False
            active[ib] = True
            active[ia] = True
        else:
            raise SolverError(f"window for {lam.label} did not close")
        # the query point must lie inside, with a little room on its far side
        pad = 0.05 * (b - a)
        b = np.maximum(b, xi + pad)
        a = np.minimum(a, xi - pad)
        return a, b, peak

    def _solve_oriented(self, lam, xi, zeta):
        """Batch balance solve on one Gauss-Legendre panel layout.

        Returns ``(h, target_share, q)``: the root, ``R(xi)`` as a share of
        the window mass and the panel holding the root.  The caller decides
        which rows are trustworthy.
        """
        M, k = self.batch_panels, self.batch_order
        gx, gw = gauss_legendre(k)
        a, b, peak = self._batch_window(lam, xi, zeta)
        w = (b - a) / M
        zc = zeta[:, None]

        def f(xv, zz, pk):
            with np.errstate(over="ignore", under="ignore"):
                return np.exp(lam.log_eval(xv, zz) - np.cosh(xv) / zz - pk)

        # panel masses
        starts = a[:, None] + w[:, None] * np.arange(M)
        nodes = starts[:, :, None] + w[:, None, None] * gx
        vals = f(nodes, zeta[:, None, None], peak[:, None, None])
        if np.any(~np.isfinite(vals)):
            raise DomainError(f"non-finite weight {lam.label} inside the solver window")
        P = w[:, None] * (vals @ gw)
        L = np.concatenate((np.zeros((xi.size, 1)), np.cumsum(P, axis=1)), axis=1)
        R = np.concatenate((np.cumsum(P[:, ::-1], axis=1)[:, ::-1], np.zeros((xi.size, 1))), axis=1)
        rows = np.arange(xi.size)

        def partial(lo, hi, idx=slice(None)):
            xs = lo[:, None] + (hi - lo)[:, None] * gx
            return (hi - lo) * (f(xs, zc[idx], peak[idx, None]) @ gw)

        p = np.clip(np.floor((xi - a) / w).astype(int), 0, M - 1)
        right_edge = a + w * (p + 1)
        target = R[rows, p + 1] + partial(xi, right_edge)

        q = np.clip((L[:, 1:] < target[:, None]).sum(axis=1), 0, M - 1)
        lo = a + w * q
        hi = lo + w
        base = L[rows, q]
        tau = target - base
        Pq = P[rows, q]
        y = lo + w * np.clip(tau / np.where(Pq > 0, Pq, 1.0), 0.0, 1.0)
        panel_lo = a + w * q
        # rows stop as soon as they converge; iterating a converged row only
        # feeds rounding noise in F / f back into the bracket
        act = np.arange(xi.size)
        for _ in range(60):
            ya = y[act]
            F = partial(panel_lo[act], ya, act) - tau[act]
            fy = f(ya, zeta[act], peak[act])
            neg = F < 0
            lo[act] = np.where(neg, ya, lo[act])
            hi[act] = np.where(neg, hi[act], ya)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = F / fy
            y_new = ya - step
            bad = ~np.isfinite(y_new) | (y_new <= lo[act]) | (y_new >= hi[act])
            y_new = np.where(bad, 0.5 * (lo[act] + hi[act]), y_new)
            done = (np.abs(y_new - ya) <= 1e-3 * self.tol_r) | (hi[act] - lo[act] <= 1e-3 * self.tol_r)
            y[act] = y_new
            act = act[~done]
            if act.size == 0:
                break
        else:
            # left for the scalar route by the caller
            y[act] = np.nan
        return y, target / L[:, -1], q

    def _solve_chunk(self, lam, xi, zeta):
        y, share, q = self._solve_oriented(lam, xi, zeta)
        # Where the mass right of xi is the larger one, solve the mirrored
        # problem instead so the small side is always the one matched.
        flip = share > 0.5
        if np.any(flip):
            mirrored = WeightLambda(lam.label, lambda x, zz: lam.log_eval(-x, zz), lam.t)
            ym, sm, qm = self._solve_oriented(mirrored, -xi[flip], zeta[flip])
            y[flip], share[flip], q[flip] = -ym, sm, qm
        # Targets deep in a tail, or roots in the outermost panel, are beyond
        # what a fixed panel layout resolves; those rows use the scalar route.
        hard = np.flatnonzero((share < self.batch_min_share) | (q == 0) | ~np.isfinite(y))
        for r in hard:
            y[r] = self.solve(lam, xi[r], zeta[r])
        return y

    def solve_batch(self, lam: WeightLambda, xi, zeta) -> np.ndarray:
        """Vectorized route for ``h_Lambda`` at many ``(xi, zeta)`` pairs."""
        xi = np.asarray(xi, dtype=float)
        zeta = np.asarray(zeta, dtype=float)
        xi, zeta = np.broadcast_arrays(xi, zeta)
        shape = xi.shape
        xi, zeta = xi.ravel(), zeta.ravel()
        if np.any(~np.isfinite(xi)) or np.any(~(zeta > 0)) or np.any(~np.isfinite(zeta)):
            raise DomainError("need finite xi and zeta > 0")
        out = np.empty(xi.size)
        for s in range(0, xi.size, self.batch_chunk):
            sl = slice(s, s + self.batch_chunk)
            out[sl] = self._solve_chunk(lam, xi[sl], zeta[sl])
        return out.reshape(shape)


_DEFAULT_SOLVER = HLambdaSolver()


def solve_h_lambda(lam: WeightLambda, xi: float, zeta: float,
                   solver: HLambdaSolver | None = None) -> float:
    """Balance point ``h`` with equal ``Lambda``-weighted mass of
    ``exp(-cosh(x)/zeta)`` on ``(-inf, h)`` and on ``(xi, inf)``.

    ``h`` is strictly decreasing in ``xi`` and the map is its own inverse.
    """
    return (solver or _DEFAULT_SOLVER).solve(lam, xi, zeta)


def solve_h_lambda_batch(lam: WeightLambda, xi, zeta,
                         solver: HLambdaSolver | None = None) -> np.ndarray:
    return (solver or _DEFAULT_SOLVER).solve_batch(lam, xi, zeta)


def _tilt(mu: float) -> WeightLambda:
    # the factor exp(-mu^2 t / 2) does not depend on xi and drops out
    return lambda_cameron_martin(mu, t=0.0) if mu else lambda_one()


def k_mu(mu: float, xi: float, zeta: float, solver: HLambdaSolver | None = None) -> float:
    """Balance point for the tilt ``e^{mu x}``; ``-k_{-mu}(xi) = k_mu(-xi)``."""
    return solve_h_lambda(_tilt(float(mu)), xi, zeta, solver)


def k_mu_batch(mu: float, xi, zeta, solver: HLambdaSolver | None = None) -> np.ndarray:
    return solve_h_lambda_batch(_tilt(float(mu)), xi, zeta, solver)


def check_integrability(lam: WeightLambda, zeta: float, solver: HLambdaSolver | None = None,
                        rtol: float = 1e-10) -> bool:
    """Window mass is stable when the truncation margin grows by 50%."""
    solver = solver or _DEFAULT_SOLVER
    masses = []
    for c0 in (solver.c0, 1.5 * solver.c0):
        s = HLambdaSolver(c0=c0, tol_q=solver.tol_q)
        a, b, peak = s.window(lam, zeta)
        g = s._log_integrand(lam, zeta)
        _, _, W = simpson_doubling(lambda x: np.exp(g(x) - peak), a, b, s.tol_q, s.min_panels,
                                   s.max_panels)
        masses.append(math.log(W) + peak)
    return abs(masses[1] - masses[0]) <= rtol


def conditional_expectation_batch(f, zeta, solver: HLambdaSolver | None = None) -> np.ndarray:
    """``int f(xi) p(xi | zeta) dxi`` for each entry of ``zeta``, where ``p`` is
    the conditional density of the endpoint given the terminal ratio.

    Uses the Gauss-Legendre panel layout of the batch solver on the window of
    ``exp(-cosh(x)/zeta)``.  The density is normalized by ``2 K_0(1/zeta)``
    from :mod:`tzgirsanov.specfun`, not by the quadrature itself, so the
    result tests that normalization too.  ``f`` must accept arrays.
    """
    solver = solver or _DEFAULT_SOLVER
    zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
    if np.any(~(zeta > 0)) or np.any(~np.isfinite(zeta)):
        raise DomainError("zeta must be finite and positive")
    M, k = solver.batch_panels, solver.batch_order
    gx, gw = gauss_legendre(k)
    out = np.empty(zeta.size)
    one = lambda_one()
    for s in range(0, zeta.size, solver.batch_chunk):
        z = zeta[s:s + solver.batch_chunk]
        a, b, _ = solver._batch_window(one, np.zeros(z.size), z)
        w = (b - a) / M
        nodes = (a[:, None] + w[:, None] * np.arange(M))[:, :, None] + w[:, None, None] * gx
        dens = np.exp(log_conditional_density(nodes, z[:, None, None]))
        vals = np.asarray(f(nodes), dtype=float) * dens
        out[s:s + z.size] = w * (vals @ gw).sum(axis=1)
    return out
