"""Deterministic checks: transform algebra, quadrature order, the balance
solver, special functions and involutions.

Every check returns :class:`CheckResult` records holding the measured value,
the tolerance it is held to and the wall time.  :func:`run_deterministic_suite`
runs them all; the command line exposes it as ``verify --suite deterministic``.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .paths import Path, ProfileMode, TimeGrid, exp_functional_A, time_reverse
from .specfun import bessel_k, conditional_density
from .stochastic import RngSpec, sample_bm
from .transforms import apply_C, apply_C_Lambda, apply_S_mu, apply_tz, composition_check
from .weights import (
    HKind,
    builtin_h,
    bundled_lambdas,
    k_mu,
    lambda_cameron_martin,
    lambda_one,
    solve_h_lambda,
)

__all__ = [
    "CheckResult",
    "DeterministicReport",
    "check_transform_algebra",
    "check_quadrature_convergence",
    "check_balance_solver",
    "check_special_functions",
    "check_involutions",
    "check_compositions",
    "check_h_catalog",
    "run_deterministic_suite",
]

SHIFTS = (-1.5, -0.3, 0.3, 1.5)


@dataclass
class CheckResult:
    """One measured defect against its tolerance.

    ``group`` names the family of checks the record belongs to; ``lower``
    is set for checks that bound a value from both sides (a convergence
    ratio, for instance).
    """

    name: str
    group: str
    value: float
    tolerance: float
    passed: bool
    wall_time: float = 0.0
    lower: float | None = None
    detail: str = ""

    def line(self) -> str:
        bound = (f"in [{self.lower:g}, {self.tolerance:g}]" if self.lower is not None
                 else f"<= {self.tolerance:.1e}")
        return (f"{'PASS' if self.passed else 'FAIL'}  {self.group:<18s} {self.name:<44s} "
                f"{self.value:.3e} {bound}  ({self.wall_time:.2f} s)")


def _upper(name, group, value, tol, t0, detail="") -> CheckResult:
    value = float(value)
    return CheckResult(name, group, value, tol, bool(value <= tol),
                       time.perf_counter() - t0, None, detail)


@dataclass
class DeterministicReport:
    results: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def group_passed(self, group: str) -> bool:
        rs = [r for r in self.results if r.group == group]
        return bool(rs) and all(r.passed for r in rs)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "wall_time": self.wall_time,
                "results": [asdict(r) for r in self.results]}

    def table(self) -> str:
        lines = [r.line() for r in self.results]
        lines.append(f"deterministic suite: {'PASS' if self.passed else 'FAIL'} "
                     f"({sum(r.passed for r in self.results)}/{len(self.results)} checks, "
                     f"{self.wall_time:.1f} s)")
        return "\n".join(lines)


def _bm_paths(n_paths: int, grid: TimeGrid, seed: int) -> list[Path]:
    rng = RngSpec(seed)
    return [sample_bm(grid, rng, i) for i in range(n_paths)]


# ---------------------------------------------------------------------------
# transform algebra


def check_transform_algebra(n_paths: int = 100, n_steps: int = 512, t: float = 1.0,
                            seed: int = 42, shifts=SHIFTS, tol: float = 1e-10) -> list[CheckResult]:
    """Group law of ``T_z`` on Brownian paths with induced profiles.

    Semigroup and inverse defects are max node errors over all paths and
    all shift pairs.  The endpoint check compares ``T_z(B)_t`` with
    ``B_t - z``; the scaling check compares ``A_t`` with ``e^{-z} A_t``
    (relative).  Ratio preservation recomputes ``e^{-phi} A`` from the output
    path and induced ``A`` and compares it with the input ``Z`` (relative).
    Time reversal is checked with quadrature profiles, where the trapezoid
    rule is additive over intervals and the identity is exact at the nodes.
    """
    t0 = time.perf_counter()
    grid = TimeGrid(t, n_steps)
    paths = _bm_paths(n_paths, grid, seed)
    semi = inv = endpoint = scaling = ratio = reverse = 0.0
    for path in paths:
        prof = exp_functional_A(path)
        for z in shifts:
            out, oprof = apply_tz(path, prof, z)
            endpoint = max(endpoint, abs(out.endpoint - (path.endpoint - z)))
            scaling = max(scaling, abs(oprof.A_end / (math.exp(-z) * prof.A_end) - 1.0))
            Zre = np.exp(-out.values[1:]) * oprof.A[1:]
            ratio = max(ratio, float(np.max(np.abs(Zre / prof.Z[1:] - 1.0))))
            back, _ = apply_tz(out, oprof, -z)
            inv = max(inv, float(np.max(np.abs(back.values - path.values))))
            for z2 in shifts:
                two, _ = apply_tz(out, oprof, z2)
                one, _ = apply_tz(path, prof, z + z2)
                semi = max(semi, float(np.max(np.abs(two.values - one.values))))
            lhs = time_reverse(apply_tz(path, prof, z, ProfileMode.QUADRATURE)[0])
            rpath = time_reverse(path)
            rhs, _ = apply_tz(rpath, exp_functional_A(rpath), -z, ProfileMode.QUADRATURE)
            reverse = max(reverse, float(np.max(np.abs(lhs.values - rhs.values))))
    g = "transform-algebra"
    d = f"{n_paths} paths, n = {n_steps}, z in {list(shifts)}"
    return [
        _upper("semigroup T_z T_z' = T_{z+z'}", g, semi, tol, t0, d),
        _upper("inverse T_{-z} T_z = id", g, inv, tol, t0, d),
        _upper("endpoint T_z(phi)_t = phi_t - z", g, endpoint, tol, t0, d),
        _upper("scaling A_t(T_z phi) = e^-z A_t (relative)", g, scaling, tol, t0, d),
        _upper("ratio process preserved (relative)", g, ratio, tol, t0, d),
        _upper("time reversal, quadrature profiles", g, reverse, tol, t0, d),
    ]


def smooth_test_paths(n_paths: int, n_steps: int, t: float = 1.0, seed: int = 42) -> list[Path]:
    """Random trigonometric paths ``b s + sum_j a_j sin(j pi s / t) / j``.

    Coefficients depend only on ``seed``, so the same paths can be sampled
    on grids of different resolution.
    """
    gen = np.random.default_rng(seed)
    coef = gen.normal(size=(n_paths, 5))
    grid = TimeGrid(t, n_steps)
    s = grid.nodes / t
    j = np.arange(1, 5)
    out = []
    for c in coef:
        vals = c[0] * s + (c[1:, None] * np.sin(np.pi * j[:, None] * s) / j[:, None]).sum(axis=0)
        out.append(Path(grid, vals))
    return out


def quadrature_semigroup_defect(path: Path, z: float = 0.3, z2: float = -1.5) -> float:
    """Max node gap between ``T_{z2}(T_z(phi))`` and ``T_{z + z2}(phi)`` when
    every profile is recomputed by the trapezoid rule."""
    prof = exp_functional_A(path)
    mid, mprof = apply_tz(path, prof, z, ProfileMode.QUADRATURE)
    two, _ = apply_tz(mid, mprof, z2, ProfileMode.QUADRATURE)
    one, _ = apply_tz(path, prof, z + z2, ProfileMode.QUADRATURE)
    return float(np.max(np.abs(two.values - one.values)))


def check_quadrature_convergence(n_paths: int = 20, seed: int = 42, coarse: int = 256,
                                 lower: float = 3.0, upper: float = 5.0) -> CheckResult:
    """Median ratio of quadrature-mode semigroup defects at ``coarse`` and
    ``2 coarse`` steps; second-order quadrature puts it near 4."""
    t0 = time.perf_counter()
    d1 = [quadrature_semigroup_defect(p) for p in smooth_test_paths(n_paths, coarse, seed=seed)]
    d2 = [quadrature_semigroup_defect(p) for p in smooth_test_paths(n_paths, 2 * coarse, seed=seed)]
    ratio = float(np.median(np.array(d1) / np.array(d2)))
    return CheckResult(f"semigroup defect ratio n = {coarse} -> {2 * coarse}", "quadrature-order",
                       ratio, upper, bool(lower <= ratio <= upper), time.perf_counter() - t0,
                       lower, f"median over {n_paths} smooth paths")


# ---------------------------------------------------------------------------
# solver


PROBE_XI = tuple(np.linspace(-3.0, 3.0, 20))
PROBE_ZETA = (0.1, 0.5, 1.0, 2.0, 5.0)


def check_balance_solver(tol: float = 1e-8, mus=(-1.0, -0.5, 0.5, 1.0)) -> list[CheckResult]:
    """Balance solver on the 20 x 5 probe grid of ``(xi, zeta)``.

    Constant weight must give ``-xi``; the tilt ``e^{mu x}`` must give a
    self-inverse map; and ``-k_{-mu}(xi) = k_mu(-xi)``.
    """
    g = "balance-solver"
    out = []
    t0 = time.perf_counter()
    one = lambda_one()
    flat = max(abs(solve_h_lambda(one, xi, zeta) + xi) for xi in PROBE_XI for zeta in PROBE_ZETA)
    out.append(_upper("constant weight: h(xi) = -xi", g, flat, tol, t0))
    t0 = time.perf_counter()
    selfinv = 0.0
    for mu in mus:
        lam = lambda_cameron_martin(mu)
        for xi in PROBE_XI:
            for zeta in PROBE_ZETA:
                h = solve_h_lambda(lam, xi, zeta)
                selfinv = max(selfinv, abs(solve_h_lambda(lam, h, zeta) - xi))
    out.append(_upper("tilt e^{mu x}: h(h(xi)) = xi", g, selfinv, tol, t0, f"mu in {list(mus)}"))
    t0 = time.perf_counter()
    anti = 0.0
    for mu in (m for m in mus if m > 0):
        for xi in PROBE_XI:
            for zeta in PROBE_ZETA:
                anti = max(anti, abs(-k_mu(-mu, xi, zeta) - k_mu(mu, -xi, zeta)))
    out.append(_upper("antisymmetry -k_{-mu}(xi) = k_mu(-xi)", g, anti, tol, t0))
    return out


# ---------------------------------------------------------------------------
# special functions


def check_special_functions(tol_closed: float = 1e-9, tol_rec: float = 1e-8,
                            tol_norm: float = 1e-8) -> list[CheckResult]:
    """``K_{1/2}`` closed form, the three-term recurrence and the
    normalization of the conditional density."""
    g = "special-functions"
    t0 = time.perf_counter()
    x = np.geomspace(0.1, 50.0, 200)
    closed = np.sqrt(np.pi / (2.0 * x)) * np.exp(-x)
    rel = float(np.max(np.abs(bessel_k(0.5, x) / closed - 1.0)))
    out = [_upper("K_1/2(x) = sqrt(pi/2x) e^-x, x in [0.1, 50]", g, rel, tol_closed, t0)]

    t0 = time.perf_counter()
    nus = np.array([0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.5])
    xs = np.geomspace(0.1, 50.0, 40)
    N, X = np.meshgrid(nus, xs)
    lhs = bessel_k(N + 1.0, X)
    rhs = bessel_k(N - 1.0, X) + 2.0 * N / X * bessel_k(N, X)
    rec = float(np.max(np.abs(lhs - rhs) / lhs))
    out.append(_upper("K_{nu+1} = K_{nu-1} + (2 nu / x) K_nu (relative)", g, rec, tol_rec, t0))

    t0 = time.perf_counter()
    from scipy.integrate import quad

    worst = 0.0
    for zeta in (0.2, 0.5, 1.0, 2.0, 5.0):
        # the density is even; integrate one side with an explicit tail bound
        edge = math.acosh(1.0 + 800.0 * zeta)
        mass, _ = quad(lambda v: conditional_density(v, zeta), 0.0, edge,
                       epsabs=0.0, epsrel=1e-13, limit=400)
        worst = max(worst, abs(2.0 * mass - 1.0))
    out.append(_upper("conditional density integrates to 1", g, worst, tol_norm, t0,
                      "zeta in {0.2, 0.5, 1, 2, 5}"))
    return out


# ---------------------------------------------------------------------------
# involutions


def check_involutions(n_paths: int = 50, n_steps: int = 512, t: float = 1.0, seed: int = 42,
                      tol: float = 1e-8, mus=(0.5, 1.0)) -> list[CheckResult]:
    """``C C``, ``C_Lam C_Lam`` for every bundled weight and ``S_mu S_{-mu}``
    on Brownian paths, induced profiles throughout."""
    g = "involutions"
    grid = TimeGrid(t, n_steps)
    paths = [(p, exp_functional_A(p)) for p in _bm_paths(n_paths, grid, seed)]
    out = []

    t0 = time.perf_counter()
    worst = 0.0
    for p, prof in paths:
        back, _ = apply_C(*apply_C(p, prof))
        worst = max(worst, float(np.max(np.abs(back.values - p.values))))
    out.append(_upper("C(C(phi)) = phi", g, worst, tol, t0))

    for lam in bundled_lambdas(t):
        t0 = time.perf_counter()
        worst = 0.0
        for p, prof in paths:
            back, _ = apply_C_Lambda(*apply_C_Lambda(p, prof, lam), lam)
            worst = max(worst, float(np.max(np.abs(back.values - p.values))))
        out.append(_upper(f"C_Lam(C_Lam(phi)) = phi, Lam = {lam.label}", g, worst, tol, t0))

    for mu in mus:
        t0 = time.perf_counter()
        worst = 0.0
        for p, prof in paths:
            back, _ = apply_S_mu(*apply_S_mu(p, prof, -mu), mu)
            worst = max(worst, float(np.max(np.abs(back.values - p.values))))
        out.append(_upper(f"S_mu(S_-mu(phi)) = phi, mu = {mu:g}", g, worst, tol, t0))
    return out


# ---------------------------------------------------------------------------
# extras


def check_compositions(n_paths: int = 20, alpha: float = 0.5, seed: int = 42,
                       tol: float = 1e-10) -> list[CheckResult]:
    """The two routes of :func:`~tzgirsanov.transforms.composition_check`
    agree on Brownian paths with ``A_t < 1/alpha``, and on the zero path."""
    t0 = time.perf_counter()
    grid = TimeGrid(1.0, 512)
    worst = 0.0
    used = 0
    rng = RngSpec(seed)
    i = 0
    while used < n_paths:
        p = sample_bm(grid, rng, i)
        i += 1
        if not alpha * exp_functional_A(p).A_end < 1.0:
            continue
        worst = max(worst, composition_check(p, alpha).max())
        used += 1
    zero = composition_check(Path(grid, np.zeros(grid.n_steps + 1)), alpha).max()
    g = "compositions"
    return [
        _upper(f"shift/reflect composition rules, alpha = {alpha:g}", g, worst, tol, t0,
               f"{n_paths} Brownian paths with A_t < 1/alpha"),
        _upper("composition rules on the zero path", g, zero, 1e-12, t0),
    ]


def check_h_catalog(tol_inv: float = 1e-10) -> list[CheckResult]:
    """Inverse round trip, derivative against a centered difference and
    image membership for the six endpoint maps."""
    t0 = time.perf_counter()
    xi, zeta = np.meshgrid(np.linspace(-2.5, 2.5, 21), np.array([0.05, 0.3, 1.0, 2.5]))
    inv_err = fd_err = 0.0
    image_ok = True
    for kind in HKind:
        h = builtin_h(kind)
        dom = np.asarray(h.in_domain(xi, zeta), bool)
        y = h.eval(xi, zeta)
        inv_err = max(inv_err, float(np.max(np.abs(h.inverse(y, zeta) - xi)[dom])))
        image_ok &= bool(np.all(np.asarray(h.in_image(y, zeta), bool)[dom]))
        e = 1e-6
        fd = (h.eval(xi + e, zeta) - h.eval(xi - e, zeta)) / (2 * e)
        d = h.deriv(xi, zeta)
        fd_err = max(fd_err, float(np.max((np.abs(fd - d) / np.maximum(1e-6, 1e-4 * np.abs(d)))[dom])))
    g = "h-catalog"
    return [
        _upper("h^-1(h(xi)) = xi", g, inv_err, tol_inv, t0),
        _upper("h' vs centered difference (scaled)", g, fd_err, 1.0, t0,
               "error / max(1e-6, 1e-4 |h'|)"),
        CheckResult("h(D) lies in the image", g, 0.0 if image_ok else 1.0, 0.0, image_ok,
                    time.perf_counter() - t0),
    ]


def run_deterministic_suite(seed: int = 42) -> DeterministicReport:
    """Every deterministic check at its default size."""
    t0 = time.perf_counter()
    results = []
    results += check_transform_algebra(seed=seed)
    results.append(check_quadrature_convergence(seed=seed))
    results += check_balance_solver()
    results += check_special_functions()
    results += check_involutions(seed=seed)
    results += check_compositions(seed=seed)
    results += check_h_catalog()
    return DeterministicReport(results, time.perf_counter() - t0)
