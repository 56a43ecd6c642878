"""The anticipative shift family ``T_z`` and the transforms built from it.

``T_z`` moves the endpoint of a path down by ``z`` while leaving the ratio
process ``Z`` untouched:

.. math::

    T_z(\\phi)(s) = \\phi_s - \\log\\Bigl(1 + \\frac{A_s(\\phi)}{A_t(\\phi)}(e^z - 1)\\Bigr).

Two ways of attaching a profile to the output are provided.  In *induced*
mode the new ``A`` comes from the closed-form reciprocal rule

.. math:: 1/A_s(T_z\\phi) = 1/A_s(\\phi) + (e^z - 1)/A_t(\\phi),

and ``Z`` is copied.  Compositions then obey the group law to roundoff.  In
*quadrature* mode the profile is recomputed from the new path by the
trapezoid rule, which exposes the discretization error.

The array kernels (``tz_values``, ``tz_induced_A``) act on stacks of paths
of shape ``(m, n + 1)`` and are what the Monte Carlo engine calls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .paths import (
    DomainError,
    FunctionalProfile,
    Path,
    ProfileMode,
    exp_functional_A,
)

__all__ = [
    "tz_values",
    "tz_induced_A",
    "apply_tz",
    "apply_C",
    "apply_C_Lambda",
    "apply_S_mu",
    "CompositionDefects",
    "composition_check",
]


def _log_factor(ratio: np.ndarray, z) -> np.ndarray:
    """``log(1 + ratio * (e^z - 1))`` without cancellation for small ``z``."""
    em1 = np.expm1(np.asarray(z, dtype=float))
    arg = ratio * em1
    if np.any(arg <= -1.0):
        # ratio lies in [0, 1], so 1 + ratio*(e^z - 1) >= min(1, e^z) > 0
        raise FloatingPointError("internal numeric fault: T_z log argument is not positive")
    return np.log1p(arg)


def _column(z, ndim: int):
    z = np.asarray(z, dtype=float)
    if z.ndim and ndim > 1:
        return z.reshape(z.shape + (1,))
    return z


def tz_values(values: np.ndarray, A: np.ndarray, z) -> np.ndarray:
    """Node values of ``T_z`` applied to one path or a stack of paths.

    ``z`` is a scalar or one shift per path.
    """
    values = np.asarray(values, dtype=float)
    A = np.asarray(A, dtype=float)
    ratio = A / A[..., -1:]
    return values - _log_factor(ratio, _column(z, values.ndim))


def tz_induced_A(A: np.ndarray, z) -> np.ndarray:
    """``A`` of ``T_z(phi)`` from the reciprocal rule; ``A[0] = 0`` is kept."""
    A = np.asarray(A, dtype=float)
    ratio = A / A[..., -1:]
    em1 = _column(z, A.ndim)
    em1 = np.expm1(em1)
    return A / (1.0 + ratio * em1)


def apply_tz(
    path: Path,
    profile: FunctionalProfile,
    z: float,
    mode: ProfileMode = ProfileMode.INDUCED,
) -> tuple[Path, FunctionalProfile]:
    """Apply ``T_z`` and attach a profile to the result.

    Parameters
    ----------
    path, profile
        Input path and its profile (either mode).
    z : float
        Shift.  Any real value.
    mode : ProfileMode
        ``INDUCED`` propagates ``A`` analytically and copies ``Z``;
        ``QUADRATURE`` recomputes both from the output path.
    """
    if not profile.A_end > 0:
        raise DomainError("A_t must be positive")
    out = Path(path.grid, tz_values(path.values, profile.A, z))
    if mode is ProfileMode.QUADRATURE:
        return out, exp_functional_A(out)
    A_new = tz_induced_A(profile.A, z)
    return out, FunctionalProfile(A_new, profile.Z, ProfileMode.INDUCED)


def apply_C(path, profile, mode=ProfileMode.INDUCED):
    """Reflection of the endpoint: ``T_{2 phi_t}``, so the endpoint becomes ``-phi_t``."""
    return apply_tz(path, profile, 2.0 * path.endpoint, mode)


def apply_C_Lambda(path, profile, lam, solver=None, mode=ProfileMode.INDUCED):
    """Weight-balanced reflection ``T_{phi_t - h(phi_t, Z_t)}`` for a weight ``lam``.

    ``h`` is the balance point computed by :func:`tzgirsanov.weights.solve_h_lambda`.
    The output endpoint is ``h(phi_t, Z_t)``.  The map is an involution up
    to the solver tolerance.
    """
    from .weights import HLambdaSolver, solve_h_lambda

    solver = solver or HLambdaSolver()
    xi, zeta = path.endpoint, profile.Z_end
    h = solve_h_lambda(lam, xi, zeta, solver)
    return apply_tz(path, profile, xi - h, mode)


def apply_S_mu(path, profile, mu, solver=None, mode=ProfileMode.INDUCED):
    """``T_{phi_t + k_mu(phi_t, Z_t)}``; ``S_mu`` and ``S_{-mu}`` are mutually inverse."""
    from .weights import HLambdaSolver, k_mu

    solver = solver or HLambdaSolver()
    xi, zeta = path.endpoint, profile.Z_end
    return apply_tz(path, profile, xi + k_mu(mu, xi, zeta, solver), mode)


@dataclass(frozen=True)
class CompositionDefects:
    """Max node defects of the two composition rules checked by
    :func:`composition_check`."""

    alpha: float
    reflect_then_shift: float
    shift_then_reflect: float

    def max(self) -> float:
        return max(self.reflect_then_shift, self.shift_then_reflect)


def composition_check(path: Path, alpha: float) -> CompositionDefects:
    """Compare two routes to the same path for each composition rule.

    (a) ``T_{log(1 + a A_t(C phi))}(C phi)`` against
    ``T_{log(1 + a e^{-2 phi_t} A_t) + 2 phi_t}(phi)``;
    (b) ``C(T_{log(1 - a A_t)}(phi))`` against ``T_{2 phi_t - log(1 - a A_t)}(phi)``,
    which needs ``A_t < 1/a``.

    All compositions use induced profiles.
    """
    if alpha < 0:
        raise DomainError(f"alpha must be >= 0, got {alpha!r}")
    profile = exp_functional_A(path)
    At, xi = profile.A_end, path.endpoint
    if not alpha * At < 1.0:
        raise DomainError(f"need A_t < 1/alpha (A_t = {At:.6g}, alpha = {alpha:.6g})")

    c_path, c_prof = apply_C(path, profile)
    lhs_a, _ = apply_tz(c_path, c_prof, np.log1p(alpha * c_prof.A_end))
    rhs_a, _ = apply_tz(path, profile, np.log1p(alpha * np.exp(-2.0 * xi) * At) + 2.0 * xi)

    s_path, s_prof = apply_tz(path, profile, np.log1p(-alpha * At))
    lhs_b, _ = apply_C(s_path, s_prof)
    rhs_b, _ = apply_tz(path, profile, 2.0 * xi - np.log1p(-alpha * At))

    return CompositionDefects(
        alpha=float(alpha),
        reflect_then_shift=float(np.max(np.abs(lhs_a.values - rhs_a.values))),
        shift_then_reflect=float(np.max(np.abs(lhs_b.values - rhs_b.values))),
    )
