"""Anticipative path transformations of Brownian motion, the balance maps
that build involutions from them, and Monte Carlo checks of the
change-of-measure identities they satisfy.

Modules
-------
paths       grids, paths and the exponential functionals ``A`` and ``Z``
transforms  the shift family ``T_z`` and the transforms ``C``, ``C_Lambda``, ``S_mu``
weights     endpoint maps, weights and the balance solver
specfun     modified Bessel functions ``K_nu`` and the conditional density
stochastic  reproducible Brownian and Euler-Maruyama samplers
verify      paired Monte Carlo estimation of identity defects
checks      deterministic algebra and accuracy checks
cli         command-line front end
"""

__version__ = "0.1.0"

from .paths import (  # noqa: E402
    DomainError,
    FunctionalProfile,
    Path,
    ProfileMode,
    RangeError,
    TimeGrid,
    exp_functional_A,
    path_endpoint_state,
    read_path_csv,
    time_reverse,
    write_path_csv,
)
from .transforms import apply_C, apply_C_Lambda, apply_S_mu, apply_tz, composition_check  # noqa: E402
from .weights import (  # noqa: E402
    HFamily,
    HKind,
    HLambdaSolver,
    SolverError,
    WeightLambda,
    builtin_h,
    bundled_lambdas,
    girsanov_density,
    k_mu,
    solve_h_lambda,
    solve_h_lambda_batch,
)
from .specfun import bessel_k, bessel_k_log, bessel_k_ratio, conditional_density  # noqa: E402
from .stochastic import DriftKind, DriftSpec, RngSpec, euler_maruyama, sample_bm, sample_bm_drift  # noqa: E402

__all__ = [
    "__version__",
    "DomainError", "RangeError", "SolverError",
    "TimeGrid", "Path", "FunctionalProfile", "ProfileMode",
    "exp_functional_A", "time_reverse", "path_endpoint_state", "read_path_csv", "write_path_csv",
    "apply_tz", "apply_C", "apply_C_Lambda", "apply_S_mu", "composition_check",
    "HFamily", "HKind", "WeightLambda", "HLambdaSolver", "builtin_h", "bundled_lambdas",
    "girsanov_density", "solve_h_lambda", "solve_h_lambda_batch", "k_mu",
    "bessel_k", "bessel_k_log", "bessel_k_ratio", "conditional_density",
    "RngSpec", "DriftKind", "DriftSpec", "sample_bm", "sample_bm_drift", "euler_maruyama",
]
