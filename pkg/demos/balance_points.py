"""
Balance points of weighted reflections
======================================

For a weight Lambda(x, zeta) the balance point h(xi) equalizes the
weighted cosh-exponential mass on both sides.  A flat weight gives plain
reflection; an exponential tilt pushes the balance point towards the tilt.
"""

import numpy as np

from tzgirsanov import bundled_lambdas, k_mu, solve_h_lambda_batch

xi = np.linspace(-2.0, 2.0, 5)
zeta = 0.7

print("xi:".ljust(40), "  ".join(f"{v:+8.3f}" for v in xi))
for lam in bundled_lambdas(1.0):
    h = solve_h_lambda_batch(lam, xi, np.full_like(xi, zeta))
    print(f"{lam.label:<40s}", "  ".join(f"{v:+8.4f}" for v in h))

# every balance map is self-inverse: applying it twice gives xi back
for lam in bundled_lambdas(1.0):
    h = solve_h_lambda_batch(lam, xi, zeta)
    hh = solve_h_lambda_batch(lam, h, zeta)
    print(f"self-inverse defect for {lam.label}: {np.max(np.abs(hh - xi)):.1e}")

# the tilted map k_mu is antisymmetric under mu -> -mu, xi -> -xi
print("k_0.5(1, 0.7) =", k_mu(0.5, 1.0, 0.7), "  -k_-0.5(-1, 0.7) =", -k_mu(-0.5, -1.0, 0.7))
