"""
The endpoint given the ratio process
====================================

Given Z_t = zeta, the endpoint of a Brownian path has density
exp(-cosh(xi)/zeta) / (2 K_0(1/zeta)).  Here we bin sampled endpoints by
Z_t and compare the empirical second moment in each bin with the one from
the density.
"""

import numpy as np

from tzgirsanov import TimeGrid
from tzgirsanov.paths import cumulative_trapezoid_exp2
from tzgirsanov.stochastic import RngSpec, bm_from_increments, bm_increments
from tzgirsanov.weights import conditional_expectation_batch

grid = TimeGrid(1.0, 256)
paths = bm_from_increments(bm_increments(RngSpec(42), range(50_000), grid))
A = cumulative_trapezoid_exp2(paths, grid.ds)
xi, zeta = paths[:, -1], np.exp(-paths[:, -1]) * A[:, -1]

edges = np.quantile(zeta, np.linspace(0, 1, 7))
print("  Z_t bin            paths   E[xi^2] sampled   from density")
for lo, hi in zip(edges[:-1], edges[1:]):
    sel = (zeta >= lo) & (zeta < hi)
    model = conditional_expectation_batch(lambda v: v * v, zeta[sel]).mean()
    print(f"  [{lo:6.3f}, {hi:6.3f})  {sel.sum():6d}   {np.mean(xi[sel] ** 2):10.4f}   {model:12.4f}")
