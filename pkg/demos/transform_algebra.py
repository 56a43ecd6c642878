"""
Shifting a Brownian path by T_z
===============================

A single sampled path, moved by the shift family and by the reflection C.
The endpoint moves by exactly -z while the exponential functional scales by
e^{-z}; the ratio process does not move at all.
"""

import numpy as np

from tzgirsanov import RngSpec, TimeGrid, apply_C, apply_tz, exp_functional_A, sample_bm

# a path on [0, 1] with 512 steps; ordinal 0 of stream 42 is always the same path
grid = TimeGrid(1.0, 512)
path = sample_bm(grid, RngSpec(42), 0)
prof = exp_functional_A(path)
print(f"B_t = {path.endpoint:+.6f}   A_t = {prof.A_end:.6f}   Z_t = {prof.Z_end:.6f}")

for z in (-1.5, -0.3, 0.3, 1.5):
    moved, mprof = apply_tz(path, prof, z)
    print(f"z = {z:+.1f}:  endpoint shift {moved.endpoint - path.endpoint:+.6f}"
          f"   A_t ratio / e^-z {mprof.A_end / prof.A_end / np.exp(-z):.15f}"
          f"   max |Z change| {np.max(np.abs(mprof.Z - prof.Z)):.1e}")

# two shifts compose into one
a, pa = apply_tz(*apply_tz(path, prof, 0.3), -1.5)
b, _ = apply_tz(path, prof, -1.2)
print("semigroup defect", np.max(np.abs(a.values - b.values)))

# C shifts by twice the endpoint, so it flips the endpoint and is its own inverse
c, cprof = apply_C(path, prof)
back, _ = apply_C(c, cprof)
print(f"C: endpoint {path.endpoint:+.6f} -> {c.endpoint:+.6f}, "
      f"C(C(B)) defect {np.max(np.abs(back.values - path.values)):.1e}")
