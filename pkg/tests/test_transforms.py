from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tzgirsanov.paths import DomainError, Path, ProfileMode, TimeGrid, exp_functional_A, time_reverse
from tzgirsanov.transforms import (
    apply_C,
    apply_C_Lambda,
    apply_S_mu,
    apply_tz,
    composition_check,
    tz_induced_A,
    tz_values,
)
from tzgirsanov.weights import k_mu, lambda_cameron_martin, lambda_one, solve_h_lambda


def test_zero_shift_is_identity(bm_pairs):
    for p, prof in bm_pairs:
        out, oprof = apply_tz(p, prof, 0.0)
        assert np.array_equal(out.values, p.values)
        assert np.array_equal(oprof.Z, prof.Z)


def test_zero_path_log2_shift():
    # A_s = s, so T_z(0)(s) = -log(1 + s) for z = log 2
    g = TimeGrid(1.0, 8)
    p = Path(g, np.zeros(9))
    out, _ = apply_tz(p, exp_functional_A(p), math.log(2.0))
    assert out.at(0.5) == pytest.approx(-math.log(1.5), abs=1e-15)
    assert out.at(0.5) == pytest.approx(-0.405465108, abs=1e-9)


@pytest.mark.parametrize("z", [-1.5, -0.3, 1e-9, 0.3, 1.5, 3.0])
def test_endpoint_and_scaling(bm_pairs, z):
    for p, prof in bm_pairs:
        out, oprof = apply_tz(p, prof, z)
        assert abs(out.endpoint - (p.endpoint - z)) <= 1e-12
        assert oprof.A_end == pytest.approx(math.exp(-z) * prof.A_end, rel=1e-12)
        assert oprof.mode is ProfileMode.INDUCED
        assert oprof.A[0] == 0.0


@settings(max_examples=60, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 9))
def test_semigroup_and_inverse(z1, z2, k):
    from tzgirsanov.stochastic import RngSpec, sample_bm

    p = sample_bm(TimeGrid(1.0, 128), RngSpec(42), k)
    prof = exp_functional_A(p)
    mid, mprof = apply_tz(p, prof, z1)
    two, _ = apply_tz(mid, mprof, z2)
    one, _ = apply_tz(p, prof, z1 + z2)
    assert np.max(np.abs(two.values - one.values)) <= 1e-10
    back, bprof = apply_tz(mid, mprof, -z1)
    assert np.max(np.abs(back.values - p.values)) <= 1e-10
    np.testing.assert_allclose(bprof.A[1:], prof.A[1:], rtol=1e-12)


def test_small_shift_has_no_cancellation():
    # on the zero path the output is minus the log factor, with no subtraction
    A = np.array([0.0, 0.1, 0.25, 0.4])
    z = 1e-12
    out = tz_values(np.zeros(4), A, z)
    np.testing.assert_allclose(-out, (A / A[-1]) * z, rtol=1e-9)
    np.testing.assert_allclose(tz_induced_A(A, z), A / (1 + (A / A[-1]) * math.expm1(z)), rtol=1e-15)


def test_stacked_kernels_match_single(bm_pairs):
    vals = np.stack([p.values for p, _ in bm_pairs])
    A = np.stack([prof.A for _, prof in bm_pairs])
    zs = np.linspace(-1, 1, len(bm_pairs))
    stacked = tz_values(vals, A, zs)
    for i, (p, prof) in enumerate(bm_pairs):
        assert np.array_equal(stacked[i], apply_tz(p, prof, zs[i])[0].values)


def test_time_reversal_compatibility(bm_pairs):
    for p, prof in bm_pairs:
        for z in (-1.5, 0.3):
            lhs = time_reverse(apply_tz(p, prof, z, ProfileMode.QUADRATURE)[0])
            r = time_reverse(p)
            rhs = apply_tz(r, exp_functional_A(r), -z, ProfileMode.QUADRATURE)[0]
            assert np.max(np.abs(lhs.values - rhs.values)) <= 1e-10


def test_quadrature_mode_recovers_ratio_at_second_order():
    errs = []
    for n in (128, 256, 512):
        g = TimeGrid(1.0, n)
        p = Path.from_function(g, lambda s: np.sin(3 * s) + s)
        prof = exp_functional_A(p)
        _, qprof = apply_tz(p, prof, 0.8, ProfileMode.QUADRATURE)
        errs.append(np.max(np.abs(qprof.Z[1:] - prof.Z[1:])))
    assert 3.5 < errs[0] / errs[1] < 4.5 and 3.5 < errs[1] / errs[2] < 4.5


def test_reflection(bm_pairs):
    g = TimeGrid(1.0, 16)
    zero = Path(g, np.zeros(17))
    assert np.array_equal(apply_C(zero, exp_functional_A(zero))[0].values, zero.values)
    for p, prof in bm_pairs:
        c, cprof = apply_C(p, prof)
        assert abs(c.endpoint + p.endpoint) <= 1e-12
        back, _ = apply_C(c, cprof)
        assert np.max(np.abs(back.values - p.values)) <= 1e-10


def test_c_lambda_with_constant_weight_is_c(bm_pairs):
    for p, prof in bm_pairs[:4]:
        a = apply_C_Lambda(p, prof, lambda_one())[0]
        b = apply_C(p, prof)[0]
        assert np.max(np.abs(a.values - b.values)) <= 1e-9
        c = apply_C_Lambda(p, prof, lambda_cameron_martin(0.0))[0]
        assert np.max(np.abs(c.values - b.values)) <= 1e-9


def test_c_lambda_endpoint_and_involution(bm_pairs):
    lam = lambda_cameron_martin(0.5)
    for p, prof in bm_pairs[:4]:
        out, oprof = apply_C_Lambda(p, prof, lam)
        assert out.endpoint == pytest.approx(solve_h_lambda(lam, p.endpoint, prof.Z_end), abs=1e-12)
        assert np.array_equal(oprof.Z, prof.Z)
        back, _ = apply_C_Lambda(out, oprof, lam)
        assert np.max(np.abs(back.values - p.values)) <= 1e-8


def test_s_mu(bm_pairs):
    for p, prof in bm_pairs[:4]:
        same, _ = apply_S_mu(p, prof, 0.0)
        assert np.max(np.abs(same.values - p.values)) <= 1e-9
        out, oprof = apply_S_mu(p, prof, 0.7)
        assert out.endpoint == pytest.approx(-k_mu(0.7, p.endpoint, prof.Z_end), abs=1e-12)
        back, _ = apply_S_mu(out, oprof, -0.7)
        assert np.max(np.abs(back.values - p.values)) <= 1e-8


def test_composition_rules(bm_paths):
    g = TimeGrid(1.0, 512)
    zero = Path(g, np.zeros(513))
    assert composition_check(zero, 0.5).max() <= 1e-12
    assert composition_check(zero, 0.0).max() == 0.0
    used = 0
    for p in bm_paths:
        if 0.5 * exp_functional_A(p).A_end < 1:
            assert composition_check(p, 0.5).max() <= 1e-10
            used += 1
    assert used >= 3


def test_composition_precondition():
    g = TimeGrid(1.0, 8)
    p = Path(g, np.full(9, 1.0))  # A_t = e^2 > 1/0.5
    with pytest.raises(DomainError):
        composition_check(p, 0.5)
    with pytest.raises(DomainError):
        composition_check(p, -1.0)
