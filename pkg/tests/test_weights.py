from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tzgirsanov.paths import DomainError
from tzgirsanov.weights import (
    HKind,
    HLambdaSolver,
    WeightLambda,
    builtin_h,
    bundled_lambdas,
    check_integrability,
    conditional_expectation_batch,
    girsanov_density,
    k_mu,
    k_mu_batch,
    lambda_bessel,
    lambda_cameron_martin,
    lambda_cosh,
    lambda_one,
    lambda_quadratic_variation,
    log_girsanov_density,
    solve_h_lambda,
    solve_h_lambda_batch,
)

# balance points from 30-digit mpmath quadrature and root finding, frozen
ORACLE_H = [
    (lambda_cameron_martin(0.5), 0.3, 0.7, 0.282824964911604388),
    (lambda_cameron_martin(1.0), 0.0, 1.0, 1.41454544644478733),
    (lambda_cameron_martin(-1.0), 1.2, 2.0, -2.84020389070402983),
    (lambda_quadratic_variation(), 0.3, 0.7, 0.824362916416757154),
    (lambda_bessel(1.0, 0.75), 0.3, 0.7, -1.75378172579186444),
    (lambda_bessel(1.0, 0.75), -1.2, 2.0, -1.72181450089680118),
]
# conditional means from the same oracle
E_COS_GIVEN_1 = 0.687437618194790309
E_GAUSS_GIVEN_03 = 0.805807818280992203


@pytest.mark.parametrize("lam, xi, zeta, expected", ORACLE_H, ids=lambda v: getattr(v, "label", None))
def test_balance_oracle_scalar_and_batch(lam, xi, zeta, expected):
    assert solve_h_lambda(lam, xi, zeta) == pytest.approx(expected, abs=1e-9)
    assert solve_h_lambda_batch(lam, [xi], [zeta])[0] == pytest.approx(expected, abs=1e-9)


def test_constant_weight_reflects():
    for xi in np.linspace(-3, 3, 7):
        for zeta in (0.05, 1.0, 20.0):
            assert solve_h_lambda(lambda_one(), xi, zeta) == pytest.approx(-xi, abs=1e-9)


def test_even_weights_reflect():
    xi = np.linspace(-2, 2, 9)
    np.testing.assert_allclose(solve_h_lambda_batch(lambda_cosh(1.0), xi, 0.8), -xi, atol=1e-9)


def test_quadratic_variation_matches_unit_tilt():
    # 2 e^xi zeta / (e^{2t} - 1) differs from e^{xi} by a factor free of xi
    xi = np.linspace(-2, 2, 9)
    a = solve_h_lambda_batch(lambda_quadratic_variation(1.0), xi, 0.6)
    b = k_mu_batch(1.0, xi, np.full(9, 0.6))
    np.testing.assert_allclose(a, b, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.floats(-4, 4), st.floats(-3, 3), st.floats(0.02, 30))
def test_self_inverse_and_monotone(mu, xi, zeta):
    lam = lambda_cameron_martin(mu)
    h = solve_h_lambda(lam, xi, zeta)
    assert solve_h_lambda(lam, h, zeta) == pytest.approx(xi, abs=1e-8)
    assert solve_h_lambda(lam, xi + 0.1, zeta) < h


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 2), st.floats(-3, 3), st.floats(0.05, 10))
def test_k_mu_antisymmetry(mu, xi, zeta):
    assert -k_mu(-mu, xi, zeta) == pytest.approx(k_mu(mu, -xi, zeta), abs=1e-8)


def test_batch_agrees_with_scalar_including_tails(np_rng):
    xi = np.concatenate([np_rng.normal(0, 1.5, 60), [6.0, -6.0, 10.0, -10.0, 0.01]])
    zeta = np.concatenate([np.exp(np_rng.normal(0, 1.5, 60)), [0.01, 0.01, 50.0, 50.0, 1e-3]])
    for lam in bundled_lambdas():
        batch = solve_h_lambda_batch(lam, xi, zeta)
        scalar = np.array([solve_h_lambda(lam, a, z) for a, z in zip(xi, zeta)])
        np.testing.assert_allclose(batch, scalar, atol=1e-9)


def test_solver_domain_errors():
    with pytest.raises(DomainError):
        solve_h_lambda(lambda_one(), 0.0, 0.0)
    with pytest.raises(DomainError):
        solve_h_lambda_batch(lambda_one(), [np.nan], [1.0])
    bad = WeightLambda("nan", lambda x, z: np.full(np.shape(x), np.nan))
    with pytest.raises(DomainError):
        solve_h_lambda(bad, 0.0, 1.0)


def test_integrability():
    for lam in bundled_lambdas():
        for zeta in (0.1, 1.0, 10.0):
            assert check_integrability(lam, zeta)


@pytest.mark.parametrize("kind", list(HKind))
def test_h_catalog_invariants(kind):
    h = builtin_h(kind, alpha=0.7, x=0.3, z=0.4)
    xi, zeta = np.meshgrid(np.linspace(-2.5, 2.5, 21), [0.05, 0.4, 1.3, 4.0])
    dom = np.asarray(h.in_domain(xi, zeta), bool)
    y = h.eval(xi, zeta)
    np.testing.assert_allclose(h.inverse(y, zeta)[dom], xi[dom], atol=1e-10)
    assert np.all(np.asarray(h.in_image(y, zeta), bool)[dom])
    e = 1e-6
    fd = (h.eval(xi + e, zeta) - h.eval(xi - e, zeta)) / (2 * e)
    d = h.deriv(xi, zeta)
    assert np.all(np.abs(fd - d) <= np.maximum(1e-6, 1e-4 * np.abs(d)))
    assert h(0.3, 1.0) == h.eval(0.3, 1.0)


def test_h_catalog_images():
    h = builtin_h(HKind.RUNNING_LOG1P, alpha=1.0)
    # xi = 0, zeta = 0.5: e^xi zeta < 1/alpha
    assert h.in_image(0.0, 0.5) and not h.in_image(0.0, 1.5)
    lp = builtin_h(HKind.LOG_PLUS, x=0.25)
    assert lp.in_image(0.0, 1.9) and not lp.in_image(0.0, 2.1)
    nlp = builtin_h(HKind.NEG_LOG_PLUS, x=0.25)
    assert nlp.in_image(0.0, 1.9) and not nlp.in_image(0.0, 2.1)
    with pytest.raises(DomainError):
        builtin_h(9)
    with pytest.raises(DomainError):
        builtin_h(HKind.SHIFT_LOG1P, alpha=-1)


def test_girsanov_density():
    refl = builtin_h(HKind.REFLECTION)
    xi = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(girsanov_density(refl, xi, 0.4), 1.0, atol=1e-15)
    shift = builtin_h(HKind.CONSTANT_SHIFT, z=0.0)
    assert girsanov_density(shift, 1.2, 0.3) == 1.0
    cs = builtin_h(HKind.CONSTANT_SHIFT, z=0.5)
    expected = math.exp((math.cosh(0.2) - math.cosh(-0.3)) / 0.7)
    assert girsanov_density(cs, 0.2, 0.7) == pytest.approx(expected, rel=1e-14)
    assert log_girsanov_density(cs, 0.2, 0.7) == pytest.approx(math.log(expected), rel=1e-14)


def test_weight_values():
    assert lambda_cameron_martin(0.5, 2.0).eval(1.0, 3.0) == pytest.approx(math.exp(0.5 - 0.25))
    assert lambda_cosh(1.0).eval(0.7, 1.0) == pytest.approx(math.cosh(0.7) * math.exp(-0.5))
    assert lambda_cosh(1.0).log_eval(800.0, 1.0) == pytest.approx(800.0 - math.log(2) - 0.5)
    qv = lambda_quadratic_variation(1.0).eval(0.3, 0.6)
    assert qv == pytest.approx(2 * math.exp(0.3) * 0.6 / math.expm1(2.0), rel=1e-14)
    with pytest.raises(DomainError):
        lambda_bessel(0.0, 0.5)


def test_bessel_weight_is_normalized_at_origin():
    # Lambda(0, zeta) = exp(-lam^2 zeta / 2 - mu^2 t / 2)
    lam = lambda_bessel(1.3, 0.75, 1.0)
    assert lam.eval(0.0, 0.4) == pytest.approx(math.exp(-1.69 * 0.2 - 0.28125), rel=1e-9)


def test_conditional_expectations():
    z = np.array([1.0])
    assert conditional_expectation_batch(np.cos, z)[0] == pytest.approx(E_COS_GIVEN_1, abs=1e-12)
    z = np.array([0.3])
    g = conditional_expectation_batch(lambda v: np.exp(-v * v), z)[0]
    assert g == pytest.approx(E_GAUSS_GIVEN_03, abs=1e-12)
    zs = np.geomspace(1e-3, 1e5, 40)
    np.testing.assert_allclose(conditional_expectation_batch(np.ones_like, zs), 1.0, atol=1e-13)
    np.testing.assert_allclose(conditional_expectation_batch(lambda v: v, zs), 0.0, atol=1e-13)
    with pytest.raises(DomainError):
        conditional_expectation_batch(np.cos, [0.0])


def test_solver_config_is_honoured():
    coarse = HLambdaSolver(tol_r=1e-6, tol_q=1e-8)
    lam = lambda_cameron_martin(1.0)
    assert solve_h_lambda(lam, 0.0, 1.0, coarse) == pytest.approx(1.41454544644478733, abs=1e-5)
