from __future__ import annotations

import math

import numpy as np
import pytest

from tzgirsanov.paths import DomainError, RangeError, TimeGrid
from tzgirsanov.stochastic import (
    DriftKind,
    DriftSpec,
    RngSpec,
    bm_from_increments,
    bm_increments,
    coarsen_increments,
    euler_maruyama,
    euler_maruyama_batch,
    sample_bm,
    sample_bm_drift,
)

G = TimeGrid(1.0, 64)


def test_paths_depend_only_on_ordinal():
    rng = RngSpec(7)
    a = sample_bm(G, rng, 5)
    b = sample_bm(G, rng, 5)
    assert np.array_equal(a.values, b.values)
    block = bm_from_increments(bm_increments(rng, [3, 4, 5], G))
    assert np.array_equal(block[2], a.values)
    shuffled = bm_from_increments(bm_increments(rng, [5, 3], G))
    assert np.array_equal(shuffled[0], a.values)
    assert a.values[0] == 0.0


def test_streams_and_seeds_differ():
    base = RngSpec(7)
    x = sample_bm(G, base, 0).values
    assert not np.array_equal(x, sample_bm(G, base.child(), 0).values)
    assert not np.array_equal(x, sample_bm(G, RngSpec(8), 0).values)
    with pytest.raises(DomainError):
        RngSpec(-1)
    with pytest.raises(DomainError):
        base.generator(-3)


def test_moments_of_endpoint():
    N = 100_000
    g = TimeGrid(1.0, 8)
    xi = bm_from_increments(bm_increments(RngSpec(42), range(N), g))[:, -1]
    assert abs(xi.mean()) <= 4 * math.sqrt(1.0 / N)
    assert abs(xi.var() - 1.0) <= 5 * math.sqrt(2.0 / N)


def test_drifted_paths_share_increments():
    rng = RngSpec(3)
    b = sample_bm(G, rng, 2)
    assert np.array_equal(sample_bm_drift(0.0, G, rng, 2).values, b.values)
    d = sample_bm_drift(0.8, G, rng, 2)
    np.testing.assert_allclose(d.values - b.values, 0.8 * G.nodes, atol=1e-15)


def test_coarsened_increments_are_the_same_path():
    dB = bm_increments(RngSpec(1), range(4), G)
    fine = bm_from_increments(dB)
    coarse = bm_from_increments(coarsen_increments(dB, 2))
    np.testing.assert_allclose(coarse, fine[:, ::2], atol=1e-14)
    with pytest.raises(DomainError):
        coarsen_increments(dB[:, :63], 2)


def test_zero_tanh_drift_is_brownian():
    rng = RngSpec(11)
    x = euler_maruyama(DriftSpec(DriftKind.TANH, mu=0.0), G, rng, 4)
    assert np.array_equal(x.values, sample_bm(G, rng, 4).values)


def test_time_inhomogeneous_drift_values():
    d = DriftSpec(DriftKind.TIME_INHOM, t_end=1.0)
    assert d.evaluate(0.0, np.array([0.0]), np.array([0.0]))[0] == pytest.approx(2.0)
    assert d.evaluate(1.0, np.array([0.3]), np.array([0.4]))[0] == 0.0
    xs = np.linspace(-3, 3, 13)
    vals = d.evaluate(0.4, xs, np.full(13, 0.5))
    assert np.all((vals >= 0) & (vals <= 2))
    with pytest.raises(DomainError):
        DriftSpec(DriftKind.TIME_INHOM)
    with pytest.raises(DomainError):
        euler_maruyama(d, TimeGrid(2.0, 16), RngSpec(1), 0)


def test_bessel_drift_matches_half_order_closed_form():
    # for mu = 1/2 the drift is -1/2 - lam e^x
    d = DriftSpec(DriftKind.BESSEL_K, mu=0.5, lam=1.3)
    xs = np.linspace(-3, 2, 11)
    np.testing.assert_allclose(d.evaluate(0.0, xs, None), -0.5 - 1.3 * np.exp(xs), rtol=1e-8)
    with pytest.raises(DomainError):
        DriftSpec(DriftKind.BESSEL_K, lam=0.0)


def test_sde_paths_run_and_are_deterministic():
    rng = RngSpec(5)
    g = TimeGrid(1.0, 512)
    for d in (DriftSpec(DriftKind.TANH, mu=1.0), DriftSpec(DriftKind.BESSEL_K, mu=0.5, lam=1.0),
              DriftSpec(DriftKind.TIME_INHOM, t_end=1.0)):
        a = euler_maruyama(d, g, rng, 9)
        b = euler_maruyama(d, g, rng, 9)
        assert np.array_equal(a.values, b.values) and a.values[0] == 0.0


def test_tanh_strong_error_shrinks_linearly():
    # additive noise: Euler-Maruyama converges strongly at order one
    N = 2000
    d = DriftSpec(DriftKind.TANH, mu=1.0)
    dB = bm_increments(RngSpec(42), range(N), TimeGrid(1.0, 64))
    end = {n: euler_maruyama_batch(d, coarsen_increments(dB, 64 // n), TimeGrid(1.0, n))[:, -1]
           for n in (4, 8, 64)}
    e4 = np.sqrt(np.mean((end[4] - end[64]) ** 2))
    e8 = np.sqrt(np.mean((end[8] - end[64]) ** 2))
    assert 1.6 < e4 / e8 < 3.0


def test_euler_maruyama_range_error():
    g = TimeGrid(100.0, 8)
    huge = DriftSpec(DriftKind.TANH, mu=1e308)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(RangeError):
            euler_maruyama_batch(huge, np.ones((1, 8)), g)
    flat = DriftSpec(DriftKind.CONSTANT, mu=0.0)
    assert euler_maruyama_batch(flat, np.ones((1, 8)), g)[0, -1] == 8.0


def test_labels():
    assert DriftSpec().label() == "BM"
    assert "0.5" in DriftSpec(DriftKind.CONSTANT, mu=0.5).label()
    assert not DriftSpec(DriftKind.CONSTANT, mu=1).is_path_dependent
    assert DriftSpec(DriftKind.TANH, mu=1).is_path_dependent
