"""Acceptance suite: one test per criterion at its stated tolerance.

Each test prints a ``criterion k: PASS|FAIL`` line (also repeated in the
pytest terminal summary).  Criteria 6 and 7 share two full statistical runs
at N = 1e5, n = 512, seed 42: one with a single shard and one with eight.
"""

from __future__ import annotations

import time
from dataclasses import asdict

import pytest

from conftest import ACCEPTANCE_LINES
from tzgirsanov.checks import (
    check_balance_solver,
    check_involutions,
    check_quadrature_convergence,
    check_special_functions,
    check_transform_algebra,
)
from tzgirsanov.verify import SuiteConfig, run_suite


def _announce(capsys, k: int, passed: bool, summary: str) -> None:
    line = f"criterion {k}: {'PASS' if passed else 'FAIL'}  {summary}"
    ACCEPTANCE_LINES[k] = line
    with capsys.disabled():
        print("\n" + line)


def _worst(results) -> str:
    return "; ".join(f"{r.name} = {r.value:.2e}" for r in results)


def _timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def test_criterion_1_transform_algebra(capsys):
    results, wall = _timed(check_transform_algebra, n_paths=100, n_steps=512, t=1.0,
                           shifts=(-1.5, -0.3, 0.3, 1.5), tol=1e-10)
    ok = all(r.passed for r in results) and wall < 10.0
    _announce(capsys, 1, ok, f"max node errors <= 1e-10 ({wall:.1f} s < 10 s): {_worst(results)}")
    for r in results:
        assert r.passed, r.line()
    assert wall < 10.0


def test_criterion_2_quadrature_order(capsys):
    r = check_quadrature_convergence(n_paths=20, coarse=256, lower=3.0, upper=5.0)
    _announce(capsys, 2, r.passed, f"median defect ratio 256 -> 512 = {r.value:.4f} in [3, 5]")
    assert r.passed, r.line()


def test_criterion_3_balance_solver(capsys):
    results, wall = _timed(check_balance_solver, tol=1e-8, mus=(-1.0, -0.5, 0.5, 1.0))
    ok = all(r.passed for r in results) and wall < 30.0
    _announce(capsys, 3, ok, f"defects <= 1e-8 ({wall:.1f} s < 30 s): {_worst(results)}")
    for r in results:
        assert r.passed, r.line()
    assert wall < 30.0


def test_criterion_4_special_functions(capsys):
    results = check_special_functions(tol_closed=1e-9, tol_rec=1e-8, tol_norm=1e-8)
    ok = all(r.passed for r in results)
    _announce(capsys, 4, ok, _worst(results))
    for r in results:
        assert r.passed, r.line()


def test_criterion_5_involutions(capsys):
    results = check_involutions(n_paths=50, n_steps=512, tol=1e-8)
    ok = all(r.passed for r in results)
    worst = max(results, key=lambda r: r.value)
    _announce(capsys, 5, ok, f"{len(results)} involutions <= 1e-8, worst {worst.name} = {worst.value:.2e}")
    for r in results:
        assert r.passed, r.line()


# ---------------------------------------------------------------------------
# statistical suite

BASE = dict(N=100_000, n_steps=512, t_end=1.0, seed=42, z_max=4.0, bias_probe=True, rerun=True)


@pytest.fixture(scope="module")
def one_shard():
    return _timed(run_suite, SuiteConfig(shards=1, **BASE))


@pytest.fixture(scope="module")
def eight_shards():
    return _timed(run_suite, SuiteConfig(shards=8, **BASE))


@pytest.mark.slow
def test_criterion_6_statistical_suite(capsys, one_shard):
    suite, wall = one_shard
    worst = max(suite.reports, key=lambda r: r.max_abs_z)
    probes = all(all(b.passed for b in (r.bias or [])) for r in suite.reports)
    reruns = ", ".join(rr["label"] for rr in suite.reruns) or "none"
    ok = suite.passed and len(suite.reports) >= 18 and wall <= 900.0
    _announce(capsys, 6, ok,
              f"{sum(r.passed for r in suite.reports)}/{len(suite.reports)} presets, max |z| = "
              f"{worst.max_abs_z:.2f} ({worst.label}), bias probes {'ok' if probes else 'FAIL'}, "
              f"re-runs: {reruns}, {wall:.0f} s <= 900 s")
    with capsys.disabled():
        print(suite.table())
    assert len(suite.reports) >= 18
    assert all(r.bias for r in suite.reports if r.label != "conditional-law")
    assert suite.passed
    assert wall <= 900.0


@pytest.mark.slow
def test_criterion_7_shard_reproducibility(capsys, one_shard, eight_shards):
    a, b = one_shard[0], eight_shards[0]
    diff = 0.0
    same_shape = len(a.reports) == len(b.reports)
    for ra, rb in zip(a.reports, b.reports):
        same_shape &= ra.label == rb.label and ra.passed == rb.passed
        same_shape &= (ra.N, ra.n_effective, ra.skipped) == (rb.N, rb.n_effective, rb.skipped)
        for x, y in zip(ra.records, rb.records):
            diff = max(diff, abs(x.mean - y.mean))
        for x, y in zip(ra.bias or [], rb.bias or []):
            diff = max(diff, abs(x.mean_coarse - y.mean_coarse))
    ok = same_shape and diff <= 1e-12 and a.passed == b.passed
    _announce(capsys, 7, ok, f"1 vs 8 shards: max |mean difference| = {diff:.1e} <= 1e-12, "
                             f"pass/fail and counts identical: {same_shape}")
    assert same_shape
    assert diff <= 1e-12
    strip = lambda rs: [{k: v for k, v in asdict(r).items() if k != "wall_time"} for r in rs]  # noqa: E731
    assert strip(a.reports) == strip(b.reports)
