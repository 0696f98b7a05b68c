import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import lambertw

from glauberlab.acceptance import bisect_root
from glauberlab.bounds import phi_mean
from glauberlab.model import Potential, TorusGrid
from glauberlab.vlasov import (
    DensityField,
    KineticRun,
    contraction_factor,
    convolve,
    convolve_direct,
    homogeneous_fixed_point,
    integrate_vlasov,
    picard_iterates,
    picard_solve,
    solve_vlasov,
)

GRID = TorusGrid(8.0, 32)
TOPHAT = Potential("tophat", 1.0, 1.0)


def test_density_field_checks():
    with pytest.raises(ValueError):
        DensityField(GRID, -np.ones(32))
    rho = DensityField.cosine(GRID, 0.2, 0.5)
    assert rho.sup == pytest.approx(0.3) and rho.mass == pytest.approx(0.2 * 8.0)
    assert rho.in_delta_plus(math.log(1 / 0.3) - 1e-9) and not rho.in_delta_plus(0.0 + math.log(4.0))
    assert DensityField(GRID, 0.5).values.shape == (32,)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1),
       kind=st.sampled_from(["tophat", "truncated-gaussian", "exponential-decay"]),
       d=st.sampled_from([1, 2]))
def test_fft_convolution_matches_direct_sum(seed, kind, d):
    grid = TorusGrid(6.0, 8 if d == 2 else 16, d)
    phi = Potential(kind, 1.5, 0.4, d=d)
    rho = DensityField(grid, np.random.default_rng(seed).random(grid.shape))
    np.testing.assert_allclose(convolve(phi, rho), convolve_direct(phi, rho), atol=1e-12)


def test_convolution_of_constant():
    rho = DensityField.constant(GRID, 0.7)
    np.testing.assert_allclose(convolve(TOPHAT, rho), 0.7 * phi_mean(TOPHAT, GRID), rtol=1e-13)


@settings(max_examples=200)
@given(kappa=st.floats(1e-3, 50.0), m=st.floats(0.0, 20.0))
def test_fixed_point_against_lambert_w_and_bisection(kappa, m):
    r = homogeneous_fixed_point(kappa, m)
    assert abs(r - kappa * math.exp(-r * m)) <= 1e-12 * max(1.0, kappa)
    if m > 1e-6:  # W(z)/m loses precision for tiny m
        assert r == pytest.approx(float(lambertw(kappa * m).real) / m, rel=1e-10)
    oracle = bisect_root(lambda x: x - kappa * math.exp(-x * m), 0.0, kappa)
    assert r == pytest.approx(oracle, rel=1e-10, abs=1e-14)


def test_fixed_point_known_value():
    assert homogeneous_fixed_point(1.0, 1.0) == pytest.approx(0.5671432904097838, abs=1e-15)
    with pytest.raises(ValueError):
        homogeneous_fixed_point(0.0, 1.0)


def test_zero_potential_exact_solution():
    kappa = 1.3
    rho0 = DensityField.cosine(GRID, 0.4, 0.8)
    run = integrate_vlasov(rho0, kappa, Potential.zero(), 0.1, 2.0)
    for t, f in zip(run.times, run.fields):
        np.testing.assert_allclose(f, kappa + (rho0.values - kappa) * math.exp(-t), atol=1e-13)


def test_second_order_convergence():
    rho0 = DensityField.cosine(GRID, 0.3, 0.9)
    ref = integrate_vlasov(rho0, 1.0, TOPHAT, 1e-3, 1.0).final.values
    errs = [np.max(np.abs(integrate_vlasov(rho0, 1.0, TOPHAT, dt, 1.0).final.values - ref)) for dt in (0.1, 0.05)]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.15)


def test_homogeneous_stays_homogeneous_and_bounded():
    run = integrate_vlasov(DensityField.constant(GRID, 0.2), 2.0, TOPHAT, 0.05, 3.0)
    for f in run.fields:
        assert np.ptp(f) < 1e-14
    rho0 = DensityField.cosine(GRID, 0.3, 0.9)
    run = integrate_vlasov(rho0, 0.5, TOPHAT, 0.05, 3.0)
    assert np.all(run.min >= 0) and np.all(run.sup <= max(rho0.sup, 0.5) + 1e-14)


def test_picard_matches_stepper():
    rho0 = DensityField.cosine(GRID, 0.3, 0.5)
    a = picard_solve(rho0, 1.0, TOPHAT, 0.5, 20, n_sub=256)
    b = integrate_vlasov(rho0, 1.0, TOPHAT, 1e-3, 0.5).final
    np.testing.assert_allclose(a.values, b.values, atol=1e-8)
    run = solve_vlasov(rho0, 1.0, TOPHAT, 0.01, 0.5, solver="picard", picard_iters=20)
    assert run.solver == "picard" and run.times[-1] == pytest.approx(0.5)
    np.testing.assert_allclose(run.final.values, b.values, atol=1e-7)
    with pytest.raises(ValueError):
        solve_vlasov(rho0, 1.0, TOPHAT, solver="euler")


def test_picard_a_priori_error_bound():
    rho0 = DensityField.cosine(GRID, 0.3, 0.5)
    kappa, T = 1.0, math.log(4 / 3)
    q = contraction_factor(kappa, phi_mean(TOPHAT, GRID), T)
    assert q == pytest.approx(0.5)
    _, its = picard_iterates(rho0, kappa, TOPHAT, T, 25, n_sub=128)
    limit = its[-1]
    first = np.max(np.abs(its[1] - its[0]))
    for n in range(1, 10):
        assert np.max(np.abs(its[n] - limit)) <= q**n / (1 - q) * first + 1e-12


def test_picard_iterates_contract():
    _, its = picard_iterates(DensityField.cosine(GRID, 0.2, 0.5), 1.0, TOPHAT, 0.2, 3)
    np.testing.assert_array_equal(its[0][5], DensityField.cosine(GRID, 0.2, 0.5).values)
    with pytest.raises(ValueError):
        picard_iterates(DensityField.constant(GRID, 0.1), 1.0, TOPHAT, 0.2, 3, n_sub=32)


def test_contraction_factor():
    assert contraction_factor(1.0, 2.0, 0.0) == 0.0
    assert contraction_factor(0.5, 2.0, math.log(2)) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        contraction_factor(1.0, 1.0, -1.0)


def test_kinetic_run_rows_and_lookup():
    run = integrate_vlasov(DensityField.constant(GRID, 0.2), 1.0, TOPHAT, 0.1, 1.0)
    assert run.rows().shape == (11, len(KineticRun.CSV_COLUMNS))
    assert run.at(0.5).values[0] == run.fields[5][0]
    with pytest.raises(ValueError):
        run.at(0.55)
    pm = phi_mean(TOPHAT, GRID)
    np.testing.assert_allclose(run.mass, GRID.volume * run.sup, rtol=1e-13)
    assert run.residual[0] == pytest.approx(abs(-0.2 + math.exp(-0.2 * pm)))
