import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glauberlab.model import (
    FiniteConfiguration,
    Potential,
    TorusGrid,
    eval_potential,
    exponent_table,
    k_transform,
    lp_exponent,
    lp_integrate,
    pairing,
    relative_energy,
    symmetrize,
)


def test_grid_validation():
    for bad in (4, 12, 0):
        with pytest.raises(ValueError):
            TorusGrid(8.0, bad)
    with pytest.raises(ValueError):
        TorusGrid(-1.0, 8)
    g = TorusGrid(8.0, 16, 2)
    assert g.h == 0.5 and g.cell_volume == 0.25 and g.volume == 64.0
    assert g.shape == (16, 16) and g.size == 256


def test_node_offsets_minimal_image():
    g = TorusGrid(8.0, 8)
    np.testing.assert_allclose(g.node_offsets(), [0, 1, 2, 3, 4, 3, 2, 1])
    D = g.pair_distances()
    assert np.allclose(D, D.T) and D.max() == 4.0


def test_nearest_node_wraps():
    g = TorusGrid(8.0, 8)
    np.testing.assert_array_equal(g.nearest_node(np.array([[0.1], [7.9], [3.4], [3.6]])), [0, 0, 3, 4])


def test_potential_defaults_and_edge():
    assert Potential("tophat", 1.0, 1.0).support == 1.0
    assert Potential("truncated-gaussian", 1.0, 0.5).support == 1.5
    assert Potential("exponential-decay", 1.0, 0.2).support == 1.0
    phi = Potential("tophat", 2.0, 1.0)
    np.testing.assert_allclose(phi.radial([0.0, 0.5, 1.0, 1.5]), [2.0, 2.0, 1.0, 0.0])
    assert phi.value(1.0) == 1.0 and phi.value(0.3) == 2.0 and phi.value(1.2) == 0.0
    # edge value of a function of phi is the average of both limits
    assert phi.radial(1.0, lambda v: np.exp(-v)) == pytest.approx(0.5 * (math.exp(-2) + 1))
    assert phi.scaled(0.5).amplitude == 1.0
    with pytest.raises(ValueError):
        Potential("square")
    with pytest.raises(ValueError):
        Potential("tophat", -1.0)
    with pytest.raises(ValueError):
        Potential("tophat", 1.0, 5.0).check_fits(TorusGrid(8.0, 8))
    with pytest.raises(ValueError):
        Potential("tophat", d=2).check_fits(TorusGrid(8.0, 8, 1))
    assert Potential.zero().is_zero and Potential.zero().sup == 0.0


@given(kind=st.sampled_from(["tophat", "truncated-gaussian", "exponential-decay"]),
       r=st.floats(0.0, 3.0), a=st.floats(0.2, 1.0))
def test_scalar_value_matches_vector(kind, r, a):
    phi = Potential(kind, 1.3, a)
    assert phi.value(r) == pytest.approx(float(phi.radial(r)), rel=1e-14, abs=0.0)


def test_configuration_checks():
    with pytest.raises(ValueError):
        FiniteConfiguration(np.array([[1.0], [1.0]]), 8.0)
    with pytest.raises(ValueError):
        FiniteConfiguration(np.array([[8.5]]), 8.0)
    assert FiniteConfiguration.empty(8.0).count == 0


@settings(max_examples=50)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(0, 12))
def test_relative_energy_bruteforce(seed, m):
    rng = np.random.default_rng(seed)
    L = 6.0
    phi = Potential("truncated-gaussian", 1.0, 0.5)
    pts = rng.random((m, 2)) * L
    gamma = FiniteConfiguration(pts, L)
    x = rng.random(2) * L
    brute = 0.0
    for y in pts:
        best = min(
            math.hypot(x[0] - y[0] + i * L, x[1] - y[1] + j * L) for i in (-1, 0, 1) for j in (-1, 0, 1)
        )
        brute += phi.value(best)
    assert relative_energy(phi, x, gamma) == pytest.approx(brute, abs=1e-12)
    assert eval_potential(phi, [0.3, L - 0.2], L) == pytest.approx(phi.value(math.hypot(0.3, 0.2)))


def test_k_transform_of_exponent_is_product():
    rng = np.random.default_rng(1)
    f = rng.random(10) - 0.5
    gamma = [0, 3, 4, 7, 9]
    kt = k_transform(lambda sub: lp_exponent(f, sub), gamma)
    assert kt == pytest.approx(np.prod(1 + f[gamma]), rel=1e-13)
    mapping = {frozenset({0}): 2.0, frozenset({0, 3}): 5.0, frozenset(): 1.0}
    assert k_transform(mapping, [0, 3, 4]) == 8.0
    with pytest.raises(ValueError):
        k_transform(lambda s: 1.0, range(21))


@given(seed=st.integers(0, 2**32 - 1), N=st.integers(0, 3))
def test_lp_integral_of_exponent_is_truncated_exp(seed, N):
    grid = TorusGrid(2.0, 8)
    f = np.random.default_rng(seed).normal(size=8)
    total = grid.cell_volume * f.sum()
    expect = sum(total**n / math.factorial(n) for n in range(N + 1))
    assert lp_integrate(exponent_table(f, N), grid) == pytest.approx(expect, rel=1e-12, abs=1e-12)


@settings(max_examples=40)
@given(seed=st.integers(0, 2**32 - 1))
def test_mecke_identity_discrete(seed):
    """int sum_{x in eta} H(x, eta - x) d lambda = int int H(x, eta) dx d lambda, order by order."""
    grid = TorusGrid(2.0, 8)
    rng = np.random.default_rng(seed)
    size, N = grid.size, 2
    # H_m has axes (x, y_1..y_m), symmetric in the y's
    H = [rng.normal(size=(size,))]
    for m in range(1, N + 1):
        t = rng.normal(size=(size,) * (m + 1))
        perms = list(itertools.permutations(range(1, m + 1)))
        H.append(sum(np.transpose(t, (0,) + p) for p in perms) / len(perms))
    lhs_tables = [np.zeros(())]
    for n in range(1, N + 2):
        lhs_tables.append(sum(np.moveaxis(H[n - 1], 0, i) for i in range(n)))
    lhs = lp_integrate(lhs_tables, grid)
    rhs = grid.cell_volume * lp_integrate([h.sum(axis=0) for h in H], grid)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


@settings(max_examples=30)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(0, 3))
def test_symmetrize_properties(seed, n):
    t = np.random.default_rng(seed).normal(size=(4,) * n)
    s = symmetrize(t)
    for p in itertools.permutations(range(n)):
        np.testing.assert_allclose(s, np.transpose(s, p), atol=1e-14)
    np.testing.assert_allclose(symmetrize(s), s, atol=1e-14)
    assert s.sum() == pytest.approx(t.sum())


def test_pairing_grid_mismatch():
    class V:
        def __init__(self, grid):
            self.grid, self.tables = grid, [np.array(1.0), np.ones(8)]

    g1, g2 = TorusGrid(2.0, 8), TorusGrid(4.0, 8)
    assert pairing(V(g1), V(g1), g1) == pytest.approx(1 + 2.0)
    with pytest.raises(ValueError):
        pairing(V(g1), V(g2), g1)
