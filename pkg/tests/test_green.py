import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from interlacements import (DimensionError, GreenBlock, GreenTable, NumericalError, get_table,
                            green_at, return_prob)
from interlacements.green import canonical, canonical_array
from oracles import fourier_g0_d3, watson_g0_d3


def unit_moves(nu):
    for j in range(nu):
        for s in (1, -1):
            e = np.zeros(nu, dtype=np.int64)
            e[j] = s
            yield e


def test_g0_d3_matches_fourier_oracle(g3):
    assert abs(g3.value((0, 0, 0)) - fourier_g0_d3()) <= 1e-8


def test_g0_d3_matches_closed_form(g3):
    assert g3.value((0, 0, 0)) == pytest.approx(watson_g0_d3(), abs=1e-12)


def test_neighbour_value_is_g0_minus_one(g3):
    assert g3.value((1, 0, 0)) == pytest.approx(g3.value((0, 0, 0)) - 1, abs=1e-10)


@pytest.mark.parametrize("nu", [3, 4, 5])
def test_harmonic_identity(nu):
    g = get_table(nu)
    pts = np.array([p for p in itertools.product(range(6), repeat=nu)
                    if list(p) == sorted(p, reverse=True)])
    lhs = g.values(pts)
    rhs = sum(g.values(pts + e) for e in unit_moves(nu)) / (2 * nu)
    rhs[np.all(pts == 0, axis=1)] += 1.0
    assert np.abs(lhs - rhs).max() <= 10 * g.tol


@pytest.mark.parametrize("nu", [3, 4, 5])
def test_positive_and_g0_above_one(nu):
    g = get_table(nu)
    assert g.value((0,) * nu) > 1
    pts = np.random.default_rng(nu).integers(-40, 41, size=(200, nu))
    assert np.all(g.values(pts) > 0)


@pytest.mark.parametrize("nu", [3, 4, 5])
def test_decay_ratio(nu):
    g = get_table(nu)
    x = np.array([20] + [0] * (nu - 1))
    ratio = g.value(2 * x) / g.value(x)
    assert ratio == pytest.approx(2.0 ** -(nu - 2), rel=0.05)


@given(st.lists(st.integers(-30, 30), min_size=3, max_size=3), st.permutations(range(3)),
       st.lists(st.sampled_from([-1, 1]), min_size=3, max_size=3))
@settings(max_examples=60, deadline=None)
def test_symmetry_is_exact(x, perm, signs):
    g = get_table(3)
    y = [signs[i] * x[perm[i]] for i in range(3)]
    assert g.value(x) == g.value(y)


def test_memoization_is_bit_stable():
    g = GreenTable(3)
    a = g.value((3, 1, 2))
    g.values(np.random.default_rng(0).integers(-9, 9, size=(500, 3)))
    assert g.value((3, 1, 2)) == a
    assert green_at(g, (2, 3, 1)) == a


def test_values_agree_with_scalar_calls(g3):
    pts = np.random.default_rng(1).integers(-12, 13, size=(50, 3))
    vec = g3.values(pts)
    assert all(vec[i] == g3.value(p) for i, p in enumerate(pts))


def test_frozen_table_refuses_new_points():
    g = GreenTable(3)
    g.value((1, 0, 0))
    g.freeze()
    assert g.value((0, 0, 1)) > 0
    with pytest.raises(KeyError):
        g.value((5, 5, 5))


def test_error_estimate_within_tolerance(g3):
    assert 0 <= g3.error((4, 2, 1)) <= g3.tol


def test_dimension_errors():
    with pytest.raises(DimensionError):
        GreenTable(2)
    with pytest.raises(DimensionError):
        get_table(3).value((1, 2))


def test_nonconvergence_reports_estimate():
    g = GreenTable(3, tol=1e-30)
    with pytest.raises(NumericalError) as info:
        g.value((1, 0, 0))
    assert info.value.estimate > 1e-30
    with pytest.raises(NumericalError):
        GreenTable(3, cutoff_exp=10).value((50, 0, 0))


def test_canonical_forms():
    assert canonical((-1, 3, 0)) == (3, 1, 0)
    np.testing.assert_array_equal(canonical_array(np.array([[-1, 3, 0], [2, -2, 5]])),
                                  [[3, 1, 0], [5, 2, 2]])


@pytest.mark.parametrize("nu,radius", [(3, 15), (4, 6)])
def test_block_lookup_matches_table(nu, radius):
    g = get_table(nu)
    block = GreenBlock(g, radius)
    pts = np.random.default_rng(nu).integers(-radius, radius + 1, size=(300, nu))
    np.testing.assert_array_equal(block(pts), g.values(pts))
    with pytest.raises(ValueError):
        block(np.full((1, nu), radius + 1))


def test_return_prob_d3(g0_d3):
    assert return_prob(3) == pytest.approx(1 - 1 / watson_g0_d3(), abs=1e-12)
    assert return_prob(3) == pytest.approx(0.3405373, abs=1e-7)


def test_return_prob_decreasing_and_large_dim():
    q = [return_prob(nu) for nu in range(3, 21)]
    assert all(0 < v < 1 for v in q)
    assert all(a > b for a, b in zip(q, q[1:]))
    for nu in range(12, 21):
        assert return_prob(nu) == pytest.approx(1 / (2 * nu), rel=0.15)


def test_return_prob_rejects_low_dimension():
    with pytest.raises(DimensionError):
        return_prob(2)


def test_high_dimension_value_is_finite():
    g = get_table(16)
    assert math.isfinite(g.value((0,) * 16)) and g.value((0,) * 16) > 1
