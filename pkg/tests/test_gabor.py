import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opsampl.errors import DimensionMismatch, DomainError
from opsampl.gabor import (
    WeightVector,
    frame_sum,
    gabor_matrix,
    gabor_vector,
    modulate,
    translate,
    unit_root,
)


def naive_gabor(c):
    # entrywise from the block definition: G[n, qP + m] = c[(n - q) mod P] * exp(2 pi i n m / P)
    P = len(c)
    G = np.zeros((P, P * P), dtype=complex)
    for q in range(P):
        for m in range(P):
            for n in range(P):
                G[n, q * P + m] = c[(n - q) % P] * np.exp(2j * np.pi * n * m / P)
    return G


def rand_c(rng, P):
    return rng.standard_normal(P) + 1j * rng.standard_normal(P)


sizes = st.integers(min_value=1, max_value=8)
seeds = st.integers(min_value=0, max_value=2**32 - 1)


def test_translate_examples():
    np.testing.assert_array_equal(translate([1, 2, 3], 0), [1, 2, 3])
    np.testing.assert_array_equal(translate([1, 2, 3], 1), [3, 1, 2])
    np.testing.assert_array_equal(translate([1, 2, 3], 3), [1, 2, 3])
    np.testing.assert_array_equal(translate([1, 2, 3], -1), [2, 3, 1])


def test_modulate_examples():
    np.testing.assert_allclose(modulate(np.array([1, 1]), 1), [1, -1], atol=1e-15)
    np.testing.assert_allclose(modulate(np.array([1, 2, 3]), 0), [1, 2, 3])


@given(sizes, seeds)
def test_modulate_inverse(P, seed):
    x = rand_c(np.random.default_rng(seed), P)
    np.testing.assert_allclose(modulate(modulate(x, 1), P - 1), x, atol=1e-12)


def test_unit_root_reduces_exponent():
    assert unit_root(10**12 + 1, 7) == pytest.approx(np.exp(2j * np.pi / 7 * ((10**12 + 1) % 7)), abs=1e-15)


def test_weight_vector():
    c = WeightVector([1, 2j, 3])
    assert c.period == 3 and len(c) == 3
    assert c[4] == 2j and c[-1] == 3
    assert WeightVector.from_json(c.to_json()).entries.tolist() == c.entries.tolist()
    with pytest.raises(DomainError):
        WeightVector([])


def test_gabor_small_examples():
    G = gabor_matrix([1, 1]).matrix
    np.testing.assert_allclose(G.T, [[1, 1], [1, -1], [1, 1], [1, -1]], atol=1e-15)
    G = gabor_matrix([1, 0]).matrix
    np.testing.assert_allclose(G.T, [[1, 0], [1, 0], [0, 1], [0, -1]], atol=1e-15)
    assert np.all(gabor_matrix(np.zeros(3)).matrix == 0)


@given(sizes, seeds)
def test_gabor_matches_entrywise_definition(P, seed):
    c = rand_c(np.random.default_rng(seed), P)
    G = gabor_matrix(c)
    assert G.shape == (P, P * P)
    np.testing.assert_allclose(G.matrix, naive_gabor(c), atol=1e-12)


@given(sizes, seeds)
def test_columns_are_shifts_and_have_norm_of_c(P, seed):
    c = rand_c(np.random.default_rng(seed), P)
    G = gabor_matrix(c)
    for q in range(P):
        for m in range(P):
            col = G.column(q, m)
            # column (q, m) = M^m T^q c = w^{qm} T^q M^m c
            np.testing.assert_allclose(col, modulate(translate(c, q), m), atol=1e-12)
            np.testing.assert_allclose(col, unit_root(q * m, P) * gabor_vector(c, q, m), atol=1e-12)
            assert np.linalg.norm(col) ** 2 == pytest.approx(np.linalg.norm(c) ** 2, rel=1e-12)


@given(sizes, seeds, st.integers(0, 20), st.integers(0, 20))
def test_commutation_relation(P, seed, q, m):
    x = rand_c(np.random.default_rng(seed), P)
    lhs = modulate(translate(x, q), m)
    rhs = unit_root(q * m, P) * translate(modulate(x, m), q)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_column_index_bijection():
    G = gabor_matrix(np.ones(4))
    seen = {G.column_index(q, m) for q in range(4) for m in range(4)}
    assert seen == set(range(16))
    assert G.cell_of(G.column_index(2, 3)) == (2, 3)
    with pytest.raises(DomainError):
        G.column_index(4, 0)
    np.testing.assert_array_equal(G.restrict([(1, 2), (0, 0)]), G.matrix[:, [6, 0]])


def direct_frame_sum(c, x):
    P = len(c)
    return sum(abs(np.vdot(gabor_vector(c, q, m), x)) ** 2 for q in range(P) for m in range(P))


def test_frame_sum_examples():
    rng = np.random.default_rng(0)
    for P in range(1, 7):
        delta = np.zeros(P)
        delta[0] = 1
        x = rand_c(rng, P)
        assert frame_sum(delta, x) == pytest.approx(P * np.linalg.norm(x) ** 2, rel=1e-12)
        assert frame_sum(rand_c(rng, P), np.zeros(P)) == 0
    c, x = rand_c(rng, 4), rand_c(rng, 4)
    assert frame_sum(c, x) == pytest.approx(direct_frame_sum(c, x), rel=1e-12)
    with pytest.raises(DimensionMismatch):
        frame_sum(c, np.ones(3))


@settings(max_examples=100)
@given(st.integers(2, 8), seeds)
def test_tight_frame(P, seed):
    rng = np.random.default_rng(seed)
    c, x = rand_c(rng, P), rand_c(rng, P)
    expected = P * np.linalg.norm(c) ** 2 * np.linalg.norm(x) ** 2
    assert frame_sum(c, x) == pytest.approx(expected, rel=1e-12)
