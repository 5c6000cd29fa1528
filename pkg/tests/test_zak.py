import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opsampl.errors import DimensionMismatch
from opsampl.tfmodel import LatticeParams, SpreadingGrid
from opsampl.zak import ZakGrid, inverse_zak, quasiperiodize, zak


def direct_zak(f, p):
    L, M, N = p.L, p.K, p.N
    Z = np.zeros((L, M), dtype=complex)
    for j in range(L):
        for k in range(M):
            Z[j, k] = sum(f[(j - m * L) % N] * np.exp(2j * np.pi * m * k / M) for m in range(M))
    return Z


params = st.builds(LatticeParams, st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))
seeds = st.integers(0, 2**32 - 1)


def rand_f(p, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(p.N) + 1j * rng.standard_normal(p.N)


def test_zak_examples():
    p = LatticeParams(2, 2, 3)
    L, M = p.L, p.K
    f = np.zeros(p.N)
    f[0] = 1
    Z = zak(f, p).values
    expected = np.zeros((L, M))
    expected[0] = 1
    np.testing.assert_allclose(Z, expected, atol=1e-15)
    f = np.zeros(p.N)
    f[L] = 1
    # the single surviving term is m = M - 1
    np.testing.assert_allclose(zak(f, p).values[0], np.exp(-2j * np.pi * np.arange(M) / M), atol=1e-15)
    np.testing.assert_allclose(zak(f, p).values, direct_zak(f, p), atol=1e-14)
    Z = zak(np.ones(p.N), p).values
    expected = np.zeros((L, M))
    expected[:, 0] = M
    np.testing.assert_allclose(Z, expected, atol=1e-13)
    with pytest.raises(DimensionMismatch):
        zak(np.ones(5), p)


@settings(max_examples=30)
@given(params, seeds)
def test_zak_matches_direct_sum(p, seed):
    f = rand_f(p, seed)
    np.testing.assert_allclose(zak(f, p).values, direct_zak(f, p), atol=1e-12)


@settings(max_examples=60)
@given(params, seeds)
def test_parseval(p, seed):
    f = rand_f(p, seed)
    Z = zak(f, p).values
    assert np.sum(np.abs(Z) ** 2) == pytest.approx(p.K * np.sum(np.abs(f) ** 2), rel=1e-12)
    # the unitary normalization
    assert np.linalg.norm(Z / np.sqrt(p.K)) == pytest.approx(np.linalg.norm(f), rel=1e-12)


@settings(max_examples=60)
@given(params, seeds)
def test_quasiperiodicity(p, seed):
    f = rand_f(p, seed)
    Z = zak(f, p)
    k = np.arange(p.K)
    advanced = zak(np.roll(f, -p.L), p).values  # g[n] = f[n + L]
    np.testing.assert_allclose(advanced, Z.values * np.exp(2j * np.pi * k / p.K), atol=1e-12)
    j = np.arange(p.L)[:, None]
    np.testing.assert_allclose(Z.at(j + p.L, k[None, :]), advanced, atol=1e-12)
    np.testing.assert_allclose(Z.at(j, k[None, :] + p.K), Z.values, atol=0)


@settings(max_examples=100)
@given(st.builds(LatticeParams, st.integers(1, 8), st.integers(1, 8), st.integers(1, 16)), seeds)
def test_inverse_round_trip(p, seed):
    f = rand_f(p, seed)
    np.testing.assert_allclose(inverse_zak(zak(f, p)), f, atol=1e-12 * np.linalg.norm(f))


def test_inverse_examples():
    p = LatticeParams(3, 2, 2)
    assert np.all(inverse_zak(ZakGrid(np.zeros((p.L, p.K)), p)) == 0)
    Z = np.zeros((p.L, p.K))
    Z[0] = 1
    f = np.zeros(p.N)
    f[0] = 1
    np.testing.assert_allclose(inverse_zak(ZakGrid(Z, p)), f, atol=1e-15)
    with pytest.raises(DimensionMismatch):
        ZakGrid(np.zeros((2, 2)), p)


def test_quasiperiodize_examples():
    p = LatticeParams(3, 2, 2)
    L, PK, N = p.L, p.P * p.K, p.N
    rng = np.random.default_rng(0)
    tau, mu = rng.integers(0, L, 5), rng.integers(0, PK, 5)
    vals = rng.standard_normal(5) + 1j
    eta = SpreadingGrid(N, tau, mu, vals)
    Q = quasiperiodize(eta, p)
    expected = np.zeros((L, PK), dtype=complex)
    np.add.at(expected, (tau, mu), vals)
    np.testing.assert_allclose(Q, expected, atol=1e-15)
    t0, m0 = 3, 5
    Q = quasiperiodize(SpreadingGrid(N, [t0 + L], [m0], [1]), p)
    assert Q[t0, m0] == pytest.approx(np.exp(-2j * np.pi * m0 * L / N))
    assert np.count_nonzero(Q) == 1
    # two entries aliasing to the same point
    Q = quasiperiodize(SpreadingGrid(N, [1, 1 + L], [2, 2 + PK], [1, 1]), p)
    assert Q[1, 2] == pytest.approx(1 + np.exp(-2j * np.pi * (2 + PK) * L / N))
