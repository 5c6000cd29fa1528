"""
Discrete non-normalized Zak transform with period L = P*R samples and
quasiperiodization of spreading functions.

    Z[j, k] = sum_{m < M} f[(j - m L) mod N] exp(2 pi i m k / M),   M = K.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .tfmodel import LatticeParams


@dataclass(frozen=True, eq=False)
class ZakGrid:
    values: np.ndarray
    params: LatticeParams

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.params.L, self.params.K):
            raise DimensionMismatch(f"Zak grid shape {v.shape} != (L, M) = {(self.params.L, self.params.K)}")
        object.__setattr__(self, "values", v)

    @property
    def L(self):
        return self.params.L

    @property
    def M(self):
        return self.params.K

    def at(self, j, k):
        """Evaluate at arbitrary integers using quasiperiodicity in j and periodicity in k."""
        j = np.asarray(j)
        k = np.asarray(k)
        shift, jj = np.divmod(j, self.L)
        kk = np.mod(k, self.M)
        return self.values[jj, kk] * np.exp(2j * np.pi * np.mod(shift * kk, self.M) / self.M)


def zak(f, params):
    f = np.asarray(f, dtype=complex)
    if f.shape != (params.N,):
        raise DimensionMismatch(f"signal length {f.shape} != N = {params.N}")
    # rows F[r, j] = f[r L + j]; Z[j, k] = sum_r F[r, j] exp(-2 pi i r k / M)
    F = f.reshape(params.K, params.L)
    return ZakGrid(np.fft.fft(F, axis=0).T, params)


def inverse_zak(Z):
    F = np.fft.ifft(Z.values.T, axis=0)
    return F.reshape(-1)


def quasiperiodize(eta, params):
    """Fold a spreading grid onto [0, L) x [0, P K).

    etaQ[tau, mu] = sum_{a < K, b < R} eta[tau + a L, mu + b P K] exp(-2 pi i mu a L / N).
    """
    N, L, PK = params.N, params.L, params.P * params.K
    if eta.N != N:
        raise DimensionMismatch(f"spreading grid has N = {eta.N}, params give {N}")
    out = np.zeros((L, PK), dtype=complex)
    a, tau = np.divmod(eta.tau, L)
    mu = np.mod(eta.mu, PK)
    phase = np.exp(-2j * np.pi * np.mod(eta.mu * a * L, N) / N)
    np.add.at(out, (tau, mu), eta.values * phase)
    return out
