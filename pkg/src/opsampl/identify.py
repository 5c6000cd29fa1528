"""
Operator sampling: sound a channel with a weighted delta train, assemble the
P x P^2 system from the Zak transform of the output, and solve it.

At grid point (j, k), j in [0, R), k in [0, K), the discrete identity

    Zvec = G(c) eta_vec

holds exactly, where

    Zvec[p]        = exp(-2 pi i k p R / N) Z(Hg)[j + p R, k]
    eta_vec[(q,m)] = K w^{-qm} exp(-2 pi i k q R / N) etaQ[j + q R, k + m K]

with w = exp(2 pi i / P) and etaQ the quasiperiodized spreading function.
"""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    DomainError,
    IllConditioned,
    NotCoprime,
    TooManyCells,
    UnsupportedDimension,
    WindowInvalid,
)
from .gabor import GaborMatrix, as_window, gabor_matrix, unit_root
from .spark import corollary_window, random_window
from .tfmodel import (
    DENSE_LIMIT,
    DiscreteChannel,
    LatticeParams,
    SpreadingGrid,
    SpreadingGrid2D,
    SupportSet,
    apply,
    apply_2d,
    delta_train,
    delta_train_2d,
    to_impulse_response,
    to_kn_symbol,
)
from .zak import quasiperiodize, zak

COND_THRESHOLD = 1e8


def _phase(num, den):
    return np.exp(2j * np.pi * np.mod(num, den) / den)


@dataclass(frozen=True, eq=False)
class IdentSystem:
    """Per-grid-point left sides Zvec[j, k, :] of the system Zvec = G(c) eta_vec."""

    Zvec: np.ndarray
    G: GaborMatrix
    params: LatticeParams
    active_cells: SupportSet = None

    @property
    def grid(self):
        return [(j, k) for j in range(self.params.R) for k in range(self.params.K)]

    def with_support(self, support):
        return IdentSystem(self.Zvec, self.G, self.params, support)


@dataclass(eq=False)
class IdentResult:
    eta_hat: object
    residual: np.ndarray
    cond: np.ndarray
    support: object = None
    kernel_error: float = None
    eta_error: float = None
    extra: dict = field(default_factory=dict)

    @property
    def max_residual(self):
        return float(np.max(self.residual)) if self.residual.size else 0.0

    def residual_rows(self):
        """Rows (j, k, residual, cond) for every grid point."""
        R, K = self.residual.shape[:2]
        return [
            (j, k, float(self.residual[j, k]), float(self.cond[j, k]))
            for j in range(R)
            for k in range(K)
        ]

    def residual_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j", "k", "residual", "cond"])
        for j, k, r, c in self.residual_rows():
            w.writerow([j, k, f"{r:.6e}", f"{c:.6e}"])
        return buf.getvalue()


def sound(H, c):
    """Channel response to the weighted delta train with weights c."""
    return apply(H, delta_train(c, H.params))


def assemble(output, c, params, support=None):
    output = np.asarray(output, dtype=complex)
    if output.shape != (params.N,):
        raise DimensionMismatch(f"output length {output.shape} != N = {params.N}")
    c = as_window(c)
    if c.period != params.P:
        raise DimensionMismatch(f"window period {c.period} != P = {params.P}")
    P, R, K, N = params.P, params.R, params.K, params.N
    Z = zak(output, params).values  # (L, K)
    j = np.arange(R)[:, None, None]
    k = np.arange(K)[None, :, None]
    p = np.arange(P)[None, None, :]
    Zvec = _phase(-k * p * R, N) * Z[j + p * R, k]
    return IdentSystem(Zvec, gabor_matrix(c), params, support)


def eta_vector(H):
    """Ground-truth unknown vectors eta_vec[j, k, (q, m)] for a simulated channel."""
    params = H.params
    P, R, K, N = params.P, params.R, params.K, params.N
    etaQ = quasiperiodize(H.spreading, params)  # (L, P K)
    j = np.arange(R)[:, None, None, None]
    k = np.arange(K)[None, :, None, None]
    q = np.arange(P)[None, None, :, None]
    m = np.arange(P)[None, None, None, :]
    vec = K * unit_root(-q * m, P) * _phase(-k * q * R, N) * etaQ[j + q * R, k + m * K]
    return vec.reshape(R, K, P * P)


def _relative(err, ref):
    ref = float(ref)
    return float(err) / ref if ref > 0 else float(err)


def _restricted(G, cols, threshold):
    A = G.matrix[:, cols]
    cond = float(np.linalg.cond(A)) if len(cols) else 1.0
    if not np.isfinite(cond) or cond > threshold:
        raise IllConditioned(
            f"restricted Gabor matrix on columns {list(cols)} has condition number {cond:.3g}", cond
        )
    return A, cond


def solve_known_support(sys, threshold=COND_THRESHOLD):
    """Least-squares solve on the known active cells at every grid point."""
    S = sys.active_cells
    if S is None:
        raise DomainError("the system carries no support set")
    params = sys.params
    P, R, K, N = params.P, params.R, params.K, params.N
    if len(S) > P:
        raise TooManyCells(f"{len(S)} active cells exceed P = {P}")
    taus, mus, vals = [], [], []
    residual = np.zeros((R, K))
    cond = np.zeros((R, K))
    for k in range(K):
        active = S.active_at(k)
        cols = [q * P + m_eff for (q, _), m_eff, _ in active]
        A, cnd = _restricted(sys.G, cols, threshold)
        rhs = sys.Zvec[:, k, :].T  # (P, R)
        if cols:
            X = np.linalg.lstsq(A, rhs, rcond=None)[0]
            res = A @ X - rhs
        else:
            X = np.zeros((0, R), dtype=complex)
            res = -rhs
        nrm = np.linalg.norm(rhs, axis=0)
        residual[:, k] = np.where(nrm > 0, np.linalg.norm(res, axis=0) / np.where(nrm > 0, nrm, 1), 0.0)
        cond[:, k] = cnd
        for row, ((q, _), m_eff, mu) in enumerate(active):
            unwind = unit_root(q * m_eff, P) * _phase(k * q * R, N) / K
            taus.append(np.arange(R) + q * R)
            mus.append(np.full(R, mu))
            vals.append(X[row] * unwind)
    if taus:
        eta = SpreadingGrid(N, np.concatenate(taus), np.concatenate(mus), np.concatenate(vals))
    else:
        eta = SpreadingGrid(N)
    return IdentResult(eta, residual, cond, S)


def channel_errors(result, H):
    """Fill eta_error and kernel_error of ``result`` against the true channel."""
    est = DiscreteChannel(result.eta_hat, H.params)
    d_eta = SpreadingGrid(
        H.params.N,
        np.concatenate([H.spreading.tau, est.spreading.tau]),
        np.concatenate([H.spreading.mu, est.spreading.mu]),
        np.concatenate([H.spreading.values, -est.spreading.values]),
    )
    result.eta_error = _relative(d_eta.norm(), H.spreading.norm())
    if H.params.N <= DENSE_LIMIT:
        h_true = to_impulse_response(H)
        h_est = to_impulse_response(est)
        result.kernel_error = _relative(np.linalg.norm(h_est - h_true), np.linalg.norm(h_true))
    else:
        result.kernel_error = result.eta_error
    return result


def identify(H, c, support, threshold=COND_THRESHOLD):
    """sound, assemble and solve on the known support; errors measured against H."""
    out = sound(H, c)
    res = solve_known_support(assemble(out, c, H.params, support), threshold)
    return channel_errors(res, H)


# -- single-cell reconstruction and norm identity -------------------------------------


def reconstruct_rect(output, params, c0=1.0, band_start=None):
    """Impulse response band h[x, tau], tau in [0, R), for a single-cell channel (P = 1).

    The samples Hg[n R + tau] = c0 h[n R + tau, tau] are interpolated in x with
    the Dirichlet kernel of the K Doppler bins starting at ``band_start``
    (default: centered, -(K // 2)).
    """
    if params.P != 1:
        raise DomainError(f"single-cell reconstruction needs P = 1, got P = {params.P}")
    output = np.asarray(output, dtype=complex)
    if output.shape != (params.N,):
        raise DimensionMismatch(f"output length {output.shape} != N = {params.N}")
    R, K, N = params.R, params.K, params.N
    start = -(K // 2) if band_start is None else int(band_start)
    band = np.arange(start, start + K)
    samples = output.reshape(K, R) / c0  # samples[n, tau] = h[n R + tau, tau]
    x = np.arange(N)
    out = np.zeros((N, R), dtype=complex)
    n = np.arange(K)
    for tau in range(R):
        y = x[:, None] - (n[None, :] * R + tau)  # (N, K)
        D = _phase(np.multiply.outer(y, band), N).sum(axis=-1) / K
        out[:, tau] = D @ samples[:, tau]
    return out


def norm_identity(H):
    """Physical L2 norms (||Hg||, ||sigma_H||) of a single-cell channel sounded by the unit train.

    Discrete values are mapped to continuous units with sample spacing delta:
    kernel kappa / delta, ||Hg||^2 = sum |Hg|^2 / delta and
    ||sigma||^2 = sum |sigma|^2 / N.
    """
    params = H.params
    out = sound(H, np.ones(params.P))
    hg = math.sqrt(float(np.sum(np.abs(out) ** 2)) / params.delta)
    sigma = math.sqrt(float(np.sum(np.abs(to_kn_symbol(H)) ** 2)) / params.N)
    return hg, sigma


# -- general reconstruction formula ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class WindowPair:
    """Delay window r on Z_L and Doppler window phi_hat on Z_{P K}.

    Both must satisfy a partition of unity over their lattice (period R for r,
    period K for phi_hat) and vanish outside one fundamental cell.
    """

    r: np.ndarray
    phi_hat: np.ndarray

    @classmethod
    def indicator(cls, params):
        r = np.zeros(params.L)
        r[: params.R] = 1.0
        phi = np.zeros(params.P * params.K)
        phi[: params.K] = 1.0
        return cls(r, phi)

    def validate(self, params, tol=1e-10):
        r = np.asarray(self.r, dtype=complex)
        phi = np.asarray(self.phi_hat, dtype=complex)
        if r.shape != (params.L,) or phi.shape != (params.P * params.K,):
            raise WindowInvalid(f"window shapes {r.shape}, {phi.shape} != {(params.L,)}, {(params.P * params.K,)}")
        for name, w, period in (("r", r, params.R), ("phi_hat", phi, params.K)):
            total = w.reshape(-1, period).sum(axis=0)
            if np.max(np.abs(total - 1)) > tol:
                raise WindowInvalid(f"{name} violates the partition of unity by {np.max(np.abs(total - 1)):.3g}")
            if np.max(np.abs(w[period:]), initial=0.0) > tol:
                raise WindowInvalid(f"{name} is not supported in one fundamental cell")
        return r, phi


def coefficient_sequences(G, support, k, threshold=COND_THRESHOLD):
    """Period-P sequences b_j (rows of the inverse of the restricted Gabor matrix) at Doppler point k."""
    P = G.P
    active = support.active_at(k)
    cols = [q * P + m_eff for (q, _), m_eff, _ in active]
    A, _ = _restricted(G, cols, threshold)
    return np.linalg.pinv(A), active


def reconstruct_general(output, c, support, windows=None, threshold=COND_THRESHOLD):
    """Impulse response h[x, tau] for tau in [0, L) synthesized directly from output samples.

    h[x, tau] = r[j0] sum_k phi_hat[k] (1/K) sum_{cells in column q}
                exp(2 pi i mu (x - tau)/N) w^{q m} exp(2 pi i k q R / N)
                sum_{s in Z_PK} b_cell[s mod P] exp(-2 pi i k s R / N) Hg[j0 + s R]

    with tau = q R + j0 and mu, m the Doppler bin and Gabor column of the cell at k.
    """
    params = support.params
    P, R, K, N, L = params.P, params.R, params.K, params.N, params.L
    output = np.asarray(output, dtype=complex)
    if output.shape != (N,):
        raise DimensionMismatch(f"output length {output.shape} != N = {N}")
    G = gabor_matrix(c)
    windows = windows or WindowPair.indicator(params)
    r, phi = windows.validate(params)
    s = np.arange(P * K)
    x = np.arange(N)
    h = np.zeros((N, L), dtype=complex)
    for k in range(K):
        if phi[k] == 0:
            continue
        B, active = coefficient_sequences(G, support, k, threshold)
        for row, ((q, _), m_eff, mu) in enumerate(active):
            b = B[row, s % P] * _phase(-k * s * R, N)
            pre = phi[k] * unit_root(q * m_eff, P) * _phase(k * q * R, N) / K
            for j0 in range(R):
                tau = q * R + j0
                if r[j0] == 0:
                    continue
                coef = r[j0] * pre * np.dot(b, output[(j0 + s * R) % N])
                h[:, tau] += coef * _phase(mu * (x - tau), N)
    return h


# -- finite matrix probing ------------------------------------------------------------


def probe_finite(eta, c):
    """M_eta c = sum_{(q, m)} eta_(q,m) M^m T^q c = G(c) eta."""
    G = gabor_matrix(c)
    eta = np.asarray(eta, dtype=complex)
    if eta.shape != (G.P**2,):
        raise DimensionMismatch(f"eta has shape {eta.shape}, expected ({G.P ** 2},)")
    return G.matrix @ eta


def identify_finite(Z, c, support, threshold=COND_THRESHOLD):
    """Recover a P^2 coefficient vector supported on the listed (q, m) cells from Z = G(c) eta."""
    G = gabor_matrix(c)
    P = G.P
    Z = np.asarray(Z, dtype=complex)
    if Z.shape != (P,):
        raise DimensionMismatch(f"Z has shape {Z.shape}, expected ({P},)")
    cells = sorted({tuple(cell) for cell in support})
    if len(cells) > P:
        raise TooManyCells(f"{len(cells)} cells exceed P = {P}")
    cols = [G.column_index(q, m) for q, m in cells]
    A, _ = _restricted(G, cols, threshold)
    eta = np.zeros(P * P, dtype=complex)
    if cols:
        eta[cols] = np.linalg.lstsq(A, Z, rcond=None)[0]
    return eta


def necessity_demo(P, extra, c=None, seed=0):
    """Exhibit non-identifiability with P + extra active columns of G(c)."""
    if extra < 1 or P + extra > P * P:
        raise DomainError(f"need 1 <= extra <= P^2 - P, got extra = {extra} for P = {P}")
    if c is None:
        c = corollary_window(P) if P >= 4 else random_window(P, seed)
    G = gabor_matrix(c)
    cols = list(range(P + extra))
    A = G.matrix[:, cols]
    _, sv, Vh = np.linalg.svd(A)
    rank = int(np.sum(sv > sv[0] * 1e-10)) if sv.size else 0
    null = Vh[rank:].conj()
    v = null[0]
    return {
        "P": P,
        "extra": extra,
        "columns": cols,
        "cells": [list(G.cell_of(i)) for i in cols],
        "unknowns": len(cols),
        "rank": rank,
        "nullity": int(null.shape[0]),
        "null_vector": [[float(z.real), float(z.imag)] for z in v],
        "null_residual": float(np.linalg.norm(A @ v)),
        "null_basis_residual": float(np.linalg.norm(A @ null.T)),
    }


# -- two-dimensional extension --------------------------------------------------------


def flat_index(n, P):
    """Mixed-radix flattening n1 + n2 P1 (+ n3 P1 P2 ...)."""
    idx, base = 0, 1
    for ni, Pi in zip(n, P):
        idx += (ni % Pi) * base
        base *= Pi
    return idx


def crt_index(n, P):
    """The n in Z_{P1 P2 ...} with n = n_i mod P_i (Chinese remainder theorem)."""
    _check_coprime(P)
    total = math.prod(P)
    idx = 0
    for ni, Pi in zip(n, P):
        rest = total // Pi
        idx += (ni % Pi) * rest * pow(rest, -1, Pi)
    return idx % total


def _check_coprime(P):
    for a in range(len(P)):
        for b in range(a + 1, len(P)):
            if math.gcd(P[a], P[b]) != 1:
                raise NotCoprime(f"periods {P[a]} and {P[b]} are not coprime")


def window_2d(c_tilde, P, index_map="mixed"):
    """Weight grid c[n1, n2] = c_tilde[index(n1, n2)]."""
    c_tilde = np.asarray(as_window(c_tilde).entries)
    if c_tilde.size != math.prod(P):
        raise DimensionMismatch(f"window length {c_tilde.size} != {math.prod(P)}")
    index = {"mixed": flat_index, "crt": crt_index}[index_map]
    out = np.empty(tuple(P), dtype=complex)
    for n1 in range(P[0]):
        for n2 in range(P[1]):
            out[n1, n2] = c_tilde[index((n1, n2), P)]
    return out


def _cells_2d(P1, P2):
    return [((q1, q2), (m1, m2)) for q1 in range(P1) for q2 in range(P2) for m1 in range(P1) for m2 in range(P2)]


def gabor_matrix_2d(c):
    """(P1 P2) x (P1 P2)^2 matrix with columns M^m T^q c on Z_P1 x Z_P2, column order of _cells_2d."""
    c = np.asarray(c, dtype=complex)
    P1, P2 = c.shape
    p1, p2 = np.meshgrid(np.arange(P1), np.arange(P2), indexing="ij")
    cols = []
    for (q1, q2), (m1, m2) in _cells_2d(P1, P2):
        shifted = np.roll(c, (q1, q2), axis=(0, 1))
        cols.append((shifted * unit_root(m1 * p1, P1) * unit_root(m2 * p2, P2)).reshape(-1))
    return np.stack(cols, axis=1)


def _check_params_2d(params):
    params = tuple(params)
    if len(params) != 2:
        raise UnsupportedDimension(f"only d = 2 is supported, got d = {len(params)}")
    _check_coprime([p.P for p in params])
    return params


def assemble_2d(output, c, params):
    """Zvec[j1, j2, k1, k2, (p1, p2)] for the separable two-dimensional system."""
    p1, p2 = _check_params_2d(params)
    P1, R1, K1, N1, L1 = p1.P, p1.R, p1.K, p1.N, p1.L
    P2, R2, K2, N2, L2 = p2.P, p2.R, p2.K, p2.N, p2.L
    F = np.asarray(output, dtype=complex).reshape(K1, L1, K2, L2)
    Z = np.fft.fft(np.fft.fft(F, axis=0), axis=2).transpose(1, 3, 0, 2)  # (L1, L2, K1, K2)
    j1, j2, k1, k2, q1, q2 = np.ix_(range(R1), range(R2), range(K1), range(K2), range(P1), range(P2))
    Zvec = _phase(-k1 * q1 * R1, N1) * _phase(-k2 * q2 * R2, N2) * Z[j1 + q1 * R1, j2 + q2 * R2, k1, k2]
    return Zvec.reshape(R1, R2, K1, K2, P1 * P2), gabor_matrix_2d(c)


def identify_2d(H, c_tilde, support, index_map="mixed", threshold=COND_THRESHOLD):
    """Identify a two-dimensional channel from its response to a product delta train.

    The weight grid is built from the length P1 P2 window ``c_tilde`` by
    ``index_map`` ("mixed": n1 + n2 P1; "crt": Chinese remainder map).
    """
    p1, p2 = _check_params_2d(H.params)
    P1, P2 = p1.P, p2.P
    if len(support) > P1 * P2:
        raise TooManyCells(f"{len(support)} cells exceed P1 P2 = {P1 * P2}")
    c = window_2d(c_tilde, (P1, P2), index_map)
    out = apply_2d(H, delta_train_2d(c, (p1, p2)))
    Zvec, G2 = assemble_2d(out, c, (p1, p2))
    order = {cell: i for i, cell in enumerate(_cells_2d(P1, P2))}
    cells = support.sorted_cells()
    A, cnd = _restricted(GaborMatrix(as_window(np.ones(1)), G2), [order[x] for x in cells], threshold)
    R1, R2, K1, K2 = Zvec.shape[:4]
    rhs = Zvec.reshape(-1, P1 * P2).T
    X = np.linalg.lstsq(A, rhs, rcond=None)[0] if cells else np.zeros((0, rhs.shape[1]), dtype=complex)
    res = A @ X - rhs if cells else -rhs
    nrm = np.linalg.norm(rhs, axis=0)
    residual = np.where(nrm > 0, np.linalg.norm(res, axis=0) / np.where(nrm > 0, nrm, 1), 0.0)
    X = X.reshape(len(cells), R1, R2, K1, K2)
    j1, j2, k1, k2 = np.meshgrid(range(R1), range(R2), range(K1), range(K2), indexing="ij")
    taus, mus, vals = [], [], []
    for i, ((q1, q2), (m1, m2)) in enumerate(cells):
        unwind = (
            unit_root(q1 * m1, P1) * unit_root(q2 * m2, P2)
            * _phase(k1 * q1 * R1, p1.N) * _phase(k2 * q2 * R2, p2.N) / (K1 * K2)
        )
        taus.append(np.stack([(j1 + q1 * R1).ravel(), (j2 + q2 * R2).ravel()], axis=1))
        mus.append(np.stack([(k1 + m1 * K1).ravel(), (k2 + m2 * K2).ravel()], axis=1))
        vals.append((X[i] * unwind).ravel())
    if cells:
        eta = SpreadingGrid2D(H.N, np.concatenate(taus), np.concatenate(mus), np.concatenate(vals))
    else:
        eta = SpreadingGrid2D(H.N, np.zeros((0, 2)), np.zeros((0, 2)), [])
    result = IdentResult(eta, residual.reshape(R1 * R2, K1 * K2), np.full((R1 * R2, K1 * K2), cnd), support)
    true, est = H.spreading.to_dict(), eta.to_dict()
    diff = math.sqrt(sum(abs(true.get(key, 0) - est.get(key, 0)) ** 2 for key in set(true) | set(est)))
    result.eta_error = _relative(diff, H.spreading.norm())
    result.kernel_error = result.eta_error
    result.extra["index_map"] = index_map
    return result
