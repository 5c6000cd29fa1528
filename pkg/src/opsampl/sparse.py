"""
Identification with unknown support: sparse solutions of Z = G(c) eta.

Exhaustive search is the ground truth for small P; orthogonal matching
pursuit is the scalable path.  Joint mode looks for one support shared by a
family of right-hand sides.
"""

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import AmbiguousSupport, DimensionMismatch, DomainError, NoConsistentSupport
from .gabor import WeightVector, gabor_matrix
from .spark import _combination_chunks

DEFAULT_TOLERANCE = 1e-8


@dataclass(frozen=True)
class SparseSolveConfig:
    method: str = "exhaustive"
    max_sparsity: int = None
    joint: bool = False
    tolerance: float = DEFAULT_TOLERANCE

    def __post_init__(self):
        if self.method not in ("exhaustive", "greedy"):
            raise DomainError(f"unknown method {self.method!r}; use 'exhaustive' or 'greedy'")
        if not self.tolerance > 0:
            raise DomainError("tolerance must be positive")
        if self.max_sparsity is not None and self.max_sparsity < 0:
            raise DomainError("max_sparsity must be nonnegative")


def steinhaus_window(P, seed=None):
    """Window with independent entries uniform on the complex unit circle."""
    if P < 1:
        raise DomainError("P must be >= 1")
    rng = np.random.default_rng(seed)
    return WeightVector(np.exp(2j * np.pi * rng.random(P)))


def _check(Z, G):
    Z = np.asarray(Z, dtype=complex)
    if Z.shape[-1] != G.P:
        raise DimensionMismatch(f"right-hand side has length {Z.shape[-1]}, G has {G.P} rows")
    return Z


def _batched_fit(A, Z):
    """Least-squares fits for a stack of column sets A (n, P, s) against Z (P,) or (P, t).

    Returns coefficients (n, s[, t]) and absolute residual norms (n,).
    """
    pinv = np.linalg.pinv(A)
    rhs = Z if Z.ndim == 2 else Z[:, None]
    X = pinv @ rhs
    res = np.linalg.norm(A @ X - rhs, axis=(1, 2))
    return (X if Z.ndim == 2 else X[..., 0]), res


def _exhaustive(Z, G, max_sparsity, tolerance, unique):
    """Smallest supports consistent with Z (or all columns of Z) within the relative tolerance."""
    A_all = G.matrix
    n = A_all.shape[1]
    scale = np.linalg.norm(Z)
    if scale == 0:
        return (), np.zeros((0,) + Z.shape[1:], dtype=complex)
    for s in range(1, max_sparsity + 1):
        found = []
        for idx in _combination_chunks(n, s):
            X, res = _batched_fit(A_all[:, idx].transpose(1, 0, 2), Z)
            ok = np.flatnonzero(res <= tolerance * scale)
            found.extend((tuple(int(i) for i in idx[o]), X[o]) for o in ok)
            if not unique and found:
                break
        if found:
            if unique and len(found) > 1:
                supports = [f[0] for f in found]
                raise AmbiguousSupport(
                    f"{len(found)} distinct supports of size {s} are consistent: {supports[:4]}", supports
                )
            return found[0]
    raise NoConsistentSupport(f"no support of size <= {max_sparsity} fits within relative tolerance {tolerance}")


def _greedy(Z, G, max_sparsity, tolerance):
    A = G.matrix
    norms = np.linalg.norm(A, axis=0)
    norms = np.where(norms > 0, norms, 1.0)
    scale = np.linalg.norm(Z)
    support, x = [], np.zeros(0, dtype=complex)
    r = Z.copy()
    while len(support) < max_sparsity and np.linalg.norm(r) > tolerance * scale:
        corr = np.abs(A.conj().T @ r) / norms
        corr[support] = -1.0
        best = corr.max()
        # ties (to relative rounding) go to the lowest column index
        j = int(np.flatnonzero(corr >= best * (1 - 1e-12))[0])
        support.append(j)
        x = np.linalg.lstsq(A[:, support], Z, rcond=None)[0]
        r = Z - A[:, support] @ x
    return tuple(support), x


def solve_sparse(Z, G, cfg=None):
    """Sparse solution eta (length P^2) of Z = G eta."""
    cfg = cfg or SparseSolveConfig()
    Z = _check(Z, G)
    P = G.P
    k = cfg.max_sparsity if cfg.max_sparsity is not None else (P // 2 if cfg.method == "exhaustive" else P)
    eta = np.zeros(P * P, dtype=complex)
    if cfg.method == "exhaustive":
        support, x = _exhaustive(Z, G, k, cfg.tolerance, unique=True)
    else:
        support, x = _greedy(Z, G, k, cfg.tolerance)
    if support:
        eta[list(support)] = x
    return eta


@dataclass
class JointSolution:
    support: tuple
    coefficients: np.ndarray
    residual: float

    @property
    def cells(self):
        P = int(round(math.sqrt(self.coefficients.shape[1]))) if self.coefficients.ndim == 2 else 0
        return [divmod(i, P) for i in self.support] if P else []


def solve_joint(systems, G, cfg=None):
    """One support of size <= P - 1 shared by every right-hand side in ``systems``.

    Among consistent supports of the smallest size the lexicographically
    smallest wins.  Returns a ``JointSolution`` with per-point coefficient
    vectors of length P^2.
    """
    cfg = cfg or SparseSolveConfig(joint=True)
    Zs = _check(np.atleast_2d(np.asarray(systems, dtype=complex)), G)
    P = G.P
    k = cfg.max_sparsity if cfg.max_sparsity is not None else P - 1
    coeffs = np.zeros((Zs.shape[0], P * P), dtype=complex)
    if np.linalg.norm(Zs) == 0:
        return JointSolution((), coeffs, 0.0)
    support, X = _exhaustive(Zs.T, G, k, cfg.tolerance, unique=False)
    coeffs[:, list(support)] = X.T
    res = np.linalg.norm(G.matrix @ coeffs.T - Zs.T) / np.linalg.norm(Zs)
    return JointSolution(support, coeffs, float(res))


def random_sparse(P, k, rng):
    eta = np.zeros(P * P, dtype=complex)
    idx = rng.choice(P * P, size=k, replace=False)
    eta[idx] = (rng.standard_normal(k) + 1j * rng.standard_normal(k)) / np.sqrt(2)
    return eta


def recovery_trials(P, ks, trials, seed=0, method="greedy", window="steinhaus", tolerance=DEFAULT_TOLERANCE):
    """Success-rate table of sparse recovery from Z = G(c) eta with random k-sparse eta.

    A trial succeeds when the recovered eta matches the truth to relative error
    1e-6.  Each trial draws a fresh window (Steinhaus unless a fixed window is
    given) and a fresh support.  Returns rows with keys
    P, k, method, trials, successes, mean_residual.
    """
    rows = []
    for k in ks:
        rng = np.random.default_rng([seed, P, k])
        successes, residuals = 0, []
        for _ in range(trials):
            if isinstance(window, str):
                c = steinhaus_window(P, rng)
            else:
                c = window
            G = gabor_matrix(c)
            eta = random_sparse(P, k, rng)
            Z = G.matrix @ eta
            cfg = SparseSolveConfig(method=method, max_sparsity=k, tolerance=tolerance)
            try:
                est = solve_sparse(Z, G, cfg)
            except (NoConsistentSupport, AmbiguousSupport):
                est = np.zeros_like(eta)
            residuals.append(float(np.linalg.norm(G.matrix @ est - Z) / np.linalg.norm(Z)))
            if np.linalg.norm(est - eta) <= 1e-6 * np.linalg.norm(eta):
                successes += 1
        rows.append(
            {
                "P": P,
                "k": k,
                "method": method,
                "trials": trials,
                "successes": successes,
                "mean_residual": float(np.mean(residuals)),
            }
        )
    return rows


def trials_csv(rows):
    buf = io.StringIO()
    fields = ["P", "k", "method", "trials", "successes", "mean_residual"]
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({**row, "mean_residual": f"{row['mean_residual']:.6e}"})
    return buf.getvalue()
