"""
Finite time-frequency shifts on C^P and the full Gabor system matrix.

Conventions
-----------
translate:  (T x)_n = x_{n-1}            (cyclic, T x = (x_{P-1}, x_0, ..., x_{P-2}))
modulate:   (M x)_n = w^n x_n,  w = exp(2 pi i / P)

The full Gabor system matrix G(c) is the P x P^2 block matrix
[D_0 W_P | D_1 W_P | ... | D_{P-1} W_P], D_q = diag(T^q c), W_P = (w^{nm}).
Column (q, m) sits at position q*P + m and equals M^m T^q c, which is
w^{qm} T^q M^m c.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DomainError


def unit_root(exponent, P):
    """exp(2 pi i * exponent / P), reducing the integer exponent mod P first."""
    e = np.mod(np.asarray(exponent, dtype=np.int64), P)
    return np.exp(2j * np.pi * e / P)


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Period-P complex weight sequence (the window of a finite Gabor system)."""

    entries: np.ndarray

    def __post_init__(self):
        arr = np.array(self.entries, dtype=complex).reshape(-1)
        if arr.size < 1:
            raise DomainError("a weight vector needs period >= 1")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def period(self):
        return self.entries.size

    def __len__(self):
        return self.entries.size

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def __getitem__(self, n):
        # periodic indexing c_n = c_{n mod P}
        return self.entries[np.mod(n, self.period)]

    def to_json(self):
        return [[float(z.real), float(z.imag)] for z in self.entries]

    @classmethod
    def from_json(cls, data):
        return cls(np.array([complex(re, im) for re, im in data]))


def as_window(c):
    if isinstance(c, WeightVector):
        return c
    return WeightVector(c)


def translate(x, steps=1):
    x = np.asarray(x)
    return np.roll(x, steps)


def modulate(x, steps=1):
    x = np.asarray(x)
    P = x.shape[0]
    return x * unit_root(np.arange(P) * steps, P)


@dataclass(frozen=True, eq=False)
class GaborMatrix:
    """P x P^2 full Gabor system matrix with block-major (q, m) column layout."""

    window: WeightVector
    matrix: np.ndarray

    @property
    def P(self):
        return self.window.period

    @property
    def shape(self):
        return self.matrix.shape

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)

    def column_index(self, q, m):
        P = self.P
        if not (0 <= q < P and 0 <= m < P):
            raise DomainError(f"cell ({q}, {m}) outside [0, {P})^2")
        return q * P + m

    def cell_of(self, col):
        return divmod(int(col), self.P)

    def column(self, q, m):
        return self.matrix[:, self.column_index(q, m)]

    def restrict(self, cells):
        """Submatrix on the listed (q, m) cells, in the given order."""
        idx = [self.column_index(q, m) for q, m in cells]
        return self.matrix[:, idx]


def gabor_matrix(c):
    c = as_window(c)
    P = c.period
    n = np.arange(P)
    W = unit_root(np.outer(n, n), P)
    blocks = [translate(c.entries, q)[:, None] * W for q in range(P)]
    G = np.hstack(blocks)
    G.setflags(write=False)
    return GaborMatrix(c, G)


def gabor_vector(c, q, m):
    """T^q M^m c."""
    return translate(modulate(np.asarray(c, dtype=complex), m), q)


def frame_sum(c, x):
    """Sum over all (q, m) of |<x, T^q M^m c>|^2."""
    c = np.asarray(as_window(c).entries)
    x = np.asarray(x, dtype=complex)
    if x.shape != c.shape:
        raise DimensionMismatch(f"x has length {x.size}, window has period {c.size}")
    # columns of G(c) differ from T^q M^m c only by unimodular factors
    coeffs = gabor_matrix(c).matrix.conj().T @ x
    return float(np.sum(np.abs(coeffs) ** 2))
