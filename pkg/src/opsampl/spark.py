"""
Spark of Gabor system matrices, full-spark windows, and the monomial
structure of Gabor minors.

Independence of a column subset A (P x s) is decided by the scale-invariant
volume ratio

    vol(A) / prod_i ||a_i||,   vol(A) = prod of singular values of A

which for square A is |det A| / prod ||a_i|| (Hadamard ratio, <= 1).  A subset
counts as dependent when the ratio is <= tolerance.
"""

import itertools
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SizeLimitExceeded
from .gabor import GaborMatrix, WeightVector, unit_root

DEFAULT_TOLERANCE = 1e-10
SUBSET_BUDGET = 10**8
CHUNK = 20000


def is_prime(n):
    n = int(n)
    if n < 2:
        return False
    return all(n % d for d in range(2, math.isqrt(n) + 1))


def default_threads():
    env = os.environ.get("OPSAMPL_THREADS")
    if env:
        return max(1, int(env))
    return 1


@dataclass
class SparkCertificate:
    """Result of a spark computation.

    ``witness`` lists the column positions (q*P + m) of a minimal dependent
    subset and is ``None`` exactly when the matrix has full spark.
    """

    spark: int
    P: int
    witness: tuple = None
    minors_checked: int = 0
    min_abs_minor: float = None
    exhaustive: bool = True
    tolerance: float = DEFAULT_TOLERANCE
    elapsed: float = field(default=None, compare=False)

    @property
    def full_spark(self):
        return self.spark == self.P + 1

    @property
    def witness_cells(self):
        if self.witness is None:
            return None
        return tuple(divmod(int(i), self.P) for i in self.witness)

    def to_json(self, with_elapsed=True):
        out = {
            "spark": self.spark,
            "P": self.P,
            "full_spark": self.full_spark,
            "witness": None if self.witness is None else [list(c) for c in self.witness_cells],
            "minors_checked": self.minors_checked,
            "min_abs_minor": self.min_abs_minor,
            "exhaustive": self.exhaustive,
            "tolerance": self.tolerance,
        }
        if with_elapsed:
            out["elapsed"] = self.elapsed
        return out


def volume_ratio(stack):
    """Scale-invariant volume ratio for a stack of (..., P, s) column sets."""
    stack = np.asarray(stack)
    norms = np.prod(np.linalg.norm(stack, axis=-2), axis=-1)
    if stack.shape[-1] == stack.shape[-2]:
        vol = np.abs(np.linalg.det(stack))
    else:
        vol = np.prod(np.linalg.svd(stack, compute_uv=False), axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(norms > 0, vol / np.where(norms > 0, norms, 1.0), 0.0)
    return ratio


def _combination_chunks(n, k, chunk=CHUNK):
    it = itertools.combinations(range(n), k)
    dtype = np.dtype((np.intp, (k,)))
    while True:
        block = np.fromiter(itertools.islice(it, chunk), dtype=dtype)
        if block.shape[0] == 0:
            return
        yield block


def _scan_chunk(A, idx, tolerance):
    ratios = volume_ratio(A[:, idx].transpose(1, 0, 2))
    bad = np.flatnonzero(ratios <= tolerance)
    first = tuple(int(i) for i in idx[bad[0]]) if bad.size else None
    return idx.shape[0], float(ratios.min()), first


def _scan(A, k, tolerance, threads, stop_at_first):
    """Test all k-subsets of the columns of A; returns (count, min ratio, first dependent)."""
    chunks = _combination_chunks(A.shape[1], k)
    checked, min_ratio, witness = 0, math.inf, None
    if threads <= 1:
        results = (_scan_chunk(A, idx, tolerance) for idx in chunks)
        for n, mr, first in results:
            checked += n
            min_ratio = min(min_ratio, mr)
            if first is not None and witness is None:
                witness = first
                if stop_at_first:
                    break
        return checked, min_ratio, witness
    # chunks are independent; map preserves chunk order so the reduction is deterministic
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for n, mr, first in pool.map(lambda idx: _scan_chunk(A, idx, tolerance), chunks):
            checked += n
            min_ratio = min(min_ratio, mr)
            if first is not None and witness is None:
                witness = first
    return checked, min_ratio, witness


def spark(G, tolerance=DEFAULT_TOLERANCE, budget=SUBSET_BUDGET, threads=None):
    """Exhaustive spark of a matrix (typically a ``GaborMatrix``).

    All P-column minors are tested first; if none vanishes the matrix has
    full spark. Otherwise subsets of size 1, 2, ... are scanned until the
    first dependent one is found.
    """
    A = np.asarray(G.matrix if isinstance(G, GaborMatrix) else G, dtype=complex)
    P, n = A.shape
    if n <= P:
        raise DomainError("spark is only meaningful here for wide matrices (cols > rows)")
    total = math.comb(n, P)
    if total > budget:
        raise SizeLimitExceeded(f"C({n},{P}) = {total} subsets exceeds budget {budget}")
    threads = default_threads() if threads is None else threads
    start = time.perf_counter()

    checked, min_ratio, witness = _scan(A, P, tolerance, threads, stop_at_first=False)
    if witness is None:
        cert = SparkCertificate(P + 1, P, None, checked, min_ratio, True, tolerance)
    else:
        cert = SparkCertificate(P, P, witness, checked, min_ratio, True, tolerance)
        for k in range(1, P):
            n_k, _, w = _scan(A, k, tolerance, threads, stop_at_first=True)
            cert.minors_checked += n_k
            if w is not None:
                cert.spark, cert.witness = k, w
                break
    cert.elapsed = time.perf_counter() - start
    return cert


def sample_spark(G, samples=10000, seed=None, tolerance=DEFAULT_TOLERANCE):
    """Randomized spark probe for sizes beyond the exhaustive budget.

    Samples random P-subsets. Can only certify that the matrix is NOT full
    spark (a witness is returned, spark reported as P as an upper bound);
    otherwise reports P + 1 with ``exhaustive=False`` meaning no violation found.
    """
    A = np.asarray(G.matrix if isinstance(G, GaborMatrix) else G, dtype=complex)
    P, n = A.shape
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    idx = np.array([np.sort(rng.choice(n, size=P, replace=False)) for _ in range(samples)])
    ratios = volume_ratio(A[:, idx].transpose(1, 0, 2))
    bad = np.flatnonzero(ratios <= tolerance)
    witness = tuple(int(i) for i in idx[bad[0]]) if bad.size else None
    cert = SparkCertificate(P if witness else P + 1, P, witness, samples, float(ratios.min()), False, tolerance)
    cert.elapsed = time.perf_counter() - start
    return cert


def corollary_window(P):
    """Unimodular window (1, z, z^4, z^9, ..., z^{(P-1)^2}) with z = exp(2 pi i/(P-1)^4)."""
    P = int(P)
    if P < 4:
        raise DomainError(f"the explicit full-spark window needs P >= 4, got {P}")
    order = (P - 1) ** 4
    j = np.arange(P, dtype=np.int64)
    return WeightVector(unit_root(j * j, order))


def random_window(P, seed=None):
    """Independent standard complex Gaussian entries."""
    rng = np.random.default_rng(seed)
    return WeightVector((rng.standard_normal(P) + 1j * rng.standard_normal(P)) / np.sqrt(2))


def truncated_window(P, k, seed=None):
    """Random window supported on the first k entries, zero elsewhere."""
    if not is_prime(P):
        raise DomainError(f"P = {P} is not prime")
    if not 0 < k < P:
        raise DomainError(f"need 0 < k < P, got k = {k}")
    rng = np.random.default_rng(seed)
    c = np.zeros(P, dtype=complex)
    c[:k] = (rng.standard_normal(k) + 1j * rng.standard_normal(k)) / np.sqrt(2)
    return WeightVector(c)


def chebotarev_check(P, tolerance=DEFAULT_TOLERANCE, budget=10**7):
    """True iff every square minor of the P x P Fourier matrix is nonzero.

    Holds for every prime P; composite P has vanishing minors, which the
    check reports as False.
    """
    P = int(P)
    total = math.comb(2 * P, P) - 1
    if total > budget:
        raise SizeLimitExceeded(f"{total} minors exceeds budget {budget}")
    n = np.arange(P)
    W = unit_root(np.outer(n, n), P)
    for s in range(1, P + 1):
        rows = np.array(list(itertools.combinations(range(P), s)), dtype=np.intp)
        for r in rows:
            sub = W[r]
            for cols in _combination_chunks(P, s):
                ratios = volume_ratio(sub[:, cols].transpose(1, 0, 2))
                if np.any(ratios <= tolerance):
                    return False
    return True


# -- monomial structure of Gabor minors ------------------------------------------------


def _perm_sign(perm):
    perm = list(perm)
    sign = 1
    for i in range(len(perm)):
        for j in range(i + 1, len(perm)):
            if perm[i] > perm[j]:
                sign = -sign
    return sign


@dataclass
class SymbolicDeterminant:
    """det of a P x P submatrix of G(c) as a polynomial in c_0, ..., c_{P-1}.

    ``exact`` maps each exponent vector to integer multiplicities of the powers
    w^0, ..., w^{P-1} of the P-th root of unity (the coefficient is
    sum_r exact[alpha][r] * w^r); ``monomials`` holds the complex coefficients
    that are nonzero above ``tolerance``.
    """

    P: int
    source_columns: tuple
    partition_vector: tuple
    exact: dict
    monomials: dict
    tolerance: float = DEFAULT_TOLERANCE

    @property
    def is_zero(self):
        return not self.monomials

    def evaluate(self, c):
        c = np.asarray(c, dtype=complex)
        total = 0j
        for alpha, coef in self.monomials.items():
            total += coef * np.prod(c ** np.array(alpha))
        return total

    def total_degrees(self):
        return {sum(alpha) for alpha in self.monomials}


def symbolic_determinant(column_spec, P, tolerance=DEFAULT_TOLERANCE):
    P = int(P)
    cols = [(int(q) % P, int(m) % P) for q, m in column_spec]
    if len(cols) != P:
        raise DomainError(f"need exactly P = {P} columns, got {len(cols)}")
    if P > 4:
        raise SizeLimitExceeded("symbolic expansion is limited to P <= 4")
    exact = {}
    # entry (row n, column (q, m)) = c_{(n - q) mod P} * w^{n m}
    for perm in itertools.permutations(range(P)):
        sign = _perm_sign(perm)
        alpha = [0] * P
        power = 0
        for i, (q, m) in enumerate(cols):
            n = perm[i]
            alpha[(n - q) % P] += 1
            power += n * m
        vec = exact.setdefault(tuple(alpha), np.zeros(P, dtype=np.int64))
        vec[power % P] += sign
    roots = unit_root(np.arange(P), P)
    monomials = {}
    for alpha, vec in exact.items():
        coef = complex(np.dot(vec, roots))
        if abs(coef) > tolerance:
            monomials[alpha] = coef
    ell = [0] * P
    for q, _ in cols:
        ell[q] += 1
    return SymbolicDeterminant(P, tuple(cols), tuple(ell), exact, monomials, tolerance)


def ci_rotation(ell):
    """Cyclic offset g minimizing sum_{i<g} ell_i - g (smallest such g)."""
    P = len(ell)
    scores = [sum(ell[:g]) - g for g in range(P)]
    return int(np.argmin(scores))


def _trivial_partition(ell):
    parts, start = [], 0
    for size in ell:
        parts.append(tuple(range(start, start + size)))
        start += size
    return parts


def _class_exponent(blocks, P):
    alpha = [0] * P
    for kappa, rows in enumerate(blocks):
        for j in rows:
            alpha[(j - kappa) % P] += 1
    return tuple(alpha)


def ci_monomial(ell):
    """Exponent vector of the consecutive-index monomial after the cyclic renaming."""
    P = len(ell)
    g = ci_rotation(ell)
    rotated = [ell[(i + g) % P] for i in range(P)]
    return _class_exponent(_trivial_partition(rotated), P)


def lagrange_class_exponents(ell):
    """Exponent vectors of C^sigma for every ordered partition class sigma in S_P / Gamma."""
    P = len(ell)
    g = ci_rotation(ell)
    rotated = [ell[(i + g) % P] for i in range(P)]
    trivial = _trivial_partition(rotated)
    seen = {}
    for sigma in itertools.permutations(range(P)):
        blocks = tuple(frozenset(sigma[j] for j in part) for part in trivial)
        if blocks not in seen:
            seen[blocks] = _class_exponent([sorted(b) for b in blocks], P)
    return list(seen.values())


def lambda_weight(alpha):
    return sum(i * i * a for i, a in enumerate(alpha))


def ci_monomial_unique(sd):
    """Check that the CI monomial of ``sd`` appears uniquely with nonzero coefficient.

    Three conditions must hold: the CI monomial is present with nonzero
    coefficient; exactly one Lagrange class produces its exponent vector; and
    it is the unique minimizer of sum_i i^2 alpha_i among the monomials present.
    """
    if sd.is_zero:
        return False
    # the block shift q -> q - g permutes rows and rescales columns by unimodular
    # factors, so the rotated matrix has the same monomials in the same variables
    target = ci_monomial(sd.partition_vector)
    if target not in sd.monomials:
        return False
    classes = lagrange_class_exponents(sd.partition_vector)
    if sum(1 for alpha in classes if alpha == target) != 1:
        return False
    weights = {alpha: lambda_weight(alpha) for alpha in sd.monomials}
    best = min(weights.values())
    minimizers = [alpha for alpha, w in weights.items() if w == best]
    return minimizers == [target]
