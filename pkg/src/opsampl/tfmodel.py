"""
Discrete, cyclic model of operators with compactly supported spreading function.

Time is Z_N with N = P*R*K samples of spacing delta = T/R, so the signal
lasts K*P*T and the Doppler resolution is 1/(N*delta) = Omega/K, where
Omega = 1/(T*P).  A channel is a finite sum of time-frequency shifts

    (Hf)[j] = sum_{tau, mu} eta[tau, mu] f[(j - tau) mod N] exp(2 pi i mu (j - tau) / N).

A cell (q, m) of the rectification grid covers delays tau in [qR, (q+1)R)
and, in the Doppler frame of its delay column, bins [mK, (m+1)K).  Each
delay column q may carry its own Doppler shift s_q (in Hz); the true bins
of cell (q, m) are [mK - b_q, (m+1)K - b_q) with b_q = s_q / (Omega/K).
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
import shapely
from shapely.geometry import LineString, Polygon, box
from shapely.ops import unary_union

from .errors import DimensionMismatch, DomainError, NotRectifiable, SizeLimitExceeded
from .gabor import as_window

DENSE_LIMIT = 4096
_EPS = 1e-9


@dataclass(frozen=True)
class LatticeParams:
    P: int
    R: int = 1
    K: int = 1
    T: float = 1.0

    def __post_init__(self):
        for name in ("P", "R", "K"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise DomainError(f"{name} must be a positive integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if not self.T > 0:
            raise DomainError(f"T must be positive, got {self.T!r}")
        object.__setattr__(self, "T", float(self.T))

    @property
    def N(self):
        return self.P * self.R * self.K

    @property
    def L(self):
        """Zak period TP in samples."""
        return self.P * self.R

    @property
    def delta(self):
        return self.T / self.R

    @property
    def Omega(self):
        return 1.0 / (self.T * self.P)

    @property
    def duration(self):
        return self.K * self.P * self.T

    @property
    def doppler_resolution(self):
        return 1.0 / (self.N * self.delta)

    def to_json(self):
        return {"P": self.P, "R": self.R, "K": self.K, "T": self.T}

    @classmethod
    def from_json(cls, data):
        return cls(int(data["P"]), int(data.get("R", 1)), int(data.get("K", 1)), float(data.get("T", 1.0)))


@dataclass(frozen=True)
class SupportSet:
    cells: frozenset
    params: LatticeParams
    doppler_shift: dict = field(default_factory=dict)

    def __post_init__(self):
        cells = frozenset((int(q), int(m)) for q, m in self.cells)
        P = self.params.P
        for q, m in cells:
            if not (0 <= q < P and 0 <= m < P):
                raise DomainError(f"cell ({q}, {m}) outside [0, {P})^2")
        object.__setattr__(self, "cells", cells)
        shifts = {int(q): float(s) for q, s in dict(self.doppler_shift).items() if s != 0}
        object.__setattr__(self, "doppler_shift", shifts)

    def __hash__(self):
        return hash((self.cells, self.params, tuple(sorted(self.doppler_shift.items()))))

    def __len__(self):
        return len(self.cells)

    def sorted_cells(self):
        return sorted(self.cells)

    @property
    def area(self):
        return len(self.cells) * self.params.T * self.params.Omega

    @property
    def columns(self):
        return sorted({q for q, _ in self.cells})

    def shift_bins(self, q):
        """Doppler shift of delay column q in fine Doppler bins."""
        s = self.doppler_shift.get(q, 0.0)
        b = s / (self.params.Omega / self.params.K)
        if abs(b - round(b)) > 1e-6:
            raise DomainError(
                f"Doppler shift {s} of column {q} is not a multiple of the resolution "
                f"Omega/K = {self.params.Omega / self.params.K}; increase K"
            )
        return int(round(b))

    def fine_points(self, cell):
        """Fine (tau, mu) indices on Z_N covered by a cell."""
        q, m = cell
        R, K, N = self.params.R, self.params.K, self.params.N
        taus = np.arange(q * R, (q + 1) * R)
        mus = np.mod(np.arange(m * K, (m + 1) * K) - self.shift_bins(q), N)
        return np.repeat(taus, K), np.tile(mus, R)

    def active_at(self, k):
        """For Doppler grid point k, the list of (cell, m_eff, mu) with mu the true bin.

        m_eff is the Gabor column index m such that mu = k + m K mod P K.
        """
        K, P, N = self.params.K, self.params.P, self.params.N
        out = []
        for q, m in self.sorted_cells():
            b = self.shift_bins(q)
            mu = m * K - b + ((k + b) % K)
            m_eff = ((mu - k) // K) % P
            out.append(((q, m), int(m_eff), int(mu % N)))
        return out

    def contains(self, tau, mu):
        """Whether the fine lattice point (tau, mu) lies in one of the cells."""
        N = self.params.N
        key = (int(tau) % N) * N + int(mu) % N
        for cell in self.cells:
            t, u = self.fine_points(cell)
            if np.any(t * N + u == key):
                return True
        return False

    def to_json(self):
        return {
            "cells": [list(c) for c in self.sorted_cells()],
            "params": self.params.to_json(),
            "doppler_shift": {str(q): s for q, s in sorted(self.doppler_shift.items())},
            "area": self.area,
            "bandwidth": bandwidth(self),
        }

    @classmethod
    def from_json(cls, data, params=None):
        params = params or LatticeParams.from_json(data["params"])
        shifts = {int(q): float(s) for q, s in data.get("doppler_shift", {}).items()}
        return cls(frozenset(tuple(c) for c in data["cells"]), params, shifts)


class SpreadingGrid:
    """Sparse spreading function on the fine lattice Z_N x Z_N."""

    def __init__(self, N, tau=(), mu=(), values=()):
        self.N = int(N)
        tau = np.mod(np.asarray(tau, dtype=np.int64).reshape(-1), self.N)
        mu = np.mod(np.asarray(mu, dtype=np.int64).reshape(-1), self.N)
        values = np.asarray(values, dtype=complex).reshape(-1)
        if not (tau.size == mu.size == values.size):
            raise DimensionMismatch("tau, mu and values must have equal length")
        # canonical form: unique sorted keys, duplicates summed
        key = tau * self.N + mu
        uniq, inv = np.unique(key, return_inverse=True)
        summed = np.zeros(uniq.size, dtype=complex)
        np.add.at(summed, inv, values)
        self.tau, self.mu = np.divmod(uniq, self.N)
        self.values = summed

    @classmethod
    def from_dense(cls, eta, tol=0.0):
        eta = np.asarray(eta, dtype=complex)
        tau, mu = np.nonzero(np.abs(eta) > tol)
        return cls(eta.shape[0], tau, mu, eta[tau, mu])

    @classmethod
    def from_dict(cls, N, entries):
        items = list(entries.items())
        if not items:
            return cls(N)
        (t, u), v = zip(*[(k, v) for k, v in items])
        return cls(N, t, u, v)

    def __len__(self):
        return self.values.size

    def to_dense(self):
        if self.N > DENSE_LIMIT:
            raise SizeLimitExceeded(f"dense N x N array with N = {self.N} > {DENSE_LIMIT}")
        out = np.zeros((self.N, self.N), dtype=complex)
        out[self.tau, self.mu] = self.values
        return out

    def to_dict(self):
        return {(int(t), int(u)): complex(v) for t, u, v in zip(self.tau, self.mu, self.values)}

    def norm(self):
        return float(np.linalg.norm(self.values))

    def restricted_to(self, support):
        keep = np.zeros(self.values.size, dtype=bool)
        for cell in support.cells:
            t, u = support.fine_points(cell)
            keep |= np.isin(self.tau * self.N + self.mu, t * self.N + u)
        return SpreadingGrid(self.N, self.tau[keep], self.mu[keep], self.values[keep])

    def within(self, support, tol=0.0):
        nz = np.abs(self.values) > tol
        pts = np.zeros(0, dtype=np.int64)
        for cell in support.cells:
            t, u = support.fine_points(cell)
            pts = np.concatenate([pts, t * self.N + u])
        return bool(np.all(np.isin((self.tau * self.N + self.mu)[nz], pts)))

    def to_json(self):
        return {
            "N": self.N,
            "entries": [
                [int(t), int(u), [float(v.real), float(v.imag)]]
                for t, u, v in zip(self.tau, self.mu, self.values)
            ],
        }

    @classmethod
    def from_json(cls, data):
        entries = data["entries"]
        if not entries:
            return cls(data["N"])
        t, u, v = zip(*[(e[0], e[1], complex(*e[2])) for e in entries])
        return cls(data["N"], t, u, v)

    def dumps(self):
        return json.dumps(self.to_json())


@dataclass(frozen=True, eq=False)
class DiscreteChannel:
    spreading: SpreadingGrid
    params: LatticeParams

    def __post_init__(self):
        if self.spreading.N != self.params.N:
            raise DimensionMismatch(f"spreading grid has N = {self.spreading.N}, params give {self.params.N}")

    @property
    def N(self):
        return self.params.N


def _doppler_profiles(eta):
    """For each distinct delay tau, w_tau[n] = sum_mu eta[tau, mu] exp(2 pi i mu n / N)."""
    N = eta.N
    taus = np.unique(eta.tau)
    rows = np.searchsorted(taus, eta.tau)
    spectra = np.zeros((taus.size, N), dtype=complex)
    np.add.at(spectra, (rows, eta.mu), eta.values)
    return taus, N * np.fft.ifft(spectra, axis=1)


def apply(H, f):
    f = np.asarray(f, dtype=complex)
    if f.shape != (H.N,):
        raise DimensionMismatch(f"signal length {f.shape} does not match N = {H.N}")
    taus, profiles = _doppler_profiles(H.spreading)
    out = np.zeros(H.N, dtype=complex)
    for tau, w in zip(taus, profiles):
        out += np.roll(f * w, tau)
    return out


def _check_dense(N):
    if N > DENSE_LIMIT:
        raise SizeLimitExceeded(f"dense conversion with N = {N} > {DENSE_LIMIT}")


def to_impulse_response(H):
    """h[j, tau] = kappa[j, (j - tau) mod N] = sum_mu eta[tau, mu] exp(2 pi i mu (j - tau)/N)."""
    N = H.N
    _check_dense(N)
    taus, profiles = _doppler_profiles(H.spreading)
    h = np.zeros((N, N), dtype=complex)
    j = np.arange(N)
    for tau, w in zip(taus, profiles):
        h[:, tau] = w[(j - tau) % N]
    return h


def to_kernel(H):
    return kernel_from_impulse_response(to_impulse_response(H))


def to_kn_symbol(H):
    """sigma[j, k] = sum_tau h[j, tau] exp(-2 pi i k tau / N)."""
    return np.fft.fft(to_impulse_response(H), axis=1)


def kernel_from_impulse_response(h):
    N = h.shape[0]
    j = np.arange(N)[:, None]
    tau = np.arange(N)[None, :]
    kappa = np.zeros_like(h)
    kappa[j, (j - tau) % N] = h
    return kappa


def impulse_response_from_kernel(kappa):
    N = kappa.shape[0]
    j = np.arange(N)[:, None]
    tau = np.arange(N)[None, :]
    return kappa[j, (j - tau) % N]


def impulse_response_from_kn_symbol(sigma):
    return np.fft.ifft(sigma, axis=1)


def spreading_from_impulse_response(h, tol=1e-12):
    N = h.shape[0]
    n = np.arange(N)[None, :]
    tau = np.arange(N)[:, None]
    # W[tau, n] = h[(n + tau) mod N, tau]
    W = h[(n + tau) % N, tau]
    eta = np.fft.fft(W, axis=1) / N
    scale = max(np.abs(eta).max(initial=0.0), 1.0)
    return SpreadingGrid.from_dense(eta, tol=tol * scale)


def spreading_from_kernel(kappa, tol=1e-12):
    return spreading_from_impulse_response(impulse_response_from_kernel(kappa), tol)


def spreading_from_kn_symbol(sigma, tol=1e-12):
    return spreading_from_impulse_response(impulse_response_from_kn_symbol(sigma), tol)


def compose_shift(H, alpha):
    """Channel H o T_alpha: spreading eta[tau - alpha, mu] exp(2 pi i mu alpha / N)."""
    eta = H.spreading
    N = eta.N
    phase = np.exp(2j * np.pi * np.mod(eta.mu * alpha, N) / N)
    return DiscreteChannel(SpreadingGrid(N, eta.tau + alpha, eta.mu, eta.values * phase), H.params)


def delta_train(c, params):
    c = as_window(c)
    if c.period != params.P:
        raise DimensionMismatch(f"window period {c.period} != P = {params.P}")
    g = np.zeros(params.N, dtype=complex)
    n = np.arange(params.P * params.K)
    g[n * params.R] = c.entries[n % params.P]
    return g


def random_channel(support, seed=None, sparsity=1.0):
    """Random complex Gaussian spreading function filling the cells of ``support``.

    With ``sparsity`` < 1 each fine point is kept independently with that probability.
    """
    rng = np.random.default_rng(seed)
    taus, mus = [], []
    for cell in support.sorted_cells():
        t, u = support.fine_points(cell)
        taus.append(t)
        mus.append(u)
    tau = np.concatenate(taus) if taus else np.zeros(0, dtype=np.int64)
    mu = np.concatenate(mus) if mus else np.zeros(0, dtype=np.int64)
    vals = (rng.standard_normal(tau.size) + 1j * rng.standard_normal(tau.size)) / np.sqrt(2)
    if sparsity < 1.0:
        vals = vals * (rng.random(tau.size) < sparsity)
    return DiscreteChannel(SpreadingGrid(support.params.N, tau, mu, vals), support.params)


# -- geometry: bandwidth and rectification ---------------------------------------------


def _as_geometry(region):
    if isinstance(region, shapely.Geometry):
        return region
    parts = []
    for item in region:
        if isinstance(item, shapely.Geometry):
            parts.append(item)
        elif len(item) == 4 and np.isscalar(item[0]):
            t0, t1, n0, n1 = item
            parts.append(box(t0, n0, t1, n1))
        else:
            parts.append(Polygon(item))
    return unary_union(parts)


def region_area(region):
    return float(_as_geometry(region).area)


def bandwidth(S):
    """Maximal vertical (Doppler) extent over delays.

    For a ``SupportSet`` this is the largest number of cells in one delay column
    times Omega; for a polygonal region (rectangles (t0, t1, nu0, nu1), vertex
    lists, or shapely geometry) the continuous sup_t |{nu : (t, nu) in S}|.
    """
    if isinstance(S, SupportSet):
        if not S.cells:
            return 0.0
        counts = {}
        for q, _ in S.cells:
            counts[q] = counts.get(q, 0) + 1
        return max(counts.values()) * S.params.Omega
    geom = _as_geometry(S)
    if geom.is_empty:
        return 0.0
    xmin, ymin, xmax, ymax = geom.bounds
    xs = set()
    for poly in getattr(geom, "geoms", [geom]):
        xs.update(x for x, _ in poly.exterior.coords)
        for ring in poly.interiors:
            xs.update(x for x, _ in ring.coords)
    xs = np.array(sorted(xs))
    # vertical extent is piecewise linear in t with breaks at vertices; probe both sides
    width = xmax - xmin
    probes = np.concatenate([xs, xs - 1e-9 * width, xs + 1e-9 * width, (xs[1:] + xs[:-1]) / 2])
    probes = probes[(probes >= xmin) & (probes <= xmax)]
    best = 0.0
    for t in probes:
        cut = geom.intersection(LineString([(t, ymin - 1.0), (t, ymax + 1.0)]))
        best = max(best, cut.length)
    return float(best)


def _column_cover(intervals, Omega, P):
    """Fewest Omega-cells covering the intervals without Doppler aliasing.

    Returns (number of cells, shift, cell indices) or None.
    """
    best = None
    for a, _ in sorted(intervals):
        offset = a % Omega
        idx = set()
        for lo, hi in intervals:
            first = math.floor((lo - offset) / Omega + _EPS)
            last = math.ceil((hi - offset) / Omega - _EPS) - 1
            idx.update(range(first, max(last, first) + 1))
        lo_idx = min(idx)
        if max(idx) - lo_idx + 1 > P:
            continue
        start = offset + lo_idx * Omega
        cand = (len(idx), -start, sorted(i - lo_idx for i in idx))
        if best is None or cand[0] < best[0]:
            best = cand
    return best


def _rectify_at(rects, T, P):
    Omega = 1.0 / (T * P)
    t_max = max(r[1] for r in rects)
    if t_max > T * P * (1 + _EPS):
        return None
    columns = {}
    for t0, t1, n0, n1 in rects:
        q_first = math.floor(t0 / T + _EPS)
        q_last = math.ceil(t1 / T - _EPS) - 1
        for q in range(q_first, max(q_last, q_first) + 1):
            columns.setdefault(q, []).append((n0, n1))
    cells, shifts = set(), {}
    for q, intervals in columns.items():
        if not 0 <= q < P:
            return None
        cover = _column_cover(intervals, Omega, P)
        if cover is None:
            return None
        _, shift, idx = cover
        shifts[q] = shift
        cells.update((q, m) for m in idx)
    return cells, shifts


def _default_T_grid(rects, budget):
    bounds = sorted({0.0} | {r[0] for r in rects} | {r[1] for r in rects})
    diffs = {b - a for a in bounds for b in bounds if b - a > _EPS}
    grid = {d / n for d in diffs for n in range(1, budget + 1)}
    return sorted(grid)


def rectify(region, budget, T_grid=None, R=1, K=1):
    """Cover a union of rectangles (t0, t1, nu0, nu1) by at most P cells of size T x 1/(TP).

    Searches P over 1..budget and T over ``T_grid`` (by default fractions of the
    region's delay breakpoints), minimizing the cell count, then P, then T.
    Each delay column gets its own Doppler shift so that its cells start at 0.
    """
    try:
        rects = [tuple(float(v) for v in r) for r in region]
    except (TypeError, ValueError) as exc:
        raise NotRectifiable(f"region must be a list of rectangles (t0, t1, nu0, nu1): {exc}") from exc
    if any(len(r) != 4 for r in rects):
        raise NotRectifiable("region must be a list of rectangles (t0, t1, nu0, nu1)")
    if not rects:
        raise NotRectifiable("empty region")
    for t0, t1, n0, n1 in rects:
        if t0 < 0 or t1 <= t0 or n1 <= n0:
            raise NotRectifiable(f"invalid rectangle {(t0, t1, n0, n1)}; need 0 <= t0 < t1, nu0 < nu1")
    area = region_area(rects)
    if area > 1 + _EPS:
        raise NotRectifiable(f"region area {area:.6g} exceeds 1")
    grid = sorted(set(T_grid)) if T_grid is not None else _default_T_grid(rects, budget)
    best = None
    for P in range(1, int(budget) + 1):
        for T in grid:
            found = _rectify_at(rects, T, P)
            if found is None:
                continue
            cells, shifts = found
            if len(cells) > P:
                continue
            key = (len(cells), P, T)
            if best is None or key < best[0]:
                best = (key, cells, shifts)
    if best is None:
        raise NotRectifiable(f"no (T, P) with P <= {budget} covers the region by at most P cells")
    (_, P, T), cells, shifts = best
    return SupportSet(frozenset(cells), LatticeParams(P, R, K, T), shifts)


# -- two-dimensional channels (d = 2) -------------------------------------------------


class SpreadingGrid2D:
    """Sparse spreading function on (Z_N1 x Z_N2) x (Z_N1 x Z_N2).

    ``tau`` and ``mu`` are (n, 2) integer arrays of delay and Doppler indices.
    """

    def __init__(self, N, tau, mu, values):
        self.N = tuple(int(n) for n in N)
        Nv = np.array(self.N)
        self.tau = np.mod(np.asarray(tau, dtype=np.int64).reshape(-1, 2), Nv)
        self.mu = np.mod(np.asarray(mu, dtype=np.int64).reshape(-1, 2), Nv)
        self.values = np.asarray(values, dtype=complex).reshape(-1)
        if not (len(self.tau) == len(self.mu) == self.values.size):
            raise DimensionMismatch("tau, mu and values must have equal length")

    def __len__(self):
        return self.values.size

    def norm(self):
        return float(np.linalg.norm(self.values))

    def to_dict(self):
        out = {}
        for t, u, v in zip(map(tuple, self.tau.tolist()), map(tuple, self.mu.tolist()), self.values):
            out[(t, u)] = out.get((t, u), 0) + complex(v)
        return out

    def to_json(self):
        return {
            "N": list(self.N),
            "entries": [
                [list(map(int, t)), list(map(int, u)), [float(v.real), float(v.imag)]]
                for t, u, v in zip(self.tau, self.mu, self.values)
            ],
        }


@dataclass(frozen=True)
class SupportSet2D:
    """Cells ((q1, q2), (m1, m2)) on a product of two rectification grids."""

    cells: frozenset
    params: tuple

    def __post_init__(self):
        cells = frozenset((tuple(map(int, q)), tuple(map(int, m))) for q, m in self.cells)
        P = [p.P for p in self.params]
        for q, m in cells:
            if not all(0 <= q[i] < P[i] and 0 <= m[i] < P[i] for i in range(2)):
                raise DomainError(f"cell {(q, m)} outside the grid {P}")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "params", tuple(self.params))

    def __len__(self):
        return len(self.cells)

    def sorted_cells(self):
        return sorted(self.cells)

    def fine_points(self, cell):
        (q1, q2), (m1, m2) = cell
        p1, p2 = self.params
        grids = np.meshgrid(
            np.arange(q1 * p1.R, (q1 + 1) * p1.R),
            np.arange(q2 * p2.R, (q2 + 1) * p2.R),
            np.arange(m1 * p1.K, (m1 + 1) * p1.K),
            np.arange(m2 * p2.K, (m2 + 1) * p2.K),
            indexing="ij",
        )
        t1, t2, u1, u2 = (g.reshape(-1) for g in grids)
        return np.stack([t1, t2], axis=1), np.stack([u1, u2], axis=1)

    def to_json(self):
        return {
            "cells": [[list(q), list(m)] for q, m in self.sorted_cells()],
            "params": [p.to_json() for p in self.params],
        }


@dataclass(frozen=True, eq=False)
class DiscreteChannel2D:
    spreading: SpreadingGrid2D
    params: tuple

    @property
    def N(self):
        return tuple(p.N for p in self.params)


def apply_2d(H, f):
    """(Hf)[j] = sum eta[tau, mu] f[j - tau] exp(2 pi i (mu1 (j1 - tau1)/N1 + mu2 (j2 - tau2)/N2))."""
    f = np.asarray(f, dtype=complex)
    N1, N2 = H.N
    if f.shape != (N1, N2):
        raise DimensionMismatch(f"signal shape {f.shape} != {(N1, N2)}")
    e1 = np.exp(2j * np.pi * np.outer(np.arange(N1), np.arange(N1)) / N1)
    e2 = np.exp(2j * np.pi * np.outer(np.arange(N2), np.arange(N2)) / N2)
    out = np.zeros((N1, N2), dtype=complex)
    eta = H.spreading
    for (t1, t2), (u1, u2), v in zip(eta.tau, eta.mu, eta.values):
        mod = f * np.outer(e1[u1], e2[u2])
        out += v * np.roll(mod, (t1, t2), axis=(0, 1))
    return out


def delta_train_2d(c, params):
    """g[n1 R1, n2 R2] = c[n1 mod P1, n2 mod P2]."""
    c = np.asarray(c, dtype=complex)
    p1, p2 = params
    if c.shape != (p1.P, p2.P):
        raise DimensionMismatch(f"weight grid shape {c.shape} != {(p1.P, p2.P)}")
    g = np.zeros((p1.N, p2.N), dtype=complex)
    n1 = np.arange(p1.P * p1.K)
    n2 = np.arange(p2.P * p2.K)
    g[np.ix_(n1 * p1.R, n2 * p2.R)] = c[np.ix_(n1 % p1.P, n2 % p2.P)]
    return g


def random_channel_2d(support, seed=None):
    rng = np.random.default_rng(seed)
    taus, mus = [np.zeros((0, 2), dtype=np.int64)], [np.zeros((0, 2), dtype=np.int64)]
    for cell in support.sorted_cells():
        t, u = support.fine_points(cell)
        taus.append(t)
        mus.append(u)
    tau, mu = np.concatenate(taus), np.concatenate(mus)
    vals = (rng.standard_normal(len(tau)) + 1j * rng.standard_normal(len(tau))) / np.sqrt(2)
    N = tuple(p.N for p in support.params)
    return DiscreteChannel2D(SpreadingGrid2D(N, tau, mu, vals), support.params)
