"""One test per acceptance criterion, each at its stated tolerance."""

import itertools
import math

import numpy as np
import pytest

from opsampl.errors import AmbiguousSupport
from opsampl.gabor import frame_sum, gabor_matrix
from opsampl.identify import (
    assemble,
    eta_vector,
    flat_index,
    identify,
    identify_2d,
    necessity_demo,
    norm_identity,
    sound,
)
from opsampl.sparse import SparseSolveConfig, random_sparse, recovery_trials, solve_joint, solve_sparse, trials_csv
from opsampl.spark import (
    ci_monomial_unique,
    corollary_window,
    random_window,
    spark,
    symbolic_determinant,
    truncated_window,
)
from opsampl.tfmodel import (
    LatticeParams,
    SupportSet,
    SupportSet2D,
    random_channel,
    random_channel_2d,
    rectify,
)
from opsampl.zak import zak

TWO_BOX = [(0, 2 / 3, -0.25, 0.25), (4 / 3, 2, -0.5, 0.5)]


def test_c01_explicit_window_full_spark(criterion):
    details, ok = [], True
    for P, minors in ((4, 1820), (5, 53130)):
        cert = spark(gabor_matrix(corollary_window(P)), tolerance=1e-10)
        good = cert.full_spark and cert.minors_checked == minors and cert.min_abs_minor > 1e-10 and cert.elapsed < 5
        ok &= good
        details.append(f"P={P}: {cert.minors_checked} minors, min ratio {cert.min_abs_minor:.2e}, {cert.elapsed:.2f}s")
    assert criterion(1, ok, "; ".join(details))


def test_c02_prime_genericity(criterion):
    full = sum(spark(gabor_matrix(random_window(5, s))).full_spark for s in range(100))
    assert criterion(2, full == 100, f"P=5: {full}/100 random windows full spark")


def test_c03_nonprime_genericity(criterion):
    full = sum(spark(gabor_matrix(random_window(4, s))).full_spark for s in range(100))
    assert criterion(3, full == 100, f"P=4: {full}/100 random windows full spark")


def test_c04_small_spark(criterion):
    sparks = [spark(gabor_matrix(truncated_window(5, 3, seed=s))).spark for s in range(50)]
    hits = sparks.count(4)
    assert criterion(4, hits == 50, f"P=5, k=3: spark 4 in {hits}/50 trials")


def test_c05_zak_identities(criterion):
    worst_parseval = worst_quasi = 0.0
    for P, R, K in itertools.product(range(1, 5), repeat=3):
        p = LatticeParams(P, R, K)
        rng = np.random.default_rng([P, R, K])
        phase = np.exp(2j * np.pi * np.arange(K) / K)
        for _ in range(20):
            f = rng.standard_normal(p.N) + 1j * rng.standard_normal(p.N)
            Z = zak(f, p).values
            lhs, rhs = np.sum(np.abs(Z) ** 2), K * np.sum(np.abs(f) ** 2)
            worst_parseval = max(worst_parseval, abs(lhs - rhs) / rhs)
            shifted = zak(np.roll(f, -p.L), p).values
            worst_quasi = max(worst_quasi, np.abs(shifted - Z * phase).max() / np.abs(Z).max())
    ok = worst_parseval < 1e-12 and worst_quasi < 1e-12
    assert criterion(5, ok, f"max Parseval rel err {worst_parseval:.1e}, max quasiperiodicity err {worst_quasi:.1e}")


def test_c06_tight_frame(criterion):
    worst = 0.0
    rng = np.random.default_rng(6)
    for P in range(2, 9):
        for _ in range(20):
            c = rng.standard_normal(P) + 1j * rng.standard_normal(P)
            x = rng.standard_normal(P) + 1j * rng.standard_normal(P)
            expected = P * np.linalg.norm(c) ** 2 * np.linalg.norm(x) ** 2
            worst = max(worst, abs(frame_sum(c, x) - expected) / expected)
    assert criterion(6, worst < 1e-12, f"P=2..8: max rel err {worst:.1e}")


def test_c07_end_to_end_two_box(criterion):
    S = rectify(TWO_BOX, 3, R=4, K=4)
    p = S.params
    c = random_window(3, 0)
    assert spark(gabor_matrix(c)).full_spark
    errs = [identify(random_channel(S, seed=s), c, S) for s in range(20)]
    eta_err = max(r.eta_error for r in errs)
    ker_err = max(r.kernel_error for r in errs)
    ok = p.P == 3 and math.isclose(p.T, 2 / 3) and math.isclose(p.Omega, 0.5) and len(S) == 3
    ok &= eta_err < 1e-8 and ker_err < 1e-8
    detail = f"P={p.P}, T={p.T:.4f}, Omega={p.Omega}, cells {S.sorted_cells()}, eta err {eta_err:.1e}, kernel err {ker_err:.1e}"
    assert criterion(7, ok, detail)


@pytest.mark.xfail(strict=True, reason="the identity holds with factor T^(-1/2), so the literal factor T fails for T != 1")
def test_c08_single_cell_norm_identity(criterion):
    Ts = [0.5, 2 / 3, 1.0, 1.5, 2.0]
    worst, worst_corrected = 0.0, 0.0
    for s in range(20):
        T = Ts[s % len(Ts)]
        p = LatticeParams(1, 3, 6, T)
        S = SupportSet(frozenset({(0, 0)}), p, {0: 3 * p.doppler_resolution})
        hg, sigma = norm_identity(random_channel(S, seed=s))
        worst = max(worst, abs(hg - T * sigma) / hg)
        worst_corrected = max(worst_corrected, abs(hg - sigma / math.sqrt(T)) / hg)
    ok = worst < 1e-10
    detail = (
        f"||Hg|| = T||sigma||: max rel err {worst:.2e} over T in {{0.5, 2/3, 1, 1.5, 2}} "
        f"(||Hg|| = T^-1/2 ||sigma|| holds to {worst_corrected:.1e})"
    )
    criterion(8, ok, detail)
    assert ok


def test_c09_symbolic_determinants(criterion):
    rng = np.random.default_rng(9)
    cols2 = list(itertools.combinations([(q, m) for q in range(2) for m in range(2)], 2))
    all3 = list(itertools.combinations([(q, m) for q in range(3) for m in range(3)], 3))
    cols3 = [all3[i] for i in rng.integers(0, len(all3), 500)]
    worst, nonzero, unique = 0.0, 0, 0
    for P, specs in ((2, cols2), (3, cols3)):
        for spec in specs:
            sd = symbolic_determinant(spec, P)
            c = rng.standard_normal(P) + 1j * rng.standard_normal(P)
            num = np.linalg.det(gabor_matrix(c).restrict(spec))
            worst = max(worst, abs(sd.evaluate(c) - num) / max(1.0, abs(num)))
            if abs(num) > 1e-10:
                nonzero += 1
                unique += ci_monomial_unique(sd)
    ok = len(cols2) == 6 and worst < 1e-10 and unique == nonzero
    assert criterion(9, ok, f"max det mismatch {worst:.1e}; CI monomial unique in {unique}/{nonzero} nonzero cases")


def test_c10_sparse_uniqueness(criterion):
    details, ok = [], True
    for P in (4, 5):
        G = gabor_matrix(corollary_window(P))
        rng = np.random.default_rng(P)
        k = P // 2
        exact = ambiguous = 0
        for _ in range(200):
            eta = random_sparse(P, k, rng)
            try:
                est = solve_sparse(G.matrix @ eta, G, SparseSolveConfig(max_sparsity=k))
            except AmbiguousSupport:
                ambiguous += 1
                continue
            exact += np.linalg.norm(est - eta) < 1e-10 * np.linalg.norm(eta)
        ok &= exact == 200 and ambiguous == 0
        details.append(f"P={P}, k={k}: {exact}/200 exact, {ambiguous} ambiguous")
    assert criterion(10, ok, "; ".join(details))


def test_c11_joint_sparsity(criterion):
    P = 3
    p = LatticeParams(P, 3, 3)
    c = random_window(P, 1)
    S = SupportSet(frozenset({(0, 2), (1, 0)}), p)
    worst, supports = 0.0, set()
    for s in range(10):
        H = random_channel(S, seed=s)
        sys = assemble(sound(H, c), c, p)
        sol = solve_joint(sys.Zvec.reshape(-1, P), sys.G)
        truth = eta_vector(H).reshape(-1, P * P)
        worst = max(worst, np.linalg.norm(sol.coefficients - truth) / np.linalg.norm(truth))
        supports.add(sol.support)
    ok = supports == {(2, 3)} and worst < 1e-8
    assert criterion(11, ok, f"P=3, 2 shared cells over {p.R * p.K} grid points: support {sorted(supports)}, rel err {worst:.1e}")


def test_c12_necessity_demo(criterion):
    details, ok = [], True
    for P, extra in itertools.product((3, 5), (1, 3)):
        d = necessity_demo(P, extra)
        good = d["nullity"] >= extra and d["null_residual"] < 1e-10
        ok &= good
        details.append(f"P={P}+{extra}: nullity {d['nullity']}, |Gv| {d['null_residual']:.0e}")
    assert criterion(12, ok, "; ".join(details))


def test_c13_two_dimensional(criterion):
    ps = (LatticeParams(2, 2, 2), LatticeParams(3, 2, 2))
    allc = [((a, b), (m, n)) for a in range(2) for b in range(3) for m in range(2) for n in range(3)]
    rng = np.random.default_rng(13)
    worst = 0.0
    for t in range(10):
        cells = [allc[i] for i in rng.choice(len(allc), 4, replace=False)]
        S = SupportSet2D(frozenset(cells), ps)
        worst = max(worst, identify_2d(random_channel_2d(S, seed=t), corollary_window(6), S).eta_error)
    spots = {(1, 2): 5, (1, 0): 1, (0, 1): 2, (1, 1): 3, (0, 2): 4, (0, 0): 0}
    index_ok = all(flat_index(n, (2, 3)) == v for n, v in spots.items())
    assert criterion(13, worst < 1e-8 and index_ok, f"P=(2,3), 4 cells: max rel err {worst:.1e}; index map spot checks {'ok' if index_ok else 'FAILED'}")


def test_c14_greedy_table(criterion, tmp_path):
    rows = recovery_trials(31, range(1, 6), 100, seed=14, method="greedy", window="steinhaus")
    (tmp_path / "greedy.csv").write_text(trials_csv(rows))
    rates = [r["successes"] / r["trials"] for r in rows]
    print(trials_csv(rows))
    monotone = all(a >= b for a, b in zip(rates, rates[1:]))
    table = ", ".join(f"k={r['k']}: {r['successes']}/100" for r in rows)
    assert criterion(14, monotone, f"P=31 greedy success {table}; non-increasing in k: {monotone}")
