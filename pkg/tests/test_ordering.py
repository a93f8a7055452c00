import math

import numpy as np
import pytest

from shadowperc import kernel, ordering as od
from shadowperc.ordering import OrderingSpec

# covariance e^{-32 |x|^2}: integer sites are independent to within 1e-14
NEAR_IID = kernel.bargmann_fock(8.0, 8.0)


def iid(n):
    return od.cov_from_matrix(np.eye(n))


# -- covariance --------------------------------------------------------------

def test_single_site_unit(bf):
    c = od.build_covariance(bf, [(3, 4)])
    assert c.matrix.tolist() == [[1.0]]


def test_bf_pair(bf):
    c = od.build_covariance(bf, [(1, 0), (0, 0)])
    assert c.sites == [(0, 0), (1, 0)]
    assert c.matrix[0, 1] == pytest.approx(math.exp(-0.5), rel=1e-13)


def test_far_pair(bf):
    c = od.build_covariance(bf, [(0, 0), (10, 0)])
    assert c.matrix[0, 1] < 1e-20


def test_site_validation(bf):
    with pytest.raises(ValueError):
        od.build_covariance(bf, [(0, 0), (0, 0)])
    with pytest.raises(ValueError):
        od.build_covariance(bf, [])


def test_factorization_error_names_pivot():
    with pytest.raises(od.FactorizationError) as e:
        od.cov_from_matrix([[1.0, 1.0], [1.0, 1.0]])
    assert "pivot" in str(e.value)
    assert abs(e.value.pivot) < 1e-12


def test_cholesky_matches_numpy():
    A = np.random.default_rng(0).normal(size=(6, 6))
    S = A @ A.T + 6 * np.eye(6)
    L, piv = od.cholesky(S)
    assert np.allclose(L, np.linalg.cholesky(S), rtol=1e-13, atol=1e-13)
    assert piv > 0


# -- Gershgorin --------------------------------------------------------------

def test_gershgorin_identity():
    assert od.gershgorin_delta(np.eye(5)) == 0.0


def test_gershgorin_two_by_two():
    rho = 0.37
    S = np.array([[1, rho], [rho, 1]])
    assert od.gershgorin_delta(S) == rho
    assert np.allclose(np.linalg.eigvalsh(S), [1 - rho, 1 + rho])


def test_gershgorin_bf_row(bf):
    c = od.build_covariance(bf, [(0, 0), (1, 0), (2, 0)])
    # the end rows sum to e^{-1/2} + e^{-2}; the middle row dominates
    off = c.matrix - np.eye(3)
    assert off[0].sum() == pytest.approx(math.exp(-0.5) + math.exp(-2), rel=1e-13)
    assert od.gershgorin_delta(c) == pytest.approx(2 * math.exp(-0.5), rel=1e-13)
    # the first-row sum alone would not bound the top eigenvalue (1.928...)
    assert np.linalg.eigvalsh(c.matrix).max() > 1 + off[0].sum()


def test_gershgorin_needs_unit_diagonal():
    with pytest.raises(ValueError):
        od.gershgorin_delta(2 * np.eye(3))


def test_gershgorin_certificate_random():
    rng = np.random.default_rng(12)
    for _ in range(50):
        lam2 = rng.uniform(0.8, 3.0)
        k = kernel.bargmann_fock(lam2, lam2)
        n = rng.integers(2, 9)
        pts = set()
        while len(pts) < n:
            pts.add(tuple(rng.integers(-4, 5, size=2)))
        c = od.build_covariance(k, sorted(pts))
        d = od.gershgorin_delta(c)
        ev = np.linalg.eigvalsh(c.matrix)
        assert ev.min() >= 1 - d - 1e-12 and ev.max() <= 1 + d + 1e-12


# -- C(delta) and bounds -----------------------------------------------------

def test_c_of_delta():
    assert od.c_of_delta(0) == 1.0
    assert od.c_of_delta(0.6) == pytest.approx(2.0, rel=1e-15)
    assert od.c_of_delta(0.999) > 44
    with pytest.raises(ValueError):
        od.c_of_delta(1.0)


def test_ordering_bounds():
    lo, hi = od.ordering_bounds([3, 2], 0.0)
    assert lo == hi == pytest.approx(1 / 12)
    lo, hi = od.ordering_bounds([3], 0.6)
    assert lo == pytest.approx(1 / 48) and hi == pytest.approx(8 / 6)
    for d in np.linspace(0, 0.95, 10):
        lo, hi = od.ordering_bounds([1, 4, 2], d)
        assert lo <= hi


def test_spec_validation():
    with pytest.raises(ValueError):
        OrderingSpec([[(0, 0), (1, 0)]], [(1, 1)])
    with pytest.raises(ValueError):
        OrderingSpec([[(0, 0)], [(0, 0)]], [(1,), (1,)])
    s = OrderingSpec.identity([[(1, 0), (0, 0)]])
    assert s.blocks == (((0, 0), (1, 0)),)
    assert s.perms == ((1, 2),)


# -- Monte Carlo -------------------------------------------------------------

def within(est, target, k):
    return abs(est.estimate - target) <= k * est.stderr


@pytest.mark.parametrize("perm", [(1, 2, 3, 4), (4, 3, 2, 1), (2, 4, 1, 3)])
def test_iid_single_block(perm):
    c = iid(4)
    e = od.ordering_probability_mc(c, OrderingSpec([c.sites], [perm]), 200_000, seed=1)
    assert within(e, 1 / 24, 4)
    assert e.ties == 0


def test_iid_two_blocks():
    c = iid(4)
    spec = OrderingSpec([c.sites[:2], c.sites[2:]], [(2, 1), (1, 2)])
    e = od.ordering_probability_mc(c, spec, 100_000, seed=2)
    assert within(e, 0.25, 4)


def test_rank_convention():
    S = np.eye(2)
    c = od.cov_from_matrix(S)
    X = np.array([[2.0, 1.0], [1.0, 2.0]])
    cols = od._order_columns(c, c.sites, (1, 2))
    assert od.follows(X, cols)[0].tolist() == [True, False]


def test_bf_spacing_four_sandwich(bf):
    sites = [(0, 0), (4, 0), (8, 0)]
    c = od.build_covariance(bf, sites)
    d = od.gershgorin_delta(c)
    lo, hi = od.ordering_bounds([3], d)
    e = od.ordering_probability_mc(c, OrderingSpec.identity([sites]), 100_000, seed=3)
    assert lo - 3 * e.stderr <= e.estimate <= hi + 3 * e.stderr


def test_permutations_sum_to_one(bf):
    c = od.build_covariance(bf, [(0, 0), (1, 0), (1, 1)])
    tot = 0.0
    var = 0.0
    for p in od.all_permutations(3):
        e = od.ordering_probability_mc(c, OrderingSpec([c.sites], [p]), 20_000, seed=4)
        tot += e.estimate
        var += e.stderr ** 2
    # common samples: the six frequencies partition every draw
    assert tot == pytest.approx(1.0, abs=1e-12)


def test_sandwich_across_configurations():
    rng = np.random.default_rng(6)
    for lam2 in (1.5, 2.0, 3.0):
        k = kernel.bargmann_fock(lam2, lam2)
        sites = [(0, 0), (1, 0), (0, 1), (2, 2)]
        c = od.build_covariance(k, sites)
        d = od.gershgorin_delta(c)
        spec = OrderingSpec([sites[:2], sites[2:]],
                            [tuple(rng.permutation([1, 2]) + 0) for _ in range(2)])
        lo, hi = od.ordering_bounds(spec, d)
        e = od.ordering_probability_mc(c, spec, 50_000, seed=lam2 * 10)
        assert lo - 3 * e.stderr <= e.estimate <= hi + 3 * e.stderr


def test_mc_requires_trials():
    with pytest.raises(ValueError):
        od.ordering_probability_mc(iid(2), OrderingSpec.identity([iid(2).sites]), 999, 0)


def test_mc_reproducible():
    c = iid(3)
    s = OrderingSpec.identity([c.sites])
    assert od.ordering_probability_mc(c, s, 5000, 7) == od.ordering_probability_mc(c, s, 5000, 7)


# -- decomposition -----------------------------------------------------------

def test_decompose_examples():
    assert od.r_connected_decompose([0, 1, 2], 1) == [[0, 1, 2]]
    assert od.r_connected_decompose([0, 5], 1) == [[0], [5]]
    assert od.r_connected_decompose([0, 2, 4, 9, 11], 2) == [[0, 2, 4], [9, 11]]
    with pytest.raises(ValueError):
        od.r_connected_decompose([2, 1], 1)


def test_decompose_gap_rule():
    rng = np.random.default_rng(0)
    for _ in range(100):
        xs = sorted(set(rng.integers(0, 60, size=15).tolist()))
        R = int(rng.integers(1, 6))
        blocks = od.r_connected_decompose(xs, R)
        assert [x for b in blocks for x in b] == xs
        for b in blocks:
            assert all(y - x <= R for x, y in zip(b, b[1:]))
        for b1, b2 in zip(blocks, blocks[1:]):
            assert b1[-1] + R < b2[0]


def test_row_blocks():
    A = [(0, 1), (5, 0), (1, 0), (2, 1), (0, 0)]
    assert od.row_blocks(A, 1) == [[(0, 0), (1, 0)], [(5, 0)], [(0, 1)], [(2, 1)]]


# -- Peierls -----------------------------------------------------------------

def test_peierls_singleton():
    r = od.peierls_estimate_mc(NEAR_IID, [(0, 0)], 1, 100_000, seed=1)
    assert abs(r.estimate - 0.5) <= 4 * r.stderr
    assert r.implication_violations == 0


def test_peierls_two_far_singletons():
    r = od.peierls_estimate_mc(NEAR_IID, [(0, 0), (0, 10)], 1, 100_000, seed=2)
    assert abs(r.estimate - 0.25) <= 4 * r.stderr


def test_peierls_row_block():
    A = [(0, 0), (1, 0), (2, 0), (3, 0)]
    r = od.peierls_estimate_mc(NEAR_IID, A, 3, 100_000, seed=3)
    assert len(r.blocks) == 1
    assert r.delta < 1e-12
    assert r.bound == pytest.approx(1 / 24, rel=1e-10)
    assert r.consistent
    assert r.implication_violations == 0


def test_peierls_correlated_implication(bf):
    A = [(0, 0), (1, 0), (3, 0), (0, 2)]
    r = od.peierls_estimate_mc(bf, A, 2, 20_000, seed=4)
    assert r.implication_violations == 0
    assert [len(b) for b in r.blocks] == [3, 1]


def test_peierls_constants():
    pc = od.peierls_constants(0.5)
    n = pc.n0
    assert 2 ** n / math.factorial(n) <= 0.5 ** (2 * n)
    assert 2 ** (n - 1) / math.factorial(n - 1) > 0.5 ** (2 * (n - 1))
    assert pc.R0 == math.ceil(2 / 0.5 ** (2 * n))
    assert 1 / pc.R0 <= 0.5 ** (2 * n) / 2


def test_peierls_constants_small_rho():
    pc = od.peierls_constants(0.1)
    assert pc.n0 > 100
    assert pc.R0 > 10 ** 300
    with pytest.raises(ValueError):
        od.peierls_constants(1.0)
