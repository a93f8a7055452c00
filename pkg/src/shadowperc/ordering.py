"""Ordering probabilities of Gaussian vectors and the Peierls estimate.

Sites are points of Z^2 in lexicographic order.  For a block of sites
a_1 < ... < a_n and a permutation sigma (given as the tuple of ranks
sigma(1), ..., sigma(n)), x follows sigma when

    x_{a_{sigma^-1(1)}} > x_{a_{sigma^-1(2)}} > ... > x_{a_{sigma^-1(n)}},

so rank 1 is the largest value and the identity means decreasing along
the lexicographic order.  The sandwich

    prod C(delta)^{-n_i} / n_i!  <=  P(every block follows its sigma_i)  <=  prod C(delta)^{n_i} / n_i!

holds with C(delta) = sqrt((1 + delta) / (1 - delta)) whenever every
eigenvalue of the covariance lies in [1 - delta, 1 + delta].
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import rng
from .kernel import Kernel, covariance

PIVOT_FLOOR = 1e-12
TIE_GAP = 1e-15


class FactorizationError(np.linalg.LinAlgError):
    def __init__(self, msg, pivot):
        super().__init__(msg)
        self.pivot = pivot


def _sites(A):
    arr = np.asarray(A, dtype=np.int64).reshape(-1, 2)
    if arr.shape[0] == 0:
        raise ValueError("empty site set")
    keys = [tuple(map(int, s)) for s in arr]
    if len(set(keys)) != len(keys):
        raise ValueError("sites must be distinct")
    return sorted(keys)


def cholesky(S, floor=PIVOT_FLOOR):
    """Lower Cholesky factor; raises FactorizationError naming the smallest pivot."""
    S = np.asarray(S, dtype=float)
    n = S.shape[0]
    L = np.zeros_like(S)
    pivots = np.empty(n)
    for j in range(n):
        v = S[j, j] - L[j, :j] @ L[j, :j]
        pivots[j] = v
        if not v > floor:
            raise FactorizationError(
                f"covariance is not numerically positive definite: pivot {j} = {v:.3e} "
                f"(floor {floor:g})", float(v))
        L[j, j] = math.sqrt(v)
        L[j + 1:, j] = (S[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L, float(pivots.min())


@dataclass(frozen=True, eq=False)
class CovMatrix:
    sites: list
    matrix: np.ndarray
    kernel: Kernel | None
    chol: np.ndarray
    min_pivot: float

    def index(self, site):
        return self.sites.index(tuple(site))

    @property
    def n(self):
        return len(self.sites)


def build_covariance(k: Kernel, A) -> CovMatrix:
    sites = _sites(A)
    P = np.array(sites, dtype=float)
    diff = P[:, None, :] - P[None, :, :]
    S = np.asarray(covariance(k, diff), dtype=float)
    S = 0.5 * (S + S.T)
    L, piv = cholesky(S)
    return CovMatrix(sites, S, k, L, piv)


def cov_from_matrix(S, sites=None) -> CovMatrix:
    """Wrap an explicit covariance matrix (sites default to (i, 0))."""
    S = np.asarray(S, dtype=float)
    sites = [(i, 0) for i in range(S.shape[0])] if sites is None else [tuple(s) for s in sites]
    L, piv = cholesky(S)
    return CovMatrix(sites, S, None, L, piv)


def gershgorin_delta(cov) -> float:
    """max_i sum_{j != i} |S_ij| for a unit-diagonal covariance."""
    S = cov.matrix if isinstance(cov, CovMatrix) else np.asarray(cov, dtype=float)
    if not np.allclose(np.diag(S), 1.0, rtol=0, atol=1e-12):
        raise ValueError("gershgorin_delta needs a unit diagonal; rescale the kernel first")
    off = np.abs(S) - np.diag(np.abs(np.diag(S)))
    return float(off.sum(axis=1).max()) if S.shape[0] > 1 else 0.0


def c_of_delta(delta) -> float:
    if not 0 <= delta < 1:
        raise ValueError("C(delta) needs 0 <= delta < 1")
    return math.sqrt((1 + delta) / (1 - delta))


@dataclass(frozen=True)
class OrderingSpec:
    """Blocks of sites (each sorted lexicographically) and a rank tuple per block."""

    blocks: tuple
    perms: tuple

    def __post_init__(self):
        blocks = tuple(tuple(sorted(tuple(map(int, s)) for s in b)) for b in self.blocks)
        perms = tuple(tuple(int(r) for r in p) for p in self.perms)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "perms", perms)
        if len(blocks) != len(perms):
            raise ValueError("one permutation per block")
        seen = set()
        for b, p in zip(blocks, perms):
            if not b:
                raise ValueError("empty block")
            if sorted(p) != list(range(1, len(b) + 1)):
                raise ValueError(f"{p} is not a permutation of 1..{len(b)}")
            if seen & set(b):
                raise ValueError("blocks overlap")
            seen |= set(b)

    @classmethod
    def identity(cls, blocks):
        return cls(tuple(blocks), tuple(tuple(range(1, len(b) + 1)) for b in blocks))

    @property
    def sizes(self):
        return [len(b) for b in self.blocks]

    def sites(self):
        return sorted(s for b in self.blocks for s in b)


def ordering_bounds(spec, delta):
    """(prod C^{-n_i}/n_i!, prod C^{n_i}/n_i!)."""
    C = c_of_delta(delta)
    sizes = spec.sizes if isinstance(spec, OrderingSpec) else list(spec)
    lo = hi = 1.0
    for n in sizes:
        lo *= C ** (-n) / math.factorial(n)
        hi *= C ** n / math.factorial(n)
    return lo, hi


def sample_gaussian(cov: CovMatrix, trials, seed, label=0):
    """(trials, n) samples of N(0, S) through the Cholesky factor."""
    g = rng.generator(seed, label)
    Z = g.standard_normal((trials, cov.n))
    return Z @ cov.chol.T


def _order_columns(cov, block, perm):
    """Column indices of the block arranged from rank 1 to rank n."""
    cols = [cov.index(s) for s in block]
    order = sorted(range(len(block)), key=lambda i: perm[i])
    return [cols[i] for i in order]


def follows(X, cols):
    """Per-row (strict, tie) indicators for X[:, cols[0]] > X[:, cols[1]] > ..."""
    if len(cols) < 2:
        n = X.shape[0]
        return np.ones(n, dtype=bool), np.zeros(n, dtype=bool)
    gaps = X[:, cols[:-1]] - X[:, cols[1:]]
    strict = np.all(gaps > 0, axis=1)
    ties = np.any(np.abs(gaps) < TIE_GAP, axis=1)
    return strict & ~ties, ties


@dataclass(frozen=True)
class MCEstimate:
    estimate: float
    stderr: float
    trials: int
    ties: int


def ordering_probability_mc(cov: CovMatrix, spec: OrderingSpec, trials, seed, chunk=100_000):
    """Frequency with which every block follows its permutation; ties count as failures."""
    if trials < 1000:
        raise ValueError("ordering_probability_mc needs at least 1000 trials")
    cols = [_order_columns(cov, b, p) for b, p in zip(spec.blocks, spec.perms)]
    hits = 0
    ties = 0
    done = 0
    part = 0
    while done < trials:
        n = min(chunk, trials - done)
        X = sample_gaussian(cov, n, seed, part)
        ok = np.ones(n, dtype=bool)
        tie = np.zeros(n, dtype=bool)
        for c in cols:
            s, t = follows(X, c)
            ok &= s
            tie |= t
        hits += int(ok.sum())
        ties += int(tie.sum())
        done += n
        part += 1
    p = hits / trials
    return MCEstimate(p, math.sqrt(p * (1 - p) / trials), trials, ties)


def all_permutations(n):
    """Every rank tuple of length n."""
    return [tuple(p) for p in itertools.permutations(range(1, n + 1))]


def r_connected_decompose(row_sites, R):
    """Split sorted distinct integers into maximal blocks with successive gaps <= R."""
    xs = [int(x) for x in row_sites]
    if any(b <= a for a, b in zip(xs, xs[1:])):
        raise ValueError("row sites must be sorted and distinct")
    blocks = []
    for x in xs:
        if blocks and x - blocks[-1][-1] <= R:
            blocks[-1].append(x)
        else:
            blocks.append([x])
    return blocks


def row_blocks(A, R):
    """R-connected blocks of every row of A, as lists of sites."""
    rows = {}
    for x, y in _sites(A):
        rows.setdefault(y, []).append(x)
    out = []
    for y in sorted(rows):
        for b in r_connected_decompose(rows[y], R):
            out.append([(x, y) for x in b])
    return out


@dataclass(frozen=True)
class PeierlsConstants:
    rho: float
    n0: int
    R0: int


def peierls_constants(rho, n_max=10_000):
    """n0 = min{n : 2^n / n! <= rho^{2n}} and R0 = ceil(2 / rho^{2 n0})."""
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    lr = 2 * math.log(rho)
    for n in range(1, n_max + 1):
        if n * math.log(2) - math.lgamma(n + 1) <= n * lr:
            # (2/rho^2)^n / n! rises then falls and exceeds 1 at n = 1, so the
            # first n satisfying the inequality keeps it for every larger n
            # exact rational so that tiny rho^{2 n0} does not underflow
            r0 = 2 / Fraction(rho) ** (2 * n)
            return PeierlsConstants(rho, n, -(-r0.numerator // r0.denominator))
    raise ValueError("n0 not found below n_max")


@dataclass(frozen=True)
class PeierlsResult:
    estimate: float
    stderr: float
    trials: int
    delta: float
    bound: float
    blocks: list
    implication_violations: int
    ties: int

    @property
    def consistent(self):
        return self.estimate <= self.bound + 3 * self.stderr


def peierls_estimate_mc(k: Kernel, A, R, trials, seed, chunk=50_000):
    """P(alpha^X_R(u) <= 0 for all u in A) against prod_B C(delta)^|B| / |B|!.

    X is sampled jointly on A and its R-padding to the right.  delta is the
    Gershgorin constant of the covariance of A itself.  On every sample the
    event is checked to imply that each R-connected row block is decreasing.
    """
    A = _sites(A)
    R = int(R)
    if R < 1:
        raise ValueError("R must be >= 1")
    full = sorted(set(A) | {(x + r, y) for x, y in A for r in range(1, R + 1)})
    cov = build_covariance(k, full)
    covA = build_covariance(k, A)
    delta = gershgorin_delta(covA)
    blocks = row_blocks(A, R)
    bound = ordering_bounds([len(b) for b in blocks], delta)[1]
    idx = {s: i for i, s in enumerate(cov.sites)}
    u_cols = np.array([idx[s] for s in A])
    nbr = np.array([[idx[(s[0] + r, s[1])] for r in range(1, R + 1)] for s in A])
    block_cols = [[idx[s] for s in b] for b in blocks]
    hits = viol = ties = 0
    done = part = 0
    while done < trials:
        n = min(chunk, trials - done)
        X = sample_gaussian(cov, n, seed, part)
        # alpha_R(u) <= 0  <=>  X_{u + r e1} <= X_u for r = 1..R
        ev = np.all(X[:, nbr] <= X[:, u_cols][:, :, None], axis=(1, 2))
        dec = np.ones(n, dtype=bool)
        for c in block_cols:
            if len(c) > 1:
                dec &= np.all(X[:, c[:-1]] >= X[:, c[1:]], axis=1)
                ties += int(np.sum(np.any(np.abs(X[:, c[:-1]] - X[:, c[1:]]) < TIE_GAP, axis=1)))
        hits += int(ev.sum())
        viol += int(np.sum(ev & ~dec))
        done += n
        part += 1
    p = hits / trials
    return PeierlsResult(p, math.sqrt(p * (1 - p) / trials), trials, delta, bound, blocks,
                         viol, ties)
