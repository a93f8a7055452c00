"""Multi-scale renormalization: certified recursions and small-scale event simulation.

Scale sequence: lam_{n+1} = lam_n mu_n, lattices L_n = lam_n Z^d and children
Lambda_n(u) = (u + [0, lam_n)^d) cap L_{n-1}.  A point u in L_n is good when

    A_n(u) = B_n(u) and, for all children u1, u2 at sup-distance >= 5 sigma_{n-1} lam_{n-1},
             A_{n-1}(u1) or A_{n-1}(u2),

i.e. when B_n(u) holds and the bad children fit in a box of side
< 5 sigma_{n-1} lam_{n-1}.

All probability bounds are kept as log2 values; additions round upward.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np


class ConditionError(ValueError):
    """Scheme parameters violate a condition required by the requested computation."""


class StructureError(RuntimeError):
    """A good map does not have the one-bad-box-per-cell structure."""

    def __init__(self, msg, level=None, cell=None):
        super().__init__(msg)
        self.level = level
        self.cell = cell


@dataclass(frozen=True)
class Seq:
    """Eventually constant integer sequence: prefix values, then ``tail`` forever."""

    prefix: tuple
    tail: int

    @classmethod
    def const(cls, v):
        return cls((), int(v))

    @classmethod
    def coerce(cls, v):
        if isinstance(v, Seq):
            return v
        if isinstance(v, (list, tuple)):
            if not v:
                raise ValueError("empty sequence")
            return cls(tuple(int(x) for x in v[:-1]), int(v[-1]))
        return cls.const(v)

    def __getitem__(self, n):
        return self.prefix[n] if n < len(self.prefix) else self.tail

    def distinct(self):
        """(index, value) pairs covering every value the sequence takes."""
        return [(i, v) for i, v in enumerate(self.prefix)] + [(len(self.prefix), self.tail)]


@dataclass(frozen=True)
class SchemeParams:
    d: int
    lam0: int
    mu: Seq
    sigma: Seq
    N: int = 64

    def __post_init__(self):
        object.__setattr__(self, "mu", Seq.coerce(self.mu))
        object.__setattr__(self, "sigma", Seq.coerce(self.sigma))
        if self.d < 2:
            raise ValueError("d must be >= 2")
        if self.lam0 < 1:
            raise ValueError("lambda_0 must be >= 1")

    def lam(self, n):
        """lam_n as an exact integer."""
        v = self.lam0
        for i in range(n):
            v *= self.mu[i]
        return v


def top_level(params: SchemeParams, lam, strict=True):
    """Largest N with lam_N < lam (strict) or lam_N <= lam."""
    n = -1
    while True:
        v = params.lam(n + 1)
        if (v < lam) if strict else (v <= lam):
            n += 1
        else:
            return n
        if n > 10_000:
            raise ValueError("scale sequence does not grow")


@dataclass(frozen=True)
class Verdict:
    ok: bool
    detail: str


def check_c1(mu, sigma):
    """mu_n >= 100 sigma_n and sigma_n >= 2 for every n."""
    mu, sigma = Seq.coerce(mu), Seq.coerce(sigma)
    n_max = max(len(mu.prefix), len(sigma.prefix))
    for n in range(n_max + 1):
        if sigma[n] < 2:
            return Verdict(False, f"sigma_{n} = {sigma[n]} < 2")
        if mu[n] < 100 * sigma[n]:
            return Verdict(False, f"mu_{n} = {mu[n]} < 100 sigma_{n} = {100 * sigma[n]}")
    return Verdict(True, "mu_n >= 100 sigma_n and sigma_n >= 2 for all n")


def _log2_up(m):
    """Float upper bound of log2(m) for a positive integer m, as an exact Fraction."""
    v = math.log2(m)
    if m & (m - 1) == 0:
        return Fraction(m.bit_length() - 1)
    return Fraction(math.nextafter(v, math.inf))


def _c3_sum(mu: Seq):
    """sum_n log2(mu_n) / 2^n in exact rational arithmetic on log2 upper bounds."""
    s = Fraction(0)
    P = len(mu.prefix)
    for n in range(P):
        s += _log2_up(mu[n]) / 2 ** n
    return s + _log2_up(mu.tail) * Fraction(2, 2 ** P)


def check_c3(mu):
    """Verdict and limit of sum log2(mu_n) / 2^n (finite for eventually constant mu)."""
    mu = Seq.coerce(mu)
    if any(v < 1 for _, v in mu.distinct()):
        return Verdict(False, "mu must be positive"), math.nan
    return Verdict(True, "eventually constant: geometric tail"), float(_c3_sum(mu))


@dataclass
class CertBounds:
    d: int
    sigma0: Fraction            # Sigma_0 (exact in the stored representation)
    log2_a: list                # log2 a_n as Fractions
    eps0: float
    log2_eps0: float
    log2_p: list = field(default_factory=list)
    log2_aux: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)

    @property
    def Sigma0(self):
        return float(self.sigma0)


def _validate_mu(mu: Seq):
    for i, v in mu.distinct():
        if v < 2:
            raise ConditionError(f"mu_{i} = {v}: scales do not grow")


def epsilon0(params: SchemeParams, check_conditions=True, levels=None) -> CertBounds:
    """Sigma_0, log2 a_n for n <= levels, and eps0 = 0.99 min(1/(2 + Sigma_0), 2^-Sigma_0 / 2)."""
    _validate_mu(params.mu)
    if check_conditions:
        v = check_c1(params.mu, params.sigma)
        if not v.ok:
            raise ConditionError(f"condition C1 fails: {v.detail}")
        v3, _ = check_c3(params.mu)
        if not v3.ok:
            raise ConditionError(f"condition C3 fails: {v3.detail}")
    d = params.d
    s0 = 1 + d * _c3_sum(params.mu)
    levels = params.N if levels is None else levels
    log2_a = [s0]
    for n in range(1, levels + 1):
        log2_a.append(2 * log2_a[-1] - 1 - 2 * d * _log2_up(params.mu[n - 1]))
    S = float(s0)
    eps0 = 0.99 * min(1.0 / (2.0 + S), 2.0 ** (-S) / 2.0)
    return CertBounds(d, s0, log2_a, eps0, math.log2(eps0))


def a_sequence_claim(cb: CertBounds):
    """0 <= log2 a_n <= log2 a_0 * 2^n for every stored n."""
    a0 = cb.log2_a[0]
    bad = [n for n, v in enumerate(cb.log2_a) if not (0 <= v <= a0 * 2 ** n)]
    return Verdict(not bad, "holds" if not bad else f"fails at n = {bad[:5]}")


def _up(x):
    return math.nextafter(x, math.inf)


def log2_add(a, b):
    """Upper bound of log2(2^a + 2^b)."""
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    hi, lo = (a, b) if a >= b else (b, a)
    return _up(hi + _up(math.log2(_up(1.0 + 2.0 ** (lo - hi)))))


def iterate_pn(params: SchemeParams, log2_p0, eps, N=None, cb: CertBounds | None = None):
    """Certified upper bounds for p_n from p_n <= B_n + mu_{n-1}^{2d} p_{n-1}^2.

    The auxiliary bounds are B_n = 2^(-2^n / eps).  Flags report whether
    p_n <= 2^(-2^n) for every computed level and whether the stronger
    p_n <= 2^(-2^n) / a_n holds.
    """
    N = params.N if N is None else N
    if cb is None:
        cb = epsilon0(params, check_conditions=False, levels=N)
    d = params.d
    lp = [float(log2_p0)]
    la = [-math.inf]
    reached = 0
    for n in range(1, N + 1):
        two_n = 2.0 ** n
        aux = -two_n / eps
        if not math.isfinite(aux):
            break
        sq = _up(_up(2 * d * float(_log2_up(params.mu[n - 1]))) + 2 * lp[-1]) \
            if lp[-1] != -math.inf else -math.inf
        lp.append(log2_add(aux, sq))
        la.append(_up(aux))
        reached = n
    target = all(lp[n] <= -(2.0 ** n) for n in range(len(lp)))
    strong = all(lp[n] <= -(2.0 ** n) - float(cb.log2_a[n]) for n in range(min(len(lp), len(cb.log2_a))))
    cb.log2_p, cb.log2_aux = lp, la
    cb.flags.update(target=target, strong=strong, level_reached=reached,
                    hypotheses=bool(eps <= cb.eps0 and lp[0] < math.log2(eps)))
    return cb


@dataclass(frozen=True)
class Support:
    lo: tuple
    hi: tuple
    certified: bool
    detail: str

    def disjoint(self, other):
        return any(a_hi < b_lo or b_hi < a_lo
                   for a_lo, a_hi, b_lo, b_hi in zip(self.lo, self.hi, other.lo, other.hi))


def formal_support(params: SchemeParams, n, u):
    """Enclosing box of the formal support of A_n(u).

    Level 0 is the seed box u + [-sigma_0 lam_0, sigma_0 lam_0]^d; above that the
    certified enclosure u + [-2 sigma_n lam_n, 2 sigma_n lam_n]^d, valid when the
    inclusion lam_k + 2 sigma_{k-1} lam_{k-1} <= 2 sigma_k lam_k holds for k <= n.
    """
    u = tuple(int(x) for x in u)
    if len(u) != params.d:
        raise ValueError("u has the wrong dimension")
    lam_n = params.lam(n)
    if any(x % lam_n for x in u):
        raise ValueError(f"u = {u} is not in L_{n}")
    if n == 0:
        r = params.sigma[0] * params.lam0
        return Support(tuple(x - r for x in u), tuple(x + r for x in u), True, "seed box")
    for k in range(1, n + 1):
        lk, lk1 = params.lam(k), params.lam(k - 1)
        if not (lk + 2 * params.sigma[k - 1] * lk1 <= 2 * params.sigma[k] * lk):
            r = 2 * params.sigma[n] * lam_n
            return Support(tuple(x - r for x in u), tuple(x + r for x in u), False,
                           f"inclusion fails at level {k}")
    r = 2 * params.sigma[n] * lam_n
    return Support(tuple(x - r for x in u), tuple(x + r for x in u), True,
                   f"inclusion verified for levels 1..{n}")


# ---------------------------------------------------------------------------
# event simulation (d = 2)
# ---------------------------------------------------------------------------

@dataclass
class GoodMap:
    """good[n][j, i] says whether lam_n * (i0_n + i, j0_n + j) is good at level n."""

    params: SchemeParams
    origin: tuple                  # (x0, y0), a multiple of lam_N
    good: list
    seed: np.ndarray
    aux: list                      # aux[n] for n >= 1 (aux[0] is None)
    structural_only: bool = False

    @property
    def levels(self):
        return len(self.good) - 1

    def index(self, n, u):
        lam = self.params.lam(n)
        return (u[1] - self.origin[1]) // lam, (u[0] - self.origin[0]) // lam

    def is_good(self, n, u):
        j, i = self.index(n, u)
        g = self.good[n]
        return 0 <= j < g.shape[0] and 0 <= i < g.shape[1] and bool(g[j, i])

    def children(self, n, u):
        """Lambda_n(u) as a list of level-(n-1) points."""
        lam = self.params.lam(n - 1)
        m = self.params.mu[n - 1]
        return [(u[0] + a * lam, u[1] + b * lam) for b in range(m) for a in range(m)]


def _points(origin, lam, ny, nx):
    xs = origin[0] + lam * np.arange(nx)
    ys = origin[1] + lam * np.arange(ny)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    return np.stack([X, Y], axis=-1)


def _bad_spread(bad, m):
    """Max over axes of the index spread of True entries in each m x m block."""
    Ny, Nx = bad.shape[0] // m, bad.shape[1] // m
    blk = bad.reshape(Ny, m, Nx, m)
    idx = np.arange(m)
    spread = np.full((Ny, Nx), -1)
    for occ in (blk.any(axis=1), blk.any(axis=3).transpose(0, 2, 1)):   # (Ny, Nx, m)
        first = np.where(occ, idx, m).min(axis=-1)
        last = np.where(occ, idx, -1).max(axis=-1)
        spread = np.maximum(spread, np.where(last >= 0, last - first, -1))
    return spread


def simulate_scheme(realization, seed_predicate, aux_predicate, params: SchemeParams, box,
                    levels=None):
    """Evaluate the recursive good events on the largest aligned sub-box of ``box``.

    seed_predicate(realization, pts) and aux_predicate(realization, n, pts) take an
    array of points of shape (ny, nx, 2) and return boolean arrays of shape (ny, nx).
    The support box of each event is the predicate's business.
    """
    if params.d != 2:
        raise ValueError("the simulator is two-dimensional")
    N = params.N if levels is None else levels
    lamN = params.lam(N)
    x0, y0, x1, y1 = box
    ox = -(-x0 // lamN) * lamN
    oy = -(-y0 // lamN) * lamN
    nx, ny = (x1 - ox) // lamN, (y1 - oy) // lamN
    if nx < 1 or ny < 1:
        raise ValueError(f"box {box} holds no level-{N} cell of side {lamN}")
    origin = (int(ox), int(oy))
    cells = [(ny * params.lam(N) // params.lam(n), nx * params.lam(N) // params.lam(n))
             for n in range(N + 1)]
    seed = np.asarray(seed_predicate(realization, _points(origin, params.lam0, *cells[0])),
                      dtype=bool)
    good = [seed]
    aux = [None]
    for n in range(1, N + 1):
        b = np.asarray(aux_predicate(realization, n, _points(origin, params.lam(n), *cells[n])),
                       dtype=bool)
        spread = _bad_spread(~good[-1], params.mu[n - 1])
        ok = spread < 5 * params.sigma[n - 1]
        good.append(b & ok)
        aux.append(b)
    structural = not check_c1(params.mu, params.sigma).ok
    return GoodMap(params, origin, good, seed, aux, structural)


# ---------------------------------------------------------------------------
# path extraction
# ---------------------------------------------------------------------------

def _cell_bad_ok(gm: GoodMap, m, u):
    """Raise unless the bad children of u fit in a box of side < 5 sigma_{m-1}."""
    lam = gm.params.lam(m - 1)
    mu = gm.params.mu[m - 1]
    j, i = gm.index(m - 1, u)
    blk = gm.good[m - 1][j:j + mu, i:i + mu]
    if blk.shape != (mu, mu):
        raise StructureError(f"cell {u} at level {m} leaves the map", m, u)
    bj, bi = np.nonzero(~blk)
    if bj.size and max(bj.max() - bj.min(), bi.max() - bi.min()) >= 5 * gm.params.sigma[m - 1]:
        raise StructureError(f"cell {u} at level {m}: bad children spread over more than one "
                             f"box of side {5 * gm.params.sigma[m - 1] * lam}", m, u)


def extract_path(gm: GoodMap, coarse_path, m):
    """Nearest-neighbour path in L_{m-1} of good points through the cells of a coarse path.

    ``coarse_path`` is a 4-connected list of level-m points, each good at level m.
    The result starts in Lambda_m(first) and ends in Lambda_m(last).  Search
    runs over good children of the coarse cells only.
    """
    if not coarse_path:
        raise ValueError("empty coarse path")
    if m < 1:
        raise ValueError("m must be >= 1")
    lam_c = gm.params.lam(m)
    lam_f = gm.params.lam(m - 1)
    for a, b in zip(coarse_path, coarse_path[1:]):
        if abs(a[0] - b[0]) + abs(a[1] - b[1]) != lam_c:
            raise ValueError(f"coarse path is not nearest-neighbour at {a} -> {b}")
    for u in coarse_path:
        if not gm.is_good(m, u):
            raise StructureError(f"coarse point {u} is not good at level {m}", m, u)
        _cell_bad_ok(gm, m, u)

    allowed = set()
    for u in coarse_path:
        for v in gm.children(m, u):
            if gm.is_good(m - 1, v):
                allowed.add(v)
    first = [v for v in gm.children(m, coarse_path[0]) if v in allowed]
    last = set(v for v in gm.children(m, coarse_path[-1]) if v in allowed)
    if not first or not last:
        raise StructureError("end cell without good children", m, coarse_path[0])
    prev = {v: None for v in first}
    q = deque(first)
    end = None
    while q:
        v = q.popleft()
        if v in last:
            end = v
            break
        for dx, dy in ((lam_f, 0), (-lam_f, 0), (0, lam_f), (0, -lam_f)):
            w = (v[0] + dx, v[1] + dy)
            if w in allowed and w not in prev:
                prev[w] = v
                q.append(w)
    if end is None:
        raise StructureError("no path of good children through the coarse cells", m,
                             coarse_path[0])
    path = []
    while end is not None:
        path.append(end)
        end = prev[end]
    return path[::-1]


def extract_to_level0(gm: GoodMap, coarse_path, m):
    """Apply extract_path repeatedly from level m down to level 0."""
    path = list(coarse_path)
    for k in range(m, 0, -1):
        path = extract_path(gm, path, k)
    return path


# ---------------------------------------------------------------------------
# bootstrap for crossing probabilities
# ---------------------------------------------------------------------------

@dataclass
class BootstrapCert:
    a: float
    b: float
    delta: float
    gamma: float
    lam: list
    ell: list
    eps: list
    log2_u: list
    C1: float | None = None
    c1: float | None = None
    P: list = field(default_factory=list)
    u: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)


def bootstrap_cert(a, b, lam0, ell, ell_prime, u0, N=60, delta=None, gamma=None,
                   p0=None, C1=None, c1=None):
    """Scale sequence lam_n = 2 lam_{n-1} + lam_{n-1}^delta, levels ell_n and the squaring chain.

    delta defaults to (1/b + 1)/2 and gamma to (b delta - 1)/(2a).  When p0, C1
    and c1 are given, the bounds P_{n+1} = 49 P_n^2 + C1 e^{-c1 lam_n} and
    u_n = 49 (P_n + C1 e^{-c1 lam_n / 2}) are iterated and u_{n+1} <= u_n^2 checked.
    """
    if a <= 0 or b <= 1:
        raise ConditionError("need a > 0 and b > 1")
    delta = (1.0 / b + 1.0) / 2.0 if delta is None else float(delta)
    gamma = (b * delta - 1.0) / (2.0 * a) if gamma is None else float(gamma)
    if not (0 < delta < 1):
        raise ConditionError("delta must lie in (0, 1)")
    if not b * delta > 1:
        raise ConditionError(f"b delta = {b * delta} <= 1")
    if not (gamma > 0 and b * delta - a * gamma > 1):
        raise ConditionError(f"b delta - a gamma = {b * delta - a * gamma} <= 1")
    if not ell < ell_prime:
        raise ConditionError("need ell < ell'")
    if not (0 < u0 < 1):
        raise ConditionError("u0 must lie in (0, 1)")
    if lam0 <= 1:
        raise ConditionError("lambda_0 must exceed 1")
    lam = [float(lam0)]
    for _ in range(N):
        lam.append(2 * lam[-1] + lam[-1] ** delta)
    ells = [ell_prime - (ell_prime - ell) / x ** gamma for x in lam]
    eps = [ells[n + 1] - ells[n] for n in range(N)]
    eps_floor = [(ell_prime - ell) * (1 - 2.0 ** (-gamma)) * lam[n] ** (-gamma) for n in range(N)]
    log2_u = [2.0 ** n * math.log2(u0) for n in range(N + 1)]
    # lam_n / 2^n: successive differences lam_n^delta / 2^{n+1} must shrink geometrically
    diffs = [lam[n] ** delta / 2.0 ** (n + 1) for n in range(N)]
    ratios = [diffs[n + 1] / diffs[n] for n in range(N - 1)]
    half = ratios[len(ratios) // 2:]
    converges = bool(half) and all(r < 1 for r in half) and max(half) < 1
    cert = BootstrapCert(a, b, delta, gamma, lam, ells, eps, log2_u)
    cert.flags = dict(
        ell_increasing=(ell < ells[0] and all(x < y for x, y in zip(ells, ells[1:]))
                        and all(x < ell_prime for x in ells)),
        eps_lower_bound=all(e >= f * (1 - 1e-12) for e, f in zip(eps, eps_floor)),
        lambda_converges=converges,
        ratio_limit=2.0 ** delta / 2.0,
        u_chain=all(log2_u[n + 1] <= 2 * log2_u[n] for n in range(N)),
    )
    if p0 is not None and C1 is not None and c1 is not None:
        P = [float(p0)]
        for n in range(N):
            P.append(49 * P[-1] ** 2 + C1 * math.exp(-c1 * lam[n]))
        u = [49 * (P[n] + C1 * math.exp(-c1 * lam[n] / 2)) for n in range(N + 1)]
        cert.C1, cert.c1, cert.P, cert.u = C1, c1, P, u
        cert.flags["u_squaring"] = all(u[n + 1] <= u[n] ** 2 * (1 + 1e-12) for n in range(N))
        cert.flags["u_geometric"] = u[0] < 1 and all(
            u[n] <= u[0] ** (2 ** min(n, 1000)) * (1 + 1e-9) for n in range(N + 1))
    return cert


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

@dataclass
class Report:
    rows: list            # (item, value, verdict)
    passed: bool

    def text(self):
        w = max(len(r[0]) for r in self.rows)
        lines = [f"{item:<{w}}  {value}  {verdict}" for item, value, verdict in self.rows]
        lines.append(f"OVERALL  {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def certify(params: SchemeParams, N=None):
    """Run every certification check and collect a report (never raises on FAIL)."""
    N = params.N if N is None else N
    rows = []
    c1 = check_c1(params.mu, params.sigma)
    rows.append(("C1", c1.detail, "PASS" if c1.ok else "FAIL"))
    c3, s = check_c3(params.mu)
    rows.append(("C3 sum log2(mu_n)/2^n", f"{s:.12g}", "PASS" if c3.ok else "FAIL"))
    if not (c1.ok and c3.ok):
        return Report(rows, False)
    try:
        cb = epsilon0(params, levels=N)
    except ConditionError as e:
        rows.append(("epsilon0", str(e), "FAIL"))
        return Report(rows, False)
    rows.append(("Sigma_0", f"{cb.Sigma0:.12g}", "PASS"))
    rows.append(("log2 a_0", f"{float(cb.log2_a[0]):.12g}", "PASS"))
    rows.append(("eps_0", f"{cb.eps0:.6e}", "PASS"))
    claim = a_sequence_claim(cb)
    rows.append((f"0 <= log2 a_n <= 2^n log2 a_0 (n <= {N})", claim.detail,
                 "PASS" if claim.ok else "FAIL"))
    iterate_pn(params, cb.log2_eps0 - 1, cb.eps0, N, cb)
    ok_p = cb.flags["target"] and cb.flags["level_reached"] == N
    rows.append((f"p_n <= 2^-2^n (n <= {N})",
                 f"levels {cb.flags['level_reached']}, log2 p_N = {cb.log2_p[-1]:.6e}",
                 "PASS" if ok_p else "FAIL"))
    incl = formal_support(params, min(N, 10), (0,) * params.d)
    rows.append(("support inclusion (n <= 10)", incl.detail, "PASS" if incl.certified else "FAIL"))
    passed = all(r[2] == "PASS" for r in rows)
    return Report(rows, passed)
