"""The shadow slope field alpha and its truncations.

For a height field g and a horizon R,

    alpha_R^g(z) = sup_{0 <= r <= R} tau_g(z, z + r e1),
    tau_g(z, z + r e1) = (g(z + r e1) - g(z)) / r   (r > 0),  <grad g(z), e1>  (r = 0).

On grids the sup runs over lattice multiples of the spacing.  The discrete
field alpha^X uses integer r >= 1 only.  Sites whose row does not extend a
full horizon to the right are invalid (NaN) rather than evaluated with a
shorter horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import beta as beta_dist

from . import sampler
from .kernel import Kernel
from .sampler import FieldGrid, NoisePatch, Window


@dataclass(frozen=True, eq=False)
class ShadowField:
    """alpha values on a lattice window; NaN marks sites without full right padding."""

    origin: tuple
    spacing: float
    alpha: np.ndarray
    argmax_r: np.ndarray | None
    variant: str          # "discrete" or "continuous"
    horizon: float
    source: dict

    @property
    def valid(self):
        return ~np.isnan(self.alpha)

    @property
    def dims(self):
        return self.alpha.shape[1], self.alpha.shape[0]

    def crop(self, nx, ny=None, col0=0, row0=0):
        """Sub-window of nx columns (and ny rows) starting at (col0, row0)."""
        ny = self.alpha.shape[0] - row0 if ny is None else ny
        sl = (slice(row0, row0 + ny), slice(col0, col0 + nx))
        am = None if self.argmax_r is None else self.argmax_r[sl]
        origin = (self.origin[0] + col0 * self.spacing, self.origin[1] + row0 * self.spacing)
        return ShadowField(origin, self.spacing, self.alpha[sl], am, self.variant,
                           self.horizon, self.source)


class WindowError(IndexError):
    """A point or offset falls outside the field window."""


def tau(field: FieldGrid, gradient: FieldGrid | None, z, r):
    """Slope from the grid point z = (col, row) to z + r e1 (r in length units)."""
    col, row = z
    ny, nx = field.values.shape
    if not (0 <= row < ny and 0 <= col < nx):
        raise WindowError(f"z={z} outside the field window")
    if r == 0:
        if gradient is None:
            raise ValueError("r = 0 needs the e1-gradient grid")
        return float(gradient.values[row, col])
    k = r / field.spacing
    kr = int(round(k))
    if r < 0 or abs(k - kr) > 1e-9:
        raise ValueError(f"r={r} is not a nonnegative multiple of the spacing {field.spacing}")
    if col + kr >= nx:
        raise WindowError(f"z + r e1 = ({col + kr}, {row}) outside the field window")
    return float((field.values[row, col + kr] - field.values[row, col]) / r)


def _max_slope(values, K, spacing, init=None):
    """Row-wise max over k = 1..K of (v[c+k] - v[c]) / (k*spacing), smallest maximiser.

    Returns (alpha, argmax_k) with NaN / -1 where c + K is beyond the row end.
    ``init`` supplies the k = 0 candidate.
    """
    values = np.asarray(values, dtype=float)
    ny, nx = values.shape
    n_valid = max(nx - K, 0)
    if init is None:
        best = np.full((ny, n_valid), -np.inf)
        arg = np.full((ny, n_valid), -1, dtype=np.int64)
    else:
        best = np.array(init[:, :n_valid], dtype=float)
        arg = np.zeros((ny, n_valid), dtype=np.int64)
    base = values[:, :n_valid]
    for k in range(1, K + 1):
        q = (values[:, k:k + n_valid] - base) / (k * spacing)
        better = q > best
        best = np.where(better, q, best)
        arg = np.where(better, k, arg)
    alpha = np.full((ny, nx), np.nan)
    argk = np.full((ny, nx), -1, dtype=np.int64)
    alpha[:, :n_valid] = best
    argk[:, :n_valid] = arg
    return alpha, argk


def shadow_discrete(X, R=None, method="direct", origin=(0.0, 0.0), source=None) -> ShadowField:
    """alpha^X_R on integer sites; rows of X run along e1.

    R=None uses every site to the right (horizon shrinking towards the row end);
    an integer R marks the last R columns invalid.  ``method="hull"`` runs
    :func:`shadow_fast_row` on each row instead of the direct scan.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    ny, nx = X.shape
    if R is None:
        alpha = np.full((ny, nx), np.nan)
        argr = np.full((ny, nx), -1, dtype=np.int64)
        for row in range(ny):
            a, r = _suffix_sup(X[row])
            alpha[row], argr[row] = a, r
        horizon = math.inf
    else:
        R = int(R)
        if R < 1:
            raise ValueError("horizon must be >= 1")
        if method == "hull":
            alpha = np.vstack([shadow_fast_row(row, R) for row in X])
            argr = None
        else:
            alpha, argr = _max_slope(X, R, 1.0)
        horizon = float(R)
    return ShadowField(tuple(origin), 1.0, alpha,
                       None if argr is None else np.where(argr >= 0, argr, -1).astype(float),
                       "discrete", horizon, dict(source or {}))


def _suffix_sup(y):
    """sup_{j > i} (y[j] - y[i]) / (j - i) for every i, by a direct O(n^2) scan."""
    n = len(y)
    alpha = np.full(n, np.nan)
    arg = np.full(n, -1, dtype=np.int64)
    for i in range(n - 1):
        q = (y[i + 1:] - y[i]) / np.arange(1, n - i)
        k = int(np.argmax(q))
        alpha[i], arg[i] = q[k], k + 1
    return alpha, arg


def shadow_continuous(field: FieldGrid, gradient: FieldGrid, R) -> ShadowField:
    """alpha_R^f approximated by the max over r in {0, s, 2s, ..., R} (s the spacing)."""
    if gradient.values.shape != field.values.shape or gradient.spacing != field.spacing \
            or tuple(gradient.origin) != tuple(field.origin):
        raise ValueError("field and gradient grids are on different lattices")
    if gradient.derivative != "e1":
        raise ValueError("gradient grid must hold <grad f, e1>")
    K = int(math.floor(R / field.spacing + 1e-9))
    alpha, argk = _max_slope(field.values, K, field.spacing, init=gradient.values)
    argr = np.where(argk >= 0, argk * field.spacing, np.nan)
    src = dict(kernel_R=field.R, seed=field.seed, stream=field.stream)
    return ShadowField(tuple(field.origin), field.spacing, alpha, argr, "continuous",
                       float(R), src)


# ---------------------------------------------------------------------------
# upper-hull fast path
# ---------------------------------------------------------------------------

def _cross(xo, yo, xa, ya, xb, yb):
    return (xa - xo) * (yb - yo) - (ya - yo) * (xb - xo)


def _tangent(hx, hy, px, py):
    """Index of the upper-hull vertex (hx, hy sorted by x) maximising slope from P.

    P lies left of every vertex; the slope from P is unimodal along the chain,
    so binary-search the first vertex not followed by a steeper one.
    """
    lo, hi = 0, len(hx) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _cross(px, py, hx[mid], hy[mid], hx[mid + 1], hy[mid + 1]) > 0:
            lo = mid + 1
        else:
            hi = mid
    return lo


def shadow_fast_row(values, R=None):
    """alpha on one row via upper convex hulls, O(n log n).

    Equals the direct definition max_{1 <= r <= R} (y[i+r] - y[i]) / r.  Rows
    are cut in blocks of length R; for a site i the candidates in its own
    block come from a suffix hull built right to left, those in the next block
    from a prefix hull grown left to right.  Invalid sites are NaN.
    """
    y = [float(v) for v in values]
    n = len(y)
    out = np.full(n, np.nan)
    if n < 2:
        return out
    if R is None or R >= n - 1:
        R_eff = n - 1
        last_valid = n - 2 if R is None else n - 1 - R
    else:
        R_eff = int(R)
        if R_eff < 1:
            raise ValueError("horizon must be >= 1")
        last_valid = n - 1 - R_eff
    if last_valid < 0:
        return out
    if R is None or R_eff == n - 1:
        _suffix_block(y, 0, n, out, last_valid, None)
        return out
    for start in range(0, last_valid + 1, R_eff):
        stop = min(start + R_eff, n)
        _suffix_block(y, start, stop, out, last_valid, R_eff)
    return out


def _suffix_block(y, start, stop, out, last_valid, R):
    """Fill out[i] for i in [start, stop) using candidates j in (i, i + R]."""
    # suffix hull of y[i+1 .. stop-1], stored right-to-left (stack top = leftmost)
    sx, sy = [], []
    own = {}
    for i in range(stop - 1, start - 1, -1):
        if i <= last_valid and sx:
            hx, hy = sx[::-1], sy[::-1]
            k = _tangent(hx, hy, i, y[i])
            own[i] = (y[hx[k]] - y[i]) / (hx[k] - i)
        # push i as the new leftmost point
        while len(sx) >= 2 and _cross(i, y[i], sx[-1], sy[-1], sx[-2], sy[-2]) >= 0:
            sx.pop()
            sy.pop()
        sx.append(i)
        sy.append(y[i])
    # prefix hull of the next block y[stop .. i+R], grown left to right
    px, py = [], []
    nxt = stop
    n = len(y)
    for i in range(start, stop):
        if i > last_valid:
            break
        best = own.get(i, -math.inf)
        if R is not None:
            lim = min(i + R, n - 1)
            while nxt <= lim:
                while len(px) >= 2 and _cross(px[-2], py[-2], px[-1], py[-1], nxt, y[nxt]) >= 0:
                    px.pop()
                    py.pop()
                px.append(nxt)
                py.append(y[nxt])
                nxt += 1
            if px:
                k = _tangent(px, py, i, y[i])
                q = (py[k] - y[i]) / (px[k] - i)
                if q > best:
                    best = q
        out[i] = best


# ---------------------------------------------------------------------------
# coupled truncation studies
# ---------------------------------------------------------------------------

def shadow_window(window: Window, horizon):
    """Window padded to the right so every original site has a full horizon."""
    return window.pad_right(horizon)


def noise_for_shadow(window: Window, k: Kernel, horizon, seed, stream, R=math.inf) -> NoisePatch:
    return sampler.noise_for_window(window.pad_right(horizon), k, seed, stream, R)


def continuous_alpha(noise: NoisePatch, k: Kernel, window: Window, horizon, R=math.inf) -> ShadowField:
    """alpha_horizon^{f_R} on ``window`` from the shared noise patch."""
    padded = window.pad_right(horizon)
    f = sampler.convolve_field(noise, k, R, padded)
    g = sampler.convolve_field(noise, k, R, padded, derivative="e1")
    return shadow_continuous(f, g, horizon).crop(window.nx, window.ny)


@dataclass(frozen=True)
class TruncationError:
    horizon: float
    kernel_R: float
    reference: tuple
    sup_error: float


def truncation_error(noise: NoisePatch, k: Kernel, pairs, window: Window, reference=None):
    """sup over ``window`` of |alpha_{R1}^{f_{R2}} - reference| for each (R1, R2) pair.

    The reference defaults to the largest (R*, R*) pair, standing in for the
    untruncated alpha^f.  Pass ``reference=(R0, inf)`` to compare kernel
    truncations at a fixed horizon.
    """
    pairs = [(float(a), float(b)) for a, b in pairs]
    if reference is None:
        rstar = max(max(a for a, _ in pairs), max(b for _, b in pairs if math.isfinite(b)))
        reference = (rstar, rstar)
    reference = (float(reference[0]), float(reference[1]))
    cache = {}

    def alpha(pair):
        if pair not in cache:
            cache[pair] = continuous_alpha(noise, k, window, pair[0], pair[1]).alpha
        return cache[pair]

    ref = alpha(reference)
    out = []
    for p in pairs:
        err = float(np.max(np.abs(alpha(p) - ref)))
        out.append(TruncationError(p[0], p[1], reference, err))
    return out


def exceedance_frequency(errors, eps):
    """Fraction of sup-errors above eps."""
    errors = np.asarray(errors, dtype=float)
    return float(np.mean(errors > eps))


@dataclass(frozen=True)
class SeedLevel:
    level: float
    p: float
    trials: int
    hits: int
    coverage_lower95: float
    note: str


def seed_level_estimate(k: Kernel, lam, trials, p, seed=0, h=0.25):
    """Empirical level l such that sup_{[0,lam]^2} alpha_lam^{f_lam} <= l with frequency >= p."""
    if trials < 100:
        raise ValueError("seed level estimation needs at least 100 trials")
    if p <= 0:
        return SeedLevel(-math.inf, p, trials, trials, 1.0, "p = 0 imposes no constraint")
    window = Window.from_rect(0.0, 0.0, lam, lam, h)
    R = float(lam)
    sups = np.empty(trials)
    for t in range(trials):
        noise = noise_for_shadow(window, k, lam, seed, t, R)
        sups[t] = np.max(continuous_alpha(noise, k, window, lam, R).alpha)
    srt = np.sort(sups)
    idx = min(trials - 1, max(0, int(math.ceil(p * trials)) - 1))
    level = float(srt[idx])
    hits = int(np.sum(sups <= level))
    lower = float(beta_dist.ppf(0.05, hits, trials - hits + 1)) if hits > 0 else 0.0
    note = (f"{hits}/{trials} realisations below the level; one-sided 95% Clopper-Pearson "
            f"lower bound on the coverage is {lower:.4f}")
    return SeedLevel(level, p, trials, hits, lower, note)
