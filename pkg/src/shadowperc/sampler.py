"""Discretised white noise and coupled realisations of f, f_R and grad f.

White noise W on a cell lattice of spacing h: cell (i, j) is the square
[i h, (i+1) h) x [j h, (j+1) h) and carries an independent N(0, 1) draw xi.
A field value at a lattice point x = (m h, k h) is the Riemann sum

    f(x) = h * sum_c (q chi_R)(x - c) xi_c,      c = cell centres,

so that Var f(x) ~ integral of q^2.  Field points and cells share the
spacing h; coarser outputs are strided subsamples.

Arrays are indexed ``values[row, col]`` with rows along e2 and columns
along e1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from . import rng
from .kernel import Kernel, eval_truncated, eval_kernel, kernel_gradient, SUPPORT_TOL

# refuse noise patches larger than this many cells
MAX_CELLS = 60_000_000


class BudgetError(RuntimeError):
    """A requested grid exceeds the memory budget."""


class MarginError(ValueError):
    """A noise patch does not cover the kernel support around a window."""


def _as_index(x, h, what):
    m = round(x / h)
    if abs(m * h - x) > 1e-9 * max(1.0, abs(x)):
        raise ValueError(f"{what}={x} is not a multiple of the lattice spacing {h}")
    return int(m)


@dataclass(frozen=True)
class Window:
    """Lattice points ((m0 + a*stride) h, (k0 + b*stride) h), 0 <= a < nx, 0 <= b < ny."""

    m0: int
    k0: int
    nx: int
    ny: int
    h: float
    stride: int = 1

    @classmethod
    def from_rect(cls, x0, y0, x1, y1, h, spacing=None):
        """Window of points covering [x0, x1] x [y0, y1] (endpoints included)."""
        spacing = h if spacing is None else spacing
        stride = _as_index(spacing, h, "spacing")
        if stride < 1:
            raise ValueError("spacing must be at least h")
        m0 = _as_index(x0, h, "x0")
        k0 = _as_index(y0, h, "y0")
        nx = int(math.floor((x1 - x0) / spacing + 1e-9)) + 1
        ny = int(math.floor((y1 - y0) / spacing + 1e-9)) + 1
        if nx < 1 or ny < 1:
            raise ValueError("degenerate window")
        return cls(m0, k0, nx, ny, h, stride)

    @property
    def spacing(self):
        return self.stride * self.h

    @property
    def origin(self):
        return (self.m0 * self.h, self.k0 * self.h)

    @property
    def extent(self):
        """Index range [lo, hi] of full-resolution points in each axis."""
        return ((self.m0, self.m0 + (self.nx - 1) * self.stride),
                (self.k0, self.k0 + (self.ny - 1) * self.stride))

    def pad_right(self, horizon):
        """Same window extended along e1 by at least ``horizon``."""
        extra = int(math.ceil(horizon / self.spacing - 1e-9))
        return Window(self.m0, self.k0, self.nx + extra, self.ny, self.h, self.stride)

    def points(self):
        xs = (self.m0 + self.stride * np.arange(self.nx)) * self.h
        ys = (self.k0 + self.stride * np.arange(self.ny)) * self.h
        return xs, ys


@dataclass(frozen=True, eq=False)
class NoisePatch:
    """Cells i0..i0+ni-1 by j0..j0+nj-1 of the white-noise lattice; values[j, i]."""

    i0: int
    j0: int
    h: float
    values: np.ndarray
    seed: int
    stream: int

    @property
    def dims(self):
        return self.values.shape[1], self.values.shape[0]

    @property
    def origin(self):
        return (self.i0 * self.h, self.j0 * self.h)

    def __add__(self, other):
        if (self.i0, self.j0, self.h, self.values.shape) != (other.i0, other.j0, other.h, other.values.shape):
            raise ValueError("noise patches must share their lattice to be added")
        return NoisePatch(self.i0, self.j0, self.h, self.values + other.values, -1, -1)


@dataclass(frozen=True, eq=False)
class FieldGrid:
    """Field values on a lattice window; values[row, col] at origin + spacing*(col, row)."""

    origin: tuple
    spacing: float
    values: np.ndarray
    kernel: Kernel
    R: float
    derivative: str | None
    seed: int
    stream: int
    h: float

    @property
    def dims(self):
        return self.values.shape[1], self.values.shape[0]


def kernel_support(k: Kernel, R=math.inf, tol=SUPPORT_TOL):
    """Radius outside which the (possibly truncated) kernel is treated as zero."""
    s = k.support_radius(tol)
    if math.isfinite(R):
        s = min(s, R / 2.0)
    return s


def required_margin(k: Kernel, h, R=math.inf, tol=SUPPORT_TOL):
    """Number of noise cells needed on each side of a point."""
    return max(1, int(math.ceil(kernel_support(k, R, tol) / h - 1e-12)))


def sample_noise(region, h, seed, stream) -> NoisePatch:
    """Noise cells covering the rectangle region = (x0, y0, x1, y1)."""
    x0, y0, x1, y1 = region
    if h <= 0:
        raise ValueError("h must be positive")
    if not (x1 > x0 and y1 > y0):
        raise ValueError("degenerate noise region")
    i0, i1 = int(math.floor(x0 / h + 1e-9)), int(math.ceil(x1 / h - 1e-9))
    j0, j1 = int(math.floor(y0 / h + 1e-9)), int(math.ceil(y1 / h - 1e-9))
    return sample_noise_cells(i0, j0, i1 - i0, j1 - j0, h, seed, stream)


def sample_noise_cells(i0, j0, ni, nj, h, seed, stream) -> NoisePatch:
    if ni * nj > MAX_CELLS:
        raise BudgetError(f"noise patch of {ni}x{nj} cells exceeds budget of {MAX_CELLS}")
    vals = rng.normal_block(seed, stream, i0, j0, ni, nj)
    return NoisePatch(i0, j0, h, vals, int(seed), int(stream))


def noise_for_window(window: Window, k: Kernel, seed, stream, R=math.inf) -> NoisePatch:
    """Smallest noise patch from which ``window`` can be convolved."""
    M = required_margin(k, window.h, R)
    (xa, xb), (ya, yb) = window.extent
    return sample_noise_cells(xa - M, ya - M, xb - xa + 2 * M, yb - ya + 2 * M,
                              window.h, seed, stream)


def _stencil(k: Kernel, h, M, R, derivative):
    a = (np.arange(-M, M) + 0.5) * h
    pts = np.stack(np.meshgrid(a, a, indexing="xy"), axis=-1)   # pts[b, a] = (x_a, y_b)
    if derivative is None:
        if math.isfinite(R):
            return eval_truncated(k, R, pts)
        return eval_kernel(k, pts)
    if derivative == "e1":
        return kernel_gradient(k, pts, R)[..., 0]
    raise ValueError(f"unknown derivative {derivative!r}")


def convolve_field(noise: NoisePatch, k: Kernel, R, window: Window, derivative=None) -> FieldGrid:
    """f_R (or <grad f_R, e1> when derivative='e1') on ``window`` from ``noise``.

    R = inf uses the untruncated kernel cut where |q| < SUPPORT_TOL.
    """
    if abs(noise.h - window.h) > 1e-15:
        raise ValueError("noise and window lattices differ")
    h = window.h
    M = required_margin(k, h, R)
    (xa, xb), (ya, yb) = window.extent
    lo_i, hi_i = xa - M, xb + M - 1
    lo_j, hi_j = ya - M, yb + M - 1
    ni, nj = noise.dims
    if lo_i < noise.i0 or lo_j < noise.j0 or hi_i >= noise.i0 + ni or hi_j >= noise.j0 + nj:
        raise MarginError(f"noise patch must cover the window plus a margin of {M} cells "
                          f"({M * h:g} in length) on every side")
    sub = noise.values[lo_j - noise.j0:hi_j - noise.j0 + 1, lo_i - noise.i0:hi_i - noise.i0 + 1]
    K = _stencil(k, h, M, R, derivative)
    full = h * fftconvolve(sub, K, mode="valid")
    vals = np.ascontiguousarray(full[::window.stride, ::window.stride])
    return FieldGrid(window.origin, window.spacing, vals, k, float(R), derivative,
                     noise.seed, noise.stream, h)


def sample_field(k: Kernel, window: Window, seed, stream, R=math.inf, gradient=False):
    """Sample noise once and return f_R on ``window`` (and <grad f_R, e1> if asked)."""
    noise = noise_for_window(window, k, seed, stream, R)
    f = convolve_field(noise, k, R, window)
    if not gradient:
        return f
    return f, convolve_field(noise, k, R, window, derivative="e1")


def field_at(noise: NoisePatch, k: Kernel, R, m, kk, derivative=None):
    """Direct-sum field value at the lattice point (m h, kk h)."""
    h = noise.h
    M = required_margin(k, h, R)
    K = _stencil(k, h, M, R, derivative)
    r0, c0 = kk - M - noise.j0, m - M - noise.i0
    if r0 < 0 or c0 < 0 or r0 + 2 * M > noise.values.shape[0] or c0 + 2 * M > noise.values.shape[1]:
        raise MarginError(f"point ({m}, {kk}) needs a margin of {M} cells")
    block = noise.values[r0:r0 + 2 * M, c0:c0 + 2 * M]
    # cell index i = m - 1 - a pairs with stencil column a + M
    return h * float(np.sum(block[::-1, ::-1] * K))


@dataclass(frozen=True)
class CovarianceEstimate:
    lag: tuple
    estimate: float
    stderr: float


def empirical_covariance(k: Kernel, h, lags, trials, seed, R=math.inf):
    """Monte Carlo estimates of E[f(0) f(lag)] with standard errors."""
    if trials < 2:
        raise ValueError("need at least two trials")
    idx = [(_as_index(lx, h, "lag"), _as_index(ly, h, "lag")) for lx, ly in lags]
    M = required_margin(k, h, R)
    ms = [0] + [a for a, _ in idx]
    ks = [0] + [b for _, b in idx]
    i0, j0 = min(ms) - M, min(ks) - M
    ni, nj = max(ms) + M - i0, max(ks) + M - j0
    K = _stencil(k, h, M, R, None)[::-1, ::-1]
    prods = np.empty((trials, len(idx)))
    for t in range(trials):
        xi = rng.normal_block(seed, t, i0, j0, ni, nj)

        def value(m, kk):
            r0, c0 = kk - M - j0, m - M - i0
            return h * np.sum(xi[r0:r0 + 2 * M, c0:c0 + 2 * M] * K)

        f0 = value(0, 0)
        for n, (a, b) in enumerate(idx):
            prods[t, n] = f0 * value(a, b)
    est = prods.mean(axis=0)
    se = prods.std(axis=0, ddof=1) / math.sqrt(trials)
    return [CovarianceEstimate(tuple(l), float(e), float(s)) for l, e, s in zip(lags, est, se)]


def dependency_footprint(window: Window, k: Kernel, R):
    """Noise cell index box [i_lo, i_hi] x [j_lo, j_hi] that ``window`` depends on."""
    M = required_margin(k, window.h, R)
    (xa, xb), (ya, yb) = window.extent
    return (xa - M, xb + M - 1), (ya - M, yb + M - 1)
