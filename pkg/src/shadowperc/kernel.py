"""Radial convolution kernels q, the cutoff bump chi and the induced covariances.

A kernel is evaluated as ``scale * q(length_scale * x)``.  Two kinds exist:

* ``"bargmann-fock"``: q(x) = sqrt(2/pi) exp(-|x|^2), whose white-noise
  convolution has covariance exp(-|x|^2 / 2);
* ``"table"``: a radial profile given as (radius, value) pairs and interpolated
  with a cubic spline in the radius.

Points are arrays whose last axis has length 2.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy.interpolate import CubicSpline

BF_PEAK = math.sqrt(2.0 / math.pi)

# |q| below this is treated as outside the support of an untruncated kernel
SUPPORT_TOL = 1e-12

# table radii spaced wider than this give a warning when differentiated
COARSE_TABLE_SPACING = 0.1


class KernelAccuracyWarning(UserWarning):
    """Finite-difference derivatives of a coarse table kernel are inaccurate."""


class QuadratureError(RuntimeError):
    """Numerical covariance quadrature did not reach its tolerance."""


# ---------------------------------------------------------------------------
# cutoff bump chi
# ---------------------------------------------------------------------------

def _smoothstep(t):
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def _smoothstep_deriv(t):
    return 30.0 * t * t * (t - 1.0) ** 2


def bump_radial(rho):
    """chi as a function of the radius: 1 on [0, 1/4], 0 on [1/2, inf), C^2 between."""
    t = np.clip((0.5 - np.asarray(rho, dtype=float)) * 4.0, 0.0, 1.0)
    return _smoothstep(t)


def bump_radial_deriv(rho):
    """d chi / d rho."""
    t = np.clip((0.5 - np.asarray(rho, dtype=float)) * 4.0, 0.0, 1.0)
    return -4.0 * _smoothstep_deriv(t)


def bump(x):
    """chi(x) for points x of shape (..., 2)."""
    return bump_radial(np.linalg.norm(np.asarray(x, dtype=float), axis=-1))


def bump_gradient(x):
    x = np.asarray(x, dtype=float)
    rho = np.linalg.norm(x, axis=-1)
    d = bump_radial_deriv(rho)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(rho[..., None] > 0, x / rho[..., None], 0.0)
    return d[..., None] * unit


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Kernel:
    """Immutable radial kernel ``x -> scale * q(length_scale * x)``.

    ``decay_beta`` is the claimed exponent beta of the power-law decay
    |d^a q(x)| <= C |x|^-beta.  It is verified only for the Bargmann-Fock kind,
    which decays faster than any power; for tables it is user metadata.
    """

    kind: str = "bargmann-fock"
    scale: float = 1.0
    length_scale: float = 1.0
    decay_beta: float = 20.0
    radii: tuple = ()
    values: tuple = ()
    _spline: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("bargmann-fock", "table"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.scale <= 0 or self.length_scale <= 0:
            raise ValueError("kernel scales must be positive")
        if self.decay_beta <= 1:
            raise ValueError("decay_beta must exceed 1")
        if self.kind == "table":
            r = np.asarray(self.radii, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if r.ndim != 1 or r.shape != v.shape or r.size < 4:
                raise ValueError("table kernel needs at least 4 (radius, value) pairs")
            if r[0] != 0.0 or np.any(np.diff(r) <= 0):
                raise ValueError("table radii must start at 0 and increase strictly")
            # clamped spline with zero slope at the origin keeps q smooth through 0
            spline = CubicSpline(r, v, bc_type=((1, 0.0), "not-a-knot"))
            object.__setattr__(self, "_spline", spline)

    @property
    def is_unscaled_bf(self):
        return self.kind == "bargmann-fock" and self.scale == 1.0 and self.length_scale == 1.0

    # radial profile of the *unscaled* kernel and its radial derivative
    def _profile(self, rho):
        if self.kind == "bargmann-fock":
            return BF_PEAK * np.exp(-rho * rho)
        r_max = self.radii[-1]
        out = np.where(rho <= r_max, self._spline(np.minimum(rho, r_max)), 0.0)
        return out

    def _profile_deriv(self, rho):
        if self.kind == "bargmann-fock":
            return -2.0 * rho * BF_PEAK * np.exp(-rho * rho)
        r_max = self.radii[-1]
        return np.where(rho <= r_max, self._spline(np.minimum(rho, r_max), 1), 0.0)

    def radial(self, rho):
        """Kernel value as a function of the radius |x|."""
        rho = np.asarray(rho, dtype=float)
        return self.scale * self._profile(self.length_scale * rho)

    def support_radius(self, tol=SUPPORT_TOL):
        """Radius beyond which |kernel| < tol (a bound, never an underestimate)."""
        if self.kind == "bargmann-fock":
            ratio = self.scale * BF_PEAK / tol
            if ratio <= 1.0:
                return 0.0
            return math.sqrt(math.log(ratio)) / self.length_scale
        v = np.abs(np.asarray(self.values)) * self.scale
        above = np.nonzero(v >= tol)[0]
        if above.size == 0:
            return 0.0
        last = min(above[-1] + 1, len(self.radii) - 1)
        return float(self.radii[last]) / self.length_scale


def bargmann_fock(scale=1.0, length_scale=1.0, decay_beta=20.0):
    return Kernel("bargmann-fock", scale, length_scale, decay_beta)


def table_kernel(radii, values, decay_beta, scale=1.0, length_scale=1.0):
    return Kernel("table", scale, length_scale, decay_beta,
                  tuple(float(r) for r in radii), tuple(float(v) for v in values))


def load_table(path, decay_beta, scale=1.0, length_scale=1.0):
    """Read a two-column ``radius value`` text file into a table kernel."""
    data = np.loadtxt(path, ndmin=2)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns, got {data.shape[1]}")
    return table_kernel(data[:, 0], data[:, 1], decay_beta, scale, length_scale)


def rescale(k: Kernel, scale: float, length_scale: float) -> Kernel:
    """Kernel of the field ``scale * f(length_scale * x)`` where f is built from k."""
    if scale <= 0 or length_scale <= 0:
        raise ValueError("scales must be positive")
    # f(lx) = (q * W)(lx) has the law of (l q(l .)) * W in 2D, so the amplitude
    # picks up an extra factor of length_scale
    return replace(k, scale=k.scale * scale * length_scale,
                   length_scale=k.length_scale * length_scale)


def unit_variance(k: Kernel) -> Kernel:
    """Rescale the amplitude so that covariance(0) == 1."""
    c0 = covariance(k, (0.0, 0.0))
    return replace(k, scale=k.scale / math.sqrt(c0))


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def eval_kernel(k: Kernel, x):
    x = np.asarray(x, dtype=float)
    return k.radial(np.linalg.norm(x, axis=-1))


def eval_truncated(k: Kernel, R: float, x):
    """(q chi_R)(x); zero for |x| >= R/2."""
    if R < 1:
        raise ValueError("truncation radius must be >= 1")
    x = np.asarray(x, dtype=float)
    rho = np.linalg.norm(x, axis=-1)
    return k.radial(rho) * bump_radial(rho / R)


def kernel_gradient(k: Kernel, x, R: float = math.inf):
    """Gradient of q chi_R (or of q when R is infinite), shape (..., 2)."""
    if k.kind == "table":
        spacing = np.max(np.diff(k.radii))
        if spacing > COARSE_TABLE_SPACING:
            warnings.warn(f"table kernel spacing {spacing:g} is coarse; "
                          "gradient accuracy is degraded", KernelAccuracyWarning, stacklevel=2)
    x = np.asarray(x, dtype=float)
    rho = np.linalg.norm(x, axis=-1)
    dq = k.scale * k.length_scale * k._profile_deriv(k.length_scale * rho)
    if math.isfinite(R):
        if R < 1:
            raise ValueError("truncation radius must be >= 1")
        chi = bump_radial(rho / R)
        dchi = bump_radial_deriv(rho / R) / R
        d_rho = dq * chi + k.radial(rho) * dchi
    else:
        d_rho = dq
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(rho[..., None] > 0, x / np.where(rho > 0, rho, 1.0)[..., None], 0.0)
    return d_rho[..., None] * unit


# ---------------------------------------------------------------------------
# covariance
# ---------------------------------------------------------------------------

def covariance(k: Kernel, x):
    """(q * q)(x): the covariance E[f(0) f(x)] of f = q * W."""
    x = np.asarray(x, dtype=float)
    if k.kind == "bargmann-fock":
        l = k.length_scale
        r2 = np.sum(x * x, axis=-1)
        return k.scale ** 2 / l ** 2 * np.exp(-0.5 * l * l * r2)
    flat = x.reshape(-1, 2)
    out = np.array([covariance_quadrature(k, p) for p in flat])
    return out.reshape(x.shape[:-1]) if x.ndim > 1 else float(out[0])


def covariance_quadrature(k: Kernel, x, tol=1e-8, max_level=9):
    """(q * q)(x) by polar quadrature around the origin.

    Composite 8-point Gauss-Legendre panels in the radius and the periodic
    trapezoid rule in the angle; both are refined together until two successive
    levels agree to ``tol`` (absolute, relative to covariance scale).
    """
    x = np.asarray(x, dtype=float)
    S = k.support_radius(1e-16)
    if S == 0.0:
        return 0.0
    gl_x, gl_w = np.polynomial.legendre.leggauss(8)
    prev = None
    for level in range(2, max_level + 1):
        panels = 2 ** level
        n_theta = 2 ** (level + 3)
        edges = np.linspace(0.0, S, panels + 1)
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * (edges[1:] - edges[:-1])
        rho = (mid[:, None] + half[:, None] * gl_x[None, :]).ravel()
        w_rho = (half[:, None] * gl_w[None, :]).ravel()
        theta = np.arange(n_theta) * (2 * np.pi / n_theta)
        ys = rho[:, None, None] * np.stack([np.cos(theta), np.sin(theta)], axis=-1)[None]
        integrand = k.radial(rho)[:, None] * eval_kernel(k, x - ys)
        val = float(np.sum(w_rho * rho * integrand.sum(axis=1)) * (2 * np.pi / n_theta))
        if prev is not None and abs(val - prev) <= tol * max(1.0, abs(val)):
            return val
        prev = val
    raise QuadratureError(f"covariance quadrature at {tuple(x)} did not converge to {tol:g}")


class TailSum(NamedTuple):
    partial: float
    tail_estimate: float
    reliable: bool


def covariance_tail_sum(k: Kernel, R: int, cutoff: int) -> TailSum:
    """Sum of |cov(X_u, X_0)| over u in Z^2 with R <= |u|_inf <= cutoff.

    The tail beyond ``cutoff`` is estimated from the outermost shell assuming
    |cov| ~ C |u|^(2 - beta), which sums to O(cutoff^(4 - beta)); the estimate
    is flagged unreliable when beta <= 4.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    if cutoff < R:
        return TailSum(0.0, 0.0, k.decay_beta > 4)
    m = np.arange(-cutoff, cutoff + 1)
    u = np.stack(np.meshgrid(m, m, indexing="ij"), axis=-1)
    ninf = np.max(np.abs(u), axis=-1)
    sel = ninf >= R
    cov = np.abs(covariance(k, u[sel].astype(float)))
    partial = float(np.sum(cov))
    shell = np.max(np.abs(covariance(k, u[ninf == cutoff].astype(float))))
    beta = k.decay_beta
    reliable = beta > 4
    if reliable:
        C = shell * cutoff ** (beta - 2)
        tail = 8 * C * cutoff ** (4 - beta) / (beta - 4)
    else:
        tail = math.inf
    return TailSum(partial, float(tail), reliable)
