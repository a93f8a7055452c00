"""Level sets of alpha, cluster labels, crossings and Monte Carlo crossing scans.

Open sites are 4-connected; dual (closed) paths are 8-connected.  Rectangles
are given as inclusive index boxes (col0, row0, col1, row1) on the mask.
"""

from __future__ import annotations

import math
import operator
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import rng, sampler
from .kernel import Kernel
from .shadow import ShadowField, shadow_discrete
from .sampler import Window

FOUR = ndimage.generate_binary_structure(2, 1)
EIGHT = ndimage.generate_binary_structure(2, 2)

_OPS = {">=": operator.ge, ">": operator.gt, "<=": operator.le, "<": operator.lt}

SCAN_COLUMNS = ["variant", "kernel", "h", "R", "lambda", "ell", "orientation", "trials",
                "successes", "phat", "stderr", "seed", "complete"]


@dataclass(frozen=True, eq=False)
class SiteMask:
    open: np.ndarray
    origin: tuple = (0.0, 0.0)
    spacing: float = 1.0
    provenance: dict = field(default_factory=dict)

    @property
    def dims(self):
        return self.open.shape[1], self.open.shape[0]


@dataclass(frozen=True, eq=False)
class ClusterLabels:
    labels: np.ndarray
    count: int
    sizes: np.ndarray      # sizes[k-1] is the size of cluster k

    def histogram(self):
        """Map cluster size -> number of clusters of that size."""
        vals, counts = np.unique(self.sizes, return_counts=True)
        return dict(zip(vals.tolist(), counts.tolist()))


def threshold(sf: ShadowField, ell, direction="<=") -> SiteMask:
    """Sites with alpha `direction` ell; invalid (NaN) sites are closed."""
    if direction not in _OPS:
        raise ValueError(f"direction must be one of {sorted(_OPS)}")
    a = sf.alpha
    valid = ~np.isnan(a)
    with np.errstate(invalid="ignore"):
        m = _OPS[direction](np.where(valid, a, 0.0), ell) & valid
    prov = dict(ell=float(ell), direction=direction, variant=sf.variant, horizon=sf.horizon,
                **sf.source)
    return SiteMask(m, sf.origin, sf.spacing, prov)


def _as_array(mask):
    return mask.open if isinstance(mask, SiteMask) else np.asarray(mask, dtype=bool)


def label_clusters(mask) -> ClusterLabels:
    m = _as_array(mask)
    labels, n = ndimage.label(m, structure=FOUR)
    sizes = np.bincount(labels.ravel(), minlength=n + 1)[1:]
    return ClusterLabels(labels, int(n), sizes)


def _sub(m, rect):
    if rect is None:
        return m
    c0, r0, c1, r1 = rect
    if not (0 <= c0 <= c1 < m.shape[1] and 0 <= r0 <= r1 < m.shape[0]):
        raise ValueError(f"rectangle {rect} outside mask of shape {m.shape}")
    return m[r0:r1 + 1, c0:c1 + 1]


def _spans(m, orientation, structure):
    labels, n = ndimage.label(m, structure=structure)
    if n == 0:
        return False
    if orientation == "h":
        a, b = labels[:, 0], labels[:, -1]
    elif orientation == "v":
        a, b = labels[0, :], labels[-1, :]
    else:
        raise ValueError("orientation must be 'h' or 'v'")
    common = np.intersect1d(a[a > 0], b[b > 0])
    return common.size > 0


def has_crossing(mask, rect=None, orientation="h"):
    """Open 4-connected path inside rect joining its left/right (h) or bottom/top (v) sides."""
    return _spans(_sub(_as_array(mask), rect), orientation, FOUR)


def has_closed_crossing(mask, rect=None, orientation="v"):
    """Closed 8-connected path inside rect joining the given pair of sides."""
    return _spans(~_sub(_as_array(mask), rect), orientation, EIGHT)


def has_blocking_circuit(mask, inner, outer):
    """Open circuit in outer \\ inner surrounding inner.

    Equivalent by planar duality to the absence of a closed 8-connected path
    in the annulus from the sites next to inner to the border of outer.
    """
    m = _as_array(mask)
    oc0, or0, oc1, or1 = outer
    ic0, ir0, ic1, ir1 = inner
    if not (oc0 < ic0 <= ic1 < oc1 and or0 < ir0 <= ir1 < or1):
        raise ValueError("inner rectangle must lie strictly inside outer")
    sub = _sub(m, outer)
    ann = np.ones_like(sub, dtype=bool)
    ann[ir0 - or0:ir1 - or0 + 1, ic0 - oc0:ic1 - oc0 + 1] = False
    closed = ann & ~sub
    labels, n = ndimage.label(closed, structure=EIGHT)
    if n == 0:
        return True
    inner_box = np.zeros_like(ann)
    inner_box[ir0 - or0:ir1 - or0 + 1, ic0 - oc0:ic1 - oc0 + 1] = True
    near_inner = ndimage.binary_dilation(inner_box, structure=EIGHT) & ann
    border = np.zeros_like(ann)
    border[0, :] = border[-1, :] = border[:, 0] = border[:, -1] = True
    a = np.unique(labels[near_inner & closed])
    b = np.unique(labels[border & closed])
    return np.intersect1d(a[a > 0], b[b > 0]).size == 0


def render_mask(sf: ShadowField, ell):
    """uint8 image: black (0) where alpha > ell, white (255) elsewhere; top row = largest y."""
    with np.errstate(invalid="ignore"):
        shaded = np.nan_to_num(sf.alpha, nan=-np.inf) > ell
    img = np.where(shaded, 0, 255).astype(np.uint8)
    return img[::-1]


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

def lattice_shadow(k: Kernel, nx, ny, horizon, seed, stream, h=0.25, kernel_R=math.inf):
    """alpha^X_horizon on the integer sites [0, nx) x [0, ny), X = f_R restricted to Z^2."""
    horizon = int(horizon)
    w = Window.from_rect(0.0, 0.0, float(nx - 1), float(ny - 1), h, spacing=1.0)
    padded = w.pad_right(horizon)
    noise = sampler.noise_for_window(padded, k, seed, stream, kernel_R)
    X = sampler.convolve_field(noise, k, kernel_R, padded).values
    sf = shadow_discrete(X, horizon, source=dict(kernel_R=kernel_R, seed=seed, stream=stream))
    return sf.crop(nx, ny)


def _lam_label(lam):
    return int(round(float(lam) * 1000))


def trial_stream(seed, lam, trial):
    return rng.substream(seed, _lam_label(lam), trial)


@dataclass(frozen=True)
class ScanConfig:
    kernel: Kernel
    kernel_name: str
    variant: str
    ells: tuple
    lam: float
    horizon: float
    kernel_R: float
    h: float
    seed: int
    orientations: tuple
    aspect: float = 2.0


def _scan_trial(cfg: ScanConfig, trial):
    """Crossing indicators (len(ells) x len(orientations)) for one realization."""
    lam = cfg.lam
    nx = int(round(cfg.aspect * lam)) + 1
    ny = int(round(lam)) + 1
    stream = trial_stream(cfg.seed, lam, trial)
    if cfg.variant == "discrete":
        sf = lattice_shadow(cfg.kernel, nx, ny, cfg.horizon, cfg.seed, stream, cfg.h, cfg.kernel_R)
    elif cfg.variant == "continuous":
        from .shadow import continuous_alpha, noise_for_shadow
        w = Window.from_rect(0.0, 0.0, cfg.aspect * lam, lam, cfg.h)
        noise = noise_for_shadow(w, cfg.kernel, cfg.horizon, cfg.seed, stream, cfg.kernel_R)
        sf = continuous_alpha(noise, cfg.kernel, w, cfg.horizon, cfg.kernel_R)
    else:
        raise ValueError(f"unknown variant {cfg.variant!r}")
    out = np.zeros((len(cfg.ells), len(cfg.orientations)), dtype=bool)
    for a, ell in enumerate(cfg.ells):
        m = threshold(sf, ell, "<=")
        for b, o in enumerate(cfg.orientations):
            out[a, b] = has_crossing(m, None, o)
    return out


def _run_chunk(args):
    cfg, trials = args
    return [_scan_trial(cfg, t) for t in trials]


@dataclass
class ScanResult:
    header: list
    rows: list
    complete: bool


def crossing_scan(k: Kernel, ells, lambdas, trials, seed, variant="discrete", horizon=None,
                  kernel_R=math.inf, h=0.25, orientations=("h",), kernel_name="bargmann-fock",
                  time_budget=None, workers=1, aspect=2.0):
    """P(crossing of [0, aspect*lam] x [0, lam] by {alpha <= ell}) for every (lam, ell, orientation).

    Every realization is thresholded at every ell (common random numbers).
    ``horizon`` defaults to lam.  When ``time_budget`` (seconds) runs out the
    table holds the trials finished so far with complete = False.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    ells = tuple(float(e) for e in ells)
    t_start = time.monotonic()
    rows = []
    all_done = True
    for lam in lambdas:
        hor = float(lam) if horizon is None else float(horizon)
        cfg = ScanConfig(k, kernel_name, variant, ells, float(lam), hor, kernel_R, h, seed,
                         tuple(orientations), aspect)
        hits = np.zeros((len(ells), len(orientations)), dtype=np.int64)
        done = 0
        chunk = max(1, min(50, trials))
        pool = ProcessPoolExecutor(workers) if workers and workers > 1 else None
        try:
            while done < trials:
                if time_budget is not None and time.monotonic() - t_start > time_budget:
                    break
                batch = list(range(done, min(trials, done + chunk)))
                if pool is None:
                    res = _run_chunk((cfg, batch))
                else:
                    parts = [batch[i::workers] for i in range(workers)]
                    merged = {}
                    for part, out in zip(parts, pool.map(_run_chunk, [(cfg, p) for p in parts])):
                        merged.update(zip(part, out))
                    res = [merged[t] for t in batch]
                for r in res:
                    hits += r
                done += len(batch)
        finally:
            if pool is not None:
                pool.shutdown()
        complete = done == trials
        all_done &= complete
        for a, ell in enumerate(ells):
            for b, o in enumerate(orientations):
                s = int(hits[a, b])
                ph = s / done if done else math.nan
                se = math.sqrt(ph * (1 - ph) / done) if done else math.nan
                rows.append([variant, kernel_name, h, kernel_R, float(lam), ell, o, done, s,
                             ph, se, seed, complete])
    return ScanResult(list(SCAN_COLUMNS), rows, all_done)


@dataclass(frozen=True)
class DecorrelationCheck:
    joint: float
    joint_stderr: float
    pa_sprinkled: float
    pb_sprinkled: float
    product: float
    margin: float
    holds: bool


def sprinkled_decorrelation(k: Kernel, ell, eps, lam, gap, trials, seed, h=0.25):
    """Compare P_ell(A and B) with P_{ell-2eps}(A) P_{ell-2eps}(B).

    A and B are the decreasing events "no horizontal crossing of a lam x lam
    box by {alpha <= level}" for two boxes side by side at horizontal
    distance ``gap``.  Horizon and kernel truncation are both lam.
    """
    lam = int(lam)
    gap = int(gap)
    nx = 2 * (lam + 1) + gap
    joint = np.zeros(trials, dtype=bool)
    a_sp = np.zeros(trials, dtype=bool)
    b_sp = np.zeros(trials, dtype=bool)
    rect_a = (0, 0, lam, lam)
    rect_b = (lam + 1 + gap, 0, nx - 1, lam)
    for t in range(trials):
        sf = lattice_shadow(k, nx, lam + 1, lam, seed, rng.substream(seed, 77, t), h, float(lam))
        m = threshold(sf, ell)
        ms = threshold(sf, ell - 2 * eps)
        joint[t] = (not has_crossing(m, rect_a)) and (not has_crossing(m, rect_b))
        a_sp[t] = not has_crossing(ms, rect_a)
        b_sp[t] = not has_crossing(ms, rect_b)
    pj = joint.mean()
    pa, pb = a_sp.mean(), b_sp.mean()
    se = lambda p: math.sqrt(p * (1 - p) / trials)
    margin = 3 * math.sqrt(se(pj) ** 2 + (pb * se(pa)) ** 2 + (pa * se(pb)) ** 2)
    return DecorrelationCheck(float(pj), se(pj), float(pa), float(pb), float(pa * pb), margin,
                              bool(pj <= pa * pb + margin))
