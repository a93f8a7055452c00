"""Counter-based normal streams addressed by (seed, stream, cell).

Every value is a pure function of its address, so a white-noise cell has the
same draw whichever window, worker or order generated it.  The mixing function
is the splitmix64 finalizer applied in three rounds; uniforms are mapped to
normals through the inverse normal CDF.
"""

import numpy as np
from scipy.special import ndtri

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK32 = np.uint64(0xFFFFFFFF)


def mix64(x):
    """splitmix64 finalizer on uint64 arrays (wrapping arithmetic)."""
    x = np.asarray(x, dtype=np.uint64)
    x = x ^ (x >> np.uint64(30))
    x = x * _M1
    x = x ^ (x >> np.uint64(27))
    x = x * _M2
    return x ^ (x >> np.uint64(31))


def stream_key(seed, stream):
    """64-bit key for one (seed, stream) pair."""
    with np.errstate(over="ignore"):
        s = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
        t = np.uint64(int(stream) & 0xFFFFFFFFFFFFFFFF)
        return mix64(mix64(s + _GOLDEN) ^ (t * _GOLDEN + _M2))


def substream(seed, *labels):
    """Derive a stream id from a tuple of integer labels (e.g. trial, level)."""
    with np.errstate(over="ignore"):
        h = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
        for lab in labels:
            h = mix64(h ^ (np.uint64(int(lab) & 0xFFFFFFFFFFFFFFFF) + _GOLDEN))
    return int(h)


def uniforms(seed, stream, i, j):
    """U(0,1) draws at integer cell addresses (i, j); broadcasting arrays."""
    key = stream_key(seed, stream)
    i = np.asarray(i, dtype=np.int64).astype(np.uint64) & _MASK32
    j = np.asarray(j, dtype=np.int64).astype(np.uint64) & _MASK32
    with np.errstate(over="ignore"):
        cell = (i << np.uint64(32)) | j
        bits = mix64(mix64(cell ^ key) + key)
    # 53 significant bits, centred so that 0 and 1 never occur
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


def normals(seed, stream, i, j):
    """Standard normal draws at cell addresses (i, j)."""
    return ndtri(uniforms(seed, stream, i, j))


def normal_block(seed, stream, i0, j0, ni, nj):
    """(nj, ni) array of normals for cells i0..i0+ni-1 (columns), j0..j0+nj-1 (rows)."""
    i = np.arange(i0, i0 + ni, dtype=np.int64)
    j = np.arange(j0, j0 + nj, dtype=np.int64)
    return normals(seed, stream, i[None, :], j[:, None])


def generator(seed, *labels):
    """numpy Generator for vectorised Monte Carlo that needs no cell addressing."""
    return np.random.Generator(np.random.Philox(key=substream(seed, *labels)))
