"""Anisotropic Littlewood-Paley blocks and Besov-type norms on the lattice.

The gauge on a kinetic grid is ``|xi|_a = |xi_x|^{1/(1+alpha)} + |xi_v|``;
on a position-only grid (or with ``anisotropic=False``) it is the Euclidean
norm of the full frequency vector. Block ``j`` uses the mask
``chi(2^-j r) - chi(2^-(j-1) r)`` with ``chi`` a smooth step equal to 1 on
``r <= 1`` and 0 on ``r >= 2``, so the masks telescope to exactly one once
``2^j`` exceeds the largest lattice gauge value.
"""

from __future__ import annotations

import functools
import itertools
import math

import numpy as np

from . import _fft
from .grid import PhaseField, _as_pair, mixed_lp_norm


def smooth_step(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1, built from exp(-1/s)."""
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
        out = a / (a + b)
    return np.where(s <= 0, 0.0, np.where(s >= 1, 1.0, out))


def chi0(r):
    """Radial profile: 1 on r <= 1, 0 on r >= 2."""
    return smooth_step(2.0 - np.asarray(r, dtype=float))


def gauge(grid, alpha=2.0, anisotropic=True):
    """Lattice values of |xi|_a (kinetic, anisotropic) or |xi| (otherwise)."""
    if grid.kinetic and anisotropic:
        ax = sum(xi ** 2 for xi in grid.xi_x())
        av = sum(xi ** 2 for xi in grid.xi_v())
        r = np.sqrt(ax) ** (1.0 / (1.0 + alpha)) + np.sqrt(av)
    else:
        r = np.sqrt(sum(grid.freq(a) ** 2 for a in range(grid.ndim)))
    return np.broadcast_to(r, grid.shape)


class DyadicPartition:
    """Block masks ``phi_j`` for ``j = 0..j_max`` on one grid."""

    def __init__(self, grid, alpha=2.0, anisotropic=True):
        if not (0 < alpha <= 2):
            raise ValueError("alpha must lie in (0, 2]")
        self.grid = grid
        self.alpha = float(alpha)
        self.anisotropic = bool(anisotropic) and grid.kinetic
        self.r = gauge(grid, alpha, anisotropic)
        rmax = float(self.r.max())
        self.j_max = int(math.ceil(math.log2(max(rmax, 1.0)))) + 1
        masks = []
        prev = np.zeros(grid.shape)
        for j in range(self.j_max + 1):
            cur = chi0(self.r / 2.0 ** j)
            m = cur - prev
            m.flags.writeable = False
            masks.append(m)
            prev = cur
        self.masks = masks

    @property
    def levels(self):
        return range(self.j_max + 1)

    def mask(self, j):
        if not 0 <= j <= self.j_max:
            raise ValueError(f"level {j} outside 0..{self.j_max}")
        return self.masks[j]

    def total(self):
        return sum(self.masks)

    def weights(self, s):
        """2^{j s} with the frequency scale of block j."""
        return 2.0 ** (s * np.arange(self.j_max + 1))


@functools.lru_cache(maxsize=32)
def partition(grid, alpha=2.0, anisotropic=True):
    return DyadicPartition(grid, alpha, anisotropic)


def _block_values(f, mask):
    return np.real(_fft.ifftn(f.spectrum * mask * f.grid.size))


def block(f, j, alpha=2.0, anisotropic=True, part=None):
    """Dyadic block R_j f."""
    part = part or partition(f.grid, alpha, anisotropic)
    return PhaseField(f.grid, _block_values(f, part.mask(j)))


def block_norms(f, p, alpha=2.0, anisotropic=True, part=None):
    """``||R_j f||_p`` for every level (mixed norm on kinetic grids)."""
    part = part or partition(f.grid, alpha, anisotropic)
    out = np.empty(part.j_max + 1)
    for j in part.levels:
        out[j] = mixed_lp_norm(PhaseField(f.grid, _block_values(f, part.masks[j]), check=False), p)
    return out


def combine(block_norm, s, q):
    w = 2.0 ** (s * np.arange(len(block_norm))) * block_norm
    if math.isinf(q):
        return float(w.max())
    return float(np.sum(w ** q) ** (1.0 / q))


def besov_norm(f, s, q, p, anisotropic=True, alpha=2.0, part=None):
    """``(sum_j (2^{js} ||R_j f||_p)^q)^{1/q}``; q = inf gives the sup."""
    if q < 1:
        raise ValueError("q must lie in [1, inf]")
    return combine(block_norms(f, p, alpha, anisotropic, part), s, q)


def besov_profile(f, s, p, anisotropic=True, alpha=2.0):
    """Rows ``(j, 2^{js} ||R_j f||_p)`` for slope plots."""
    bn = block_norms(f, p, alpha, anisotropic)
    return [(j, float(2.0 ** (j * s) * bn[j])) for j in range(len(bn))]


def _inv(p):
    return 0.0 if math.isinf(p) else 1.0 / p


def bernstein_exponent(grid, k, p, p_prime, alpha):
    d = grid.d
    if grid.kinetic:
        k1, k2 = k
        px, pv = _as_pair(p)
        qx, qv = _as_pair(p_prime)
        return ((1 + alpha) * (k1 + d * _inv(px) - d * _inv(qx))
                + (k2 + d * _inv(pv) - d * _inv(qv)))
    kk = k if np.ndim(k) == 0 else sum(k)
    return kk + d * _inv(_as_pair(p)[0]) - d * _inv(_as_pair(p_prime)[0])


def derivative_magnitude(f, k):
    """Pointwise Frobenius norm of nabla_x^{k1} nabla_v^{k2} f (spectral)."""
    g = f.grid
    if g.kinetic:
        k1, k2 = k
        comps = [g.xi_x()] * k1 + [g.xi_v()] * k2
    else:
        kk = k if np.ndim(k) == 0 else sum(k)
        comps = [[g.freq(a) for a in range(g.ndim)]] * kk
    if not comps:
        return np.abs(f.values)
    acc = np.zeros(g.shape)
    for choice in itertools.product(*comps):
        mult = 1.0
        for xi in choice:
            mult = mult * (1j * xi)
        acc += np.real(_fft.ifftn(f.spectrum * mult * g.size)) ** 2
    return np.sqrt(acc)


def bernstein_ratio(f, j, k, p, p_prime, alpha=2.0, part=None):
    """``||grad^k R_j f||_{p'} / (2^{j a.(k + d/p - d/p')} ||R_j f||_p)``.

    Returns 0 when the block vanishes.
    """
    px, pv = _as_pair(p)
    qx, qv = _as_pair(p_prime)
    if px > qx or pv > qv:
        raise ValueError("need p <= p' componentwise")
    part = part or partition(f.grid, alpha, True)
    rj = PhaseField(f.grid, _block_values(f, part.mask(j)), check=False)
    den = mixed_lp_norm(rj, p)
    # rounding-level blocks count as empty
    if den <= 1e-12 * mixed_lp_norm(f, p):
        return 0.0
    num = mixed_lp_norm(PhaseField(f.grid, derivative_magnitude(rj, k), check=False), p_prime)
    expo = bernstein_exponent(f.grid, k, p, p_prime, alpha)
    return float(num / (2.0 ** (j * expo) * den))


def _offset_set(n, limit):
    full = np.arange(-(n // 2), n // 2 + 1)
    if len(full) <= limit:
        return full
    pos = np.unique(np.round(np.geomspace(1, n // 2, limit // 2)).astype(int))
    return np.unique(np.concatenate([-pos, [0], pos]))


def holder_seminorm(f, s, alpha=2.0, max_offsets=65):
    """``sup_h ||f(. + h) - f||_inf / |h|_a^s`` over sampled lattice offsets."""
    if not 0 < s < 1:
        raise ValueError("s must lie in (0, 1)")
    g = f.grid
    vals = f.values
    sets = [_offset_set(n, max_offsets if g.ndim <= 2 else 9) for n in g.shape]
    best = 0.0
    for m in itertools.product(*sets):
        if not any(m):
            continue
        h = [mi * hi for mi, hi in zip(m, g.spacings)]
        if g.kinetic:
            hx = math.sqrt(sum(c * c for c in h[: g.d]))
            hv = math.sqrt(sum(c * c for c in h[g.d:]))
            ha = hx ** (1.0 / (1.0 + alpha)) + hv
        else:
            ha = math.sqrt(sum(c * c for c in h))
        diff = np.abs(np.roll(vals, shift=[-mi for mi in m], axis=tuple(range(g.ndim))) - vals).max()
        best = max(best, diff / ha ** s)
    return float(best)


def convolve(f, g):
    """Periodic convolution ``int f(z - z') g(z') dz'`` on the lattice."""
    if f.grid != g.grid:
        raise ValueError("fields live on different grids")
    return PhaseField(f.grid, np.real(_fft.ifftn(f.spectrum * g.spectrum * f.grid.volume
                                                  * f.grid.size)))
