"""Periodic phase-space lattices, spectral transforms and mixed L^p norms.

A kinetic grid of dimension ``d`` stores samples ``f[x_1..x_d, v_1..v_d]``
(positions first, velocities last). A position-only grid stores
``f[x_1..x_d]``. Nodes sit at ``-box/2 + k*h`` for ``k = 0..n-1``.

Spectra are normalised so the zero mode is the lattice mean::

    spectrum = fftn(values) / values.size
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from . import _fft


def _is_pow2(n):
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class PhaseGrid:
    d: int
    kinetic: bool
    box_x: float
    n_x: int
    box_v: float = 1.0
    n_v: int = 8

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"d must be 1 or 2, got {self.d}")
        for name in ("n_x", "n_v"):
            n = getattr(self, name)
            if not (isinstance(n, (int, np.integer)) and _is_pow2(int(n)) and n >= 8):
                raise ValueError(f"{name} must be a power of two >= 8, got {n}")
        if not (self.box_x > 0 and self.box_v > 0):
            raise ValueError("box lengths must be strictly positive")

    @classmethod
    def position(cls, d, box, n):
        return cls(d=d, kinetic=False, box_x=float(box), n_x=int(n))

    @classmethod
    def phase(cls, d, box_x, n_x, box_v, n_v):
        return cls(d=d, kinetic=True, box_x=float(box_x), n_x=int(n_x),
                   box_v=float(box_v), n_v=int(n_v))

    # -- geometry ---------------------------------------------------------
    @property
    def ndim(self):
        return 2 * self.d if self.kinetic else self.d

    @property
    def shape(self):
        if self.kinetic:
            return (self.n_x,) * self.d + (self.n_v,) * self.d
        return (self.n_x,) * self.d

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def x_axes(self):
        return tuple(range(self.d))

    @property
    def v_axes(self):
        if not self.kinetic:
            return ()
        return tuple(range(self.d, 2 * self.d))

    @property
    def dx(self):
        return self.box_x / self.n_x

    @property
    def dv(self):
        return self.box_v / self.n_v

    @property
    def spacings(self):
        if self.kinetic:
            return (self.dx,) * self.d + (self.dv,) * self.d
        return (self.dx,) * self.d

    @property
    def boxes(self):
        if self.kinetic:
            return (self.box_x,) * self.d + (self.box_v,) * self.d
        return (self.box_x,) * self.d

    @property
    def cell_volume(self):
        return float(np.prod(self.spacings))

    @property
    def volume(self):
        return float(np.prod(self.boxes))

    def _bshape(self, axis, n):
        s = [1] * self.ndim
        s[axis] = n
        return tuple(s)

    def coord(self, axis):
        """Node coordinates along ``axis``, shaped for broadcasting."""
        n = self.shape[axis]
        L = self.boxes[axis]
        return (-L / 2 + np.arange(n) * (L / n)).reshape(self._bshape(axis, n))

    def offset(self, axis):
        """Signed lattice offsets (fft order), shaped for broadcasting."""
        n = self.shape[axis]
        h = self.spacings[axis]
        return (np.fft.fftfreq(n) * n * h).reshape(self._bshape(axis, n))

    def freq(self, axis):
        """Angular frequencies 2*pi*k/box in fft order, shaped for broadcasting."""
        n = self.shape[axis]
        h = self.spacings[axis]
        return (2 * np.pi * np.fft.fftfreq(n, d=h)).reshape(self._bshape(axis, n))

    def nyquist_mask(self, axis):
        """False on the unpaired Nyquist mode of ``axis``."""
        n = self.shape[axis]
        k = np.fft.fftfreq(n) * n
        return (k != -n // 2).reshape(self._bshape(axis, n))

    def xi_x(self):
        return [self.freq(a) for a in self.x_axes]

    def xi_v(self):
        return [self.freq(a) for a in self.v_axes]

    def x_coords(self):
        return [self.coord(a) for a in self.x_axes]

    def v_coords(self):
        return [self.coord(a) for a in self.v_axes]

    def position_grid(self, which="x"):
        """The d-dimensional position-only grid matching the x (or v) block."""
        if which == "x" or not self.kinetic:
            return PhaseGrid.position(self.d, self.box_x, self.n_x)
        return PhaseGrid.position(self.d, self.box_v, self.n_v)

    def refined(self, factor=2):
        return PhaseGrid(self.d, self.kinetic, self.box_x, self.n_x * factor,
                         self.box_v, self.n_v * factor if self.kinetic else self.n_v)


class PhaseField:
    """Real samples on a :class:`PhaseGrid` with a lazily synchronised spectrum.

    Instances are treated as immutable; arrays are flagged read-only.
    """

    __slots__ = ("grid", "_values", "_spectrum")

    def __init__(self, grid, values=None, spectrum=None, check=True):
        if values is None and spectrum is None:
            raise ValueError("need values or spectrum")
        self.grid = grid
        self._values = None
        self._spectrum = None
        if values is not None:
            v = np.array(values, dtype=float)
            if v.shape != grid.shape:
                raise ValueError(f"values shape {v.shape} != grid shape {grid.shape}")
            if check and not np.all(np.isfinite(v)):
                raise ValueError("field contains non-finite samples")
            v.flags.writeable = False
            self._values = v
        if spectrum is not None:
            s = np.array(spectrum, dtype=complex)
            if s.shape != grid.shape:
                raise ValueError(f"spectrum shape {s.shape} != grid shape {grid.shape}")
            if check and not np.all(np.isfinite(s)):
                raise ValueError("spectrum contains non-finite entries")
            s.flags.writeable = False
            self._spectrum = s

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid, fn):
        """Sample ``fn(*coords)`` where coords are the broadcast node arrays."""
        coords = [grid.coord(a) for a in range(grid.ndim)]
        vals = np.broadcast_to(np.asarray(fn(*coords), dtype=float), grid.shape)
        return cls(grid, vals)

    @property
    def values(self):
        if self._values is None:
            v = np.real(_fft.ifftn(self._spectrum * self.grid.size))
            v.flags.writeable = False
            self._values = v
        return self._values

    @property
    def spectrum(self):
        if self._spectrum is None:
            s = _fft.fftn(self._values) / self.grid.size
            s.flags.writeable = False
            self._spectrum = s
        return self._spectrum

    @property
    def has_spectrum(self):
        return self._spectrum is not None

    def _same_grid(self, other):
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, PhaseField):
            self._same_grid(other)
            return PhaseField(self.grid, self.values + other.values)
        return PhaseField(self.grid, self.values + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, PhaseField):
            self._same_grid(other)
            return PhaseField(self.grid, self.values - other.values)
        return PhaseField(self.grid, self.values - other)

    def __neg__(self):
        return PhaseField(self.grid, -self.values)

    def __mul__(self, c):
        if isinstance(c, PhaseField):
            self._same_grid(c)
            return PhaseField(self.grid, self.values * c.values)
        return PhaseField(self.grid, self.values * c)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return PhaseField(self.grid, self.values / c)

    def __repr__(self):
        return f"PhaseField(grid={self.grid!r})"


def to_spectral(f):
    """Return ``f`` with its spectrum populated (idempotent)."""
    if not np.all(np.isfinite(f.values)):
        raise ValueError("to_spectral: non-finite samples in field")
    f.spectrum  # noqa: B018 -- populates the cache
    return f


def from_spectrum(grid, spectrum):
    return PhaseField(grid, np.real(_fft.ifftn(np.asarray(spectrum) * grid.size)))


def _pnorm(a, p, axes, dvol):
    if math.isinf(p):
        return np.max(a, axis=axes)
    return (np.sum(a ** p, axis=axes) * dvol) ** (1.0 / p)


def _as_pair(p):
    if np.ndim(p) == 0:
        return float(p), float(p)
    px, pv = p
    return float(px), float(pv)


def mixed_lp_norm(f, p):
    """Mixed norm ``(int ||f(., v)||_{p_x}^{p_v} dv)^{1/p_v}``, x-norm first.

    On a position-only grid ``p`` may be a scalar (or a pair with equal entries).
    """
    g = f.grid
    a = np.abs(f.values)
    px, pv = _as_pair(p)
    if min(px, pv) < 1:
        raise ValueError("integrability exponents must lie in [1, inf]")
    if not g.kinetic:
        return float(_pnorm(a, px, tuple(range(g.ndim)), g.cell_volume))
    inner = _pnorm(a, px, g.x_axes, g.dx ** g.d)
    return float(_pnorm(inner, pv, tuple(range(g.d)), g.dv ** g.d))


def lp_norm(f, p):
    """Plain lattice L^p norm over all variables."""
    g = f.grid
    return float(_pnorm(np.abs(f.values), float(p), tuple(range(g.ndim)), g.cell_volume))


def total_mass(f):
    return float(np.sum(f.values) * f.grid.cell_volume)


def inner(f, g):
    """Lattice pairing <f, g> = int f g."""
    return float(np.sum(f.values * g.values) * f.grid.cell_volume)


def shear_values(values, grid, t):
    """Array version of :func:`shear`: x-shift by ``t*v`` for every lattice v."""
    sx = _fft.fftn(values, axes=grid.x_axes)
    return _shear_from_xspec(sx, grid, t)


def _shear_phase(grid, t):
    phase = 0.0
    for xi, v in zip(grid.xi_x(), grid.v_coords()):
        phase = phase + xi * v
    return np.exp(-1j * t * phase)


def _shear_from_xspec(sx, grid, t):
    if t != 0:
        sx = sx * _shear_phase(grid, t)
    return np.real(_fft.ifftn(sx, axes=grid.x_axes))


def shear(f, t):
    """Free-transport flow ``f(x, v) -> f(x - t v, v)`` (periodic in x).

    Exact on data band-limited in x: each v-slice is shifted by modulating
    its x-spectrum with ``exp(-i t v . xi_x)``.
    """
    g = f.grid
    if not g.kinetic:
        raise ValueError("shear requires a kinetic grid")
    if t == 0:
        return f
    return PhaseField(g, shear_values(f.values, g, float(t)))


def upsampled_max(f, factor=4):
    """Max of the trigonometric interpolant, estimated on a ``factor``-times finer lattice."""
    g = f.grid
    s = f.spectrum
    shape = tuple(n * factor for n in g.shape)
    big = np.zeros(shape, dtype=complex)
    idx = [np.fft.fftfreq(n) * n for n in g.shape]
    sl = np.ix_(*[(k.astype(int)) % m for k, m in zip(idx, shape)])
    big[sl] = s
    vals = np.real(_fft.ifftn(big * big.size))
    return float(vals.max())


@functools.lru_cache(maxsize=64)
def dealias_mask(grid):
    """Boolean 2/3-rule mask on the full lattice."""
    mask = np.ones(grid.shape, dtype=bool)
    for a, n in enumerate(grid.shape):
        k = np.abs(np.fft.fftfreq(n) * n)
        m = (k < n / 3.0).reshape(grid._bshape(a, n))
        mask = mask & m
    mask.flags.writeable = False
    return mask
