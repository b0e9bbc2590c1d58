"""Interaction kernels as Fourier multipliers, their cutoffs and Besov profiles.

All singular families are represented by their exact Fourier transform
evaluated at lattice frequencies, with the zero mode gauged to 0. Unpaired
Nyquist modes are dropped since odd symbols have no real representative
there.

``riesz_grad(gamma)`` is the odd kernel ``K(x) = x |x|^{gamma-d-1}``,
homogeneous of degree ``gamma - d``. Its transform is
``C(d, gamma) i xi |xi|^{-gamma-1}`` with
``C = -pi^{d/2} 2^gamma Gamma((gamma+1)/2) / Gamma((d-gamma+1)/2)``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _fft
from .besov import block_norms, besov_norm
from .fits import fit_linear_in_level, fit_loglog
from .grid import PhaseField, PhaseGrid

FAMILIES = ("riesz_grad", "biot_savart_2d", "sqg_riesz_2d", "porous_medium",
            "dirac_x", "grid_custom", "zero")


@dataclass(frozen=True, eq=False)
class KernelSpec:
    family: str
    gamma: float | None = None
    s: float | None = None
    sign: float = 1.0
    cutoff_eps: float | None = None
    mollify_eps: float | None = None
    inner: "KernelSpec | None" = None
    acts_on: str = "v"
    samples: np.ndarray | None = field(default=None, repr=False)
    sample_grid: PhaseGrid | None = None

    def __post_init__(self):
        f = self.family
        if f not in FAMILIES:
            raise ValueError(f"unknown kernel family {f!r}")
        if self.sign not in (1.0, -1.0, 1, -1):
            raise ValueError("sign must be +1 or -1")
        if f == "riesz_grad" and self.gamma is None:
            raise ValueError("riesz_grad needs gamma")
        if f == "porous_medium" and not (self.s is not None and 0 < self.s <= 1):
            raise ValueError("porous_medium needs s in (0, 1]")
        if f == "dirac_x":
            if self.inner is None:
                raise ValueError("dirac_x needs an inner kernel")
            if self.acts_on not in ("v", "x_marginal"):
                raise ValueError("acts_on must be 'v' or 'x_marginal'")
        if f == "grid_custom" and (self.samples is None or self.sample_grid is None):
            raise ValueError("grid_custom needs samples and sample_grid")
        for name in ("cutoff_eps", "mollify_eps"):
            e = getattr(self, name)
            if e is not None and e < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def divergence_free(self):
        return self.family in ("biot_savart_2d", "sqg_riesz_2d")

    @property
    def key(self):
        inner = self.inner.key if self.inner is not None else None
        samp = None if self.samples is None else hash(self.samples.tobytes())
        return (self.family, self.gamma, self.s, float(self.sign), self.cutoff_eps,
                self.mollify_eps, inner, self.acts_on, samp, self.sample_grid)

    def __hash__(self):
        return hash(self.key)

    def __eq__(self, other):
        return isinstance(other, KernelSpec) and self.key == other.key

    def to_dict(self):
        out = {"family": self.family, "sign": float(self.sign)}
        for k in ("gamma", "s", "cutoff_eps", "mollify_eps"):
            if getattr(self, k) is not None:
                out[k] = getattr(self, k)
        if self.inner is not None:
            out["inner"] = self.inner.to_dict()
            out["acts_on"] = self.acts_on
        return out

    @classmethod
    def from_dict(cls, rec):
        rec = dict(rec)
        allowed = {"family", "gamma", "s", "sign", "cutoff_eps", "mollify_eps", "inner", "acts_on"}
        extra = set(rec) - allowed
        if extra:
            raise ValueError(f"unknown kernel field(s): {sorted(extra)}")
        if "family" not in rec:
            raise ValueError("kernel record needs a 'family'")
        if rec.get("inner") is not None:
            rec["inner"] = cls.from_dict(rec["inner"])
        return cls(**rec)


def riesz_grad(gamma, sign=1.0, **kw):
    return KernelSpec("riesz_grad", gamma=float(gamma), sign=sign, **kw)


def biot_savart_2d(sign=1.0, **kw):
    return KernelSpec("biot_savart_2d", sign=sign, **kw)


def sqg_riesz_2d(sign=1.0, **kw):
    return KernelSpec("sqg_riesz_2d", sign=sign, **kw)


def porous_medium(s, sign=1.0, **kw):
    return KernelSpec("porous_medium", s=float(s), sign=sign, **kw)


def dirac_x(inner, acts_on="v", sign=1.0):
    return KernelSpec("dirac_x", inner=inner, acts_on=acts_on, sign=sign)


def riesz_constant(d, gamma):
    return -(math.pi ** (d / 2) * 2.0 ** gamma * math.gamma((gamma + 1) / 2)
             / math.gamma((d - gamma + 1) / 2))


def _check_dim(spec, d):
    if spec.family in ("biot_savart_2d", "sqg_riesz_2d") and d != 2:
        raise ValueError(f"{spec.family} is two-dimensional")
    if spec.family == "riesz_grad" and not (0 < spec.gamma <= d):
        raise ValueError(f"riesz_grad needs gamma in (0, {d}], got {spec.gamma}")


def multiplier(spec, xi):
    """Fourier multiplier components at frequencies ``xi`` (list of d arrays).

    Position-space families only; the zero frequency maps to 0.
    """
    xi = [np.asarray(c, dtype=float) for c in xi]
    d = len(xi)
    _check_dim(spec, d)
    r2 = sum(c * c for c in xi)
    zero = r2 == 0
    r = np.sqrt(np.where(zero, 1.0, r2))
    fam = spec.family
    if fam == "zero":
        out = [np.zeros(r.shape, dtype=complex) for _ in xi]
    elif fam == "riesz_grad":
        c = riesz_constant(d, spec.gamma)
        out = [c * 1j * comp * r ** (-spec.gamma - 1) for comp in xi]
    elif fam == "biot_savart_2d":
        out = [1j * xi[1] / r ** 2, -1j * xi[0] / r ** 2]
    elif fam == "sqg_riesz_2d":
        out = [1j * xi[1] / r, -1j * xi[0] / r]
    elif fam == "porous_medium":
        out = [1j * comp * r ** (-2 * spec.s) for comp in xi]
    else:
        raise ValueError(f"{fam} has no position-space multiplier formula")
    damp = 1.0
    if spec.mollify_eps:
        damp = np.exp(-0.5 * spec.mollify_eps ** 2 * r2)
    return [np.where(zero, 0.0, spec.sign * damp * o) for o in out]


def _position_table(spec, pgrid):
    """Multiplier on a position grid, including sampled families."""
    if spec.family == "grid_custom":
        if spec.sample_grid != pgrid:
            raise ValueError("grid_custom samples live on a different grid")
        out = [_fft.fftn(c) * pgrid.cell_volume for c in spec.samples]
        out = [spec.sign * o for o in out]
        if spec.mollify_eps:
            r2 = sum(pgrid.freq(a) ** 2 for a in range(pgrid.ndim))
            out = [o * np.exp(-0.5 * spec.mollify_eps ** 2 * r2) for o in out]
    elif spec.cutoff_eps:
        return _position_table(cutoff_kernel(spec, spec.cutoff_eps, pgrid), pgrid)
    else:
        out = multiplier(spec, [pgrid.freq(a) for a in range(pgrid.ndim)])
    mask = np.ones(pgrid.shape, dtype=bool)
    for a in range(pgrid.ndim):
        mask = mask & pgrid.nyquist_mask(a)
    out = [np.where(mask, np.broadcast_to(o, pgrid.shape), 0.0) for o in out]
    for o in out:
        o.flat[0] = 0.0
    return out


@functools.lru_cache(maxsize=64)
def lattice_multiplier(spec, grid):
    """Multiplier components broadcast to ``grid.shape`` (read-only)."""
    if not grid.kinetic:
        out = _position_table(spec, grid)
    elif spec.family == "dirac_x":
        inner = spec.inner
        if spec.acts_on == "v":
            table = _position_table(inner, grid.position_grid("v"))
            shape = (1,) * grid.d + table[0].shape
            out = [spec.sign * np.broadcast_to(t.reshape(shape), grid.shape) for t in table]
        else:
            table = _position_table(inner, grid.position_grid("x"))
            shape = table[0].shape + (1,) * grid.d
            onv = np.zeros((grid.n_v,) * grid.d)
            onv.flat[0] = grid.box_v ** grid.d
            onv = onv.reshape((1,) * grid.d + onv.shape)
            out = [spec.sign * t.reshape(shape) * onv for t in table]
    elif spec.family == "zero":
        out = [np.zeros(grid.shape, dtype=complex) for _ in range(grid.d)]
    else:
        raise ValueError("kinetic grids need a dirac_x lift (or the zero kernel)")
    out = [np.ascontiguousarray(np.broadcast_to(o, grid.shape), dtype=complex) for o in out]
    for o in out:
        o.flags.writeable = False
    return tuple(out)


def drift_from_spectrum(spec, grid, spectrum):
    """Drift component arrays from a normalised spectrum."""
    return [np.real(_fft.ifftn(m * spectrum * grid.size)) for m in lattice_multiplier(spec, grid)]


def convolve_drift(spec, u):
    """``H = b * u`` as a list of real PhaseFields (one per drift direction)."""
    if not isinstance(u, PhaseField):
        raise TypeError("u must be a PhaseField")
    return [PhaseField(u.grid, h) for h in drift_from_spectrum(spec, u.grid, u.spectrum)]


def _real_space(spec, x, d):
    """Samples of the singular kernel at points ``x`` (list of arrays); 0 at the origin."""
    r2 = sum(c * c for c in x)
    origin = r2 == 0
    r = np.sqrt(np.where(origin, 1.0, r2))
    if spec.family == "riesz_grad":
        comps = [c * r ** (spec.gamma - d - 1) for c in x]
    elif spec.family == "biot_savart_2d":
        comps = [-x[1] / (2 * np.pi * r ** 2), x[0] / (2 * np.pi * r ** 2)]
    else:
        raise ValueError(f"no real-space formula for {spec.family}")
    return [np.where(origin, 0.0, spec.sign * c) for c in comps], np.sqrt(r2)


def kernel_samples(spec, pgrid, eps=None):
    """Kernel sampled at lattice offsets (fft order), optionally cut off at |x| <= eps."""
    d = pgrid.d
    x = [np.broadcast_to(pgrid.offset(a), pgrid.shape) for a in range(d)]
    comps, r = _real_space(spec, x, d)
    if eps:
        comps = [np.where(r > eps, c, 0.0) for c in comps]
    return np.stack(comps)


def cutoff_kernel(spec, eps, grid):
    """Grid-sampled ``K_eps = K 1{|x| > eps}`` on a position grid.

    The cap value at ``|x| = eps`` is ``eps^(gamma - d)``.
    """
    if spec.family not in ("riesz_grad", "biot_savart_2d"):
        raise ValueError("cutoff_kernel supports riesz_grad and biot_savart_2d")
    if grid.kinetic:
        raise ValueError("cutoff_kernel needs a position-only grid")
    if eps < 2 * grid.dx:
        raise ValueError(f"eps={eps} below two lattice spacings ({2 * grid.dx})")
    base = replace(spec, cutoff_eps=None)
    return KernelSpec("grid_custom", sign=1.0, samples=kernel_samples(base, grid, eps),
                      sample_grid=grid, mollify_eps=spec.mollify_eps)


def _lattice_kernel(spec, pgrid):
    """Real-space kernel components implied by the lattice multiplier."""
    table = _position_table(spec, pgrid)
    return [np.real(_fft.ifftn(m)) / pgrid.cell_volume for m in table]


def kernel_besov_profile(spec, grid, p):
    """Per-level norms ``(j, ||R_j K||_p)`` with vector components combined."""
    comps = _lattice_kernel(spec, grid)
    norms = None
    for c in comps:
        bn = block_norms(PhaseField(grid, c), p, anisotropic=False)
        norms = bn ** 2 if norms is None else norms + bn ** 2
    norms = np.sqrt(norms)
    return [(j, float(v)) for j, v in enumerate(norms)]


def profile_slope(profile, j_lo=None, j_hi=None):
    """log2 slope over mid-range levels.

    Defaults drop levels 0-1 and the top three, which the square lattice
    only fills partially.
    """
    j = np.array([r[0] for r in profile], dtype=float)
    y = np.array([r[1] for r in profile])
    j_lo = 2 if j_lo is None else j_lo
    j_hi = int(j.max()) - 3 if j_hi is None else j_hi
    sel = (j >= j_lo) & (j <= j_hi)
    return fit_linear_in_level(j[sel], y[sel])


def _inv(p):
    return 0.0 if math.isinf(p) else 1.0 / p


def _check_r(spec, d, r):
    gamma = spec.gamma if spec.family == "riesz_grad" else 1.0
    if not (1 <= r < (math.inf if gamma >= d else d / (d - gamma))):
        raise ValueError("r must lie in [1, d/(d - gamma))")


def cutoff_error(spec, p, r, eps, grid, full=None):
    """``||K - K_eps||_{B^{beta,inf}_p}`` with ``beta = d/p - d/r``."""
    d = grid.d
    _check_r(spec, d, r)
    if eps < 2 * grid.dx:
        raise ValueError(f"eps={eps} below two lattice spacings")
    beta = d * _inv(p) - d * _inv(r)
    base = replace(spec, cutoff_eps=None, mollify_eps=None)
    full = kernel_samples(base, grid) if full is None else full
    acc = 0.0
    for c in full - kernel_samples(base, grid, eps):
        acc += besov_norm(PhaseField(grid, c), beta, math.inf, p, anisotropic=False) ** 2
    return math.sqrt(acc)


def cutoff_rate(spec, p, r, eps_grid, grid):
    """Fit the log-log slope of ``||K - K_eps||_{B^{beta,inf}_p}`` against eps.

    ``beta = d/p - d/r``; the expected slope is ``d/r - d + gamma``.
    """
    eps_grid = np.asarray(eps_grid, dtype=float)
    if eps_grid.size < 3:
        raise ValueError("cutoff_rate needs at least 3 eps values")
    _check_r(spec, grid.d, r)
    full = kernel_samples(replace(spec, cutoff_eps=None, mollify_eps=None), grid)
    vals = [cutoff_error(spec, p, r, float(e), grid, full) for e in eps_grid]
    return fit_loglog(eps_grid, vals, xlabel="eps", ylabel="besov_norm")
