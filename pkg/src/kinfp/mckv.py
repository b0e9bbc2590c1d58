"""Alpha-stable McKean-Vlasov particle systems and their empirical densities.

Particles interact through the same periodic (zero-mode gauged) kernel the
PDE solver uses: the inverse FFT of the lattice multiplier, tabulated on a
fine position grid. Only mollified or cut-off kernels are accepted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _fft
from .grid import PhaseField, PhaseGrid
from .kernels import lattice_multiplier


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _check_alpha(alpha):
    if not (1.0 < alpha <= 2.0):
        raise ValueError(f"alpha must lie in (1, 2], got {alpha}")


def _cms_symmetric(alpha, n, rng):
    """Chambers-Mallows-Stuck draws with characteristic function exp(-|xi|^alpha)."""
    v = rng.uniform(-np.pi / 2, np.pi / 2, n)
    w = rng.exponential(1.0, n)
    return (np.sin(alpha * v) / np.cos(v) ** (1 / alpha)
            * (np.cos(v - alpha * v) / w) ** ((1 - alpha) / alpha))


def _positive_stable(beta, n, rng):
    """Kanter's draw with Laplace transform exp(-lambda^beta), 0 < beta < 1."""
    u = rng.uniform(0.0, 1.0, n) * np.pi
    w = rng.exponential(1.0, n)
    return (np.sin(beta * u) / np.sin(u) ** (1 / beta)
            * (np.sin((1 - beta) * u) / w) ** ((1 - beta) / beta))


def sample_stable(alpha, scale, n, seed=None, dim=1):
    """``n`` draws of ``L_scale`` with ``E exp(i xi . L) = exp(-scale |xi|^alpha)``.

    Returns shape ``(n, dim)``. ``alpha = 2`` gives ``N(0, 2 scale I)``; for
    ``dim >= 2`` and ``alpha < 2`` the draw is sub-Gaussian (isotropic).
    """
    _check_alpha(alpha)
    if scale < 0:
        raise ValueError("scale must be nonnegative")
    rng = _rng(seed)
    if scale == 0:
        return np.zeros((n, dim))
    if alpha == 2.0:
        return math.sqrt(2 * scale) * rng.standard_normal((n, dim))
    if dim == 1:
        return scale ** (1 / alpha) * _cms_symmetric(alpha, n, rng)[:, None]
    a = _positive_stable(alpha / 2, n, rng)
    g = math.sqrt(2.0) * rng.standard_normal((n, dim))
    return scale ** (1 / alpha) * np.sqrt(a)[:, None] * g


def sample_kinetic_pair(alpha, t, n, seed=None, substeps=48, dim=1, chunk=250_000):
    """Draws of ``(int_0^t L_s ds, L_t)`` from ``substeps`` stable increments.

    Increment ``k`` enters the time integral with weight ``t - s_mid``.
    """
    rng = _rng(seed)
    h = t / substeps
    weights = t - (np.arange(substeps) + 0.5) * h
    xs, vs = [], []
    for start in range(0, n, chunk):
        m = min(chunk, n - start)
        x = np.zeros((m, dim))
        v = np.zeros((m, dim))
        for w in weights:
            inc = sample_stable(alpha, h, m, rng, dim)
            x += w * inc
            v += inc
        xs.append(x)
        vs.append(v)
    return np.concatenate(xs), np.concatenate(vs)


@dataclass
class ParticleEnsemble:
    """Particles with periodic positions ``x`` (and velocities ``v`` for second order)."""

    order: str
    x: np.ndarray
    box_x: float
    v: np.ndarray | None = None
    seed: int | None = None
    t: float = 0.0
    rng: np.random.Generator = field(default=None, repr=False)

    def __post_init__(self):
        if self.order not in ("first", "second"):
            raise ValueError("order must be 'first' or 'second'")
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        if self.order == "second":
            if self.v is None:
                raise ValueError("second-order ensembles need velocities")
            self.v = np.atleast_2d(np.asarray(self.v, dtype=float))
            if self.v.shape != self.x.shape:
                raise ValueError("x and v shapes differ")
        elif self.v is not None:
            raise ValueError("first-order ensembles carry no velocities")
        if not np.all(np.isfinite(self.x)) or (self.v is not None and not np.all(np.isfinite(self.v))):
            raise ValueError("non-finite particle coordinates")
        self.x = wrap(self.x, self.box_x)
        if self.rng is None:
            self.rng = np.random.default_rng(self.seed)

    @property
    def N(self):
        return self.x.shape[0]

    @property
    def d(self):
        return self.x.shape[1]


def wrap(x, box):
    return (x + box / 2) % box - box / 2


def sample_from_field(f, n, seed=None):
    """Draw ``n`` points from a nonnegative lattice density (cell-uniform jitter)."""
    rng = _rng(seed)
    g = f.grid
    w = np.clip(f.values, 0, None).ravel()
    if w.sum() <= 0:
        raise ValueError("field has no positive mass")
    idx = rng.choice(w.size, size=n, p=w / w.sum())
    multi = np.unravel_index(idx, g.shape)
    pts = []
    for a in range(g.ndim):
        h = g.spacings[a]
        c = -g.boxes[a] / 2 + multi[a] * h
        pts.append(c + rng.uniform(-0.5, 0.5, n) * h)
    pts = np.stack(pts, axis=1)
    if g.kinetic:
        return pts[:, : g.d], pts[:, g.d:]
    return pts, None


def ensemble_from_field(f, n, seed=None):
    rng = np.random.default_rng(seed)
    x, v = sample_from_field(f, n, rng)
    order = "second" if f.grid.kinetic else "first"
    return ParticleEnsemble(order, x, f.grid.box_x, v, seed=seed, rng=rng)


def _position_spec(spec):
    """The kernel acting on positions, with lift signs folded in."""
    if spec.family == "dirac_x":
        if spec.acts_on != "x_marginal":
            raise ValueError("particle forces need a kernel acting through the x-marginal")
        return replace(spec.inner, sign=spec.inner.sign * spec.sign)
    return spec


def _check_regularised(spec):
    if not (spec.mollify_eps or spec.cutoff_eps or spec.family == "zero"):
        raise ValueError("particle mode needs a mollified or cut-off kernel")


@dataclass(frozen=True, eq=False)
class ForceTable:
    """Periodic kernel on a fine position grid plus its multiplier."""

    grid: PhaseGrid
    multiplier: tuple
    values: tuple

    @classmethod
    def build(cls, spec, d, box_x, n):
        spec = _position_spec(spec)
        _check_regularised(spec)
        g = PhaseGrid.position(d, box_x, n)
        mult = lattice_multiplier(spec, g)
        vals = tuple(np.real(_fft.ifftn(m)) / g.cell_volume for m in mult)
        return cls(g, mult, vals)


def _interp_periodic(table, grid, pts):
    """Multilinear interpolation of a periodic node table (nodes at -box/2 + k h)."""
    d = grid.d
    n = grid.n_x
    h = grid.dx
    s = (pts + grid.box_x / 2) / h
    i0 = np.floor(s).astype(np.int64)
    fr = s - i0
    out = np.zeros(pts.shape[0])
    for corner in range(2 ** d):
        w = np.ones(pts.shape[0])
        idx = []
        for a in range(d):
            bit = (corner >> a) & 1
            w = w * (fr[:, a] if bit else 1 - fr[:, a])
            idx.append((i0[:, a] + bit) % n)
        out += w * table[tuple(idx)]
    return out


def _offset_table(table, grid):
    """Re-index an fft-ordered (offset) table to node order for interpolation."""
    return np.fft.fftshift(table)


def direct_forces(x, table, weight=1.0, chunk=512):
    """``weight/N sum_j K(x_i - x_j)`` by pairwise table lookups (deterministic order)."""
    g = table.grid
    n_p, d = x.shape
    shifted = [_offset_table(v, g) for v in table.values]
    out = np.zeros((n_p, d))
    for i0 in range(0, n_p, chunk):
        xi = x[i0:i0 + chunk]
        diff = wrap(xi[:, None, :] - x[None, :, :], g.box_x).reshape(-1, d)
        for a in range(d):
            vals = _interp_periodic(shifted[a], g, diff).reshape(xi.shape[0], n_p)
            out[i0:i0 + chunk, a] = vals.sum(axis=1)
    return out * (weight / n_p)


def deposit(x, grid):
    """Cloud-in-cell density of unit total mass on a position grid."""
    d, n, h = grid.d, grid.n_x, grid.dx
    s = (x + grid.box_x / 2) / h
    i0 = np.floor(s).astype(np.int64)
    fr = s - i0
    rho = np.zeros(grid.size)
    for corner in range(2 ** d):
        w = np.ones(x.shape[0])
        flat = np.zeros(x.shape[0], dtype=np.int64)
        for a in range(d):
            bit = (corner >> a) & 1
            w = w * (fr[:, a] if bit else 1 - fr[:, a])
            flat = flat * n + (i0[:, a] + bit) % n
        rho += np.bincount(flat, weights=w, minlength=grid.size)
    return rho.reshape(grid.shape) / (x.shape[0] * grid.cell_volume)


def binned_forces(x, table, weight=1.0):
    """Mean-field force via CIC deposit, spectral convolution and interpolation."""
    g = table.grid
    rho = deposit(x, g)
    spec = _fft.fftn(rho) / g.size
    out = np.zeros_like(x)
    for a, m in enumerate(table.multiplier):
        field_a = np.real(_fft.ifftn(m * spec * g.size))
        out[:, a] = _interp_periodic(field_a, g, x)
    return out * weight


def truncate_increments(inc, quantile):
    """Radially clip increments at the empirical ``quantile`` of their norms."""
    r = np.linalg.norm(inc, axis=1)
    cap = np.quantile(r, quantile)
    scale = np.where(r > cap, cap / np.maximum(r, 1e-300), 1.0)
    return inc * scale[:, None]


def step_ensemble(ens, spec, dt, alpha, method="direct", table=None, weight=1.0,
                  table_n=None, truncate=None):
    """One Euler-Maruyama step of the mean-field particle system.

    First order: ``dX = F(X) dt + dL``. Second order: ``X += V dt`` with the
    old velocity, then ``V += F(X_old) dt + dL``. ``F`` is ``weight`` times the
    empirical mean of the periodic kernel (``weight`` is the PDE mass).
    ``truncate`` (a quantile in (0, 1), off by default) clips heavy-tailed
    increments for variance-controlled plots.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if method not in ("direct", "binned"):
        raise ValueError("method must be 'direct' or 'binned'")
    d = ens.d
    if table is None:
        table = ForceTable.build(spec, d, ens.box_x, table_n or (4096 if d == 1 else 256))
    forces = (direct_forces if method == "direct" else binned_forces)(ens.x, table, weight)
    noise = sample_stable(alpha, dt, ens.N, ens.rng, d)
    if truncate is not None:
        if not 0 < truncate < 1:
            raise ValueError("truncate must be a quantile in (0, 1)")
        noise = truncate_increments(noise, truncate)
    if ens.order == "first":
        x = ens.x + forces * dt + noise
        v = None
    else:
        x = ens.x + ens.v * dt
        v = ens.v + forces * dt + noise
    return ParticleEnsemble(ens.order, x, ens.box_x, v, seed=ens.seed, t=ens.t + dt, rng=ens.rng)


def _periodic_weights(c, pts, box, h, bw):
    """Rows: per-particle Gaussian weights at nodes ``c``, normalised to unit mass."""
    diff = (c[None, :] - pts[:, None] + box / 2) % box - box / 2
    w = np.exp(-0.5 * (diff / bw) ** 2)
    return w / (w.sum(axis=1, keepdims=True) * h)


def silverman_bandwidth(points, spacings):
    n, k = points.shape
    sd = points.std(axis=0)
    bw = 1.06 * sd * n ** (-1.0 / (k + 4))
    return np.maximum(bw, np.asarray(spacings))


def _ensemble_points(ens, grid):
    if grid.kinetic:
        if ens.order != "second":
            raise ValueError("kinetic grids need a second-order ensemble")
        return np.hstack([ens.x, ens.v])
    return ens.x


def empirical_density(ens, grid, bandwidth=None, chunk=4096):
    """Separable periodic Gaussian KDE; every particle carries exactly mass 1/N."""
    if grid.ndim > 2:
        raise ValueError("KDE is implemented for lattices of at most two axes")
    pts = _ensemble_points(ens, grid)
    if pts.shape[1] != grid.ndim:
        raise ValueError("ensemble dimension does not match the grid")
    if bandwidth is None:
        bandwidth = silverman_bandwidth(pts, grid.spacings)
    bw = np.broadcast_to(np.asarray(bandwidth, dtype=float), (grid.ndim,))
    if np.any(bw < np.asarray(grid.spacings) * (1 - 1e-12)):
        raise ValueError("bandwidth must be at least one lattice spacing")
    coords = [grid.coord(a).ravel() for a in range(grid.ndim)]
    n = pts.shape[0]
    dens = np.zeros(grid.shape)
    for i0 in range(0, n, chunk):
        p = pts[i0:i0 + chunk]
        ws = [_periodic_weights(coords[a], p[:, a], grid.boxes[a], grid.spacings[a], bw[a])
              for a in range(grid.ndim)]
        if grid.ndim == 1:
            dens += ws[0].sum(axis=0)
        else:
            dens += ws[0].T @ ws[1]
    return PhaseField(grid, dens / n)


@dataclass
class ChaosDistance:
    l1: float
    w1: float | None

    def __float__(self):
        return self.l1


def _marginal_x(values, grid):
    if grid.kinetic:
        return values.sum(axis=tuple(grid.v_axes)) * grid.dv ** grid.d
    return values


def wasserstein1_marginal(x, f):
    """W1 between the particle x-sample and the x-marginal of ``f`` (d = 1)."""
    g = f.grid
    m = _marginal_x(f.values, g)
    m = np.clip(m, 0, None)
    edges = -g.box_x / 2 + np.arange(g.n_x + 1) * g.dx - g.dx / 2
    cdf_f = np.concatenate([[0.0], np.cumsum(m)]) / m.sum()
    # wrap into [edges[0], edges[-1]) so the seam cell is counted once
    xs = np.sort(wrap(x[:, 0] + g.dx / 2, g.box_x) - g.dx / 2)
    cdf_p = np.searchsorted(xs, edges, side="right") / xs.size
    return float(np.sum(np.abs(cdf_p - cdf_f)[:-1]) * g.dx)


def chaos_distance(ens, pde_field, bandwidth=None):
    """L1 distance between the particle KDE and the (unit-mass) PDE density, plus W1 in d = 1."""
    g = pde_field.grid
    mass = float(pde_field.values.sum() * g.cell_volume)
    target = pde_field.values / mass
    kde = empirical_density(ens, g, bandwidth)
    l1 = float(np.abs(kde.values - target).sum() * g.cell_volume)
    w1 = wasserstein1_marginal(ens.x, PhaseField(g, target)) if g.d == 1 else None
    return ChaosDistance(l1, w1)


def simulate(ens, spec, alpha, dt, steps, method="binned", weight=1.0, table_n=None):
    """Advance ``steps`` Euler-Maruyama steps with one shared force table."""
    table = ForceTable.build(spec, ens.d, ens.box_x, table_n or (4096 if ens.d == 1 else 256))
    for _ in range(steps):
        ens = step_ensemble(ens, spec, dt, alpha, method=method, table=table, weight=weight)
    return ens
