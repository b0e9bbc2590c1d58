"""Residuals, smallness margins, decay fits and stability ratios for solver runs."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .. import _fft
from ..besov import besov_norm
from ..fits import fit_loglog
from ..grid import PhaseField
from ..kernels import _lattice_kernel, lattice_multiplier
from ..semigroup import apply_spectrum
from .solver import _Nonlinear, _deriv, _flux_axes, solve


def _uniform_step(times):
    t = np.asarray(times, dtype=float)
    steps = np.diff(t)
    if len(t) < 2:
        return 0.0
    if np.max(np.abs(steps - steps[0])) > 1e-9 * max(1.0, t[-1]):
        raise ValueError("snapshot times must be uniform")
    return float(steps[0])


def _l2(a, grid):
    return float(np.sqrt(np.sum(a * a) * grid.cell_volume))


def mild_residual(run, cfg=None, max_samples=16):
    """``max_t ||u(t) - P_t u0 + int_0^t P_{t-s} N(u_s) ds||_2 / ||u0||_2``.

    The Duhamel integral is a trapezoid sum over the stored snapshots, each
    node propagated directly by ``P_{t-s}``; up to ``max_samples`` evenly
    spaced snapshot times are checked.
    """
    cfg = cfg or run.config
    g, a = cfg.grid, cfg.alpha
    snaps = run.snapshots
    h = _uniform_step(run.snapshot_times)
    K = len(snaps) - 1
    if K < 1:
        return 0.0
    sample = sorted(set(np.linspace(1, K, min(max_samples, K)).round().astype(int).tolist()))
    u0 = snaps[0]
    norm0 = _l2(u0.values, g)
    acc = {m: np.array(snaps[m].values) - apply_spectrum(u0.spectrum, g, m * h, a)
           for m in sample}
    nl = _Nonlinear(cfg.kernel, g, cfg.dealias)
    if not nl.null:
        for k in range(K + 1):
            if k > sample[-1]:
                break
            nk = nl(snaps[k].spectrum)
            for m in sample:
                if m < k:
                    continue
                w = 0.5 * h if k in (0, m) else h
                acc[m] += w * apply_spectrum(nk, g, (m - k) * h, a)
    return max(_l2(v, g) for v in acc.values()) / norm0


def compact_bump(grid, center, width):
    """C-infinity bump ``exp(-1/(1 - r^2))`` of radius ``width`` in every variable."""
    r2 = 0.0
    for axis in range(grid.ndim):
        L = grid.boxes[axis]
        c = grid.coord(axis) - center[axis]
        if not (grid.kinetic and axis in grid.v_axes):
            c = (c + L / 2) % L - L / 2
        r2 = r2 + (c / width[axis]) ** 2
    with np.errstate(divide="ignore", over="ignore"):
        vals = np.where(r2 < 1, np.exp(-1.0 / np.maximum(1 - r2, 1e-300)), 0.0)
    return PhaseField(grid, np.broadcast_to(vals, grid.shape))


def default_test_functions(grid, count=3):
    """A few bumps at different centres, wide enough to resolve (>= 12 nodes)."""
    out = []
    for i in range(count):
        center, width = [], []
        for axis in range(grid.ndim):
            L = grid.boxes[axis]
            hstep = grid.spacings[axis]
            w = max(12 * hstep, L / 6)
            if grid.kinetic and axis in grid.v_axes:
                w = min(w, L / 4)
            center.append((i - (count - 1) / 2) * w / 2)
            width.append(w)
        out.append(compact_bump(grid, center, width))
    return out


def _adjoint_generator(phi, grid, alpha):
    """``Delta_v^{alpha/2} phi + v . grad_x phi`` (kinetic) or ``Delta^{alpha/2} phi``."""
    s = phi.spectrum
    axes = grid.v_axes if grid.kinetic else tuple(range(grid.ndim))
    r2 = sum(grid.freq(a) ** 2 for a in axes)
    out = -np.sqrt(r2) ** alpha * s
    vals = np.real(_fft.ifftn(out * grid.size))
    if grid.kinetic:
        for ax, av in zip(grid.x_axes, grid.v_axes):
            dx = np.real(_fft.ifftn(_deriv(grid, ax) * s * grid.size))
            vals = vals + grid.coord(av) * dx
    return vals


def weak_residual(run, test_fns=None, cfg=None):
    """Max over test functions and snapshot times of the weak-form defect.

    ``<u_t, phi> - <u_0, phi> - int_0^t <u, L* phi> + <(b*u) u, grad_v phi> ds``
    with a trapezoid time integral, normalised by ``||u0||_1 ||phi||_inf``.
    """
    cfg = cfg or run.config
    g = cfg.grid
    snaps = run.snapshots
    h = _uniform_step(run.snapshot_times)
    test_fns = test_fns if test_fns is not None else default_test_functions(g)
    nl = _Nonlinear(cfg.kernel, g, cfg.dealias)
    axes = _flux_axes(g)
    dv = g.cell_volume
    l1 = float(np.abs(snaps[0].values).sum() * dv)
    worst = 0.0
    for phi in test_fns:
        lphi = _adjoint_generator(phi, g, cfg.alpha)
        grads = [np.real(_fft.ifftn(_deriv(g, ax) * phi.spectrum * g.size)) for ax in axes]
        rate = []
        for u in snaps:
            r = float(np.sum(u.values * lphi) * dv)
            if not nl.null:
                for f, gr in zip(nl.flux(u.spectrum), grads):
                    r += float(np.sum(np.real(_fft.ifftn(f * g.size)) * gr) * dv)
            rate.append(r)
        rate = np.asarray(rate)
        pair0 = float(np.sum(snaps[0].values * phi.values) * dv)
        integral = 0.0
        scale = l1 * float(np.abs(phi.values).max())
        for k in range(1, len(snaps)):
            integral += 0.5 * h * (rate[k - 1] + rate[k])
            pk = float(np.sum(snaps[k].values * phi.values) * dv)
            worst = max(worst, abs(pk - pair0 - integral) / scale)
    return worst


@dataclass(frozen=True)
class SmallnessIndices:
    """Besov indices for ``||u0||_{B^{beta0}_{p0}} ||b||_{B^{beta_b}_{rho}}``."""

    beta0: float
    p0: tuple
    beta_b: float
    rho: float
    c0: float
    provenance: str = ""

    @classmethod
    def from_dict(cls, rec):
        rec = dict(rec)
        p0 = rec["p0"]
        rec["p0"] = tuple(float(x) for x in (p0 if np.ndim(p0) else (p0, p0)))
        return cls(**rec)

    def to_dict(self):
        return {"beta0": self.beta0, "p0": list(self.p0), "beta_b": self.beta_b,
                "rho": self.rho, "c0": self.c0, "provenance": self.provenance}


def kernel_norm(cfg, beta, rho):
    """``||b||_{B^{beta,inf}_rho}`` of the lattice kernel in the variable it acts on."""
    spec, g = cfg.kernel, cfg.grid
    if g.kinetic:
        if spec.family != "dirac_x":
            raise ValueError("kinetic kernels must be dirac_x lifts")
        pg = g.position_grid("x" if spec.acts_on == "x_marginal" else "v")
        spec = replace(spec.inner, sign=spec.inner.sign * spec.sign)
    else:
        pg = g
    total = 0.0
    for comp in _lattice_kernel(spec, pg):
        total += besov_norm(PhaseField(pg, comp), beta, math.inf, rho, anisotropic=False) ** 2
    return math.sqrt(total)


def smallness_product(u0, cfg, idx):
    return besov_norm(u0, idx.beta0, math.inf, idx.p0, anisotropic=True,
                      alpha=cfg.alpha) * kernel_norm(cfg, idx.beta_b, idx.rho)


def smallness_margin(u0, cfg, idx):
    """``C0 - ||u0||_{B^{beta0}_{p0}} ||b||_{B^{beta_b}_rho}``; positive predicts contraction."""
    if idx is None:
        raise ValueError("smallness indices are not configured for this run")
    return idx.c0 - smallness_product(u0, cfg, idx)


def contraction_threshold(u0, cfg, scales):
    """Smallest tested scale whose Picard run fails to contract (None if all contract)."""
    pic = replace(cfg, scheme="global_picard")
    rows = []
    for lam in sorted(scales):
        run = solve(u0 * lam, pic)
        rows.append((lam, run.contracting, run.contraction_ratios))
        if not run.contracting:
            return lam, rows
    return None, rows


def decay_rate(run, channel, window):
    """Log-log slope of a monitor channel over ``window = (t_lo, t_hi)``."""
    t, y = run.channel(channel)
    lo, hi = window
    sel = (t >= lo) & (t <= hi)
    if sel.sum() < 5:
        raise ValueError(f"window {window} holds fewer than 5 samples")
    return fit_loglog(t[sel], np.abs(y[sel]), min_points=5)


@dataclass
class StabilityReport:
    times: np.ndarray
    ratios: np.ndarray
    exact_equal: bool

    @property
    def max_ratio(self):
        return float(np.max(self.ratios)) if len(self.ratios) else 0.0


def stability_compare(run_a, run_b, input_distance):
    """Per-time ``||u_a(t) - u_b(t)||_2 / input_distance``."""
    if run_a.config.grid != run_b.config.grid:
        raise ValueError("runs live on different grids")
    g = run_a.config.grid
    n = min(len(run_a.snapshots), len(run_b.snapshots))
    dist = np.array([_l2(run_a.snapshots[k].values - run_b.snapshots[k].values, g)
                     for k in range(n)])
    times = np.asarray(run_a.snapshot_times[:n])
    if input_distance == 0:
        return StabilityReport(times, np.zeros(n), bool(np.all(dist == 0)))
    return StabilityReport(times, dist / input_distance, bool(np.all(dist == 0)))


def drift_divergence(u, cfg):
    """``div H`` of the drift generated by ``u`` (values)."""
    g = cfg.grid
    ms = lattice_multiplier(cfg.kernel, g)
    div = sum(_deriv(g, a) * m for a, m in zip(_flux_axes(g), ms)) * u.spectrum
    return np.real(_fft.ifftn(div * g.size))
