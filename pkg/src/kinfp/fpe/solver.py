"""Mild-form solvers for ``d_t u = L u - div((b*u) u)``.

``L`` is the kinetic operator ``Delta_v^{alpha/2} - v . grad_x`` (divergence
in v) or the isotropic ``Delta^{alpha/2}`` (divergence in x). Both schemes use
the same nonlinear term: 2/3-dealiased drift times density, differentiated
spectrally.
"""

from __future__ import annotations

import time

import numpy as np

from .. import _fft
from ..grid import PhaseField, dealias_mask
from ..kernels import drift_from_spectrum, lattice_multiplier
from ..semigroup import apply_spectrum
from .config import BoundTracker, SolverRun, measure


def _flux_axes(grid):
    return grid.v_axes if grid.kinetic else tuple(range(grid.ndim))


def _deriv(grid, axis):
    return 1j * grid.freq(axis) * grid.nyquist_mask(axis)


class _Nonlinear:
    """Evaluates the spectrum of ``div((b*u) u)`` and ``||(div H)^-||_inf``."""

    def __init__(self, kernel, grid, dealias="two_thirds"):
        self.kernel = kernel
        self.grid = grid
        self.axes = _flux_axes(grid)
        self.mask = dealias_mask(grid) if dealias == "two_thirds" else None
        self.null = kernel.family == "zero"

    def _masked(self, spec):
        return spec if self.mask is None else spec * self.mask

    def flux(self, spec):
        """Dealiased flux components ``(b*u) u`` as value arrays."""
        g = self.grid
        s = self._masked(spec)
        ud = np.real(_fft.ifftn(s * g.size))
        drift = drift_from_spectrum(self.kernel, g, s)
        if len(drift) != len(self.axes):
            raise ValueError("kernel dimension does not match the flux directions")
        out = []
        for h in drift:
            if not np.all(np.isfinite(h)):
                raise FloatingPointError("non-finite drift")
            prod = _fft.fftn(h * ud) / g.size
            prod = self._masked(prod)
            out.append(prod)
        return out

    def __call__(self, spec):
        g = self.grid
        if self.null:
            return np.zeros(g.shape, dtype=complex)
        total = np.zeros(g.shape, dtype=complex)
        for axis, f in zip(self.axes, self.flux(spec)):
            total += _deriv(g, axis) * f
        return total

    def neg_div_drift(self, spec):
        """``max (div H)^-`` for the drift generated by ``spec``."""
        g = self.grid
        if self.null or self.kernel.divergence_free:
            return 0.0
        s = self._masked(spec)
        ms = lattice_multiplier(self.kernel, g)
        div = sum(_deriv(g, a) * m for a, m in zip(self.axes, ms)) * s
        vals = np.real(_fft.ifftn(div * g.size))
        return float(max(0.0, -vals.min()))


def nonlinear_flux(u, spec, dealias="two_thirds"):
    """Flux ``F = (b*u) u`` (one PhaseField per direction), dealiased."""
    if not np.all(np.isfinite(u.values)):
        raise ValueError("u has non-finite samples")
    nl = _Nonlinear(spec, u.grid, dealias)
    if nl.null:
        return [PhaseField.zeros(u.grid) for _ in nl.axes]
    return [PhaseField(u.grid, spectrum=f) for f in nl.flux(u.spectrum)]


def nonlinear_term(u, spec, dealias="two_thirds"):
    """``div((b*u) u)`` as a PhaseField."""
    nl = _Nonlinear(spec, u.grid, dealias)
    return PhaseField(u.grid, spectrum=nl(u.spectrum))


def _fft_norm(values, grid):
    return _fft.fftn(values) / grid.size


def _l2(a, grid):
    return float(np.sqrt(np.sum(a * a) * grid.cell_volume))


class _Recorder:
    def __init__(self, run, cfg, u0):
        self.run = run
        self.cfg = cfg
        self.bound = BoundTracker(u0)

    def __call__(self, k, values, neg_div):
        cfg = self.cfg
        t = k * cfg.h
        u = PhaseField(cfg.grid, values, check=False)
        m = measure(u, t, cfg)
        m["linf_bound"] = self.bound.update(neg_div, cfg.h)
        self.run.record(t, m)
        if k % cfg.snapshot_every == 0 or k == cfg.steps:
            self.run.snapshots.append(u)
            self.run.snapshot_times.append(t)


def march_solve(u0, cfg):
    """Exponential trapezoid (predictor-corrector) marching.

    ``u* = P_h(u - h N(u))``, ``u_next = P_h(u - h/2 N(u)) - h/2 N(u*)``.
    Aborts with status ``blowup`` if the sup norm grows tenfold in one step.
    """
    if cfg.scheme != "exp_march":
        raise ValueError("march_solve needs scheme='exp_march'")
    g, h, a = cfg.grid, cfg.h, cfg.alpha
    nl = _Nonlinear(cfg.kernel, g, cfg.dealias)
    run = SolverRun(cfg)
    rec = _Recorder(run, cfg, u0)
    start = time.perf_counter()
    vals = np.array(u0.values)
    spec = u0.spectrum
    for k in range(cfg.steps + 1):
        rec(k, vals, nl.neg_div_drift(spec))
        if k == cfg.steps:
            break
        n0 = nl(spec)
        star = apply_spectrum(spec - h * n0, g, h, a)
        n1 = nl(_fft_norm(star, g))
        new = apply_spectrum(spec - 0.5 * h * n0, g, h, a) - 0.5 * h * np.real(
            _fft.ifftn(n1 * g.size))
        old_max = np.abs(vals).max()
        if not np.all(np.isfinite(new)) or np.abs(new).max() > 10 * old_max:
            run.status = "blowup"
            run.diagnostics.append(f"sup norm grew more than 10x in step {k + 1} "
                                   f"(t={(k + 1) * h:.6g})")
            break
        vals = new
        spec = _fft_norm(vals, g)
    run.metadata.update(config_hash=cfg.hash(), wall_time=time.perf_counter() - start)
    return run


def picard_solve(u0, cfg):
    """Global Picard iteration of ``U(u)(t) = P_t u0 - int_0^t P_{t-s} N(u_s) ds``.

    The Duhamel integral uses the trapezoid recursion
    ``D_k = P_h(D_{k-1} + h/2 N_{k-1}) + h/2 N_k``; the iteration starts from
    the free flow. ``run.picard_residuals`` holds
    ``max_k ||u^{n+1}_k - u^n_k||_2 / ||u0||_2``.
    """
    if cfg.scheme != "global_picard":
        raise ValueError("picard_solve needs scheme='global_picard'")
    g, h, a = cfg.grid, cfg.h, cfg.alpha
    need = 3 * (cfg.steps + 1) * g.size * 8 / 2 ** 20
    if need > cfg.memory_budget_mb:
        raise MemoryError(f"Picard lattice needs ~{need:.0f} MiB, budget "
                          f"{cfg.memory_budget_mb:.0f} MiB; use exp_march")
    nl = _Nonlinear(cfg.kernel, g, cfg.dealias)
    run = SolverRun(cfg)
    start = time.perf_counter()
    norm0 = _l2(u0.values, g)
    free = [np.array(u0.values)]
    for _ in range(cfg.steps):
        free.append(apply_spectrum(_fft_norm(free[-1], g), g, h, a))
    cur = [f.copy() for f in free]
    growth = 0
    converged = False
    for it in range(cfg.picard_max_iters):
        new = [free[0].copy()]
        d_prev = np.zeros(g.shape)
        n_prev = nl(_fft_norm(cur[0], g))
        for k in range(1, cfg.steps + 1):
            n_k = nl(_fft_norm(cur[k], g))
            d_k = apply_spectrum(_fft_norm(d_prev, g) + 0.5 * h * n_prev, g, h, a) \
                + 0.5 * h * np.real(_fft.ifftn(n_k * g.size))
            new.append(free[k] - d_k)
            d_prev, n_prev = d_k, n_k
        res = max(_l2(x - y, g) for x, y in zip(new, cur)) / norm0
        run.picard_residuals.append(res)
        cur = new
        if not np.isfinite(res) or res > 1e8:
            run.status = "diverged"
            run.diagnostics.append(f"Picard residual non-finite or huge at iteration {it + 1}")
            break
        if res <= cfg.picard_tol:
            converged = True
            break
        r = run.picard_residuals
        growth = growth + 1 if len(r) > 1 and r[-1] > r[-2] else 0
        if growth >= 3:
            run.status = "diverged"
            run.diagnostics.append(f"Picard residual grew 3 iterations in a row (iteration {it + 1})")
            break
    if not converged and run.status == "ok":
        run.status = "max_iters"
        run.diagnostics.append(f"no convergence to {cfg.picard_tol:g} in "
                               f"{cfg.picard_max_iters} iterations")
    ratios = run.contraction_ratios
    if any(c >= 1.0 for c in ratios):
        run.diagnostics.append("non-contracting: some ratio r_(n+1)/r_n >= 1 "
                               f"(max {max(ratios):.3g})")
    if np.all([np.all(np.isfinite(c)) for c in cur]):
        rec = _Recorder(run, cfg, u0)
        for k, vals in enumerate(cur):
            rec(k, vals, nl.neg_div_drift(_fft_norm(vals, g)))
    run.metadata.update(config_hash=cfg.hash(), wall_time=time.perf_counter() - start,
                        picard_iterations=len(run.picard_residuals))
    return run


def solve(u0, cfg):
    if u0.grid != cfg.grid:
        raise ValueError("initial datum lives on a different grid")
    return picard_solve(u0, cfg) if cfg.scheme == "global_picard" else march_solve(u0, cfg)
