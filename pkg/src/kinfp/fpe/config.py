"""Solver configuration, run containers and monitor channels."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..besov import besov_norm
from ..grid import PhaseGrid, total_mass, upsampled_max
from ..io import write_csv
from ..kernels import KernelSpec

MODES = ("kinetic", "nondegenerate")
SCHEMES = ("global_picard", "exp_march")
DEALIAS = ("two_thirds", "none")


@dataclass(frozen=True)
class MonitorSpec:
    """Weighted Besov channel ``(1 ^ t)^{g0/alpha} (1 v t)^{g1/alpha} ||u||_{B^{s,q}_p}``."""

    name: str
    s: float
    q: float = math.inf
    p: tuple = (2.0, 2.0)
    gamma0: float = 0.0
    gamma1: float = 0.0

    @classmethod
    def from_dict(cls, rec):
        rec = dict(rec)
        p = rec.get("p", (2.0, 2.0))
        rec["p"] = tuple(float(x) for x in (p if np.ndim(p) else (p, p)))
        if "q" in rec:
            rec["q"] = float(rec["q"])
        return cls(**rec)

    def to_dict(self):
        return {"name": self.name, "s": self.s, "q": self.q, "p": list(self.p),
                "gamma0": self.gamma0, "gamma1": self.gamma1}


@dataclass(frozen=True)
class SolverConfig:
    mode: str
    alpha: float
    kernel: KernelSpec
    grid: PhaseGrid
    T: float
    steps: int
    scheme: str = "exp_march"
    picard_max_iters: int = 30
    picard_tol: float = 1e-10
    dealias: str = "two_thirds"
    monitors: tuple = ()
    snapshot_every: int = 1
    memory_budget_mb: float = 2048.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.dealias not in DEALIAS:
            raise ValueError(f"dealias must be one of {DEALIAS}")
        if not (1.0 < self.alpha <= 2.0):
            raise ValueError("alpha must lie in (1, 2]")
        if self.steps < 8:
            raise ValueError("steps must be >= 8")
        if not self.picard_tol > 0:
            raise ValueError("picard_tol must be positive")
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be >= 1")
        if (self.mode == "kinetic") != self.grid.kinetic:
            raise ValueError("kinetic mode needs a kinetic grid and vice versa")

    @property
    def h(self):
        return self.T / self.steps

    @property
    def flux_axes(self):
        g = self.grid
        return g.v_axes if g.kinetic else tuple(range(g.ndim))

    def lattice_compatible_step(self):
        """True when every shear by ``h`` maps the v-lattice onto itself."""
        g = self.grid
        if not g.kinetic:
            return True
        ratio = self.h * g.box_v / g.box_x
        return abs(ratio - round(ratio)) < 1e-12 and round(ratio) > 0

    def to_dict(self):
        g = self.grid
        return {
            "mode": self.mode, "alpha": self.alpha, "kernel": self.kernel.to_dict(),
            "grid": {"d": g.d, "kinetic": g.kinetic, "box_x": g.box_x, "n_x": g.n_x,
                     "box_v": g.box_v, "n_v": g.n_v},
            "T": self.T, "steps": self.steps, "scheme": self.scheme,
            "picard_max_iters": self.picard_max_iters, "picard_tol": self.picard_tol,
            "dealias": self.dealias, "monitors": [m.to_dict() for m in self.monitors],
            "snapshot_every": self.snapshot_every, "memory_budget_mb": self.memory_budget_mb,
        }

    @classmethod
    def from_dict(cls, rec):
        rec = dict(rec)
        known = set(cls.__dataclass_fields__)
        extra = set(rec) - known
        if extra:
            raise ValueError(f"unknown solver field(s): {sorted(extra)}")
        for req in ("mode", "alpha", "kernel", "grid", "T", "steps"):
            if req not in rec:
                raise ValueError(f"solver config missing field {req!r}")
        g = dict(rec["grid"])
        g.setdefault("kinetic", rec["mode"] == "kinetic")
        rec["grid"] = PhaseGrid(**g)
        rec["kernel"] = KernelSpec.from_dict(rec["kernel"])
        rec["monitors"] = tuple(MonitorSpec.from_dict(m) for m in rec.get("monitors", ()))
        return cls(**rec)

    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, default=float).encode()
        return hashlib.sha256(blob).hexdigest()


def time_weight(t, alpha, gamma0, gamma1):
    return min(1.0, t) ** (gamma0 / alpha) * max(1.0, t) ** (gamma1 / alpha)


BASE_CHANNELS = ("mass", "l1", "linf", "min", "l2", "edge_mass", "linf_bound")
EDGE_MASS_TOL = 1e-8


def edge_mask(grid, fraction=1 / 16):
    """Cells in the outer ``fraction`` of every axis that truncates a whole space.

    Those are the velocity axes of a kinetic grid (x is a genuine period) and
    every axis of a position grid.
    """
    axes = grid.v_axes if grid.kinetic else range(grid.ndim)
    mask = np.zeros(grid.shape, dtype=bool)
    for a in axes:
        n = grid.shape[a]
        k = max(1, int(n * fraction))
        sel = np.zeros(n, dtype=bool)
        sel[:k] = sel[-k:] = True
        mask |= sel.reshape(grid._bshape(a, n))
    return mask


def edge_mass(u):
    """Fraction of the L1 mass of ``u`` sitting next to the truncation boundary."""
    a = np.abs(u.values)
    total = a.sum()
    return float(a[edge_mask(u.grid)].sum() / total) if total > 0 else 0.0


def measure(u, t, cfg):
    """Monitor values of one snapshot (``linf_bound`` is filled in by the caller)."""
    g = u.grid
    vals = u.values
    out = {
        "mass": total_mass(u),
        "l1": float(np.abs(vals).sum() * g.cell_volume),
        "linf": float(np.abs(vals).max()),
        "min": float(vals.min()),
        "l2": float(np.sqrt((vals ** 2).sum() * g.cell_volume)),
        "edge_mass": edge_mass(u),
    }
    for m in cfg.monitors:
        w = time_weight(t, cfg.alpha, m.gamma0, m.gamma1)
        out[m.name] = w * besov_norm(u, m.s, m.q, m.p, anisotropic=True, alpha=cfg.alpha)
    return out


@dataclass
class SolverRun:
    config: SolverConfig
    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    snapshot_times: list = field(default_factory=list)
    monitors: dict = field(default_factory=dict)
    status: str = "ok"
    diagnostics: list = field(default_factory=list)
    picard_residuals: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def contraction_ratios(self):
        r = self.picard_residuals
        return [r[i + 1] / r[i] if r[i] > 0 else 0.0 for i in range(len(r) - 1)]

    @property
    def contracting(self):
        """Converged with every observed ratio below one."""
        return self.status == "ok" and all(c < 1.0 for c in self.contraction_ratios)

    @property
    def u0(self):
        return self.snapshots[0]

    @property
    def final(self):
        return self.snapshots[-1]

    def record(self, t, values):
        self.times.append(float(t))
        for k, v in values.items():
            self.monitors.setdefault(k, []).append(float(v))

    def channel(self, name):
        if name not in self.monitors:
            raise KeyError(f"no monitor channel {name!r}")
        return np.asarray(self.times), np.asarray(self.monitors[name])

    def write_monitors(self, path):
        names = [n for n in BASE_CHANNELS if n in self.monitors]
        names += sorted(n for n in self.monitors if n not in BASE_CHANNELS)
        rows = ([t] + [self.monitors[n][i] for n in names] for i, t in enumerate(self.times))
        write_csv(path, ["t"] + names, rows)


class BoundTracker:
    """Running bound ``||u0||_inf exp(int ||(div H)^-||_inf ds)`` (trapezoid in time)."""

    def __init__(self, u0):
        self.base = max(upsampled_max(u0), float(np.abs(u0.values).max()),
                        -float(u0.values.min()))
        self.integral = 0.0
        self.prev = None

    def update(self, neg_div, h):
        if self.prev is not None:
            self.integral += 0.5 * h * (self.prev + neg_div)
        self.prev = neg_div
        return self.base * math.exp(self.integral)


def check_invariants(run, mass_tol=1e-10, l1_tol=1e-6, linf_rtol=1e-6):
    """Pass/fail dictionary for mass, L1 and L-infinity a priori bounds."""
    _, mass = run.channel("mass")
    _, l1 = run.channel("l1")
    _, linf = run.channel("linf")
    _, bound = run.channel("linf_bound")
    m0 = mass[0]
    drift = float(np.max(np.abs(mass - m0)) / max(abs(m0), 1e-300))
    nonneg = run.monitors["min"][0] >= 0
    l1_excess = float(np.max(l1 - l1[0]) / l1[0]) if l1[0] > 0 else 0.0
    linf_excess = float(np.max(linf / bound - 1.0))
    out = {
        "mass_drift": {"value": drift, "pass": drift <= mass_tol},
        "linf_bound_excess": {"value": linf_excess, "pass": linf_excess <= linf_rtol},
    }
    if nonneg:
        out["l1_excess"] = {"value": l1_excess, "pass": l1_excess <= l1_tol}
    return out
