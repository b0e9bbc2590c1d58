"""Configuration-driven experiment runner.

``kinfp run --config exp.cfg --out dir`` executes one experiment and writes
``summary.json``, CSV tables and binary snapshots into ``dir``.
``kinfp sweep`` repeats an experiment over values of one config field and
aggregates a summary scalar into ``sweep.csv``.

Config files are JSON objects. Exit codes: 0 pass, 1 acceptance failure,
2 config error, 3 runtime blow-up.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import _fft, mckv
from .fpe import check_invariants, decay_rate, mild_residual, smallness_margin, solve, weak_residual
from .fpe.config import EDGE_MASS_TOL, SolverConfig
from .fpe.presets import PRESETS, get_preset, initial_datum, preset_record
from .grid import PhaseGrid
from .io import write_csv, write_field, write_json, write_particles
from .kernels import KernelSpec, cutoff_error, cutoff_rate
from .semigroup import smoothing_slope

log = logging.getLogger("kinfp")

EXIT_OK, EXIT_ACCEPT, EXIT_CONFIG, EXIT_BLOWUP = 0, 1, 2, 3
EXPERIMENTS = ("solve", "cutoff_rate", "chaos", "smoothing_slope")
TOP_FIELDS = {"name", "experiment", "preset", "solver", "initial", "scale", "checks",
              "particles", "seed", "output", "kernel", "grid", "p", "r", "eps",
              "alpha", "gamma", "p_prime", "t", "expected_slope", "slope_tol"}


class ConfigError(Exception):
    """Malformed experiment configuration (exit code 2)."""


class BlowUp(Exception):
    """The numerical run produced non-finite or exploding values (exit code 3)."""


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    validate(cfg, str(path))
    return cfg


def validate(cfg, where="<config>"):
    if not isinstance(cfg, dict):
        raise ConfigError(f"{where}: top level must be a JSON object")
    extra = set(cfg) - TOP_FIELDS
    if extra:
        raise ConfigError(f"{where}: unknown field(s) {sorted(extra)}")
    if not str(cfg.get("name", "")).strip():
        raise ConfigError(f"{where}: field 'name' must be a nonempty string")
    exp = cfg.get("experiment", "solve")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"{where}: field 'experiment' must be one of {EXPERIMENTS}")
    if exp in ("solve", "chaos"):
        if "preset" in cfg and cfg["preset"] not in PRESETS:
            raise ConfigError(f"{where}: field 'preset': unknown preset {cfg['preset']!r}")
        if "preset" not in cfg and "solver" not in cfg:
            raise ConfigError(f"{where}: give 'preset' or 'solver'")
    if exp == "chaos" and "particles" not in cfg:
        raise ConfigError(f"{where}: chaos experiments need a 'particles' block")


def _field(name, fn, *args):
    """Run a constructor and tag any validation error with the config field."""
    try:
        return fn(*args)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"field {name!r}: {exc}") from None


def _set_path(cfg, dotted, value):
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"sweep parameter {dotted!r} crosses a non-object field")
    node[keys[-1]] = value


def _check(checks, name, value, tol, ok=None):
    ok = (value <= tol) if ok is None else ok
    checks[name] = {"value": value, "tol": tol, "pass": bool(ok)}


def build_solver(cfg):
    """(SolverConfig, u0, preset-or-None) from a solve/chaos config."""
    preset = None
    if "preset" in cfg:
        rec = preset_record(cfg["preset"])
        preset = get_preset(cfg["preset"])
        solver = rec["config"]
        initial = rec["initial"]
    else:
        solver, initial = {}, {"kind": "gaussian"}
    solver = {**solver, **cfg.get("solver", {})}
    initial = {**initial, **cfg.get("initial", {})}
    scfg = _field("solver", SolverConfig.from_dict, solver)
    if "scale" in cfg:
        initial["mass"] = initial.get("mass", 1.0) * float(cfg["scale"])
    u0 = _field("initial", initial_datum, scfg.grid, initial)
    return scfg, u0, preset


def run_solve(cfg, out):
    scfg, u0, preset = build_solver(cfg)
    want = cfg.get("checks", {})
    try:
        run = solve(u0, scfg)
    except MemoryError as exc:
        raise ConfigError(str(exc)) from None
    except FloatingPointError as exc:
        raise BlowUp(str(exc)) from None
    summary = {"status": run.status, "diagnostics": list(run.diagnostics),
               "config_hash": scfg.hash(), "steps": scfg.steps, "T": scfg.T,
               "wall_time": run.metadata.get("wall_time")}
    checks = {}
    if run.monitors:
        run.write_monitors(out / "monitors.csv")
    snapdir = out / "snapshots"
    snapdir.mkdir(exist_ok=True)
    for k, (t, u) in enumerate(zip(run.snapshot_times, run.snapshots)):
        write_field(snapdir / f"u_{k:04d}.knfp", u)
    write_json(snapdir / "index.json", {"config_hash": scfg.hash(),
                                        "times": list(run.snapshot_times)})
    if run.picard_residuals:
        write_csv(out / "picard.csv", ["iteration", "residual"],
                  enumerate(run.picard_residuals, 1))
        summary["picard_residuals"] = run.picard_residuals
        summary["contraction_ratios"] = run.contraction_ratios
        summary["contracting"] = run.contracting
    if run.status == "blowup":
        summary["failure_channel"] = "linf"
        return summary, checks, EXIT_BLOWUP
    finite = all(np.all(np.isfinite(u.values)) for u in run.snapshots)
    if not finite:
        summary["failure_channel"] = "picard_residual"
        return summary, checks, EXIT_BLOWUP
    inv = check_invariants(run, **want.get("invariant_tols", {}))
    summary["invariants"] = inv
    summary["mass_drift"] = inv["mass_drift"]["value"]
    if want.get("invariants", True):
        for k, v in inv.items():
            checks[k] = {"value": v["value"], "pass": v["pass"]}
    edge = float(np.max(run.monitors["edge_mass"]))
    summary["edge_mass"] = edge
    if edge > EDGE_MASS_TOL:
        summary["diagnostics"].append(f"edge mass {edge:.2e} exceeds {EDGE_MASS_TOL:g}; "
                                      "the box may be too small")
    if "edge_mass" in want:
        tol = want["edge_mass"]
        _check(checks, "edge_mass", edge, EDGE_MASS_TOL if tol is True else float(tol))
    if run.status in ("ok", "max_iters") and len(run.snapshots) > 1:
        mr = mild_residual(run)
        summary["mild_residual"] = mr
        if "mild_residual" in want:
            _check(checks, "mild_residual", mr, float(want["mild_residual"]))
        if "weak_residual" in want:
            _check(checks, "weak_residual", weak_residual(run), float(want["weak_residual"]))
    if "contracting" in want:
        _check(checks, "contracting", bool(run.contracting), bool(want["contracting"]),
               ok=bool(run.contracting) == bool(want["contracting"]))
    if preset is not None and preset.smallness is not None:
        summary["smallness_margin"] = smallness_margin(u0, scfg, preset.smallness)
    if "decay" in want:
        d = want["decay"]
        fit = decay_rate(run, d.get("channel", "linf"), tuple(d["window"]))
        summary["decay_slope"] = fit.slope
        if "expected" in d:
            err = abs(fit.slope - float(d["expected"]))
            _check(checks, "decay_slope", err, float(d.get("tol", 0.15)))
    return summary, checks, EXIT_OK


def run_cutoff_rate(cfg, out):
    spec = _field("kernel", KernelSpec.from_dict, cfg.get("kernel", {}))
    g = dict(cfg.get("grid", {}))
    g.setdefault("kinetic", False)
    grid = _field("grid", lambda r: PhaseGrid(**r), g)
    eps = cfg.get("eps")
    p, r = float(cfg.get("p", math.inf)), float(cfg.get("r", 1.0))
    if isinstance(eps, (int, float)):
        norm = _field("eps", cutoff_error, spec, p, r, float(eps), grid)
        return {"eps": float(eps), "norm": norm, "p": p, "r": r}, {}, EXIT_OK
    if not eps:
        raise ConfigError("field 'eps': need a number or a nonempty list")
    fit = _field("eps", cutoff_rate, spec, p, r, eps, grid)
    fit.to_csv(out / "cutoff_rate.csv")
    gamma = spec.gamma if spec.family == "riesz_grad" else 1.0
    expected = grid.d / r - grid.d + gamma
    summary = {"slope": fit.slope, "expected_slope": expected, "p": p, "r": r,
               "eps": list(map(float, eps)), "d": grid.d, "gamma": gamma}
    checks = {}
    if "slope_tol" in cfg:
        _check(checks, "slope", abs(fit.slope - expected), float(cfg["slope_tol"]))
    return summary, checks, EXIT_OK


def run_smoothing_slope(cfg, out):
    g = dict(cfg.get("grid", {}))
    g.setdefault("kinetic", True)
    grid = _field("grid", lambda r: PhaseGrid(**r), g)
    alpha, gamma = float(cfg.get("alpha", 2.0)), float(cfg.get("gamma", 1.0))
    p = tuple(float(x) for x in cfg.get("p", (1.0, 1.0)))
    pp = tuple(float(x) for x in cfg.get("p_prime", (2.0, 2.0)))
    ts = cfg.get("t", [0.02, 0.04, 0.08, 0.16])
    fit = _field("t", smoothing_slope, alpha, gamma, p, pp, ts, grid)
    fit.to_csv(out / "smoothing.csv")
    a = (1 + alpha, 1.0)
    A = sum(a[i] * grid.d * (1 / p[i] - 1 / pp[i]) for i in range(2))
    expected = -(gamma + A) / alpha
    summary = {"slope": fit.slope, "expected_slope": expected}
    checks = {}
    if "slope_tol" in cfg:
        _check(checks, "slope", abs(fit.slope - expected), float(cfg["slope_tol"]))
    return summary, checks, EXIT_OK


def _with_cutoff(spec, eps):
    """The particle kernel with its position part cut off at ``eps``."""
    if eps is None:
        return spec
    if spec.family == "dirac_x":
        return replace(spec, inner=replace(spec.inner, cutoff_eps=float(eps)))
    return replace(spec, cutoff_eps=float(eps))


def run_chaos(cfg, out, seed):
    scfg, u0, _ = build_solver(cfg)
    part = cfg["particles"]
    ns = [int(n) for n in part.get("N", [])]
    if not ns:
        raise ConfigError("field 'particles.N': need a nonempty list")
    eps_list = part.get("eps", [None])
    if not isinstance(eps_list, list) or not eps_list:
        raise ConfigError("field 'particles.eps': need a nonempty list")
    n_seeds = int(part.get("seeds", 5))
    method = part.get("method", "binned")
    run = solve(u0, scfg)
    if run.status == "blowup":
        return {"status": run.status, "failure_channel": "linf"}, {}, EXIT_BLOWUP
    target = run.final
    mass = float(u0.values.sum() * scfg.grid.cell_volume)
    rows, medians = [], {}
    for eps in eps_list:
        spec = _field("particles.eps", _with_cutoff, scfg.kernel, eps)
        key = "none" if eps is None else f"{float(eps):g}"
        medians[key] = []
        for n in ns:
            dists = []
            for s in range(n_seeds):
                ens = mckv.ensemble_from_field(u0, n, seed=seed + s)
                ens = _field("particles", mckv.simulate, ens, spec, scfg.alpha,
                             scfg.h, scfg.steps, method, mass)
                cd = mckv.chaos_distance(ens, target)
                dists.append(cd.l1)
                rows.append((n, "" if eps is None else eps, seed + s, cd.l1,
                             cd.w1 if cd.w1 is not None else ""))
                if n == ns[-1] and s == 0 and eps == eps_list[0]:
                    write_particles(out / f"particles_N{n}.knpt", ens)
            medians[key].append(float(np.median(dists)))
    write_csv(out / "chaos.csv", ["N", "eps", "seed", "l1", "w1"], rows)
    trend = all(all(b < a for a, b in zip(m, m[1:])) for m in medians.values())
    summary = {"N": ns, "median_l1": medians[next(iter(medians))], "decreasing": trend,
               "config_hash": scfg.hash()}
    if eps_list != [None]:
        summary["median_l1_by_eps"] = medians
    checks = {}
    if cfg.get("checks", {}).get("decreasing", False):
        _check(checks, "decreasing", trend, True, ok=trend)
    return summary, checks, EXIT_OK


def run_experiment(cfg, out, seed=None, accept=False):
    """Execute one validated config; returns ``(summary, exit_code)``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    seed = int(cfg.get("seed", 0) if seed is None else seed)
    exp = cfg.get("experiment", "solve")
    start = time.perf_counter()
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            if exp == "solve":
                summary, checks, code = run_solve(cfg, out)
            elif exp == "cutoff_rate":
                summary, checks, code = run_cutoff_rate(cfg, out)
            elif exp == "smoothing_slope":
                summary, checks, code = run_smoothing_slope(cfg, out)
            else:
                summary, checks, code = run_chaos(cfg, out, seed)
    except BlowUp as exc:
        summary, checks, code = {"status": "blowup", "failure_channel": str(exc)}, {}, EXIT_BLOWUP
    summary.update(name=cfg["name"], experiment=exp, seed=seed, accept=accept,
                   config=cfg, elapsed=time.perf_counter() - start)
    summary["checks"] = checks
    summary["passed"] = all(c["pass"] for c in checks.values())
    if code == EXIT_OK and accept and not summary["passed"]:
        code = EXIT_ACCEPT
    summary["exit_code"] = code
    write_json(out / "summary.json", summary)
    return summary, code


def _parse_values(text):
    vals = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            vals.append(json.loads(tok))
        except json.JSONDecodeError:
            vals.append(tok)
    return vals


def _lookup(summary, dotted):
    node = summary
    for k in dotted.split("."):
        if isinstance(node, list) and k.lstrip("-").isdigit() and -len(node) <= int(k) < len(node):
            node = node[int(k)]
        elif isinstance(node, dict) and k in node:
            node = node[k]
        else:
            return None
    return node


def sweep(cfg, parameter, values, metric, out, seed=None, accept=False):
    """Run ``cfg`` once per value of ``parameter``; write ``sweep.csv``."""
    if not values:
        raise ConfigError("sweep needs at least one value")
    out = Path(out)
    rows, worst = [], EXIT_OK
    for i, val in enumerate(values):
        c = copy.deepcopy(cfg)
        _set_path(c, parameter, val)
        c["name"] = f"{cfg['name']}[{parameter}={val}]"
        validate(c)
        summary, code = run_experiment(c, out / f"point_{i:03d}", seed, accept)
        worst = max(worst, code)
        rows.append((json.dumps(val), _lookup(summary, metric), code))
    metrics = [r[1] for r in rows]
    write_csv(out / "sweep.csv", [parameter, metric, "exit_code"], rows)
    nums = [m for m in metrics if isinstance(m, (int, float)) and not isinstance(m, bool)]
    agg = {"parameter": parameter, "values": values, "metric": metric, "results": metrics}
    xs = [v for v, m in zip(values, metrics) if isinstance(v, (int, float)) and m in nums]
    if len(nums) == len(values) and len(values) >= 3 and all(m > 0 for m in nums) \
            and all(x > 0 for x in xs) and len(xs) == len(values):
        agg["loglog_slope"] = float(np.polyfit(np.log(xs), np.log(nums), 1)[0])
    if len(nums) == len(values) and len(values) >= 2:
        agg["decreasing"] = all(b < a for a, b in zip(nums, nums[1:]))
    write_json(out / "sweep.json", agg)
    return agg, worst


def build_parser():
    ap = argparse.ArgumentParser(prog="kinfp", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--out", help="output directory (default: config 'output' or ./runs/<name>)")
        p.add_argument("--threads", type=int, default=1, help="FFT worker threads")
        p.add_argument("--accept", action="store_true", help="fail (exit 1) on any failed check")
        p.add_argument("--seed", type=int, help="base RNG seed (overrides the config)")

    common(sub.add_parser("run", help="run one experiment"))
    sp = sub.add_parser("sweep", help="repeat an experiment over one parameter")
    common(sp)
    sp.add_argument("--param", required=True, help="dotted config field, e.g. particles.N")
    sp.add_argument("--values", required=True, help="comma-separated JSON values")
    sp.add_argument("--metric", required=True,
                    help="dotted summary field to aggregate (integers index lists)")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    if args.seed is not None and args.seed < 0:
        print("config error: --seed must be nonnegative", file=sys.stderr)
        return EXIT_CONFIG
    _fft.set_threads(max(1, args.threads))
    try:
        cfg = load_config(args.config)
        out = Path(args.out or cfg.get("output") or os.path.join("runs", cfg["name"]))
        if args.command == "run":
            summary, code = run_experiment(cfg, out, args.seed, args.accept)
            log.info("%s: exit %d, checks %s", cfg["name"], code,
                     {k: v["pass"] for k, v in summary["checks"].items()})
        else:
            agg, code = sweep(cfg, args.param, _parse_values(args.values), args.metric,
                              out, args.seed, args.accept)
            log.info("sweep %s: %s", args.param, agg["results"])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return code


if __name__ == "__main__":
    sys.exit(main())
