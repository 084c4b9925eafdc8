"""Batch experiment driver: eps sweeps against the reference solver.

Usage::

    hkcross CONFIG.toml [--out DIR] [--threads N] [--dump-fields]
                        [--dump-trajectories] [--quadrature-scale X] [--grid-scale X]
    hkcross --preset crossing

Outputs in ``DIR``: ``results.csv`` (one row per eps and method, then one
slope row per method), ``summary.csv`` (slope rows only, reproducible
bit for bit) and ``manifest.json``.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import platform
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .bargmann import QuadratureGrid
from .classical import integrate_trajectory
from .config import METHODS, ExperimentConfig, load_config, preset_path
from .errors import HkcrossError
from .ivr import IvrRun, bump_weights, time_average
from .model import build_model
from .refsolver import (GridState, error_norms, grid_x, mode_masses, required_points,
                        strang_evolve)
from .singlewp import single_wp_propagate

log = logging.getLogger("hkcross")

COLUMNS = ["eps", "method", "L2_error", "sigma1_error", "sigma2_error", "mode2_mass_ref",
           "mode2_mass_approx", "runtime_s"]


@dataclass(frozen=True)
class RunOptions:
    out: Path
    threads: int = 1
    dump_fields: bool = False
    dump_trajectories: bool = False
    quadrature_scale: float = 1.0
    grid_scale: float = 1.0


def _next_pow2(n: float) -> int:
    return 1 << max(1, int(math.ceil(math.log2(max(n, 2)) - 1e-12)))


def _grid_for(cfg: ExperimentConfig, model, eps: float, opts: RunOptions):
    """Spatial grid: explicit box or one covering the centre trajectories."""
    t_max = max(cfg.t, cfg.t_b or cfg.t)
    se = math.sqrt(eps)
    qs, ps = [], []
    for mode in range(1, model.n_modes + 1):
        tr = integrate_trajectory(model, mode, cfg.t0, cfg.initial.z0, t_max, cfg.step)
        qs.append(tr.z[:, 0])
        ps.append(tr.z[:, 1])
    qs = np.concatenate(qs)
    ps = np.concatenate(ps)
    spread = 8 * se if cfg.initial.kind == "coherent" else 6 * cfg.initial.amplitude_width
    p_spread = 8 * se if cfg.initial.kind == "coherent" else \
        6 * abs(cfg.initial.phase_curvature) * cfg.initial.amplitude_width + 8 * se
    p_max = float(np.max(np.abs(ps)) + p_spread)
    if cfg.x_min is not None:
        x_min, x_max = cfg.x_min, cfg.x_max
    else:
        pad = spread + 1.0
        x_min, x_max = float(qs.min() - pad), float(qs.max() + pad)
    n = cfg.n if cfg.n is not None else required_points(eps, x_max - x_min, p_max)
    n = _next_pow2(n * opts.grid_scale)
    return x_min, x_max, n, p_max


def _cell(cfg: ExperimentConfig, eps: float, opts: RunOptions):
    """All methods for one eps; returns (rows, info)."""
    model = build_model(cfg.model)
    x_min, x_max, n, p_max = _grid_for(cfg, model, eps, opts)
    x = grid_x(x_min, x_max, n)
    psi0 = cfg.initial.vector_field(model, x, eps, cfg.t0)
    dt = cfg.dt_factor * eps / opts.grid_scale
    info = {"eps": eps, "grid": {"x_min": x_min, "x_max": x_max, "n": n, "dt": dt,
                                 "p_max": p_max}, "warnings": []}
    tic = time.perf_counter()
    monitor: dict = {}
    st0 = GridState(x_min, x_max, psi0, eps, cfg.t0)
    ref = strang_evolve(model, st0, cfg.t, dt=dt, monitor=monitor)
    info["reference"] = dict(monitor, runtime_s=time.perf_counter() - tic)
    m2_ref = float(mode_masses(model, ref)[1]) if model.n_modes == 2 else 0.0
    tag = f"eps{eps:.6g}"
    if opts.dump_fields:
        ref.to_csv(opts.out / f"field_{tag}_reference.csv")
    if opts.dump_trajectories:
        for mode in range(1, model.n_modes + 1):
            tr = integrate_trajectory(model, mode, cfg.t0, cfg.initial.z0, cfg.t, cfg.step)
            tr.to_csv(opts.out / f"trajectory_{tag}_mode{mode}.csv")

    run = None
    ivr_methods = [m for m in cfg.methods if m != "singlewp"]
    window = None
    if "frozen+hop-averaged" in cfg.methods:
        window = cfg.window(eps)
    if ivr_methods:
        quad = QuadratureGrid.around(cfg.initial.z0, eps, cfg.spacing / opts.quadrature_scale,
                                     cfg.margin, _extent(cfg))
        run = IvrRun(model, eps, x, psi0, None, quad, cfg.t0, cfg.step)
        times = sorted({cfg.t} | (set(window.tolist()) if window is not None else set()))
        for mode in range(1, model.n_modes + 1):
            if np.any(run.active(mode)):
                run.evolve(mode, times)

    rows = []
    for method in cfg.methods:
        tic = time.perf_counter()
        if method == "singlewp":
            z0 = np.asarray(cfg.initial.z0)
            V0 = np.asarray(cfg.initial.polarization, dtype=complex)
            if cfg.initial.mode is not None and model.n_modes == 2:
                V0 = model.projector(cfg.t0, z0, cfg.initial.mode) @ V0
            res = single_wp_propagate(model, eps, z0, V0, t0=cfg.t0, t_end=cfg.t, step=cfg.step)
            fld = res.evaluate(x, meta=info)
            info["singlewp"] = {"t_flat": res.t_flat, "labels": res.labels,
                                "in_collar": res.diagnostics.get("in_collar", False)}
            info["warnings"] += res.diagnostics["warnings"]
            target = ref
        elif method == "frozen+hop-averaged":
            fields = [run.total_field(ti, "frozen", True) for ti in window]
            chi = bump_weights(window, cfg.t_a, cfg.t_b)
            fld = time_average(fields, window, chi)
            refs, st = [], st0
            for ti in window:
                st = strang_evolve(model, st, ti, dt=dt)
                refs.append(st.psi)
            target = GridState(x_min, x_max, time_average(refs, window, chi), eps, cfg.t)
        else:
            flavor, _, hop = method.partition("+")
            fld = run.total_field(cfg.t, flavor, bool(hop)).field
            target = ref
        approx = GridState(x_min, x_max, fld, eps, cfg.t)
        l2, s1 = error_norms(approx, target, 1)
        _, s2 = error_norms(approx, target, 2)
        m2 = float(mode_masses(model, approx)[1]) if model.n_modes == 2 else 0.0
        m2r = m2_ref if target is ref else (float(mode_masses(model, target)[1])
                                            if model.n_modes == 2 else 0.0)
        rows.append({"eps": eps, "method": method, "L2_error": l2, "sigma1_error": s1,
                     "sigma2_error": s2, "mode2_mass_ref": m2r, "mode2_mass_approx": m2,
                     "runtime_s": time.perf_counter() - tic})
        if opts.dump_fields:
            approx.to_csv(opts.out / f"field_{tag}_{method.replace('+', '_')}.csv")
    if run is not None:
        info["ivr"] = {k: v for k, v in run.meta.items() if k != "warnings"}
        info["warnings"] += run.meta["warnings"]
        info["ivr"]["timings"] = run.timings
    return rows, info


def _extent(cfg: ExperimentConfig):
    if cfg.initial.kind == "coherent":
        return (0.0, 0.0)
    w = cfg.initial.amplitude_width
    return (5 * w, 5 * w * abs(cfg.initial.phase_curvature))


def _cell_safe(args):
    cfg, eps, opts = args
    try:
        return "ok", _cell(cfg, eps, opts)
    except HkcrossError as exc:
        return "error", {"eps": eps, "type": type(exc).__name__, "message": str(exc),
                         "exit_code": exc.exit_code, "context": _jsonable(exc.context)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, Path):
        return str(obj)
    return obj


def fit_slopes(rows, methods):
    out = []
    for method in methods:
        sel = [r for r in rows if r["method"] == method]
        row = {"eps": "slope", "method": method}
        for key in ("L2_error", "sigma1_error", "sigma2_error", "mode2_mass_ref",
                    "mode2_mass_approx"):
            e = np.array([r["eps"] for r in sel])
            v = np.array([r[key] for r in sel])
            ok = v > 0
            row[key] = float(np.polyfit(np.log(e[ok]), np.log(v[ok]), 1)[0]) \
                if np.sum(ok) >= 2 and np.unique(e[ok]).size >= 2 else float("nan")
        row["runtime_s"] = ""
        out.append(row)
    return out


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in COLUMNS])


def _sorted_rows(rows):
    order = {m: i for i, m in enumerate(METHODS)}
    return sorted(rows, key=lambda r: (-r["eps"], order[r["method"]]))


def run_experiment(config, opts: RunOptions) -> int:
    """Run every (eps, method) cell of ``config`` and write the artefacts.

    Returns the exit status (0 ok, 2 config, 3 numerical, 4 assumption).
    """
    opts.out.mkdir(parents=True, exist_ok=True)
    manifest = {"schema_version": 1, "package_version": __version__,
                "python": platform.python_version(), "numpy": np.__version__,
                "options": _jsonable({k: getattr(opts, k) for k in opts.__dataclass_fields__})}
    try:
        cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
    except HkcrossError as exc:
        manifest.update(status="error", error={"type": type(exc).__name__, "message": str(exc),
                                               "exit_code": exc.exit_code})
        _write_manifest(opts.out, manifest)
        log.error("%s", exc)
        return exc.exit_code
    manifest["config"] = _jsonable(cfg.raw)
    eps_list = sorted(set(cfg.eps), reverse=True)
    jobs = [(cfg, e, opts) for e in eps_list]
    if opts.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(opts.threads, len(jobs))) as pool:
            results = list(pool.map(_cell_safe, jobs))
    else:
        results = [_cell_safe(j) for j in jobs]
    rows, cells, errors = [], [], []
    for status, payload in results:
        if status == "ok":
            rows += payload[0]
            cells.append(payload[1])
        else:
            errors.append(payload)
    rows = _sorted_rows(rows)
    slopes = fit_slopes(rows, [m for m in METHODS if m in cfg.methods]) if rows else []
    _write_csv(opts.out / "results.csv", rows + slopes)
    _write_csv(opts.out / "summary.csv", [dict(s, runtime_s="") for s in slopes])
    n_warn = sum(len(c["warnings"]) for c in cells)
    manifest.update(cells=_jsonable(cells), slopes=_jsonable(slopes), warning_count=n_warn)
    if errors:
        manifest.update(status="error", errors=errors)
        _write_manifest(opts.out, manifest)
        code = max(e["exit_code"] for e in errors)
        for e in errors:
            log.error("eps=%g: %s: %s %s", e["eps"], e["type"], e["message"], e["context"])
        return code
    manifest["status"] = "ok"
    _write_manifest(opts.out, manifest)
    return 0


def sweep_epsilon(config, eps_list, opts: RunOptions) -> int:
    """``run_experiment`` with the eps list replaced."""
    cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
    return run_experiment(cfg.with_eps(eps_list), opts)


def _write_manifest(out: Path, manifest: dict):
    with open(out / "manifest.json", "w") as fh:
        json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True, default=str)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hkcross", description="Gaussian IVR crossing experiments")
    p.add_argument("config", nargs="?", help="experiment TOML file")
    p.add_argument("--preset", help="use a bundled config (harmonic, crossing, crossing-frozen)")
    p.add_argument("--out", default=None, help="output directory (default: from config)")
    p.add_argument("--eps", type=float, nargs="+", help="override the eps list")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--dump-fields", action="store_true")
    p.add_argument("--dump-trajectories", action="store_true")
    p.add_argument("--quadrature-scale", type=float, default=1.0,
                   help="divide the quadrature spacing by X")
    p.add_argument("--grid-scale", type=float, default=1.0,
                   help="multiply the grid size by X (and divide the reference step by X)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if (args.config is None) == (args.preset is None):
            raise_config = "give exactly one of CONFIG or --preset"
            print(f"error: {raise_config}", file=sys.stderr)
            return 2
        path = preset_path(args.preset) if args.preset else args.config
        if args.threads < 1 or args.quadrature_scale <= 0 or args.grid_scale <= 0:
            print("error: --threads, --quadrature-scale and --grid-scale must be positive",
                  file=sys.stderr)
            return 2
        cfg = load_config(path)
        if args.eps:
            cfg = cfg.with_eps(args.eps)
    except HkcrossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        out = Path(args.out or "out")
        out.mkdir(parents=True, exist_ok=True)
        _write_manifest(out, {"status": "error", "error": {"type": type(exc).__name__,
                                                           "message": str(exc),
                                                           "exit_code": exc.exit_code}})
        return exc.exit_code
    opts = RunOptions(Path(args.out or cfg.out_dir), args.threads, args.dump_fields,
                      args.dump_trajectories, args.quadrature_scale, args.grid_scale)
    try:
        code = run_experiment(cfg, opts)
    except Exception:   # unexpected bug: still leave a manifest behind
        traceback.print_exc()
        _write_manifest(opts.out, {"status": "error", "error": traceback.format_exc()})
        return 3
    if code == 0:
        with open(opts.out / "summary.csv") as fh:
            sys.stdout.write(fh.read())
    return code


if __name__ == "__main__":
    sys.exit(main())
