"""Command-line entry point and experiment drivers.

``surfsd solve|convergence|condition|layer --config <path> [--out <dir>]``

Exit status: 0 on success, 2 for configuration errors (including a box
that does not contain the surface and a non-tangential ``beta``), 3 for
numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import compute_errors, eoc, overshoot_report
from .config import INV_TAU1, RunConfig, StabilizationChoice, dump_config, load_config
from .errors import BoxTooSmall, ConfigError, InvalidLevels, NotTangential, SurfsdError
from .geometry import AnalyticField
from .fem import (assemble_system, build_coefficients, build_space, evaluate_rhs_field,
                  make_params)
from .problems import Problem, padded_box
from .solve import estimate_condition_number, solve
from .vtk import write_surface_vtk

log = logging.getLogger("surfsd")

CONVERGENCE_COLUMNS = ["level", "n", "h", "n_dofs", "l2_err", "h1t_err", "sd_err", "triple_err",
                       "eoc_l2", "eoc_triple"]
CONDITION_COLUMNS = ["gamma", "n", "h", "offset_id", "kappa", "sigma_max", "sigma_min"]
LAYER_COLUMNS = ["run", "n", "h", "c_tau", "tau1", "tau2", "gamma", "u_min", "u_max",
                 "undershoot", "overshoot", "total", "peak"]
SOLVE_COLUMNS = ["n", "h", "n_dofs", "eps", "c_tau", "tau1", "tau2", "gamma", "residual",
                 "l2_err", "h1t_err", "sd_err", "triple_err"]

# weak / strong normal-gradient runs and the two reference runs of the layer study
DEFAULT_LAYER_RUNS = {
    "stabilized": StabilizationChoice(0.5, INV_TAU1, 0.0),
    "weak": StabilizationChoice(0.0, 1e-4, 1.0),
    "strong": StabilizationChoice(0.0, 1e3, 1.0),
    "normal-only": StabilizationChoice(0.0, 1.0, 1.0),
}
CONFIG_LIKE = (ConfigError, BoxTooSmall, NotTangential)


@dataclass
class Level:
    """Everything built for one mesh level."""

    space: object
    coeffs: object
    params: object
    system: object


def build_level(problem: Problem, box, n: int, stab: StabilizationChoice, rhs=None,
                constraint=None) -> Level:
    space = build_space(problem.surface, box, n)
    coeffs = build_coefficients(problem.alpha, problem.beta, space)
    params = make_params(coeffs, problem.eps, stab.c_tau, stab.tau2_value, stab.gamma)
    f = problem.rhs_field() if rhs is None else rhs
    f_q = evaluate_rhs_field(space, f)
    system = assemble_system(coeffs, params, f_q, constraint)
    return Level(space, coeffs, params, system)


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer, str)):
        return str(x)
    return repr(float(x))


def write_csv(path: Path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns])


def _write_manifest(out: Path, cfg: RunConfig, command: str, results: dict):
    header = f"# surfsd {__version__} {command}\n"
    results = {"command": command, **results}
    (out / "manifest.txt").write_text(header + dump_config(cfg, results), encoding="utf-8")


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- drivers -----------------------------------------------------------------


def run_solve(cfg: RunConfig) -> dict:
    out = _out_dir(cfg)
    prob = cfg.problem()
    lvl = build_level(prob, cfg.box, cfg.n, cfg.stab)
    rep = solve(lvl.system, cfg.tol, cfg.max_iter, cfg.method)
    p = lvl.params
    row = {"n": cfg.n, "h": lvl.space.h, "n_dofs": lvl.space.n_dofs, "eps": p.eps,
           "c_tau": p.c_tau, "tau1": p.tau1, "tau2": p.tau2, "gamma": p.gamma,
           "residual": rep.final_residual}
    if prob.u_exact is not None:
        err = compute_errors(lvl.space, lvl.coeffs, p, rep.solution, prob.u_exact)
        row.update(l2_err=err.l2_err, h1t_err=err.h1t_err, sd_err=err.sd_err,
                   triple_err=err.triple_err)
    write_csv(out / "solve.csv", SOLVE_COLUMNS, [row])
    write_surface_vtk(out / "solution.vtk", lvl.space, rep.solution, f"surfsd {prob.name} n={cfg.n}")
    results = {k: _fmt(v) for k, v in row.items() if v is not None}
    results.update(beta_inf=_fmt(p.beta_inf), high_peclet=str(p.high_peclet),
                   n_polygons=str(lvl.space.cuts.n_polygons), solver=rep.method,
                   iterations=str(rep.iterations),
                   constraint=str(lvl.system.constraint is not None))
    _write_manifest(out, cfg, "solve", results)
    return row


def run_convergence(cfg: RunConfig) -> list:
    if len(cfg.levels) < 3:
        raise InvalidLevels(f"a convergence study needs at least 3 levels, got {list(cfg.levels)}")
    out = _out_dir(cfg)
    prob = cfg.problem()
    rhs = prob.rhs_field()
    if prob.u_exact is None:
        raise ConfigError("problem.u", "a convergence study needs an exact solution")
    rows = []
    status = "complete"
    try:
        for k, n in enumerate(cfg.levels):
            t0 = time.perf_counter()
            lvl = build_level(prob, cfg.box, n, cfg.stab, rhs)
            rep = solve(lvl.system, cfg.tol, cfg.max_iter, cfg.method)
            err = compute_errors(lvl.space, lvl.coeffs, lvl.params, rep.solution, prob.u_exact)
            rows.append({"level": k, "n": n, "h": err.h, "n_dofs": err.n_dofs, "l2_err": err.l2_err,
                         "h1t_err": err.h1t_err, "sd_err": err.sd_err, "triple_err": err.triple_err})
            if k > 0:
                hs = [rows[k - 1]["h"], err.h]
                rows[k]["eoc_l2"] = eoc([rows[k - 1]["l2_err"], err.l2_err], hs)[0]
                rows[k]["eoc_triple"] = eoc([rows[k - 1]["triple_err"], err.triple_err], hs)[0]
            log.info("level %d n=%d dofs=%d l2=%.4e (%.1fs)", k, n, err.n_dofs, err.l2_err,
                     time.perf_counter() - t0)
    except SurfsdError:
        status = f"partial: failed at level {len(rows)}"
        raise
    finally:
        write_csv(out / "convergence.csv", CONVERGENCE_COLUMNS, rows)
        _write_manifest(out, cfg, "convergence", {"status": status, "levels_done": len(rows)})
    return rows


def random_offsets(count: int, h: float, seed: int) -> np.ndarray:
    """Surface-center shifts uniform in ``[-h/2, h/2]^3``."""
    return np.random.default_rng(seed).uniform(-h / 2, h / 2, size=(count, 3))


def run_condition(cfg: RunConfig) -> list:
    out = _out_dir(cfg)
    prob = cfg.problem()
    zero = AnalyticField.constant(0.0)
    levels = cfg.levels or (cfg.n,)
    rows = []
    results = {"status": "complete"}
    try:
        for gamma in cfg.gammas:
            stab = StabilizationChoice(cfg.stab.c_tau, cfg.stab.tau2, gamma)
            for n in levels:
                rows.append(_condition_row(prob, cfg.box, n, n, stab, cfg, zero, 0))
        if cfg.offsets:
            box, n_pad = padded_box(cfg.box, cfg.offset_n)
            h = _mesh_h(cfg.box, cfg.offset_n)
            shifts = random_offsets(cfg.offsets, h, cfg.seed)
            for k, s in enumerate(shifts, start=1):
                results[f"offset_{k}"] = ", ".join(_fmt(x) for x in s)
            for gamma in cfg.offset_gammas:
                stab = StabilizationChoice(cfg.stab.c_tau, cfg.stab.tau2, gamma)
                for k, s in enumerate(shifts, start=1):
                    rows.append(_condition_row(prob.shifted(s), box, n_pad, cfg.offset_n, stab,
                                               cfg, zero, k))
    except SurfsdError:
        results["status"] = f"partial: {len(rows)} rows"
        raise
    finally:
        write_csv(out / "condition.csv", CONDITION_COLUMNS, rows)
        _write_manifest(out, cfg, "condition", results)
    return rows


def _mesh_h(box, n):
    step = (np.asarray(box[1], float) - np.asarray(box[0], float)) / n
    return float(np.linalg.norm(step))


def _condition_row(prob, box, n_mesh, n_label, stab, cfg, rhs, offset_id):
    lvl = build_level(prob, box, n_mesh, stab, rhs)
    est = estimate_condition_number(lvl.system, cfg.cond_tol, seed=cfg.seed)
    log.info("gamma=%g n=%d offset=%d kappa=%.4g", stab.gamma, n_label, offset_id, est.kappa)
    return {"gamma": stab.gamma, "n": n_label, "h": lvl.space.h, "offset_id": offset_id,
            "kappa": est.kappa, "sigma_max": est.sigma_max, "sigma_min": est.sigma_min}


def run_layer(cfg: RunConfig) -> list:
    out = _out_dir(cfg)
    prob = cfg.problem()
    runs = cfg.layer_runs or DEFAULT_LAYER_RUNS
    rhs = prob.rhs_field()
    rng = prob.value_range
    rows = []
    for name, stab in runs.items():
        lvl = build_level(prob, cfg.box, cfg.layer_n, stab, rhs)
        if rng is None:
            fq = evaluate_rhs_field(lvl.space, rhs)
            rng = (float(fq.min()), float(fq.max()))
        rep = solve(lvl.system, cfg.tol, cfg.max_iter, cfg.method)
        values = lvl.space.vertex_values(rep.solution)
        o = overshoot_report(values, rng)
        p = lvl.params
        rows.append({"run": name, "n": cfg.layer_n, "h": lvl.space.h, "c_tau": p.c_tau,
                     "tau1": p.tau1, "tau2": p.tau2, "gamma": p.gamma, "u_min": o.u_min,
                     "u_max": o.u_max, "undershoot": o.undershoot, "overshoot": o.overshoot,
                     "total": o.total, "peak": float(np.abs(values).max())})
        write_surface_vtk(out / f"layer_{name}.vtk", lvl.space, rep.solution,
                          f"surfsd {prob.name} {name}")
    write_csv(out / "layer.csv", LAYER_COLUMNS, rows)
    _write_manifest(out, cfg, "layer", {"value_range": ", ".join(_fmt(v) for v in rng),
                                        "runs": ", ".join(runs)})
    return rows


COMMANDS = {"solve": run_solve, "convergence": run_convergence, "condition": run_condition,
            "layer": run_layer}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="surfsd", description="Stabilized cut finite elements for "
                                 "convection-diffusion on closed surfaces.")
    ap.add_argument("--version", action="version", version=f"surfsd {__version__}")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="run configuration (INI format)")
    ap.add_argument("--out", help="output directory (overrides output.dir)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.out:
            cfg.out = args.out
        COMMANDS[args.command](cfg)
    except CONFIG_LIKE as exc:
        print(f"surfsd: configuration error: {exc}", file=sys.stderr)
        return 2
    except (SurfsdError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"surfsd: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
