"""Run configuration: INI-style files read with :mod:`configparser`.

A configuration is a set of ``[section]`` blocks holding ``key = value``
lines; ``#`` and ``;`` start comments.  Lists are comma separated.  Sections
and keys (all optional unless noted)::

    [problem]       name (built-in problem) or u / f / alpha / beta expressions, eps
    [surface]       kind (sphere|spheroid|plane), center, radii, normal
    [mesh]          lo, hi, n, levels
    [stabilization] c_tau, tau2 (number or inv-tau1), gamma
    [solver]        tol, max_iter, method (auto|dense|splu|gmres)
    [condition]     gammas, tol, offsets, offset_n, offset_gammas, seed
    [layer]         n, runs; each run in its own [layer.<run>] with c_tau, tau2, gamma
    [output]        dir

A built-in problem fixes surface, coefficients and box; only ``eps`` may be
overridden next to ``name``.  Without ``name`` the ``[surface]`` section is
required together with ``beta`` and either ``u`` (manufactured right-hand
side) or ``f``.  Expressions use the grammar in :mod:`surfsd.expr`.

The manifest written by every run uses the same format with all defaults
resolved, plus a ``[results]`` section that the loader ignores, so a
manifest can be fed back in as a configuration.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import expr
from .errors import ConfigError, InvalidLevels
from .geometry import AnalyticField, make_surface
from .problems import BUILTIN, Problem, builtin

SCHEMA = {
    "problem": {"name", "u", "f", "alpha", "beta", "eps"},
    "surface": {"kind", "center", "radii", "normal"},
    "mesh": {"lo", "hi", "n", "levels"},
    "stabilization": {"c_tau", "tau2", "gamma"},
    "solver": {"tol", "max_iter", "method"},
    "condition": {"gammas", "tol", "offsets", "offset_n", "offset_gammas", "seed"},
    "layer": {"n", "runs"},
    "output": {"dir"},
}
LAYER_RUN_KEYS = {"c_tau", "tau2", "gamma"}
IGNORED = {"results"}
METHODS = ("auto", "dense", "splu", "gmres")
INV_TAU1 = "inv-tau1"


@dataclass(frozen=True)
class StabilizationChoice:
    c_tau: float = 0.5
    tau2: float | str = INV_TAU1
    gamma: float = 1.0

    @property
    def tau2_value(self):
        return None if self.tau2 == INV_TAU1 else float(self.tau2)


@dataclass
class RunConfig:
    problem_name: str | None = None
    expressions: dict = field(default_factory=dict)
    surface: dict = field(default_factory=dict)
    eps: float | None = None
    lo: tuple = (0.0, 0.0, 0.0)
    hi: tuple = (1.0, 1.0, 1.0)
    n: int = 16
    levels: tuple = ()
    stab: StabilizationChoice = field(default_factory=StabilizationChoice)
    tol: float = 1e-10
    max_iter: int = 2000
    method: str = "auto"
    gammas: tuple = (1.0,)
    cond_tol: float = 1e-3
    offsets: int = 0
    offset_n: int = 16
    offset_gammas: tuple = (1.0,)
    seed: int = 20170419
    layer_n: int = 16
    layer_runs: dict = field(default_factory=dict)
    out: str = "out"

    @property
    def box(self):
        return (self.lo, self.hi)

    def problem(self) -> Problem:
        """Build the :class:`Problem` this configuration describes."""
        if self.problem_name is not None:
            prob = builtin(self.problem_name)
        else:
            prob = _expression_problem(self)
        if self.eps is not None:
            prob = prob.with_eps(self.eps)
        return prob

    def to_parser(self) -> configparser.ConfigParser:
        cp = configparser.ConfigParser(interpolation=None)
        prob = {}
        if self.problem_name is not None:
            prob["name"] = self.problem_name
        prob.update(self.expressions)
        if self.eps is not None:
            prob["eps"] = _num(self.eps)
        cp["problem"] = prob
        if self.surface:
            surf = {"kind": self.surface["kind"], "center": _vec(self.surface["center"])}
            if self.surface.get("radii"):
                surf["radii"] = _vec(self.surface["radii"])
            if self.surface["kind"] == "plane":
                surf["normal"] = _vec(self.surface["normal"])
            cp["surface"] = surf
        mesh = {"lo": _vec(self.lo), "hi": _vec(self.hi), "n": str(self.n)}
        if self.levels:
            mesh["levels"] = ", ".join(str(k) for k in self.levels)
        cp["mesh"] = mesh
        cp["stabilization"] = _stab_dict(self.stab)
        cp["solver"] = {"tol": _num(self.tol), "max_iter": str(self.max_iter), "method": self.method}
        cp["condition"] = {
            "gammas": _vec(self.gammas), "tol": _num(self.cond_tol), "offsets": str(self.offsets),
            "offset_n": str(self.offset_n), "offset_gammas": _vec(self.offset_gammas),
            "seed": str(self.seed),
        }
        layer = {"n": str(self.layer_n)}
        if self.layer_runs:
            layer["runs"] = ", ".join(self.layer_runs)
        cp["layer"] = layer
        for name, choice in self.layer_runs.items():
            cp[f"layer.{name}"] = _stab_dict(choice)
        cp["output"] = {"dir": self.out}
        return cp


def _num(x) -> str:
    return repr(float(x))


def _vec(v) -> str:
    return ", ".join(_num(x) for x in v)


def _stab_dict(s: StabilizationChoice) -> dict:
    tau2 = s.tau2 if s.tau2 == INV_TAU1 else _num(s.tau2)
    return {"c_tau": _num(s.c_tau), "tau2": tau2, "gamma": _num(s.gamma)}


# -- value parsing -------------------------------------------------------------


def _float(sec, key, lo=None, hi=None, lo_open=False, hi_open=False):
    name = f"{sec.name}.{key}"
    try:
        val = float(sec[key])
    except ValueError:
        raise ConfigError(name, f"expected a number, got {sec[key]!r}") from None
    if not np.isfinite(val):
        raise ConfigError(name, "must be finite")
    if lo is not None and (val < lo or (lo_open and val == lo)):
        raise ConfigError(name, f"must be {'>' if lo_open else '>='} {lo}")
    if hi is not None and (val > hi or (hi_open and val == hi)):
        raise ConfigError(name, f"must be {'<' if hi_open else '<='} {hi}")
    return val


def _int(sec, key, lo=None):
    name = f"{sec.name}.{key}"
    try:
        val = int(sec[key])
    except ValueError:
        raise ConfigError(name, f"expected an integer, got {sec[key]!r}") from None
    if lo is not None and val < lo:
        raise ConfigError(name, f"must be >= {lo}")
    return val


def _floats(sec, key, count=None):
    name = f"{sec.name}.{key}"
    parts = [p.strip() for p in sec[key].split(",") if p.strip()]
    try:
        vals = tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(name, f"expected comma-separated numbers, got {sec[key]!r}") from None
    if count is not None and len(vals) != count:
        raise ConfigError(name, f"expected {count} numbers, got {len(vals)}")
    if not all(np.isfinite(vals)):
        raise ConfigError(name, "values must be finite")
    return vals


def _ints(sec, key):
    name = f"{sec.name}.{key}"
    parts = [p.strip() for p in sec[key].split(",") if p.strip()]
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise ConfigError(name, f"expected comma-separated integers, got {sec[key]!r}") from None


def _stabilization(sec, base: StabilizationChoice) -> StabilizationChoice:
    c_tau = _float(sec, "c_tau", lo=0.0) if "c_tau" in sec else base.c_tau
    gamma = _float(sec, "gamma", lo=0.0, hi=2.0, hi_open=True) if "gamma" in sec else base.gamma
    tau2 = base.tau2
    if "tau2" in sec:
        raw = sec["tau2"].strip()
        tau2 = INV_TAU1 if raw == INV_TAU1 else _float(sec, "tau2", lo=0.0, lo_open=True)
    if tau2 == INV_TAU1 and c_tau == 0:
        raise ConfigError(f"{sec.name}.tau2", "inv-tau1 needs c_tau > 0; give tau2 explicitly")
    return StabilizationChoice(c_tau, tau2, gamma)


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("file", str(exc).splitlines()[0]) from None

    run_sections = {}
    for name in cp.sections():
        if name in IGNORED:
            continue
        if name.startswith("layer."):
            run_sections[name[len("layer."):]] = cp[name]
            allowed = LAYER_RUN_KEYS
        elif name in SCHEMA:
            allowed = SCHEMA[name]
        else:
            raise ConfigError(name, "unknown section")
        for key in cp[name]:
            if key not in allowed:
                raise ConfigError(f"{name}.{key}", "unknown key")

    cfg = RunConfig()
    empty = {}
    prob = cp["problem"] if cp.has_section("problem") else empty
    if "name" in prob:
        cfg.problem_name = prob["name"].strip()
        if cfg.problem_name not in BUILTIN:
            raise ConfigError("problem.name", f"unknown built-in problem {cfg.problem_name!r}; "
                              f"choose from {sorted(BUILTIN)}")
        for key in ("u", "f", "alpha", "beta"):
            if key in prob:
                raise ConfigError(f"problem.{key}", "cannot be combined with a built-in problem name")
        if cp.has_section("surface"):
            raise ConfigError("surface", "a built-in problem fixes its own surface")
    else:
        cfg.expressions = {k: prob[k].strip() for k in ("u", "f", "alpha", "beta") if k in prob}
    if "eps" in prob:
        cfg.eps = _float(prob, "eps", lo=0.0)

    if cp.has_section("surface"):
        s = cp["surface"]
        if "kind" not in s:
            raise ConfigError("surface.kind", "missing")
        cfg.surface = {
            "kind": s["kind"].strip(),
            "center": _floats(s, "center", 3) if "center" in s else (0.5, 0.5, 0.5),
            "radii": _floats(s, "radii") if "radii" in s else (),
            "normal": _floats(s, "normal", 3) if "normal" in s else (0.0, 0.0, 1.0),
        }

    if cp.has_section("mesh"):
        m = cp["mesh"]
        if "lo" in m:
            cfg.lo = _floats(m, "lo", 3)
        if "hi" in m:
            cfg.hi = _floats(m, "hi", 3)
        if "n" in m:
            cfg.n = _int(m, "n", lo=1)
        if "levels" in m:
            cfg.levels = _ints(m, "levels")
            if any(k < 1 for k in cfg.levels):
                raise InvalidLevels("levels must be positive")
            if len(set(cfg.levels)) != len(cfg.levels):
                raise InvalidLevels(f"duplicate levels in {list(cfg.levels)}")
            cfg.levels = tuple(sorted(cfg.levels))
    if any(h <= l for l, h in zip(cfg.lo, cfg.hi)):
        raise ConfigError("mesh.hi", "box must have hi > lo in every coordinate")

    base = StabilizationChoice()
    if cfg.problem_name is not None:
        d = BUILTIN[cfg.problem_name]().defaults
        base = StabilizationChoice(d.get("c_tau", 0.5), d.get("tau2", INV_TAU1), d.get("gamma", 1.0))
    cfg.stab = _stabilization(cp["stabilization"], base) if cp.has_section("stabilization") \
        else base

    if cp.has_section("solver"):
        s = cp["solver"]
        if "tol" in s:
            cfg.tol = _float(s, "tol", lo=0.0, hi=1.0, lo_open=True, hi_open=True)
        if "max_iter" in s:
            cfg.max_iter = _int(s, "max_iter", lo=1)
        if "method" in s:
            cfg.method = s["method"].strip()
            if cfg.method not in METHODS:
                raise ConfigError("solver.method", f"choose one of {METHODS}")

    if cp.has_section("condition"):
        c = cp["condition"]
        if "gammas" in c:
            cfg.gammas = _floats(c, "gammas")
        if "offset_gammas" in c:
            cfg.offset_gammas = _floats(c, "offset_gammas")
        for key in ("gammas", "offset_gammas"):
            if any(not 0 <= g < 2 for g in getattr(cfg, key)):
                raise ConfigError(f"condition.{key}", "gamma must lie in [0, 2)")
        if "tol" in c:
            cfg.cond_tol = _float(c, "tol", lo=0.0, hi=1.0, lo_open=True, hi_open=True)
        if "offsets" in c:
            cfg.offsets = _int(c, "offsets", lo=0)
        if "offset_n" in c:
            cfg.offset_n = _int(c, "offset_n", lo=1)
        if "seed" in c:
            cfg.seed = _int(c, "seed", lo=0)

    if cp.has_section("layer"):
        lay = cp["layer"]
        if "n" in lay:
            cfg.layer_n = _int(lay, "n", lo=1)
        names = [r.strip() for r in lay.get("runs", "").split(",") if r.strip()]
    else:
        names = []
    for name in names:
        if name not in run_sections:
            raise ConfigError("layer.runs", f"run {name!r} has no [layer.{name}] section")
    for name in run_sections:
        if name not in names:
            raise ConfigError(f"layer.{name}", "section not listed in layer.runs")
    cfg.layer_runs = {name: _stabilization(run_sections[name], cfg.stab) for name in names}

    if cp.has_section("output") and "dir" in cp["output"]:
        cfg.out = cp["output"]["dir"].strip()

    if cfg.problem_name is None:
        _expression_problem(cfg)  # validate now rather than mid-run
    return cfg


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("file", f"cannot read {p}: {exc.strerror}") from None
    return parse_config(text)


def dump_config(cfg: RunConfig, results: dict | None = None) -> str:
    cp = cfg.to_parser()
    if results:
        cp["results"] = {k: str(v) for k, v in results.items()}
    lines = []
    for name in cp.sections():
        lines.append(f"[{name}]")
        lines += [f"{k} = {v}" for k, v in cp[name].items()]
        lines.append("")
    return "\n".join(lines)


def _expression_problem(cfg: RunConfig) -> Problem:
    if not cfg.surface:
        raise ConfigError("surface", "missing; give [surface] or problem.name")
    s = cfg.surface
    surface = make_surface(s["kind"], s["center"], s["radii"], s["normal"])
    ex = cfg.expressions
    if "beta" not in ex:
        raise ConfigError("problem.beta", "missing")
    if "u" not in ex and "f" not in ex:
        raise ConfigError("problem.u", "give an exact solution u or a right-hand side f")
    beta = expr.vector_field([t.strip() for t in ex["beta"].split(",")], "problem.beta")
    alpha = expr.scalar_field(ex.get("alpha", "0"), "problem.alpha")
    u = expr.scalar_field(ex["u"], "problem.u") if "u" in ex else None
    f = expr.scalar_field(ex["f"], "problem.f") if "f" in ex else None
    return Problem(name="inline", surface=surface, alpha=alpha, beta=beta,
                   eps=0.0 if cfg.eps is None else cfg.eps, u_exact=u, f=f, box=cfg.box)
