"""Config-driven experiments: g tables, epsilon curves, the lifting/direct
dichotomy and transport comparisons.

Every experiment writes into its own directory: CSV tables, SVG plots and a
``run_manifest.json`` listing each emitted file with its content hashes.
Numbers in the report are recomputable from the emitted CSVs.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .energy_core import EnergyParams, JumpCost, eval_cW, eval_g_many
from .errors import ATCircleError, ConfigurationError, ConsistencyError, DimensionError, DomainError, SizeError
from .fields import (
    AngleField,
    CircleField,
    GridSpec,
    VortexConfig,
    make_dipole_lifting,
    make_dipole_map,
    make_step_lifting,
    make_step_map,
    make_vortex_map,
    save_field_binary,
    save_field_csv,
)
from .lifting_opt import (
    BRUTEFORCE_LIMIT,
    LiftingProblem,
    dipole_transport_estimate,
    mg_bruteforce,
    mg_local_search,
    save_problem_csv,
)
from .minimizer import DIRECT, LIFTING, Schedule, alternate_minimize, mm_profile_1d

log = logging.getLogger(__name__)

CONFIG_ERRORS = (ConfigurationError, DomainError, DimensionError, SizeError)
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
MONOTONE_RTOL = 1e-6


# --------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    kind: str
    name: str
    params: EnergyParams
    grid: dict
    schedule: Schedule
    scenario: dict
    seed: int = 0
    raw: dict = field(default_factory=dict, repr=False)

    def grid_spec(self, dim, n_default, extent_default=1.0):
        n = int(self.grid.get("n", n_default))
        if dim == 1:
            return GridSpec.interval(n, float(self.grid.get("length", extent_default)))
        return GridSpec.square(n, float(self.grid.get("side", extent_default)))


_TOP_KEYS = {"kind", "name", "seed", "energy", "grid", "schedule", "scenario"}
_ENERGY_KEYS = {"psi": "psi_spec", "f": "f_spec", "W": "W_spec", "eta": "eta", "g_table_resolution": "g_table_resolution"}
_GRID_KEYS = {"n", "length", "side"}
_SCHEDULE_KEYS = {"epsilons": "epsilon_list", "max_outer_iters": "max_outer_iters", "tol_energy": "tol_energy",
                  "tol_step": "tol_step", "max_inner_iters": "max_inner_iters"}


def _line_of(text, key):
    if text is None:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _fail(text, path, key, msg):
    line = _line_of(text, key)
    where = f"{path}.{key}" if path else key
    loc = f" (line {line})" if line else ""
    raise ConfigurationError(f"config field '{where}'{loc}: {msg}")


def _check_keys(text, path, obj, allowed):
    if not isinstance(obj, dict):
        raise ConfigurationError(f"config field '{path}' must be an object")
    for key in obj:
        if key not in allowed:
            _fail(text, path, key, f"unknown key (allowed: {', '.join(sorted(allowed))})")


def parse_experiment(obj, text=None, path="experiment"):
    _check_keys(text, path, obj, _TOP_KEYS)
    kind = obj.get("kind")
    if kind not in KINDS:
        _fail(text, path, "kind", f"unknown or missing kind {kind!r} (known: {', '.join(KINDS)})")
    energy = obj.get("energy", {})
    _check_keys(text, f"{path}.energy", energy, set(_ENERGY_KEYS))
    grid = obj.get("grid", {})
    _check_keys(text, f"{path}.grid", grid, _GRID_KEYS)
    sched = obj.get("schedule", {})
    _check_keys(text, f"{path}.schedule", sched, set(_SCHEDULE_KEYS))
    scenario = obj.get("scenario", {})
    spec = KINDS[kind]
    _check_keys(text, f"{path}.scenario", scenario, set(spec.scenario_keys))
    seed = obj.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        _fail(text, path, "seed", f"must be a nonnegative integer, got {seed!r}")
    try:
        params = EnergyParams(**{_ENERGY_KEYS[k]: v for k, v in energy.items()})
    except (ATCircleError, TypeError) as exc:
        raise ConfigurationError(f"config field '{path}.energy': {exc}") from exc
    kw = {_SCHEDULE_KEYS[k]: v for k, v in sched.items()}
    if "epsilon_list" in kw:
        kw["epsilon_list"] = tuple(kw["epsilon_list"])
    elif spec.default_epsilons is not None:
        kw["epsilon_list"] = spec.default_epsilons
    try:
        schedule = Schedule(**kw)
    except (ATCircleError, TypeError) as exc:
        raise ConfigurationError(f"config field '{path}.schedule': {exc}") from exc
    for key, val in grid.items():
        ok = isinstance(val, int) and val >= 2 if key == "n" else isinstance(val, (int, float)) and val > 0
        if not ok or isinstance(val, bool):
            _fail(text, f"{path}.grid", key, f"invalid value {val!r}")
    return ExperimentConfig(kind, str(obj.get("name", kind)), params, dict(grid), schedule,
                            dict(scenario), seed, copy.deepcopy(obj))


def load_config(path):
    """Parse a JSON config holding one experiment or ``{"experiments": [...]}``."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config_text(text)


def parse_config_text(text):
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if isinstance(obj, dict) and "experiments" in obj:
        if set(obj) != {"experiments"} or not isinstance(obj["experiments"], list) or not obj["experiments"]:
            raise ConfigurationError("a batch config must be {\"experiments\": [ ...non-empty list... ]}")
        items = [parse_experiment(e, text, f"experiments[{i}]") for i, e in enumerate(obj["experiments"])]
    else:
        items = [parse_experiment(obj, text)]
    names = [c.name for c in items]
    if len(set(names)) != len(names):
        raise ConfigurationError(f"experiment names must be unique, got {names}")
    return items


# --------------------------------------------------------------------------
# energy curves


@dataclass
class EnergyCurve:
    """Minimized energies along a decreasing epsilon sequence."""

    label: str
    epsilons: list
    totals: list
    breakdowns: list = field(default_factory=list)
    target: float = None
    target_tag: str = ""

    def __post_init__(self):
        if len(self.epsilons) != len(self.totals):
            raise DimensionError("epsilons and totals differ in length")
        if any(b >= a for a, b in zip(self.epsilons, self.epsilons[1:])):
            raise DomainError("curve epsilons must be strictly decreasing")

    @property
    def limit(self):
        """Order-1 extrapolation to epsilon = 0: least-squares line through the last 3 points."""
        if len(self.epsilons) < 3:
            return None
        x = np.asarray(self.epsilons[-3:], dtype=float)
        y = np.asarray(self.totals[-3:], dtype=float)
        return float(np.polyfit(x, y, 1)[1])

    @property
    def rel_error(self):
        lim = self.limit
        if lim is None or self.target is None or self.target == 0:
            return None
        return abs(lim - self.target) / abs(self.target)


def curve_from_result(label, result, target=None, tag=""):
    eps = [r.epsilon for r in result.per_epsilon]
    tot = [r.energy.total for r in result.per_epsilon]
    return EnergyCurve(label, eps, tot, [r.energy.as_dict() for r in result.per_epsilon], target, tag)


def trace_is_monotone(result, rtol=MONOTONE_RTOL):
    """Energies never increase within one epsilon (up to ``rtol`` relative)."""
    last = {}
    for eps, _, e in result.trace:
        if eps in last and e.total > last[eps] + rtol * max(abs(last[eps]), 1e-300):
            return False
        last[eps] = e.total
    return True


# --------------------------------------------------------------------------
# output helpers


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def write_trace(path, result):
    write_csv(path, ["epsilon", "outer_iter", "bulk", "phase_field", "total"],
              [(eps, it, e.bulk, e.phase_field, e.total) for eps, it, e in result.trace])


def write_curves(path, curves):
    eps = curves[0].epsilons
    header = ["epsilon"] + [c.label for c in curves]
    write_csv(path, header, [[e] + [c.totals[i] for c in curves] for i, e in enumerate(eps)])


def _svg(path, draw):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "atcircle", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5.5, 4.0))
        draw(ax)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)


def plot_curves(path, curves, title):
    def draw(ax):
        for c in curves:
            ax.plot(c.epsilons, c.totals, "o-", label=c.label)
            if c.limit is not None:
                ax.plot([0.0], [c.limit], "x", color=ax.lines[-1].get_color())
            if c.target is not None:
                ax.axhline(c.target, ls=":", color=ax.lines[-1].get_color(), lw=0.8)
        ax.set_xlabel("epsilon")
        ax.set_ylabel("energy")
        ax.set_xlim(left=0.0)
        ax.set_title(title)
        ax.legend()

    _svg(path, draw)


def _hashes(path):
    data = Path(path).read_bytes()
    blob = hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()
    return {"path": Path(path).name, "bytes": len(data), "sha256": hashlib.sha256(data).hexdigest(), "git_blob": blob}


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def write_manifest(outdir, cfg, report, files):
    cfg_echo = _jsonable(cfg.raw)
    manifest = {
        "package": "atcircle",
        "version": __version__,
        "kind": cfg.kind,
        "name": cfg.name,
        "seed": cfg.seed,
        "config": cfg_echo,
        "config_sha256": hashlib.sha256(canonical_json(cfg_echo).encode()).hexdigest(),
        "report": _jsonable(report),
        "files": [_hashes(Path(outdir) / f) for f in sorted(files)],
    }
    with open(Path(outdir) / "run_manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


# --------------------------------------------------------------------------
# experiment kinds


def _opt(scenario, key, default):
    return scenario.get(key, default)


def run_g_table(cfg, out):
    sc = cfg.scenario
    z_max, n = float(_opt(sc, "z_max", 10.0)), int(_opt(sc, "n_points", 201))
    if z_max <= 0 or n < 2:
        raise ConfigurationError("g_table needs z_max > 0 and n_points >= 2")
    z = np.linspace(0.0, z_max, n)
    g, t = eval_g_many(cfg.params, z)
    write_csv(out / "g_table.csv", ["z", "g", "t_star"], zip(z, g, t))
    sup = 2.0 * float(eval_cW(cfg.params, 0.0))

    def draw(ax):
        ax.plot(z, g, label="g(z)")
        ax.plot(z, np.minimum(z, sup), ":", label="min(z, 2 c_W(0))")
        ax.set_xlabel("z")
        ax.set_ylabel("g")
        ax.legend()

    _svg(out / "g_table.svg", draw)
    report = {"g_at_2": float(eval_g_many(cfg.params, np.array([2.0]))[0][0]), "sup": sup}
    if cfg.params.closed_form_tag:
        report["closed_form"] = cfg.params.closed_form_tag
        report["closed_form_max_error"] = float(np.max(np.abs(g - 2 * z / (z + 2))))
    return report, ["g_table.csv", "g_table.svg"]


def _save_fields(out, stem, fld, v):
    files = []
    for f, tag in ((fld, "u"), (v, "v")):
        save_field_csv(out / f"{stem}_{tag}.csv", f)
        save_field_binary(out / f"{stem}_{tag}.atcf", f)
        files += [f"{stem}_{tag}.csv", f"{stem}_{tag}.atcf"]
    return files


def run_gamma_1d_step(cfg, out):
    sc = cfg.scenario
    delta = float(_opt(sc, "delta", np.pi / 2))
    mode = _opt(sc, "mode", LIFTING)
    if mode not in (LIFTING, DIRECT):
        raise ConfigurationError(f"scenario.mode must be 'lifting' or 'direct', got {mode!r}")
    grid = cfg.grid_spec(1, 16001)
    if grid.h > min(cfg.schedule.epsilon_list) / 4 + 1e-15:
        log.warning("grid spacing %.3g exceeds epsilon/4 for the smallest epsilon", grid.h)
    init = make_step_lifting(grid, delta) if mode == LIFTING else make_step_map(grid, delta)
    pinned = np.zeros(grid.shape, dtype=bool)
    pinned[[0, -1]] = True
    res = alternate_minimize(init, mode, cfg.params, cfg.schedule, pinned=pinned)
    jc = JumpCost.build(cfg.params)
    z = abs(delta) if mode == LIFTING else 2.0 * math.sin(0.5 * abs(delta))
    curve = curve_from_result(mode, res, float(jc(z)), f"g({z:.6g})")
    write_trace(out / "trace.csv", res)
    write_curves(out / "curve.csv", [curve])
    plot_curves(out / "energy_vs_eps.svg", [curve], f"1-D step, delta={delta:.4g}, {mode} mode")
    files = ["trace.csv", "curve.csv", "energy_vs_eps.svg"] + _save_fields(out, "final", res.field, res.v)
    return {
        "mode": mode, "delta": delta, "h": grid.h, "limit": curve.limit, "target": curve.target,
        "target_tag": curve.target_tag, "rel_error": curve.rel_error, "monotone": trace_is_monotone(res),
    }, files


def run_mm_profile(cfg, out):
    sc = cfg.scenario
    anchors = _opt(sc, "t_anchor", [0.0, 0.25, 0.5])
    anchors = [float(a) for a in (anchors if isinstance(anchors, list) else [anchors])]
    eps = float(_opt(sc, "epsilon", 1e-3))
    interval = tuple(float(x) for x in _opt(sc, "interval", [-1.0, 1.0]))
    rows, profiles, files = [], [], []
    for i, t in enumerate(anchors):
        prof, cost = mm_profile_1d(t, eps, cfg.params.W_spec, interval)
        lb = 2.0 * float(eval_cW(cfg.params, t))
        rows.append((t, eps, cost, lb))
        profiles.append(prof)
        save_field_csv(out / f"profile_{i}.csv", prof)
        files.append(f"profile_{i}.csv")
    write_csv(out / "mm_profile.csv", ["t_anchor", "epsilon", "cost", "lower_bound"], rows)

    def draw(ax):
        for (t, *_), p in zip(rows, profiles):
            ax.plot(p.grid.axes()[0], p.values, label=f"t={t:g}")
        ax.set_xlabel("x")
        ax.set_ylabel("v")
        ax.legend()

    _svg(out / "mm_profile.svg", draw)
    report = {"rows": [{"t_anchor": t, "cost": c, "lower_bound": lb,
                        "rel_error": abs(c - lb) / lb if lb > 0 else abs(c)} for t, _, c, lb in rows]}
    return report, files + ["mm_profile.csv", "mm_profile.svg"]


def _smooth_angle(grid, amplitude):
    x, y = grid.coords()
    return amplitude * np.sin(np.pi * x) * np.cos(np.pi * y)


def _dichotomy_fields(cfg, grid):
    sc = cfg.scenario
    kind = _opt(sc, "type", "dipole")
    if kind == "dipole":
        vc = VortexConfig.dipole(tuple(_opt(sc, "center", [0.5, 0.5])), float(_opt(sc, "distance", 0.5)),
                                 int(_opt(sc, "axis", 0)))
        return kind, make_dipole_map(grid, vc), make_dipole_lifting(grid, vc), vc
    if kind == "smooth":
        phi = _smooth_angle(grid, float(_opt(sc, "amplitude", 1.5)))
        return kind, CircleField(grid, phi), AngleField(grid, phi), None
    if kind == "step":
        delta = float(_opt(sc, "delta", np.pi))
        return kind, make_step_map(grid, delta), make_step_lifting(grid, delta), None
    raise ConfigurationError(f"scenario.type must be dipole, smooth or step, got {kind!r}")


def run_dichotomy(cfg, out):
    sc = cfg.scenario
    grid = cfg.grid_spec(2, 641)
    kind, u0, phi0, vc = _dichotomy_fields(cfg, grid)
    pin = _opt(sc, "pin", "all")
    if pin == "all":
        pinned = np.ones(grid.shape, dtype=bool)
    elif pin == "boundary":
        pinned = grid.boundary_mask()
    else:
        raise ConfigurationError(f"scenario.pin must be 'all' or 'boundary', got {pin!r}")
    direct = alternate_minimize(u0, DIRECT, cfg.params, cfg.schedule, pinned=pinned)
    lifting = alternate_minimize(phi0, LIFTING, cfg.params, cfg.schedule, pinned=pinned)
    jc = JumpCost.build(cfg.params)
    cd = curve_from_result("direct", direct)
    cl = curve_from_result("lifting", lifting)
    gaps = [b - a for a, b in zip(cd.totals, cl.totals)]
    report = {"scenario": kind, "pin": pin, "h": grid.h}
    gap_target, tag = None, ""
    if kind == "dipole":
        gap_target = dipole_transport_estimate(vc.snapped(grid), jc)
        tag = "g(2pi) * matched distance"
        mg_n = int(_opt(sc, "mg_grid_n", 65))
        mg_grid = GridSpec.square(mg_n, grid.extents[0], grid.origin)
        prob = LiftingProblem.from_field(make_dipole_map(mg_grid, vc), jc, int(_opt(sc, "K", 2)))
        sol = mg_local_search(prob, seed=cfg.seed, restarts=int(_opt(sc, "restarts", 2)))
        save_problem_csv(out / "lifting.csv", prob, sol)
        report.update(mg_value=sol.nonlocal_cost, mg_objective=sol.objective, mg_grid_n=mg_n,
                      transport_estimate=gap_target)
    elif kind == "smooth":
        gap_target, tag = 0.0, "zero winding"
    cg = EnergyCurve("gap", cd.epsilons, gaps, target=gap_target, target_tag=tag)
    write_trace(out / "trace_direct.csv", direct)
    write_trace(out / "trace_lifting.csv", lifting)
    write_csv(out / "curves.csv", ["epsilon", "direct", "lifting", "gap"],
              zip(cd.epsilons, cd.totals, cl.totals, gaps))
    plot_curves(out / "energies.svg", [cd, cl], f"{kind}: direct vs lifting")
    plot_curves(out / "gap.svg", [cg], f"{kind}: lifting minus direct")
    files = ["trace_direct.csv", "trace_lifting.csv", "curves.csv", "energies.svg", "gap.svg"]
    files += _save_fields(out, "direct", direct.field, direct.v) + _save_fields(out, "lifting", lifting.field, lifting.v)
    if kind == "dipole":
        files.append("lifting.csv")
    report.update(
        direct_limit=cd.limit, lifting_limit=cl.limit, gap_limit=cg.limit, gap_target=gap_target,
        gap_target_tag=tag, gap_rel_error=cg.rel_error, min_gap=min(gaps),
        monotone=trace_is_monotone(direct) and trace_is_monotone(lifting),
    )
    if kind == "smooth" and cd.limit:
        report["gap_relative_to_direct"] = abs(cg.limit) / abs(cd.limit)
    if kind == "step":
        delta = float(_opt(sc, "delta", np.pi))
        length = grid.extents[1]
        g_chord = float(jc(2.0 * math.sin(0.5 * delta))) * length
        g_arc = float(jc(delta)) * length
        report.update(g_chord=g_chord, g_arc=g_arc, direct_jump_limit=cd.limit, lifting_jump_limit=cl.limit)
        report["direct_approaches"] = "chord" if abs(cd.limit - g_chord) <= abs(cd.limit - g_arc) else "arc"
    if cl.limit is not None and cl.limit < cd.limit - 1e-9 * max(1.0, abs(cd.limit)):
        raise ConsistencyError(
            f"lifting-mode limit {cl.limit:.6g} below direct-mode limit {cd.limit:.6g}; "
            "the lifted energy should dominate"
        )
    return report, files


def _mg_problem(cfg, jc):
    sc = cfg.scenario
    kind = _opt(sc, "type", "dipole")
    K = int(_opt(sc, "K", 2))
    if kind == "dipole":
        grid = cfg.grid_spec(2, 65)
        vc = VortexConfig.dipole(tuple(_opt(sc, "center", [0.5, 0.5])), float(_opt(sc, "distance", 0.5)),
                                 int(_opt(sc, "axis", 0)))
        return LiftingProblem.from_field(make_dipole_map(grid, vc), jc, K), vc.snapped(grid)
    if kind == "plaquette":
        # m x m node patch around a +1 vortex placed at the center of a cell
        h = float(_opt(sc, "h", 1.0 / 8.0))
        m = int(_opt(sc, "patch", 3))
        grid = GridSpec.square(m, (m - 1) * h)
        c = grid.origin[0] + h * ((m - 2) // 2 + 0.5)
        return LiftingProblem.from_field(make_vortex_map(grid, VortexConfig([[c, c]], [1])), jc, K), None
    if kind == "step":
        grid = cfg.grid_spec(1, int(_opt(sc, "cells", 8)))
        return LiftingProblem.from_field(make_step_map(grid, float(_opt(sc, "delta", np.pi / 2))), jc, K), None
    if kind == "random":
        shape = tuple(int(s) for s in _opt(sc, "shape", [3, 3]))
        rng = np.random.default_rng(cfg.seed)
        return LiftingProblem(rng.uniform(0.0, 2.0 * np.pi, shape), jc, K), None
    raise ConfigurationError(f"scenario.type must be dipole, plaquette, step or random, got {kind!r}")


def run_mg_solve(cfg, out):
    sc = cfg.scenario
    jc = JumpCost.build(cfg.params)
    prob, vc = _mg_problem(cfg, jc)
    method = _opt(sc, "method", "auto")
    if method == "auto":
        method = "bruteforce" if (2 * prob.K + 1) ** prob.ncells <= BRUTEFORCE_LIMIT else "local_search"
    if method == "bruteforce":
        sol = mg_bruteforce(prob)
    elif method == "local_search":
        sol = mg_local_search(prob, seed=cfg.seed, restarts=int(_opt(sc, "restarts", 4)))
    else:
        raise ConfigurationError(f"scenario.method must be auto, bruteforce or local_search, got {method!r}")
    save_problem_csv(out / "lifting.csv", prob, sol)
    report = {"method": sol.optimality_tag, "cells": prob.ncells, "K": prob.K, "objective": sol.objective,
              "nonlocal_cost": sol.nonlocal_cost, "excess": sol.excess}
    if vc is not None:
        report["transport_estimate"] = dipole_transport_estimate(vc, jc)
    return report, ["lifting.csv"]


def run_transport_compare(cfg, out):
    sc = cfg.scenario
    jc = JumpCost.build(cfg.params)
    grid = cfg.grid_spec(2, 65)
    distances = [float(d) for d in _opt(sc, "distances", [0.25, 0.375, 0.5])]
    rows = []
    for d in distances:
        vc = VortexConfig.dipole(tuple(_opt(sc, "center", [0.5, 0.5])), d, int(_opt(sc, "axis", 0)))
        prob = LiftingProblem.from_field(make_dipole_map(grid, vc), jc, int(_opt(sc, "K", 2)))
        sol = mg_local_search(prob, seed=cfg.seed, restarts=int(_opt(sc, "restarts", 2)))
        est = dipole_transport_estimate(vc.snapped(grid), jc)
        rows.append((d, sol.nonlocal_cost, est, abs(sol.nonlocal_cost - est) / est))
    write_csv(out / "transport.csv", ["distance", "mg_value", "transport_estimate", "rel_error"], rows)

    def draw(ax):
        ax.plot([r[0] for r in rows], [r[1] for r in rows], "o-", label="discrete m_g")
        ax.plot([r[0] for r in rows], [r[2] for r in rows], "s--", label="g(2pi) * distance")
        ax.set_xlabel("distance")
        ax.set_ylabel("energy")
        ax.legend()

    _svg(out / "transport.svg", draw)
    return {"rows": [dict(zip(("distance", "mg_value", "transport_estimate", "rel_error"), r)) for r in rows],
            "max_rel_error": max(r[3] for r in rows)}, ["transport.csv", "transport.svg"]


@dataclass(frozen=True)
class KindSpec:
    runner: object
    description: str
    scenario_keys: tuple
    default_epsilons: tuple = None


KINDS = {
    "g_table": KindSpec(run_g_table, "tabulate g(z) and its argmin t*(z)", ("z_max", "n_points")),
    "gamma_1d_step": KindSpec(run_gamma_1d_step, "epsilon curve for a 1-D step, extrapolated to epsilon=0",
                              ("delta", "mode")),
    "mm_profile": KindSpec(run_mm_profile, "optimal 1-D transition profiles against 2 c_W(t)",
                           ("t_anchor", "epsilon", "interval")),
    "dichotomy_dipole": KindSpec(run_dichotomy, "direct vs lifting energies (dipole, smooth or step map)",
                                 ("type", "distance", "center", "axis", "amplitude", "delta", "pin",
                                  "mg_grid_n", "K", "restarts"),
                                 (0.05, 0.025, 0.0125, 0.00625)),
    "mg_solve": KindSpec(run_mg_solve, "minimal lifting by enumeration or local search",
                         ("type", "distance", "center", "axis", "h", "patch", "delta", "cells", "shape",
                          "K", "method", "restarts")),
    "transport_compare": KindSpec(run_transport_compare, "discrete m_g of dipoles against g(2pi) * distance",
                                  ("distances", "center", "axis", "K", "restarts")),
}


# --------------------------------------------------------------------------
# driver


def run(cfg, out_root):
    """Run one experiment into ``out_root/<name>``; returns the manifest."""
    out = Path(out_root) / cfg.name
    out.mkdir(parents=True, exist_ok=True)
    try:
        report, files = KINDS[cfg.kind].runner(cfg, out)
    except ATCircleError as exc:
        raise type(exc)(f"experiment '{cfg.name}' ({cfg.kind}): {exc}") from exc
    return write_manifest(out, cfg, report, files)


def _run_one(args):
    cfg, out_root = args
    try:
        if isinstance(cfg, dict):
            # worker processes get the raw config; parsed ones hold unpicklable callables
            cfg = parse_experiment(cfg)
        return "ok", run(cfg, out_root)
    except CONFIG_ERRORS as exc:
        return "config", str(exc)
    except ATCircleError as exc:
        return "numerical", str(exc)


def run_batch(configs, out_root, jobs=1):
    """Run experiments, up to ``jobs`` at a time; results keep the config order."""
    if jobs <= 1 or len(configs) == 1:
        return [_run_one((c, out_root)) for c in configs]
    with ProcessPoolExecutor(max_workers=min(jobs, len(configs))) as pool:
        return list(pool.map(_run_one, [(c.raw, out_root) for c in configs]))


def with_seed(configs, seed):
    for c in configs:
        c.seed = int(seed)
        c.raw["seed"] = int(seed)
    return configs
