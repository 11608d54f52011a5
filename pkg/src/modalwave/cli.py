"""Command-line interface.

    modalwave <command> --config CONFIG.json --out DIR [--seed N]

Commands: verify-addition, forward, solver-compare, fit, beam-extrapolate.
A ``manifest.json`` written by an earlier run is accepted as ``--config``
and replays that run.  Exit codes: 0 success, 1 non-monotone addition
error, 2 invalid configuration, 3 solver divergence or failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import artifacts, beams, coupling, inverse
from .modal import ModeIndex, n_modes
from .scene import (
    COMPONENTS,
    ConfigError,
    PlaneGrid,
    Scatterer,
    Scene,
    SolverConfig,
    SolverDivergence,
    compute_radiomap,
    eval_scattered,
    expand_virtual_scene,
    grid_from_dict,
    random_scene,
    sample_ball,
    scene_from_dict,
    scene_to_dict,
    solver_from_dict,
    _cplx,
)
from .seeding import substream
from .translation import in_convergence_region, verify_addition

log = logging.getLogger("modalwave")

EXIT_OK, EXIT_MONOTONE, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3


class MonotonicityError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# config helpers


def _num(d, key, where, default=None, positive=False, nonneg=False):
    if key not in d:
        if default is None:
            raise ConfigError(f"{where}.{key}: required field missing")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{where}.{key}: expected a finite number, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{where}.{key}: must be > 0")
    if nonneg and v < 0:
        raise ConfigError(f"{where}.{key}: must be >= 0")
    return float(v)


def _int(d, key, where, default=None, minimum=0):
    if key not in d:
        if default is None:
            raise ConfigError(f"{where}.{key}: required field missing")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ConfigError(f"{where}.{key}: expected an integer >= {minimum}, got {v!r}")
    return v


def _obj(d, key, where, required=True):
    if key not in d:
        if required:
            raise ConfigError(f"{where}.{key}: required field missing")
        return None
    if not isinstance(d[key], dict):
        raise ConfigError(f"{where}.{key}: expected an object")
    return d[key]


def build_scene(cfg: dict, seed: int, where: str = "config") -> Scene:
    """Scene from inline fields or from a ``random_scene`` block."""
    if "random_scene" in cfg:
        r = _obj(cfg, "random_scene", where)
        w = f"{where}.random_scene"
        lo = r.get("corner_min")
        hi = r.get("corner_max")
        src = r.get("source_position")
        for name, v in (("corner_min", lo), ("corner_max", hi), ("source_position", src)):
            if not (isinstance(v, list) and len(v) == 3):
                raise ConfigError(f"{w}.{name}: expected 3 numbers")
        wl = _num(r, "wavelength", w, 1.0, positive=True)
        try:
            return random_scene(
                substream(seed, "scene-gen"),
                _int(r, "count", w),
                lo, hi,
                _int(r, "L", w),
                wl,
                src,
                _int(r, "source_truncation", w),
                t_scale=_num(r, "t_scale", w, 0.3, nonneg=True),
                min_separation=_num(r, "min_separation", w, wl, nonneg=True),
                t_model=r.get("t_model", "phase"),
            )
        except ValueError as exc:
            raise ConfigError(f"{w}: {exc}") from None
    return scene_from_dict(cfg)


def build_sources(cfg: dict, scene: Scene, seed: int, where: str = "config") -> np.ndarray:
    """``(n_modes(N), n_beams)`` source matrix from a ``sources`` block."""
    src = _obj(cfg, "sources", where)
    w = f"{where}.sources"
    ns = n_modes(scene.source_truncation)
    if "coefficients" in src:
        cols = []
        for i, c in enumerate(src["coefficients"]):
            try:
                v = _cplx(c)
            except (ValueError, TypeError, IndexError):
                raise ConfigError(f"{w}.coefficients[{i}]: expected [re, im] pairs") from None
            if v.shape != (ns,):
                raise ConfigError(f"{w}.coefficients[{i}]: expected {ns} [re, im] pairs")
            cols.append(v)
        if not cols:
            raise ConfigError(f"{w}.coefficients: at least one beam required")
        return np.stack(cols, axis=1)
    if "random" in src:
        r = _obj(src, "random", w)
        count = _int(r, "count", f"{w}.random", minimum=1)
        scale = _num(r, "scale", f"{w}.random", 1.0, positive=True)
        rng = substream(seed, "scene-gen", 1)
        z = rng.standard_normal((ns, count)) + 1j * rng.standard_normal((ns, count))
        return scale * z / math.sqrt(2.0)
    if "beams" in src:
        pats = parse_beams(src["beams"], f"{w}.beams")
        return fit_beams(pats, scene, src, w)
    raise ConfigError(f"{w}: one of coefficients / random / beams is required")


def parse_beams(spec, where) -> list:
    """List of beam dicts, or a steering grid ``{theta0_deg: [...], phi0_deg: [...], shape}``."""
    try:
        if isinstance(spec, dict):
            shape = spec.get("shape", {})
            return beams.steering_grid(spec["theta0_deg"], spec["phi0_deg"], **shape)
        if isinstance(spec, list) and spec:
            return [beams.BeamPattern.from_dict(d) for d in spec]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}: expected a non-empty list of beams or a steering grid")


def fit_beams(patterns, scene: Scene, opts: dict, where: str) -> np.ndarray:
    L = scene.source_truncation
    r0 = _num(opts, "r0", where, beams.far_field_radius(L, scene.k), positive=True)
    quad = opts.get("quadrature", {})
    try:
        cols = [beams.fit_beam_coefficients(p, L, r0, scene.k, quad.get("n_theta"), quad.get("n_phi"))
                for p in patterns]
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    return np.stack(cols, axis=1)


def _grids(cfg, where, key="grids") -> list:
    gs = cfg.get(key)
    if not isinstance(gs, list) or not gs:
        raise ConfigError(f"{where}.{key}: expected a non-empty list of grids")
    return [grid_from_dict(g, f"{where}.{key}[{i}]") for i, g in enumerate(gs)]


# --------------------------------------------------------------------------
# verify-addition


@dataclass
class AdditionPlan:
    mode: ModeIndex
    d: np.ndarray
    k: float
    orders: list
    points: np.ndarray


def plan_verify_addition(cfg: dict, seed: int) -> AdditionPlan:
    where = "config"
    wl = _num(cfg, "wavelength", where, 1.0, positive=True)
    sm = cfg.get("source_mode")
    if not (isinstance(sm, list) and len(sm) == 2 and all(isinstance(v, int) for v in sm)):
        raise ConfigError(f"{where}.source_mode: expected [n, m]")
    try:
        mode = ModeIndex(*sm)
    except ValueError as exc:
        raise ConfigError(f"{where}.source_mode: {exc}") from None
    d = cfg.get("displacement")
    if not (isinstance(d, list) and len(d) == 3):
        raise ConfigError(f"{where}.displacement: expected 3 numbers")
    d = np.asarray(d, dtype=float)
    if np.linalg.norm(d) == 0:
        raise ConfigError(f"{where}.displacement: must be nonzero")
    orders = cfg.get("orders")
    if not (isinstance(orders, list) and orders and all(isinstance(L, int) and L >= 0 for L in orders)):
        raise ConfigError(f"{where}.orders: expected a non-empty list of nonnegative integers")
    if "grid" in cfg:
        pts = grid_from_dict(cfg["grid"], f"{where}.grid").points()
    else:
        sl = cfg.get("slice", {})
        hw = _num(sl, "half_width", f"{where}.slice", 1.5 * wl, positive=True)
        n = _int(sl, "n", f"{where}.slice", 60, minimum=1)
        lo = d - np.array([0.0, hw, hw])
        hi = d + np.array([0.0, hw, hw])
        pts = PlaneGrid(tuple(lo), tuple(hi), n, n, "x").points()
    if not np.all(in_convergence_region(pts, d)):
        raise ConfigError(f"{where}: evaluation slice leaves the convergence region |r - d| < |d|")
    return AdditionPlan(mode, d, 2.0 * math.pi / wl, list(orders), pts)


def run_verify_addition(plan: AdditionPlan, out: Path) -> list:
    reports = [verify_addition(plan.mode, plan.d, plan.k, L, plan.points) for L in plan.orders]
    rows = []
    for L, rep in zip(plan.orders, reports):
        for p, e in zip(plan.points, rep.abs_error):
            rows.append((L, p[0], p[1], p[2], e))
    artifacts.write_csv(out / "addition_error.csv", ["L", "x", "y", "z", "abs_error"], rows)
    summary = []
    for i, (L, rep) in enumerate(zip(plan.orders, reports)):
        frac = "" if i == 0 else float(np.mean(rep.abs_error < reports[i - 1].abs_error))
        summary.append((L, rep.max_abs_error, rep.rms_error, frac))
    artifacts.write_csv(out / "addition_summary.csv",
                        ["L", "max_abs_error", "rms_error", "fraction_improved"], summary)
    for i in range(1, len(reports)):
        a, b = reports[i - 1], reports[i]
        if not (b.max_abs_error < a.max_abs_error and b.rms_error < a.rms_error):
            raise MonotonicityError(
                f"error does not decrease from L={plan.orders[i - 1]} to L={plan.orders[i]} "
                f"(max {a.max_abs_error:.3e} -> {b.max_abs_error:.3e}, rms {a.rms_error:.3e} -> {b.rms_error:.3e})"
            )
    return ["addition_error.csv", "addition_summary.csv"]


# --------------------------------------------------------------------------
# forward


@dataclass
class ForwardPlan:
    scene: Scene
    S: np.ndarray
    grids: list
    components: str
    solver: SolverConfig


def plan_forward(cfg: dict, seed: int) -> ForwardPlan:
    scene = build_scene(cfg, seed)
    S = build_sources(cfg, scene, seed)
    comp = cfg.get("components", "total")
    if comp not in COMPONENTS:
        raise ConfigError(f"config.components: expected one of {COMPONENTS}")
    solver = solver_from_dict(cfg["solver"], "config.solver") if "solver" in cfg else SolverConfig("direct")
    return ForwardPlan(scene, S, _grids(cfg, "config"), comp, solver)


def run_forward(plan: ForwardPlan, out: Path) -> list:
    outputs = ["scene.json"]
    artifacts.write_json(out / "scene.json", scene_to_dict(plan.scene))
    for gi, grid in enumerate(plan.grids):
        for bi in range(plan.S.shape[1]):
            try:
                rm = compute_radiomap(plan.scene, plan.S[:, bi], grid, plan.components, plan.solver)
            except SolverDivergence as exc:
                coupling.write_convergence_csv(out / "residuals.csv", [exc.report])
                raise
            name = f"radiomap_g{gi}_b{bi}.csv"
            artifacts.write_radiomap_csv(out / name, rm.points, rm.values())
            outputs.append(name)
    return outputs


# --------------------------------------------------------------------------
# solver-compare


@dataclass
class ComparePlan:
    scene: Scene
    S: np.ndarray
    methods: list
    iterations: int
    tol: float
    spectral: bool
    divergence_factor: float


def plan_solver_compare(cfg: dict, seed: int) -> ComparePlan:
    scene = build_scene(cfg, seed)
    S = build_sources(cfg, scene, seed)
    methods = []
    for i, m in enumerate(cfg.get("methods", ["jacobi", "gauss_seidel", {"method": "sor", "omega": 0.5}])):
        spec = {"method": m} if isinstance(m, str) else m
        sc = solver_from_dict(spec, f"config.methods[{i}]")
        if sc.method == "direct":
            raise ConfigError(f"config.methods[{i}]: only iterative methods can be compared")
        methods.append(sc)
    iters = _int(cfg, "iterations", "config", 40, minimum=1)
    tol = _num(cfg, "tol", "config", 0.0, nonneg=True)
    guard = _num(cfg, "divergence_factor", "config", 1e12, positive=True)
    return ComparePlan(scene, S, methods, iters, tol, bool(cfg.get("spectral_radius", True)), guard)


def run_solver_compare(plan: ComparePlan, out: Path) -> list:
    system = coupling.assemble(plan.scene, plan.S)
    reports, rho_rows = [], []
    for sc in plan.methods:
        rep = coupling.solve(system, sc.method, sc.omega, plan.iterations, plan.tol, plan.divergence_factor)
        if sc.method == "sor":
            rep.method = f"sor({sc.omega:g})"
        reports.append(rep)
        if plan.spectral:
            rho = coupling.spectral_radius(system, sc.method, sc.omega)
            rho_rows.append((rep.method, rho))
    rows = [(i, rep.method, r) for rep in reports for i, r in enumerate(rep.residual_history, start=1)]
    artifacts.write_csv(out / "convergence.csv", ["iteration", "method", "residual"], rows)
    outputs = ["convergence.csv"]
    if plan.spectral:
        artifacts.write_csv(out / "spectral_radius.csv", ["method", "rho"], rho_rows)
        outputs.append("spectral_radius.csv")
    return outputs


# --------------------------------------------------------------------------
# fit


@dataclass
class FitPlan:
    truth: Scene
    template: Scene
    initial: inverse.FitParameters
    S: np.ndarray
    train_points: np.ndarray
    val_points: np.ndarray | None
    test_points: np.ndarray | None
    config: inverse.FitConfig
    truth_solver: SolverConfig
    y_ref_floor: float = 1e-12


def plan_fit(cfg: dict, seed: int) -> FitPlan:
    tcfg = _obj(cfg, "truth", "config")
    truth = build_scene(tcfg, seed, "config.truth")
    S = build_sources(cfg, truth, seed)
    fcfg = _obj(cfg, "fit", "config")
    w = "config.fit"
    mode = fcfg.get("mode", "joint")
    if mode not in ("joint", "t_only"):
        raise ConfigError(f"{w}.mode: expected 'joint' or 't_only'")
    solver = solver_from_dict(fcfg.get("solver", {"method": "sor", "omega": 0.5, "max_iters": 10}), f"{w}.solver")
    try:
        fconf = inverse.FitConfig(
            gamma=_num(fcfg, "gamma", w, positive=True),
            offset_radius=_num(fcfg, "offset_radius", w, nonneg=True),
            epochs=_int(fcfg, "epochs", w, 3000),
            batch_fraction=_num(fcfg, "batch_fraction", w, 0.15, positive=True),
            noise_std=_num(fcfg, "noise_std", w, 0.0, nonneg=True),
            seed=seed,
            lr_t=_num(fcfg, "lr_t", w, 1e-3, positive=True),
            lr_offset=_num(fcfg, "lr_offset", w, 5e-4, nonneg=True),
            optimize_offsets=(mode == "joint"),
            lr_decay=_num(fcfg, "lr_decay", w, 1.0, positive=True),
            solver=solver,
        )
    except ValueError as exc:
        raise ConfigError(f"{w}: {exc}") from None
    truth_solver = solver_from_dict(cfg.get("truth_solver"), "config.truth_solver") if "truth_solver" in cfg else solver

    mcfg = cfg.get("model", {})
    jitter = _num(mcfg, "anchor_jitter", "config.model", 0.0, nonneg=True)
    anchors = truth.positions.copy()
    if jitter > 0:
        anchors = anchors + sample_ball(substream(seed, "placement"), truth.J, jitter)
    base = Scene(truth.wavelength, truth.source_position.copy(), truth.source_truncation,
                 [Scatterer(a, np.zeros(n_modes(truth.L)), diagonal=True) for a in anchors], truth.L)
    if "virtual" in mcfg:
        v = _obj(mcfg, "virtual", "config.model")
        try:
            template = expand_virtual_scene(
                base, _int(v, "L2", "config.model.virtual"), _int(v, "replicas", "config.model.virtual", minimum=1),
                placement_radius=_num(v, "placement_radius", "config.model.virtual", 0.25 * truth.wavelength,
                                      nonneg=True),
                gamma=fconf.gamma, seed=substream(seed, "init"),
                min_separation=v.get("min_separation"),
            )
        except ValueError as exc:
            raise ConfigError(f"config.model.virtual: {exc}") from None
        initial = inverse.FitParameters.from_scene(template)
    else:
        template = base
        initial = inverse.initial_parameters(template, fconf.gamma, seed)

    train = grid_from_dict(_obj(cfg, "train_grid", "config"), "config.train_grid").points()
    val = grid_from_dict(cfg["val_grid"], "config.val_grid").points() if "val_grid" in cfg else None
    test = grid_from_dict(cfg["test_grid"], "config.test_grid").points() if "test_grid" in cfg else None
    floor = _num(fcfg, "y_ref_floor", w, 1e-12, positive=True)
    return FitPlan(truth, template, initial, S, train, val, test, fconf, truth_solver, floor)


def truth_fields(plan: FitPlan, points) -> np.ndarray:
    p = inverse.FitParameters.from_scene(plan.truth)
    return inverse.forward_predict(p, plan.truth, plan.S, points, plan.truth_solver)


def execute_fit(plan: FitPlan):
    """Run the fit; returns ``(result, metrics)`` with NMSE on each grid."""
    meas = inverse.MeasurementSet.from_fields(plan.train_points, truth_fields(plan, plan.train_points),
                                              plan.y_ref_floor)
    val = None
    if plan.val_points is not None:
        val = inverse.MeasurementSet.from_fields(plan.val_points, truth_fields(plan, plan.val_points),
                                                 plan.y_ref_floor)
    result = inverse.fit(plan.template, plan.S, meas, plan.config, plan.initial, val)
    metrics = {
        "best_epoch": result.best_epoch,
        "aborted": int(result.aborted),
        "final_train_loss": result.train_loss[-1] if result.train_loss else math.nan,
        "final_val_loss": result.val_loss[-1] if result.val_loss else math.nan,
        "best_val_loss": min(result.val_loss) if result.val_loss else math.nan,
    }
    for name, pts in (("train", plan.train_points), ("val", plan.val_points), ("test", plan.test_points)):
        if pts is None:
            continue
        pred = inverse.forward_predict(result.params, plan.template, plan.S, pts, plan.config.solver)
        metrics[f"{name}_nmse"] = beams.nmse(pred, truth_fields(plan, pts))
    return result, metrics


def run_fit(plan: FitPlan, out: Path) -> list:
    result, metrics = execute_fit(plan)
    rows = [(e, tr, va) for e, (tr, va) in enumerate(zip(result.train_loss, result.val_loss))]
    artifacts.write_csv(out / "loss.csv", ["epoch", "train_loss", "val_loss"], rows)
    artifacts.write_json(out / "fitted_scene.json", scene_to_dict(result.params.to_scene(plan.template)))
    artifacts.write_json(out / "truth_scene.json", scene_to_dict(plan.truth))
    artifacts.write_csv(out / "metrics.csv", ["metric", "value"],
                        [(k, float(v) if isinstance(v, float) else v) for k, v in metrics.items()])
    if result.aborted:
        log.warning("fit stopped early at a non-finite loss; outputs hold the last finite state")
    return ["loss.csv", "fitted_scene.json", "truth_scene.json", "metrics.csv"]


# --------------------------------------------------------------------------
# beam-extrapolate


@dataclass
class BeamPlan:
    scene: Scene
    model: Scene
    train: list
    test: list
    S: np.ndarray
    S_test: np.ndarray
    mus: list
    points: np.ndarray
    b_noise: float
    seed: int


def plan_beam_extrapolate(cfg: dict, seed: int) -> BeamPlan:
    scene = build_scene(cfg, seed)
    model = scene
    if "fitted_scene" in cfg:
        model = scene_from_dict(_obj(cfg, "fitted_scene", "config"))
        if model.source_truncation != scene.source_truncation:
            raise ConfigError("config.fitted_scene: source truncation differs from the scene")
    train = parse_beams(cfg.get("training_beams"), "config.training_beams")
    test = parse_beams(cfg.get("test_beams"), "config.test_beams")
    S = fit_beams(train, scene, cfg, "config")
    S_test = fit_beams(test, scene, cfg, "config")
    mus = cfg.get("mu", [1e-5, 1e-4, 1e-3])
    if not (isinstance(mus, list) and mus and all(isinstance(m, (int, float)) and m >= 0 for m in mus)):
        raise ConfigError("config.mu: expected a non-empty list of nonnegative numbers")
    pts = grid_from_dict(_obj(cfg, "grid", "config"), "config.grid").points()
    b_noise = _num(cfg, "training_b_noise", "config", 0.0, nonneg=True)
    return BeamPlan(scene, model, train, test, S, S_test, [float(m) for m in mus], pts, b_noise, seed)


def beam_training_data(plan: BeamPlan) -> np.ndarray:
    """Training coefficients ``B`` from the model scene, with optional relative noise."""
    B = beams.physical_system_function(plan.model) @ plan.S
    if plan.b_noise > 0:
        rng = substream(plan.seed, "noise")
        z = (rng.standard_normal(B.shape) + 1j * rng.standard_normal(B.shape)) / math.sqrt(2.0)
        B = B + plan.b_noise * math.sqrt(np.mean(np.abs(B) ** 2)) * z
    return B


def execute_beam_extrapolate(plan: BeamPlan):
    """Returns ``(rows, truth_maps, predicted_maps)``; ``predicted_maps[mu_index]`` may be None."""
    B = beam_training_data(plan)
    Phi = beams.physical_system_function(plan.scene)
    truth = eval_scattered(plan.scene, Phi @ plan.S_test, plan.points)
    rows, preds = [], []
    for mi, mu in enumerate(plan.mus):
        try:
            system = beams.build_system_function(B, plan.S, mu)
        except beams.IllPosedError as exc:
            log.warning("mu=%g: %s", mu, exc)
            preds.append(None)
            for ti, pat in enumerate(plan.test):
                rows.append((mu, ti, math.degrees(pat.theta0), math.degrees(pat.phi0),
                             math.nan, math.nan, math.nan, beams.condition_number(plan.S), "ill_posed"))
            continue
        pred = eval_scattered(plan.model, beams.extrapolate_beam(system.Q_matrix, plan.S_test), plan.points)
        preds.append(pred)
        for ti, pat in enumerate(plan.test):
            rows.append((mu, ti, math.degrees(pat.theta0), math.degrees(pat.phi0),
                         beams.mse(pred[:, ti], truth[:, ti]), beams.mae(pred[:, ti], truth[:, ti]),
                         beams.nmse(pred[:, ti], truth[:, ti]), system.cond_S, "ok"))
    return rows, truth, preds


def run_beam_extrapolate(plan: BeamPlan, out: Path) -> list:
    outputs = []
    for label, pats, S in (("train", plan.train, plan.S), ("test", plan.test, plan.S_test)):
        for i in range(len(pats)):
            name = f"coeff_{label}_{i:02d}.csv"
            beams.write_coefficients_csv(out / name, S[:, i])
            outputs.append(name)
    rows, truth, preds = execute_beam_extrapolate(plan)
    for ti in range(len(plan.test)):
        name = f"truth_test{ti}.csv"
        artifacts.write_radiomap_csv(out / name, plan.points, truth[:, ti])
        outputs.append(name)
        for mi, pred in enumerate(preds):
            if pred is None:
                continue
            name = f"radiomap_mu{mi}_test{ti}.csv"
            artifacts.write_radiomap_csv(out / name, plan.points, pred[:, ti])
            outputs.append(name)
    artifacts.write_csv(out / "metrics.csv",
                        ["mu", "test_beam", "theta0_deg", "phi0_deg", "mse", "mae", "nmse", "cond_S", "status"],
                        rows)
    outputs.append("metrics.csv")
    return outputs


# --------------------------------------------------------------------------
# entry point

COMMANDS = {
    "verify-addition": (plan_verify_addition, run_verify_addition),
    "forward": (plan_forward, run_forward),
    "solver-compare": (plan_solver_compare, run_solver_compare),
    "fit": (plan_fit, run_fit),
    "beam-extrapolate": (plan_beam_extrapolate, run_beam_extrapolate),
}


def load_config(path, command: str, seed_arg):
    """Return ``(config, seed)``; manifests replay their stored config and seed."""
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    if {"command", "config", "seed", "outputs"} <= cfg.keys():
        if cfg["command"] != command:
            raise ConfigError(f"{path}: manifest was written by '{cfg['command']}', not '{command}'")
        seed = cfg["seed"] if seed_arg is None else seed_arg
        return cfg["config"], int(seed)
    seed = seed_arg if seed_arg is not None else cfg.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("config.seed: expected a nonnegative integer")
    return cfg, seed


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modalwave", description="Modal multi-scatterer channel model")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config or a manifest.json to replay")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="run seed (overrides the config)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    out = Path(args.out)
    planner, runner = COMMANDS[args.command]
    try:
        cfg, seed = load_config(args.config, args.command, args.seed)
        plan = planner(cfg, seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out.mkdir(parents=True, exist_ok=True)
    code = EXIT_OK
    try:
        outputs = runner(plan, out)
    except MonotonicityError as exc:
        print(f"monotonicity violation: {exc}", file=sys.stderr)
        outputs = ["addition_error.csv", "addition_summary.csv"]
        code = EXIT_MONOTONE
    except SolverDivergence as exc:
        rep = exc.report
        print(f"solver diverged after {rep.iterations} iterations (residual {rep.residual_history[-1]:.3e}); "
              f"history in residuals.csv", file=sys.stderr)
        return EXIT_DIVERGED
    except coupling.SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    artifacts.write_manifest(out, args.command, cfg, seed, outputs)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
