"""Batch front end: ``passreg example|verify|scan|simulate|fit``.

Every command reads an optional JSON run configuration, writes CSV artifacts
plus a verdict JSON into the output directory and exits with status 0 exactly
when every requested check meets its threshold.  Thresholds come from the
configuration; :data:`DEFAULT_THRESHOLDS` and :data:`EXAMPLE_THRESHOLDS`
document the defaults.
"""

import argparse
import copy
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from passreg import __version__
from passreg.closed_loop import assemble, check_contraction
from passreg.controllers import (
    RECIPES,
    ControllerRealization,
    SignalSpec,
    build_diagonal,
    build_fin_dim,
    build_fin_dim_real,
    build_transport,
    verify_internal_model,
)
from passreg.lti import StateSpaceSystem
from passreg.pde_models import EXAMPLES, MODELS, DiscretizationSpec
from passreg.regulation import (
    check_regulation_conditions,
    compute_pi_ext,
    fit_error_rate,
    pointwise_error_decay,
    simulate,
    sliding_error_integral,
)
from passreg.stability import (
    InsufficientPeaks,
    ResolventScan,
    check_exp_necessity,
    check_exponential_hypotheses,
    check_nonuniform_hypotheses,
    check_strong_hypotheses,
    diagonal_example_laws,
    fit_growth_exponent,
    predict_decay,
    scan_resolvent,
    spectral_abscissa,
    stabilized_plant,
)
from passreg.svg import line_chart

#: Defaults shared by every command.  A configuration's ``thresholds`` block
#: overrides any of them.
DEFAULT_THRESHOLDS = {
    "contraction_tol": 1e-10,
    "internal_model_rtol": 1e-10,
    "integral_window": 1.0,
    "early_window": [0.0, 2.0],
    "integral_ratio": None,
    "ratio_time": None,
    "block_length": None,
    "dyadic_monotone": False,
    "dyadic_start": 1.0,
    "fit_kind": None,
    "growth_target": "closed_loop",
    "growth_band": None,
    "growth_window": None,
    "scan_band": None,
    "scan_samples": 400,
    "expect_bounded_resolvent": False,
    "bounded_tol": 0.1,
    "gamma": 0.25,
    "delta": 0.3,
    "gamma0": 0.5,
    "omega_eps": None,
    "expect_decay": None,
    "alpha_band": None,
    "expect_exponential_impossible": None,
    "summability_threshold": -1.1,
}

#: Per-example thresholds.  The integral ratios and fit kinds are the frozen
#: acceptance thresholds; ``"resolved"`` as a growth window means the lower
#: half of the discrete plant spectrum.
EXAMPLE_THRESHOLDS = {
    "wave-boundary": {
        "integral_ratio": 1.0 / 20.0,
        "block_length": 2.0,
        "growth_target": "closed_loop",
        "scan_band": [0.5, 70.0],
        "expect_bounded_resolvent": True,
    },
    "wave-distributed": {
        "integral_ratio": 1.0 / 50.0,
        "ratio_time": 23.0,
        "dyadic_monotone": True,
        "growth_target": "stabilized_plant",
        "growth_band": [1.5, 2.5],
        "growth_window": "resolved",
        "scan_band": [1.0, 100.0],
    },
    "heat-2d": {
        "integral_ratio": 1.0 / 10.0,
        "block_length": 2.0,
        "fit_kind": "Polynomial",
        "growth_target": "closed_loop",
        "growth_band": [1.2, 2.2],
        "growth_window": [np.pi, 15 * np.pi],
        "scan_band": [1.0, 16 * np.pi],
    },
}

REQUIRED_PARAMS = {
    "FinDim": ("freqs",),
    "FinDimReal": ("freqs",),
    "Transport": ("tau", "N"),
    "Diagonal": ("freqs", "c", "eps"),
}

ANALYSES = ("contraction", "internal_model", "decay", "necessity", "regulation")


class ConfigError(ValueError):
    """The run configuration is incomplete or references missing files."""


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    """Parsed run configuration.

    ``plant``, ``controller`` and ``signal`` are either inline specs or
    ``{"file": path}`` references; ``example`` selects one of the built-in
    setups and fills whatever is not given explicitly.
    """

    example: str = None
    plant: dict = None
    controller: dict = None
    signal: object = None
    initial_state: object = None
    analysis: list = field(default_factory=lambda: list(ANALYSES))
    output_dir: str = None
    thresholds: dict = field(default_factory=dict)
    scan: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)
    fit: dict = field(default_factory=dict)
    base_dir: str = "."

    @classmethod
    def from_dict(cls, obj, base_dir="."):
        known = {f for f in cls.__dataclass_fields__ if f != "base_dir"}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
        cfg = cls(**{k: copy.deepcopy(v) for k, v in obj.items()}, base_dir=base_dir)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        if not os.path.isfile(path):
            raise ConfigError(f"configuration file {path!r} does not exist")
        with open(path, encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(obj, os.path.dirname(os.path.abspath(path)))

    def path(self, p):
        return p if os.path.isabs(p) else os.path.join(self.base_dir, p)

    def validate(self):
        if self.example is not None and self.example not in EXAMPLES:
            raise ConfigError(f"unknown example {self.example!r}; choose from {sorted(EXAMPLES)}")
        for name in ("plant", "controller", "signal"):
            spec = getattr(self, name)
            if isinstance(spec, dict) and "file" in spec and not os.path.isfile(self.path(spec["file"])):
                raise ConfigError(f"{name} file {spec['file']!r} does not exist")
        table = self.fit.get("table") if self.fit else None
        if table is not None and not os.path.isfile(self.path(table)):
            raise ConfigError(f"fit table {table!r} does not exist")
        if isinstance(self.plant, dict) and "model" in self.plant:
            if self.plant["model"] not in MODELS:
                raise ConfigError(f"unknown plant model {self.plant['model']!r}")
        if isinstance(self.controller, dict) and "recipe" in self.controller:
            recipe = self.controller["recipe"]
            if recipe not in RECIPES:
                raise ConfigError(f"unknown recipe {recipe!r}")
            missing = [k for k in REQUIRED_PARAMS[recipe] if k not in self.controller.get("params", {})]
            if missing:
                raise ConfigError(f"recipe {recipe} is missing parameters {missing}")
        bad = [a for a in self.analysis if a not in ANALYSES]
        if bad:
            raise ConfigError(f"unknown analyses {bad}; choose from {list(ANALYSES)}")
        unknown = set(self.thresholds) - set(DEFAULT_THRESHOLDS)
        if unknown:
            raise ConfigError(f"unknown thresholds {sorted(unknown)}")

    def merged_thresholds(self):
        th = dict(DEFAULT_THRESHOLDS)
        if self.example is not None:
            th.update(EXAMPLE_THRESHOLDS.get(self.example, {}))
        th.update(self.thresholds)
        return th


@dataclass
class Setup:
    plant: StateSpaceSystem
    ctrl: ControllerRealization
    signal: SignalSpec
    x_e0: np.ndarray
    t_final: float = None
    dt: float = None
    name: str = "custom"


def _load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def build_plant(spec, cfg):
    if "file" in spec:
        return StateSpaceSystem.from_json(_load_json(cfg.path(spec["file"])))
    if "model" in spec:
        return DiscretizationSpec(spec["model"], int(spec.get("N", 20)), spec.get("params", {})).build()
    if "inline" in spec:
        return StateSpaceSystem.from_json(spec["inline"])
    raise ConfigError("plant spec needs 'file', 'model' or 'inline'")


def build_controller(spec, plant, cfg):
    if "file" in spec:
        return ControllerRealization.from_json(_load_json(cfg.path(spec["file"])))
    if "inline" in spec:
        return ControllerRealization.from_json(spec["inline"])
    recipe = spec.get("recipe")
    if recipe is None:
        raise ConfigError("controller spec needs 'file', 'inline' or 'recipe'")
    prm = dict(spec.get("params", {}))
    p = plant.p
    fd = {k: prm[k] for k in ("D_c1", "D_c2") if k in prm}
    if recipe == "FinDim":
        return build_fin_dim(prm["freqs"], p, gains=prm.get("gains", 1.0), **fd)
    if recipe == "FinDimReal":
        return build_fin_dim_real(prm["freqs"], p, gains=prm.get("gains", 1.0), **fd)
    if recipe == "Transport":
        return build_transport(prm["tau"], p, int(prm["N"]),
                               tail_correction=prm.get("tail_correction", True), **fd)
    return build_diagonal(prm["freqs"], p, prm["c"], prm["eps"], indices=prm.get("indices"), **fd)


def build_signal(spec, cfg):
    if spec is None:
        return None
    if isinstance(spec, list):
        return SignalSpec.from_json(spec)
    if "file" in spec:
        return SignalSpec.from_json(_load_json(cfg.path(spec["file"])), spec.get("real_valued"))
    if "entries" in spec:
        if not spec["entries"]:
            return SignalSpec((), int(spec.get("p", 1)), int(spec.get("m_d", 0)))
        return SignalSpec.from_json(spec["entries"], spec.get("real_valued"))
    raise ConfigError("signal spec needs 'file' or 'entries'")


def resolve_setup(cfg, seed=0):
    """Plant, controller, signal and initial state described by ``cfg``."""
    ex = EXAMPLES[cfg.example]() if cfg.example is not None else None
    plant = build_plant(cfg.plant, cfg) if cfg.plant else (ex.plant if ex else None)
    if plant is None:
        raise ConfigError("no plant given")
    if cfg.controller:
        ctrl = build_controller(cfg.controller, plant, cfg)
    elif ex is not None:
        ctrl = ex.ctrl
    else:
        raise ConfigError("no controller given")
    sig = build_signal(cfg.signal, cfg) if cfg.signal is not None else (ex.signal if ex else None)
    x_e0 = _initial_state(cfg.initial_state, plant, ctrl, ex, seed)
    return Setup(plant, ctrl, sig, x_e0, ex.t_final if ex else None, ex.dt if ex else None,
                 cfg.example or "custom")


def _initial_state(spec, plant, ctrl, ex, seed):
    n = plant.n + ctrl.n_c
    if spec is None:
        if ex is not None and ex.plant is plant and ex.ctrl is ctrl:
            return np.concatenate([np.asarray(ex.x0).ravel(), np.asarray(ex.z0).ravel()])
        return np.zeros(n)
    if spec == "zero":
        return np.zeros(n)
    if spec == "random":
        x = np.random.default_rng(seed).standard_normal(n)
        return x / np.linalg.norm(x)
    x = np.asarray(spec, dtype=float).ravel()
    if x.size != n:
        raise ConfigError(f"initial_state has length {x.size}, expected {n}")
    return x


# ---------------------------------------------------------------------------
# checks and artifacts


def _check(name, passed, value=None, threshold=None, note=None):
    row = {"name": name, "passed": bool(passed), "value": _clean(value), "threshold": _clean(threshold)}
    if note:
        row["note"] = note
    return row


def _clean(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v) if np.isfinite(v) else None
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, np.ndarray):
        return [_clean(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    return v


def write_verdict(path, verdict):
    verdict = _clean(verdict)
    verdict["passed"] = all(c["passed"] for c in verdict.get("checks", []))
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(verdict, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return verdict


def write_table(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def write_trajectory(out, traj, starts, values):
    traj.to_csv(os.path.join(out, "trajectory.csv"))
    write_table(os.path.join(out, "error_integral.csv"), ["t", "error_integral"], zip(starts, values))
    line_chart(os.path.join(out, "error.svg"), [(traj.times, traj.error_norms, "||e(t)||")],
               title="Tracking error", xlabel="t", ylabel="||e(t)||")
    line_chart(os.path.join(out, "error_integral.svg"), [(starts, values, "integral")],
               title="Sliding error integral over [t, t+1]", xlabel="t", ylabel="integral", logy=True)
    return ["trajectory.csv", "error_integral.csv", "error.svg", "error_integral.svg"]


def integral_checks(traj, starts, values, th):
    """Threshold checks on the sliding error integral and the pointwise error."""
    checks, info = [], {}
    lo, hi = th["early_window"]
    early = values[(starts >= lo) & (starts <= hi)]
    early_max = float(np.max(early)) if early.size else float("nan")
    t_ratio = th["ratio_time"] if th["ratio_time"] is not None else float(starts[-1])
    idx = int(np.argmin(np.abs(starts - t_ratio)))
    ratio = float(values[idx] / early_max) if early_max > 0 else 0.0
    info.update(early_max=early_max, ratio_time=float(starts[idx]), ratio=ratio)
    if th["integral_ratio"] is not None:
        checks.append(_check("error_integral_ratio", ratio <= th["integral_ratio"], ratio,
                             th["integral_ratio"]))
    if th["block_length"]:
        L = float(th["block_length"])
        edges = np.arange(0.0, starts[-1] + 1e-12, L)
        maxima = [float(np.max(values[(starts >= a) & (starts < a + L)])) for a in edges
                  if np.any((starts >= a) & (starts < a + L))]
        info["block_maxima"] = maxima
        dec = bool(np.all(np.diff(maxima) <= 0))
        checks.append(_check("error_integral_decreasing", dec, maxima, "non-increasing"))
    rows = pointwise_error_decay(traj, th["dyadic_start"])
    info["dyadic_tail_maxima"] = [r[2] for r in rows]
    if th["dyadic_monotone"]:
        m = np.array([r[2] for r in rows])
        checks.append(_check("dyadic_tail_maxima_decreasing", bool(np.all(np.diff(m) < 0)), m,
                             "strictly decreasing"))
    try:
        model = fit_error_rate(starts, values)
        info["error_rate_fit"] = model.to_json()
        if th["fit_kind"] is not None:
            checks.append(_check("error_rate_fit_kind", model.kind == th["fit_kind"], model.kind,
                                 th["fit_kind"]))
    except ValueError as exc:
        info["error_rate_fit"] = str(exc)
        if th["fit_kind"] is not None:
            checks.append(_check("error_rate_fit_kind", False, None, th["fit_kind"], str(exc)))
    return checks, info


def growth_scan(setup, th, samples=None, band=None):
    """Resolvent scan of the closed loop or of the stabilized plant."""
    plant, ctrl = setup.plant, setup.ctrl
    if th["growth_target"] == "stabilized_plant":
        A = stabilized_plant(plant, ctrl).A
    elif th["growth_target"] == "plant":
        A = plant.A
    else:
        A = assemble(plant, ctrl).A_e
    freqs = np.abs(np.array(ctrl.frequencies))
    if band is None:
        band = th["scan_band"] or [0.5 * max(freqs[freqs > 0].min(initial=1.0), 1e-3),
                                   1.1 * max(freqs.max(initial=1.0), 1.0)]
    refine = freqs[freqs > 0] if th["growth_target"] == "closed_loop" else ()
    scan = scan_resolvent(A, band[0], band[1], samples or th["scan_samples"], refine_near=refine)
    window = th["growth_window"]
    if window == "resolved":
        top = float(np.max(np.abs(np.linalg.eigvals(A).imag)))
        window = [2.0, 0.5 * top]
    return scan, window, spectral_abscissa(A)


def growth_checks(scan, window, abscissa, th):
    checks, info = [], {"window": window, "abscissa": abscissa}
    try:
        fit = fit_growth_exponent(scan, window)
        info.update(alpha=fit.alpha, residual=fit.residual, peaks=len(fit.peak_omegas),
                    peak_omegas=fit.peak_omegas, peak_norms=fit.peak_norms)
    except InsufficientPeaks as exc:
        fit = None
        info["error"] = str(exc)
    if th["growth_band"] is not None:
        lo, hi = th["growth_band"]
        ok = fit is not None and lo <= fit.alpha <= hi
        checks.append(_check("resolvent_growth_exponent", ok, fit.alpha if fit else None, [lo, hi]))
    model = predict_decay(scan, abscissa=abscissa, window=window, bounded_tol=th["bounded_tol"])
    info["predicted_decay"] = model.to_json()
    if th["expect_bounded_resolvent"]:
        checks.append(_check("resolvent_bounded", model.kind == "Exponential", model.kind, "Exponential"))
    return checks, info


def _plot_scan(out, scan, title):
    line_chart(os.path.join(out, "resolvent.svg"), [(scan.grid, scan.norms, "||R(i w)||")],
               title=title, xlabel="omega", ylabel="resolvent norm", logx=True, logy=True)


# ---------------------------------------------------------------------------
# commands


def cmd_example(name, out, cfg=None, dt=None, t_final=None):
    """Full pipeline for one of the built-in examples; returns the verdict."""
    if name not in EXAMPLES:
        raise ConfigError(f"unknown example {name!r}; choose from {sorted(EXAMPLES)}")
    cfg = cfg or RunConfig(example=name)
    cfg.example = name
    th = cfg.merged_thresholds()
    ex = EXAMPLES[name]()
    setup = Setup(ex.plant, ex.ctrl, ex.signal, np.concatenate([np.ravel(ex.x0), np.ravel(ex.z0)]),
                  ex.t_final, ex.dt, name)
    dt = dt or ex.dt
    t_final = t_final or ex.t_final
    cl = assemble(setup.plant, setup.ctrl)
    checks = []
    contraction = check_contraction(cl)
    checks.append(_check("contraction", contraction <= th["contraction_tol"], contraction,
                         th["contraction_tol"]))
    im = verify_internal_model(setup.ctrl, setup.signal, rtol=th["internal_model_rtol"])
    checks.append(_check("internal_model", im.all_pass, im.failing(), "no failing frequencies"))

    with ThreadPoolExecutor(max_workers=2) as pool:
        fut_traj = pool.submit(simulate, cl, setup.signal, setup.x_e0, t_final, dt, False)
        fut_scan = pool.submit(growth_scan, setup, th)
        traj = fut_traj.result()
        scan, window, abscissa = fut_scan.result()

    starts, values = sliding_error_integral(traj, th["integral_window"])
    c_int, info_int = integral_checks(traj, starts, values, th)
    c_grow, info_grow = growth_checks(scan, window, abscissa, th)
    checks += c_int + c_grow
    os.makedirs(out, exist_ok=True)
    artifacts = write_trajectory(out, traj, starts, values)
    scan.to_csv(os.path.join(out, "resolvent_scan.csv"))
    _plot_scan(out, scan, f"Resolvent norm ({th['growth_target'].replace('_', ' ')})")
    artifacts += ["resolvent_scan.csv", "resolvent.svg", "verdict.json"]
    verdict = {
        "command": "example",
        "name": name,
        "version": __version__,
        "parameters": {"dt": dt, "t_final": t_final, "n": setup.plant.n, "n_c": setup.ctrl.n_c,
                       "recipe": setup.ctrl.recipe, "D_c1": setup.ctrl.D_c1, "D_c2": setup.ctrl.D_c2},
        "checks": checks,
        "details": {"error_integral": info_int, "resolvent": info_grow,
                    "closed_loop_abscissa": spectral_abscissa(cl.A_e)},
        "artifacts": artifacts,
    }
    return write_verdict(os.path.join(out, "verdict.json"), verdict)


def _decay_analysis(setup, th, seed):
    """Strong, exponential and non-uniform hypothesis reports plus a decay class."""
    plant_S = stabilized_plant(setup.plant, setup.ctrl)
    ctrl = setup.ctrl
    freqs = np.array(ctrl.frequencies)
    top = max(np.max(np.abs(freqs), initial=1.0), 1.0)
    grid = np.linspace(0.0, 1.1 * top, 801)
    pos = np.unique(np.abs(freqs[freqs != 0]))
    eps = th["omega_eps"]
    if eps is None:
        eps = 0.125 * (np.min(np.diff(pos)) if pos.size > 1 else (pos[0] if pos.size else 1.0))
    reports = {}
    strong = check_strong_hypotheses(plant_S, ctrl, grid, seed=seed)
    reports["strong"] = strong.to_json()
    expo = check_exponential_hypotheses(plant_S, ctrl, grid, (freqs, eps), th["gamma"], th["delta"],
                                        th["gamma0"])
    reports["exponential"] = expo.to_json()
    kind, alpha = None, None
    if expo.passed:
        kind = "Exponential"
    elif ctrl.recipe == "Diagonal":
        gamma, g = diagonal_example_laws(ctrl.meta["c"], ctrl.meta["eps"])
        rep, table = check_nonuniform_hypotheses(plant_S, ctrl, ctrl.meta["eps"], gamma, g)
        reports["nonuniform"] = rep.to_json()
        if rep.passed and table is not None:
            w, v = table.omegas, table.values
            alpha = float(np.polyfit(np.log(w), np.log(v), 1)[0])
            kind = "Polynomial"
    if kind is None:
        kind = "Strong" if strong.passed else "Undetermined"
    return kind, alpha, reports


def cmd_verify(cfg, out, seed=0):
    """Machine-readable hypothesis verdicts for a configured plant and controller."""
    th = cfg.merged_thresholds()
    setup = resolve_setup(cfg, seed)
    checks, details = [], {}
    cl = None
    if "contraction" in cfg.analysis:
        cl = assemble(setup.plant, setup.ctrl)
        v = check_contraction(cl)
        checks.append(_check("contraction", v <= th["contraction_tol"], v, th["contraction_tol"]))
    if "internal_model" in cfg.analysis:
        if setup.signal is None:
            raise ConfigError("internal_model analysis needs a signal")
        im = verify_internal_model(setup.ctrl, setup.signal, rtol=th["internal_model_rtol"])
        checks.append(_check("internal_model", im.all_pass, im.failing(), "no failing frequencies"))
        details["internal_model"] = [r.__dict__ for r in im.rows]
    if "decay" in cfg.analysis:
        kind, alpha, reports = _decay_analysis(setup, th, seed)
        details["hypotheses"] = reports
        details["decay_verdict"] = {"kind": kind, "alpha": alpha}
        expect = th["expect_decay"]
        checks.append(_check("decay_class", kind == expect if expect else kind != "Undetermined",
                             kind, expect))
        if th["alpha_band"] is not None:
            lo, hi = th["alpha_band"]
            checks.append(_check("decay_alpha", alpha is not None and lo <= alpha <= hi, alpha, [lo, hi]))
    if "necessity" in cfg.analysis:
        freqs = np.array(setup.ctrl.frequencies)
        pos = np.unique(freqs[freqs > 0])
        rep = check_exp_necessity(stabilized_plant(setup.plant, setup.ctrl), pos, setup.ctrl.D_c2)
        details["necessity"] = rep.to_json()
        expect = th["expect_exponential_impossible"]
        if expect is not None:
            checks.append(_check("exponential_impossible", rep.exponential_impossible == expect,
                                 rep.exponential_impossible, expect))
    if "regulation" in cfg.analysis and setup.signal is not None:
        entries = compute_pi_ext(setup.plant, setup.ctrl, setup.signal)
        rows = check_regulation_conditions(entries, threshold=th["summability_threshold"])
        details["regulation"] = {r.name: {"tail_slope": r.tail_slope, "summable": r.summable,
                                          "total": float(r.partial_sums[-1]) if len(r.partial_sums) else 0.0}
                                 for r in rows}
        checks.append(_check("regulation_summability", all(r.summable for r in rows),
                             [r.name for r in rows if not r.summable], "all summable"))
    os.makedirs(out, exist_ok=True)
    verdict = {"command": "verify", "name": setup.name, "version": __version__, "checks": checks,
               "details": details, "artifacts": ["verdict.json"]}
    return write_verdict(os.path.join(out, "verdict.json"), verdict)


def cmd_scan(cfg, out, seed=0):
    th = cfg.merged_thresholds()
    setup = resolve_setup(cfg, seed)
    sc = cfg.scan or {}
    if "target" in sc:
        th["growth_target"] = sc["target"]
    if "window" in sc:
        th["growth_window"] = sc["window"]
    band = [sc["omega_min"], sc["omega_max"]] if "omega_min" in sc else None
    scan, window, abscissa = growth_scan(setup, th, sc.get("samples"), band)
    checks, info = growth_checks(scan, window, abscissa, th)
    os.makedirs(out, exist_ok=True)
    scan.to_csv(os.path.join(out, "resolvent_scan.csv"))
    _plot_scan(out, scan, "Resolvent norm")
    verdict = {"command": "scan", "name": setup.name, "version": __version__, "checks": checks,
               "details": info, "artifacts": ["resolvent_scan.csv", "resolvent.svg", "verdict.json"]}
    return write_verdict(os.path.join(out, "verdict.json"), verdict)


def cmd_simulate(cfg, out, seed=0, dt=None, t_final=None):
    th = cfg.merged_thresholds()
    setup = resolve_setup(cfg, seed)
    sim = cfg.simulation or {}
    dt = dt or sim.get("dt") or setup.dt
    t_final = t_final or sim.get("t_final") or setup.t_final
    if dt is None or t_final is None:
        raise ConfigError("simulation needs dt and t_final (flags or config)")
    cl = assemble(setup.plant, setup.ctrl)
    sig = setup.signal if setup.signal is not None else SignalSpec((), setup.plant.p, setup.plant.m_d)
    traj = simulate(cl, sig, setup.x_e0, t_final, dt, store_states=False)
    os.makedirs(out, exist_ok=True)
    window = th["integral_window"]
    if t_final >= window:
        starts, values = sliding_error_integral(traj, window)
        artifacts = write_trajectory(out, traj, starts, values)
        checks, info = integral_checks(traj, starts, values, th)
    else:
        traj.to_csv(os.path.join(out, "trajectory.csv"))
        artifacts, checks, info = ["trajectory.csv"], [], {}
    verdict = {"command": "simulate", "name": setup.name, "version": __version__,
               "parameters": {"dt": dt, "t_final": t_final}, "checks": checks, "details": info,
               "artifacts": artifacts + ["verdict.json"]}
    return write_verdict(os.path.join(out, "verdict.json"), verdict)


def _read_columns(path):
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = np.array([[float(v) for v in r[:2]] for r in body if r])
    return header, cols[:, 0], cols[:, 1]


def cmd_fit(cfg, out, seed=0):
    """Decay or growth fit of a two-column CSV table."""
    fit = cfg.fit or {}
    if "table" not in fit:
        raise ConfigError("fit needs a 'table' CSV path")
    header, x, y = _read_columns(cfg.path(fit["table"]))
    kind = fit.get("kind") or ("growth" if header and header[0] == "omega" else "decay")
    checks = []
    if kind == "growth":
        scan = ResolventScan(x, y, ~np.isfinite(y))
        g = fit_growth_exponent(scan, fit.get("window"))
        result = {"kind": "growth", "alpha": g.alpha, "residual": g.residual, "peaks": len(g.peak_omegas)}
        band = fit.get("alpha_band")
        if band:
            checks.append(_check("growth_exponent", band[0] <= g.alpha <= band[1], g.alpha, band))
    else:
        model = fit_error_rate(x, y, t_min=fit.get("t_min"))
        result = model.to_json()
        if fit.get("expect_kind"):
            checks.append(_check("fit_kind", model.kind == fit["expect_kind"], model.kind, fit["expect_kind"]))
    os.makedirs(out, exist_ok=True)
    verdict = {"command": "fit", "version": __version__, "checks": checks, "details": result,
               "artifacts": ["verdict.json"]}
    return write_verdict(os.path.join(out, "verdict.json"), verdict)


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    parser = argparse.ArgumentParser(prog="passreg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required):
        p.add_argument("--config", required=config_required, help="run configuration (JSON)")
        p.add_argument("--out", default=None, help="output directory (default: the config's output_dir, else ./out)")
        p.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
        p.add_argument("--dt", type=float, default=None, help="time step")
        p.add_argument("--t-final", type=float, default=None, help="simulation horizon")

    p = sub.add_parser("example", help="reproduce a built-in example end to end")
    p.add_argument("name", help=f"one of {sorted(EXAMPLES)}")
    common(p, False)
    for name in ("verify", "scan", "simulate", "fit"):
        common(sub.add_parser(name, help=f"{name} from a run configuration"), name in ("fit",))
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        out = args.out if args.out else (cfg.output_dir or "out")
        if args.command == "example":
            if args.name not in EXAMPLES:
                parser.error(f"unknown example {args.name!r}; choose from {sorted(EXAMPLES)}")
            verdict = cmd_example(args.name, out, cfg, args.dt, args.t_final)
        elif args.command == "verify":
            verdict = cmd_verify(cfg, out, args.seed)
        elif args.command == "scan":
            verdict = cmd_scan(cfg, out, args.seed)
        elif args.command == "simulate":
            verdict = cmd_simulate(cfg, out, args.seed, args.dt, args.t_final)
        else:
            verdict = cmd_fit(cfg, out, args.seed)
    except ConfigError as exc:
        print(f"passreg: configuration error: {exc}", file=sys.stderr)
        return 2
    for c in verdict["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}: {c['value']} (threshold {c['threshold']})")
    print(f"verdict: {'PASS' if verdict['passed'] else 'FAIL'} -> {os.path.join(out, 'verdict.json')}")
    return 0 if verdict["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
