"""Scenario files: load, run, assert.

A scenario is YAML or JSON with ``schema_version``, ``name``, ``kind``,
``inputs``, ``parameters`` and an optional ``expected`` list of
``{quantity, op, value[, tol]}`` assertions on the run's metrics.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import _textio, generators
from .imcf_core import NonProperWarning, solve_weak_imcf, verify_weak_solution, weak_tolerance
from .monotonicity_audit import (
    LOG2,
    AuditError,
    AuditReport,
    FlowTrace,
    audit_trace,
    bbn_bound,
    gap_certificate,
)
from .neck_builder import AxisymSurface, NeckError, barrier_length, build_neck, stability_first_eigen
from .tree_flow import SplittingBoundViolated, TreeSpecError, build_tree, solve_tree_flow, splitting_time
from .warped_geometry import GeometryError, WarpProfile

SCHEMA_VERSION = 1
KINDS = ("line-flow", "tree-flow", "audit-only", "neck-build", "gap-check")
OPS = {
    "<": lambda a, b, tol: a < b,
    "<=": lambda a, b, tol: a <= b + tol,
    ">": lambda a, b, tol: a > b,
    ">=": lambda a, b, tol: a >= b - tol,
    "==": lambda a, b, tol: a == b if tol == 0 else abs(a - b) <= tol,
    "approx": lambda a, b, tol: abs(a - b) <= tol,
}


class ConfigError(ValueError):
    pass


@dataclass
class Expectation:
    quantity: str
    op: str
    value: Any
    tol: float = 0.0


@dataclass
class Scenario:
    name: str
    kind: str
    inputs: dict = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)
    expected: list = field(default_factory=list)
    source: Path | None = None
    schema_version: int = SCHEMA_VERSION

    def param(self, key, default=None):
        return self.parameters.get(key, default)


@dataclass
class RunResult:
    scenario: Scenario
    report: AuditReport
    metrics: dict
    artifacts: dict  # file name -> text

    @property
    def passed(self) -> bool:
        return self.report.passed

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1


# -- loading ------------------------------------------------------------------------

def parse_scenario(data: Any, source: Path | None = None) -> Scenario:
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a mapping")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    kind = data.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}")
    name = data.get("name") or (source.stem if source else None)
    if not name:
        raise ConfigError("scenario needs a name")
    inputs = data.get("inputs") or {}
    params = data.get("parameters") or {}
    if not isinstance(inputs, dict) or not isinstance(params, dict):
        raise ConfigError("inputs and parameters must be mappings")
    expected = []
    for item in data.get("expected") or []:
        try:
            exp = Expectation(str(item["quantity"]), str(item["op"]), item["value"], float(item.get("tol", 0.0)))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad expectation {item!r}: {exc}") from None
        if exp.op not in OPS:
            raise ConfigError(f"unknown op {exp.op!r}")
        expected.append(exp)
    sc = Scenario(str(name), kind, inputs, params, expected, source, version)
    _check_required(sc)
    return sc


def _check_required(sc: Scenario) -> None:
    need = {
        "line-flow": ["profile"],
        "tree-flow": ["tree"],
        "audit-only": ["trace"],
        "neck-build": ["surface"],
        "gap-check": [],
    }[sc.kind]
    missing = [k for k in need if k not in sc.inputs]
    if missing:
        raise ConfigError(f"{sc.kind} scenario missing inputs {missing}")
    t_max = sc.param("t_max")
    if t_max is not None and not float(t_max) > 0:
        raise ConfigError("t_max must be positive")
    n = sc.param("n")
    if n is not None and int(n) < 8:
        raise ConfigError("grid size N must be at least 8")
    if sc.kind == "gap-check":
        has_pair = "lambda" in sc.parameters and "A0" in sc.parameters
        if not (has_pair or "lambda_A0_over_pi" in sc.parameters):
            raise ConfigError("gap-check needs lambda and A0 (or lambda_A0_over_pi)")


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return parse_scenario(data, path)


def _resolve(sc: Scenario, value):
    """Inline mapping, or a path relative to the scenario file."""
    if isinstance(value, str):
        base = sc.source.parent if sc.source else Path.cwd()
        path = (base / value).resolve()
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from None
        if path.suffix == ".csv":
            return text
        return json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    return value


# -- inputs ---------------------------------------------------------------------------

PROFILE_CONSTRUCTORS = ("flat", "cylinder", "round_sphere", "schwarzschild", "dumbbell")


def _profile_input(sc: Scenario):
    spec = _resolve(sc, sc.inputs["profile"])
    r_start = sc.inputs.get("r_start")
    if isinstance(spec, dict) and "generator" in spec:
        gen = spec["generator"]
        if gen != "psc_dumbbell":
            raise ConfigError(f"unknown profile generator {gen!r}")
        draw = generators.psc_dumbbell(int(spec.get("seed", sc.param("seed", 0))), n=int(spec.get("n", 2048)))
        return draw.profile, draw.r_start if r_start is None else float(r_start)
    if isinstance(spec, dict) and "constructor" in spec:
        args = dict(spec)
        name = args.pop("constructor")
        if name not in PROFILE_CONSTRUCTORS:
            raise ConfigError(f"unknown profile constructor {name!r}")
        p = getattr(WarpProfile, name)(**args)
    else:
        p = WarpProfile.from_dict(spec)
    return p, p.r_min if r_start is None else float(r_start)


_TREE_GENERATORS = {
    "random_junction_tree": lambda s, spec: generators.random_junction_tree(
        s, k=int(spec.get("k", 2)), balanced=bool(spec.get("balanced", True)), n=int(spec.get("n", 512))
    ),
    "junction_tree": lambda s, spec: generators.junction_tree(
        spec["entry_ratios"], seed=s, n=int(spec.get("n", 512)), growth=float(spec.get("growth", 4.0))
    ),
    "necked_trunk_tree": lambda s, spec: generators.necked_trunk_tree(s, n=int(spec.get("n", 1024))),
}


def _tree_input(sc: Scenario):
    spec = _resolve(sc, sc.inputs["tree"])
    if isinstance(spec, dict) and "generator" in spec:
        gen = _TREE_GENERATORS.get(spec["generator"])
        if gen is None:
            raise ConfigError(f"unknown tree generator {spec['generator']!r}")
        return gen(int(spec.get("seed", sc.param("seed", 0))), spec)
    return build_tree(spec)


def _inject(trace: FlowTrace, sc: Scenario) -> FlowTrace:
    """Optional fault injection, used to prove the audit is live."""
    inj = sc.param("inject") or {}
    if "willmore_factor" in inj:
        trace = trace.replace(willmore=trace.willmore * float(inj["willmore_factor"]))
    if "area_log_shift" in inj:
        shift = np.where(trace.t > trace.t[0], math.exp(float(inj["area_log_shift"])), 1.0)
        trace = trace.replace(total_area=trace.total_area * shift)
    return trace


# -- bound checks shared by flows ----------------------------------------------------------

def _bound_checks(report: AuditReport, metrics: dict, trace: FlowTrace, A0: float,
                  t_split: float, t_end: float, branching: bool) -> None:
    lam_global = float(np.min(trace.min_R))
    metrics["lambda"] = lam_global
    metrics["A0"] = A0
    if lam_global <= 0:
        report.add("bbn_bound", True, applicable=False, note="not a PSC scenario")
        report.add("gap_consistency", True, applicable=False, note="not a PSC scenario")
        return
    bbn = bbn_bound(lam_global, A0)
    metrics["lambda_A0_over_pi"] = lam_global * A0 / math.pi
    report.add("bbn_bound", bbn.passed, bbn.ratio, note=bbn.describe())

    minimal_start = trace.willmore[0] <= 1e-9 * max(1.0, float(np.max(trace.willmore)))
    if not (minimal_start and t_split >= LOG2 and t_end >= LOG2):
        why = []
        if not minimal_start:
            why.append("initial sphere not minimal")
        if t_split < LOG2:
            why.append("splits before log 2")
        if t_end < LOG2:
            why.append("flow ends before log 2")
        report.add("gap_consistency", True, applicable=False, note="; ".join(why))
        return
    k = int(np.searchsorted(trace.t, LOG2, side="left"))
    lam = float(trace.min_R[min(k, len(trace.t) - 1)])
    gap = gap_certificate(max(lam, 0.0), A0)
    metrics["gap_lambda"] = lam
    note = gap.describe()
    if not gap.passed:
        note += "; model inconsistency" + (" on a branching tree (k >= 3 ends)" if branching else "")
    report.add("gap_consistency", gap.passed, gap.ratio, LOG2, note=note)


# -- runners -------------------------------------------------------------------------------

def _run_line(sc: Scenario, seed: int, tol_scale: float):
    p, r_start = _profile_input(sc)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NonProperWarning)
        sol = solve_weak_imcf(p, r_start)
    trace = sol.trace(sc.param("t_max"))
    trace = _inject(trace, sc)
    lam = sc.param("lambda")
    report = audit_trace(trace, lam=lam, area_tol=float(sc.param("area_tol", 2 * sol.h)), tol_scale=tol_scale)
    for w in caught:
        report.notes.append(str(w.message))
    metrics = {
        "proper": sol.proper,
        "h": sol.h,
        "t_end": float(trace.t[-1]),
        "n_jumps": len(sol.jump_regions),
        "willmore_min": float(trace.willmore.min()),
        "willmore_max": float(trace.willmore.max()),
        "hawking_min": float(trace.hawking.min()),
        "hawking_max": float(trace.hawking.max()),
        "hawking_spread": float(np.ptp(trace.hawking)),
        "max_area_dev": float(np.max(np.abs(trace.total_area / (trace.total_area[0] * np.exp(trace.t)) - 1))),
        "final_chi": int(trace.chi[-1]),
    }
    if p.kind == "flat":
        metrics["u_error"] = float(np.max(np.abs(sol.u - 2 * np.log(sol.r / sol.r[0]))))
    trials = int(sc.param("certify_trials", 0))
    if trials:
        res = verify_weak_solution(sol, trials, seed)
        tol = weak_tolerance(sol) * tol_scale
        metrics["weak_residual"] = res
        report.add("weak_solution", res <= tol, res, note=f"tol_quad={tol:.3e}")
    _bound_checks(report, metrics, trace, sol.A0, math.inf, float(trace.t[-1]), branching=False)
    artifacts = {
        "trace.csv": trace.to_csv(),
        "solution.csv": sol.to_csv(),
        "events.jsonl": "".join(
            json.dumps({"time": float(sol.u[jr.first]), "kind": "jump",
                        "payload": {"a": jr.a, "b": jr.b, "level": jr.level}}, sort_keys=True) + "\n"
            for jr in sol.jump_regions
        ),
    }
    return report, metrics, artifacts


def _run_tree(sc: Scenario, seed: int, tol_scale: float):
    tree = _tree_input(sc)
    t_max = float(sc.param("t_max", 10.0))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NonProperWarning)
        res = solve_tree_flow(tree, t_max)
    trace = _inject(res.trace, sc)
    report = audit_trace(trace, lam=sc.param("lambda"), area_tol=float(sc.param("area_tol", 2 * res.h)),
                         tol_scale=tol_scale)
    for w in caught:
        report.notes.append(str(w.message))
    report.notes.extend(res.notes)
    try:
        T = splitting_time(res)
        report.add("splitting_bound", True, T, note="T_split >= log(k floor / A0) - 2h"
                   if tree.systole_floor else "no systole floor: bound not asserted")
    except SplittingBoundViolated as exc:
        T = res.T_split
        report.add("splitting_bound", False, T, note=str(exc))
    worst = max((abs(ev.area_after - ev.area_before) / ev.area_before for ev in res.jump_events), default=0.0)
    report.add("event_area_conservation", worst <= 2 * res.h, worst)
    n_ends = 1 + sum(1 for e in tree.edges if tree.is_leaf(e.id))
    metrics = {
        "proper": res.proper,
        "h": res.h,
        "T_split": T,
        "t_end": res.t_end,
        "n_events": len(res.jump_events),
        "n_jumps": sum(1 for ev in res.jump_events if ev.kind == "jump"),
        "n_ends": n_ends,
        "max_components": int(trace.n_components.max()),
        "final_chi": int(trace.chi[-1]),
        "max_area_dev": float(np.max(np.abs(trace.total_area / (res.A0 * np.exp(trace.t)) - 1))),
        "min_slice_area": tree.min_slice_area,
    }
    if tree.systole_floor:
        metrics["split_bound"] = math.log(2 * tree.systole_floor / res.A0) - 2 * res.h
    _bound_checks(report, metrics, trace, res.A0, T, res.t_end, branching=n_ends >= 3)
    artifacts = {
        "trace.csv": trace.to_csv(),
        "events.jsonl": res.events_text(),
        "components.csv": res.components_csv(),
    }
    return report, metrics, artifacts


def _run_audit(sc: Scenario, seed: int, tol_scale: float):
    text = _resolve(sc, sc.inputs["trace"])
    if not isinstance(text, str):
        raise ConfigError("audit-only input must be a CSV trace path")
    trace = _inject(FlowTrace.from_csv(text), sc)
    lam = sc.param("lambda")
    report = audit_trace(trace, lam=lam, area_tol=float(sc.param("area_tol", 1e-3)), tol_scale=tol_scale)
    metrics = {"n_samples": len(trace), "t_end": float(trace.t[-1])}
    A0 = sc.param("A0")
    if lam is not None and A0 is not None:
        _add_gap(report, metrics, float(lam), float(A0))
    return report, metrics, {}


def _add_gap(report: AuditReport, metrics: dict, lam: float, A0: float) -> None:
    gap = gap_certificate(lam, A0)
    bbn = bbn_bound(lam, A0)
    metrics.update(lambda_A0_over_pi=lam * A0 / math.pi, gap_pass=gap.passed, bbn_pass=bbn.passed,
                   c_over_pi=gap.c_value / math.pi)
    report.add("gap_certificate", gap.passed, gap.ratio, note=gap.describe())
    report.add("bbn_bound", bbn.passed, bbn.ratio, note=bbn.describe())


def _run_gap(sc: Scenario, seed: int, tol_scale: float):
    if "lambda_A0_over_pi" in sc.parameters:
        lam, A0 = float(sc.param("lambda_A0_over_pi")) * math.pi, 1.0
    else:
        lam, A0 = float(sc.param("lambda")), float(sc.param("A0"))
    report, metrics = AuditReport(), {}
    _add_gap(report, metrics, lam, A0)
    return report, metrics, {}


def _surface_input(sc: Scenario) -> AxisymSurface:
    spec = _resolve(sc, sc.inputs["surface"])
    n_cells = int(spec.get("n_cells", 400))
    if "a" in spec:
        return AxisymSurface(np.asarray(spec["a"], float))
    coeffs = spec.get("coeffs", [])
    return AxisymSurface.perturbed(coeffs, float(spec.get("radius", 1.0)), n_cells)


def _run_neck(sc: Scenario, seed: int, tol_scale: float):
    base = _surface_input(sc)
    mu_K, _ = stability_first_eigen(base, base.gauss_curvature)
    if "lambda" in sc.parameters:
        lam = float(sc.param("lambda"))
    else:
        # largest floor the surface supports is 2 mu_1(-Delta + K)
        lam = 2 * mu_K * float(sc.param("lambda_fraction", 1.0))
    s = dataclasses.replace(base, lam=lam)
    mu, phi = stability_first_eigen(s)
    tol_eig = float(sc.param("tol_eig", 1e-6)) * tol_scale
    T_len = float(sc.param("T_len", 1.0))
    report = AuditReport()
    metrics = {"mu1": mu, "lambda": lam, "surface_area": s.area}
    try:
        neck = build_neck(s, phi, lam, T_len, tol_eig)
        metrics["min_R"] = neck.min_R
        report.add("neck_curvature", True, neck.min_R - lam, note=f"min R - lambda, tol {tol_eig:.1e}")
    except NeckError as exc:
        report.add("neck_curvature", False, note=str(exc))
    c0 = sc.param("c0")
    if c0 is not None:
        A0 = float(sc.param("A0", s.area))
        bar = barrier_length(A0, float(c0), int(sc.param("exponent", 2)))
        metrics.update(barrier_length=bar.length, crossing_bound=bar.crossing_bound)
        report.add("barrier_crossing", bar.holds, bar.crossing_bound - bar.twice_area,
                   note=f"c0 * 2 floor(T/4) = {bar.crossing_bound:.6g} vs 2 A0 = {bar.twice_area:.6g}")
    artifacts = {}
    if report.passed:
        artifacts["neck.json"] = neck.to_text()
    return report, metrics, artifacts


RUNNERS = {
    "line-flow": _run_line,
    "tree-flow": _run_tree,
    "audit-only": _run_audit,
    "neck-build": _run_neck,
    "gap-check": _run_gap,
}

CONFIG_ERRORS = (ConfigError, GeometryError, TreeSpecError, AuditError, NeckError, KeyError, TypeError, ValueError)


def run_scenario(sc: Scenario, seed: int | None = None, tol_scale: float = 1.0) -> RunResult:
    """Run one scenario. Configuration problems raise; failed checks do not."""
    seed = int(sc.param("seed", 0)) if seed is None else int(seed)
    report, metrics, artifacts = RUNNERS[sc.kind](sc, seed, tol_scale)
    for exp in sc.expected:
        if exp.quantity not in metrics:
            raise ConfigError(f"unknown quantity {exp.quantity!r} for a {sc.kind} scenario")
        got = metrics[exp.quantity]
        ok = bool(OPS[exp.op](got, exp.value, exp.tol))
        report.add(f"expect {exp.quantity} {exp.op} {exp.value}", ok,
                   float(got) if isinstance(got, (int, float)) else 0.0, note=f"got {got!r}")
    artifacts["report.json"] = _textio.dumps({
        "scenario": sc.name,
        "kind": sc.kind,
        "seed": seed,
        "passed": report.passed,
        "metrics": metrics,
        "report": report.to_dict(),
    })
    return RunResult(sc, report, metrics, artifacts)


def write_artifacts(result: RunResult, out_dir) -> Path:
    """Write every artifact atomically into out_dir/<scenario name>/."""
    target = Path(out_dir) / result.scenario.name
    target.mkdir(parents=True, exist_ok=True)
    for name, text in result.artifacts.items():
        fd, tmp = tempfile.mkstemp(dir=target, prefix=f".{name}.")
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, target / name)
    return target
