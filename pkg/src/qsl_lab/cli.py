"""Command-line front end: ``qsl-lab simulate | bounds | verify | sweep``.

Scenario configs are JSON documents.  Matrices are nested lists whose entries
are either real numbers or ``[re, im]`` pairs.  Every run writes its data
files plus a ``manifest.json`` into ``--out``; outputs carry no timestamps so
identical inputs give byte-identical files.

Exit codes: 0 success, 1 configuration error, 2 integrator tolerance
exceeded, 3 verification violation.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import (
    Thresholds,
    induced_splitting,
    infidelity_bound,
    leakage_bound,
    optimize_shift,
    qsl_times,
    resonance_tau_bound,
    shifted_bound_family,
    universal_bound,
)
from .dynamics import (
    DEFAULT_INTEGRATOR_TOL,
    DEFAULT_STEPS,
    TimeGrid,
    fidelity_series,
    ideal_trajectory,
    leakage_series,
    propagate,
    reservoir_energy_series,
)
from .errors import ConfigError, GapConditionError, PreconditionError, QSLError
from .models import (
    Constant,
    ModelSpec,
    Ramp,
    ResonanceParams,
    Schedule,
    Sinusoid,
    resonance_model,
    sector_analysis,
)
from .operators import ProductSpace, partial_trace_reservoir, random_pure_vector
from .verify import (
    RandomEnsembleSpec,
    check_lemma_equal_rank_identity,
    check_lemma_projector_derivative,
    check_lemma_projector_perturbation,
    check_lemma_unitary_distance,
    check_theorem1,
    crossing_time,
    run_bound_suite,
)

EXIT_OK, EXIT_CONFIG, EXIT_TOLERANCE, EXIT_VIOLATION = 0, 1, 2, 3
SWEEPABLE = ("dE1", "dE2", "J", "h2rest_strength")

log = logging.getLogger("qsl_lab")


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------


def parse_matrix(value, path: str) -> np.ndarray:
    if not isinstance(value, list) or not value or not all(isinstance(r, list) for r in value):
        raise ConfigError(path, "expected a non-empty list of rows")
    rows = []
    for i, row in enumerate(value):
        out = []
        for j, x in enumerate(row):
            if isinstance(x, bool):
                raise ConfigError(f"{path}[{i}][{j}]", "expected a number or [re, im]")
            if isinstance(x, (int, float)):
                out.append(complex(x))
            elif isinstance(x, list) and len(x) == 2 and all(isinstance(y, (int, float)) for y in x):
                out.append(complex(x[0], x[1]))
            else:
                raise ConfigError(f"{path}[{i}][{j}]", "expected a number or [re, im]")
        rows.append(out)
    if len({len(r) for r in rows}) != 1:
        raise ConfigError(path, "rows have different lengths")
    return np.array(rows, dtype=complex)


def _get(tree: dict, key: str, path: str, kind=None, default=...):
    if not isinstance(tree, dict):
        raise ConfigError(path, "expected an object")
    if key not in tree:
        if default is ...:
            raise ConfigError(f"{path}.{key}" if path else key, "missing required entry")
        return default
    value = tree[key]
    where = f"{path}.{key}" if path else key
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(where, "expected a number")
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(where, "expected a finite number")
    elif kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(where, "expected an integer")
    elif kind is not None and not isinstance(value, kind):
        raise ConfigError(where, f"expected {kind.__name__}")
    return value


def parse_envelope(tree, path: str):
    kind = _get(tree, "kind", path, str, "constant")
    if kind == "constant":
        return Constant(_get(tree, "value", path, float, 1.0))
    if kind == "sinusoid":
        return Sinusoid(
            _get(tree, "amplitude", path, float, 1.0),
            _get(tree, "angular_frequency", path, float),
            _get(tree, "phase", path, float, 0.0),
        )
    if kind == "ramp":
        return Ramp(_get(tree, "slope", path, float))
    raise ConfigError(f"{path}.kind", f"unknown envelope kind {kind!r}")


def parse_resonance(tree: dict, path: str) -> ResonanceParams:
    try:
        return ResonanceParams(
            dE1=_get(tree, "dE1", path, float),
            dE2=_get(tree, "dE2", path, float),
            J=_get(tree, "J", path, float),
            n_rest=_get(tree, "n_rest", path, int, 0),
            h2rest_strength=_get(tree, "h2rest_strength", path, float, 0.0),
            h2rest_envelope=parse_envelope(_get(tree, "h2rest_envelope", path, dict, {}), f"{path}.h2rest_envelope"),
            rest_gaps=tuple(float(x) for x in _get(tree, "rest_gaps", path, list, [])),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(path, str(exc)) from exc


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario: model, sector, grid, thresholds and initial state."""

    raw: dict
    model: ModelSpec
    sector: object
    grid: TimeGrid
    thresholds: Thresholds
    rho0: np.ndarray
    resonance: ResonanceParams | None = None
    tolerance: float = DEFAULT_INTEGRATOR_TOL
    shift_scan: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)

    @property
    def digest(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def build_model(tree: dict) -> tuple[ModelSpec, ResonanceParams | None]:
    path = "model"
    builder = _get(tree, "builder", path, str, "matrices")
    if builder == "resonance":
        p = parse_resonance(_get(tree, "params", path, dict), f"{path}.params")
        return resonance_model(p), p
    if builder != "matrices":
        raise ConfigError(f"{path}.builder", f"unknown builder {builder!r}")
    H_S = parse_matrix(_get(tree, "H_S", path), f"{path}.H_S")
    H_R = parse_matrix(_get(tree, "H_R", path), f"{path}.H_R")
    H_I = parse_matrix(_get(tree, "H_I", path), f"{path}.H_I")
    drives = []
    for k, d in enumerate(_get(tree, "H_R_drives", path, list, [])):
        where = f"{path}.H_R_drives[{k}]"
        drives.append(
            (parse_envelope(_get(d, "envelope", where, dict), f"{where}.envelope"), parse_matrix(_get(d, "operator", where), f"{where}.operator"))
        )
    try:
        space = ProductSpace(H_S.shape[0], H_R.shape[0])
        return ModelSpec(space, H_S, Schedule(H_R, tuple(drives)), H_I, label=_get(tree, "label", path, str, "")), None
    except QSLError as exc:
        raise ConfigError(path, str(exc)) from exc


def build_state(tree: dict, model: ModelSpec, sector, seed: int) -> np.ndarray:
    path = "initial_state"
    space = model.space
    kind = _get(tree, "kind", path, str, "basis")
    if kind == "basis":
        s = _get(tree, "system", path, int, 0)
        r = _get(tree, "reservoir", path, int, 0)
        if not 0 <= s < space.d_S:
            raise ConfigError(f"{path}.system", f"index out of range for d_S={space.d_S}")
        if not 0 <= r < space.d_R:
            raise ConfigError(f"{path}.reservoir", f"index out of range for d_R={space.d_R}")
        psi = np.zeros(space.dim, dtype=complex)
        psi[s * space.d_R + r] = 1.0
        return np.outer(psi, psi.conj())
    if kind == "random":
        rng = np.random.default_rng(np.random.SeedSequence([_get(tree, "seed", path, int, seed), 1]))
        if _get(tree, "inside_code", path, bool, True):
            W = np.kron(sector.code_basis, np.eye(space.d_R))
            psi = W @ random_pure_vector(sector.dim_C * space.d_R, rng)
        else:
            psi = random_pure_vector(space.dim, rng)
        return np.outer(psi, psi.conj())
    if kind == "matrix":
        rho = parse_matrix(_get(tree, "joint", path), f"{path}.joint")
    elif kind == "product":
        rho = np.kron(
            parse_matrix(_get(tree, "system", path), f"{path}.system"),
            parse_matrix(_get(tree, "reservoir", path), f"{path}.reservoir"),
        )
    else:
        raise ConfigError(f"{path}.kind", f"unknown initial state kind {kind!r}")
    if rho.shape != (space.dim, space.dim):
        raise ConfigError(path, f"shape {rho.shape} does not match joint dimension {space.dim}")
    return rho


def parse_config(raw: dict, seed: int = 0, steps: int | None = None) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("", "config must be a JSON object")
    model, res = build_model(_get(raw, "model", "", dict))

    sec_tree = _get(raw, "sector", "", dict, {})
    if "interval" in sec_tree:
        interval = sec_tree["interval"]
        if not (isinstance(interval, list) and len(interval) == 2 and all(isinstance(x, (int, float)) for x in interval)):
            raise ConfigError("sector.interval", "expected [lower, upper]")
    elif res is not None:
        interval = [res.dE1 / 2, res.dE1 / 2]
    else:
        raise ConfigError("sector.interval", "missing required entry")
    try:
        sector = sector_analysis(model.H_S, tuple(float(x) for x in interval))
    except QSLError as exc:
        raise ConfigError("sector.interval", str(exc)) from exc

    g = _get(raw, "grid", "", dict)
    try:
        grid = TimeGrid(_get(g, "t_max", "grid", float), steps if steps is not None else _get(g, "steps", "grid", int, DEFAULT_STEPS))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("grid", str(exc)) from exc
    try:
        th = Thresholds(_get(_get(raw, "thresholds", "", dict, {}), "p0", "thresholds", float, 0.5))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("thresholds.p0", str(exc)) from exc

    rho0 = build_state(_get(raw, "initial_state", "", dict, {}), model, sector, seed)
    sweep = _get(raw, "sweep", "", dict, {})
    if sweep:
        param = _get(sweep, "parameter", "sweep", str)
        if res is None:
            raise ConfigError("sweep", "sweeps require the resonance builder")
        if param not in SWEEPABLE:
            raise ConfigError("sweep.parameter", f"must be one of {', '.join(SWEEPABLE)}")
        if "values" in sweep:
            vals = sweep["values"]
            if not isinstance(vals, list) or not all(isinstance(v, (int, float)) for v in vals):
                raise ConfigError("sweep.values", "expected a list of numbers")
        else:
            _get(sweep, "start", "sweep", float)
            _get(sweep, "stop", "sweep", float)
            _get(sweep, "num", "sweep", int)
    return ScenarioConfig(
        raw,
        model,
        sector,
        grid,
        th,
        rho0,
        res,
        _get(raw, "tolerance", "", float, DEFAULT_INTEGRATOR_TOL),
        _get(raw, "shift_scan", "", dict, {}),
        sweep,
    )


def load_config(path: str, seed: int = 0, steps: int | None = None) -> ScenarioConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return parse_config(raw, seed, steps)


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return f"{x:.17g}"


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else fmt(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_jsonable(data), sort_keys=True, indent=2) + "\n", encoding="ascii")


def manifest(command: str, args, extra: dict) -> dict:
    return {
        "command": command,
        "version": __version__,
        "seed": args.seed,
        "steps": args.steps,
        **extra,
    }


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def run_simulation(cfg: ScenarioConfig):
    """Trajectory plus the per-time series written by ``simulate``."""
    traj = propagate(cfg.model, cfg.rho0, cfg.grid, tolerance=cfg.tolerance)
    p = leakage_series(traj, cfg.sector)
    ideal = ideal_trajectory(cfg.model.H_S, partial_trace_reservoir(traj.joint_states[0], cfg.model.space), cfg.grid)
    F, sin_half = fidelity_series(traj, ideal)
    energy = None
    if cfg.model.constant_reservoir:
        energy, _ = reservoir_energy_series(traj, cfg.model)
    return traj, p, F, sin_half, energy


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.seed, args.steps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    traj, p, F, sin_half, energy = run_simulation(cfg)
    header = ["t", "p_leak", "fidelity", "sin_half_theta"] + (["reservoir_energy"] if energy is not None else [])
    cols = [cfg.grid.points, p.values, F.values, sin_half.values] + ([energy.values] if energy is not None else [])
    write_csv(out / "trajectory.csv", header, zip(*cols))
    write_json(
        out / "manifest.json",
        manifest(
            "simulate",
            args,
            {
                "config_sha256": cfg.digest,
                "integrator": traj.method,
                "integrator_error_estimate": traj.integrator_error_estimate,
                "integrator_tolerance": cfg.tolerance,
                "tolerance_exceeded": traj.tolerance_exceeded,
                "max_p_leak": float(p.values.max()),
                "outputs": ["trajectory.csv"],
            },
        ),
    )
    return EXIT_TOLERANCE if traj.tolerance_exceeded else EXIT_OK


def _shift_values(cfg: ScenarioConfig) -> list[float]:
    scan = cfg.shift_scan
    if not scan:
        return []
    if "values" in scan:
        return [float(v) for v in scan["values"]]
    h = cfg.model.interaction_norm
    F_min = 2 * h - cfg.sector.gap
    num = _get(scan, "num", "shift_scan", int, 12)
    return list(F_min + h * np.logspace(-2, 3, num))


def cmd_bounds(args) -> int:
    cfg = load_config(args.config, args.seed, args.steps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model, sector, grid, th = cfg.model, cfg.sector, cfg.grid, cfg.thresholds
    header, cols = ["t"], [grid.points]
    ub = universal_bound(model.H_I, grid)
    header += ["universal_bound", "universal_spectral_width", "universal_operator_norm"]
    cols += [ub.total, ub.components["spectral_width"], ub.components["operator_norm"]]
    summary = {"gap": sector.gap, "spread": sector.spread, "interaction_norm": model.interaction_norm}
    try:
        lb = leakage_bound(model, sector, grid)
        isr = induced_splitting(model.H_I, sector, model.space, seed=args.seed)
        ib = infidelity_bound(model, sector, grid, induced=isr.value)
        header += ["leakage_bound", "leakage_bound_clipped", "leakage_static_rotation", "leakage_omega_integral"]
        cols += [lb.total, lb.clipped, lb.components["static_rotation"], lb.components["omega_integral"]]
        header += ["infidelity_bound", "infidelity_static_rotation", "infidelity_omega_integral", "infidelity_induced_splitting_term", "infidelity_spread_term"]
        cols += [ib.total] + [ib.components[k] for k in ("static_rotation", "omega_integral", "induced_splitting_term", "spread_term")]
        summary["induced_splitting"] = {"value": isr.value, "certificate_lower": isr.certificate.lower, "qed_condition": isr.certificate.qed_condition}
        summary["gap_condition"] = True
    except GapConditionError as exc:
        summary["gap_condition"] = False
        summary["gap_condition_message"] = str(exc)
        isr = None

    if model.constant_reservoir and summary["gap_condition"]:
        t = qsl_times(model, sector, th, induced=isr.value)
        summary["qsl_times"] = {
            "p0": th.p0,
            "c_of_p0": th.c_of_p0,
            "tau_leak_lower": t.tau_leak_lower,
            "tau_fid_lower": t.tau_fid_lower,
            "tau_min_lower": t.tau_min_lower,
            "provenance": t.provenance,
            "large_gap_applicable": t.large_gap_applicable,
        }
    if cfg.resonance is not None:
        summary["resonance_tau_bound"] = resonance_tau_bound(cfg.resonance, th, grid.t_max)

    outputs = ["bounds.csv"]
    shifts = _shift_values(cfg)
    if shifts:
        induced = isr.value if isr is not None else induced_splitting(model.H_I, sector, model.space, seed=args.seed).value
        rows = []
        for F in shifts:
            try:
                leak = shifted_bound_family(model, sector, grid, F, "leakage").total[-1]
                fid = shifted_bound_family(model, sector, grid, F, "infidelity", induced).total[-1]
            except QSLError:
                leak = fid = math.nan
            rows.append((F, leak, fid))
        write_csv(out / "shift_scan.csv", ["F_shift", "leakage_bound_at_t_max", "infidelity_bound_at_t_max"], rows)
        F_best, v_best = optimize_shift(model, sector, grid, grid.t_max, "infidelity", induced)
        summary["shift_optimum"] = {"F_best": F_best, "infidelity_bound_at_t_max": v_best}
        outputs.append("shift_scan.csv")

    write_csv(out / "bounds.csv", header, zip(*cols))
    write_json(out / "summary.json", summary)
    outputs.append("summary.json")
    write_json(out / "manifest.json", manifest("bounds", args, {"config_sha256": cfg.digest, "outputs": outputs}))
    return EXIT_OK


def verify_reports(suite: str, seed: int, count: int, steps: int, jobs: int, inject_fault: bool = False) -> dict:
    reports = {}
    if inject_fault:
        spec = RandomEnsembleSpec(seed=seed, count=max(1, min(count, 3)))
        reports.update(run_bound_suite(spec, steps, jobs=jobs, bound_sign=-1.0))
        return reports
    if suite in ("bounds", "all"):
        reports.update(run_bound_suite(RandomEnsembleSpec(seed=seed, count=count), steps, jobs=jobs))
        robust = RandomEnsembleSpec(seed=seed + 1, count=max(1, count // 4), gap_ratio=(0.05, 2.0), state_policy="any")
        r = run_bound_suite(robust, steps, jobs=jobs)
        reports["universal_bound_robustness"] = replace(r["universal_bound"], check_name="universal_bound_robustness")
    if suite in ("lemmas", "all"):
        reports["lemma_unitary_distance"] = check_lemma_unitary_distance(count, seed)
        reports["lemma_projector_perturbation"] = check_lemma_projector_perturbation(count, seed)
        reports["lemma_equal_rank_identity"] = check_lemma_equal_rank_identity(count, seed)
        reports["lemma_projector_derivative"] = check_lemma_projector_derivative(count, seed)
    if suite in ("theorem1", "all"):
        reports["theorem1"] = check_theorem1(count, seed, jobs=jobs)
    return reports


def cmd_verify(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    steps = args.steps if args.steps is not None else DEFAULT_STEPS
    reports = verify_reports(args.suite, args.seed, args.count, steps, args.jobs, args.inject_fault)
    rows = []
    for name in sorted(reports):
        r = reports[name]
        write_json(out / f"report_{name}.json", r.to_dict())
        rows.append((name, str(r.instances), str(r.violations), r.worst_margin, r.tolerance))
    write_csv(out / "verification_summary.csv", ["check", "instances", "violations", "worst_margin", "tolerance"], rows)
    total = sum(r.violations for r in reports.values())
    write_json(
        out / "manifest.json",
        manifest("verify", args, {"suite": args.suite, "count": args.count, "total_violations": total, "checks": sorted(reports)}),
    )
    for name in sorted(reports):
        r = reports[name]
        print(f"{name}: {r.instances} instances, {r.violations} violations, worst margin {fmt(r.worst_margin)}")
    return EXIT_VIOLATION if total else EXIT_OK


def sweep_values(sweep: dict) -> list[float]:
    if not sweep:
        return []
    if "values" in sweep:
        return [float(v) for v in sweep["values"]]
    return [float(v) for v in np.linspace(sweep["start"], sweep["stop"], sweep["num"])]


def sweep_point(args) -> tuple:
    """Measured crossing times and bound values for one swept parameter value."""
    raw, param, value, seed, steps = args
    raw = json.loads(json.dumps(raw))
    if param is not None:
        raw["model"]["params"][param] = value
        raw.pop("sector", None)
    cfg = parse_config(raw, seed, steps)
    traj, p, F, _, _ = run_simulation(cfg)
    th = cfg.thresholds
    tau_leak = crossing_time(p, th.p0, "rising")
    tau_fid = crossing_time(F, th.fidelity_threshold, "falling")
    try:
        lb_end = float(leakage_bound(cfg.model, cfg.sector, cfg.grid).total[-1])
    except GapConditionError:
        lb_end = math.nan
    res_bound = resonance_tau_bound(cfg.resonance, th, cfg.grid.t_max) if cfg.resonance else math.nan
    tau_leak_lower = tau_fid_lower = math.nan
    if cfg.model.constant_reservoir:
        try:
            t = qsl_times(cfg.model, cfg.sector, th)
            tau_leak_lower = t.tau_leak_lower
            tau_fid_lower = t.tau_fid_lower if t.tau_fid_lower is not None else math.nan
        except (GapConditionError, PreconditionError):
            pass
    return (
        param or "",
        value,
        tau_leak,
        tau_fid,
        tau_leak_lower,
        tau_fid_lower,
        res_bound,
        lb_end,
        float(p.values.max()),
        traj.integrator_error_estimate,
        traj.tolerance_exceeded,
    )


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, args.seed, args.steps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    values = sweep_values(cfg.sweep)
    param = cfg.sweep.get("parameter") if values else None
    steps = cfg.grid.steps
    if not values:
        tasks = [(cfg.raw, None, math.nan, args.seed, steps)]
    else:
        tasks = [(cfg.raw, param, v, args.seed, steps) for v in values]
    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(sweep_point, tasks))
    else:
        results = [sweep_point(t) for t in tasks]
    header = [
        "parameter",
        "value",
        "tau_leak_measured",
        "tau_fid_measured",
        "tau_leak_lower",
        "tau_fid_lower",
        "resonance_tau_bound",
        "leakage_bound_at_t_max",
        "max_p_leak",
        "integrator_error_estimate",
    ]
    write_csv(out / "sweep.csv", header, [r[:-1] for r in results])
    exceeded = any(r[-1] for r in results)
    write_json(
        out / "manifest.json",
        manifest("sweep", args, {"config_sha256": cfg.digest, "parameter": param, "points": len(results), "tolerance_exceeded": exceeded, "outputs": ["sweep.csv"]}),
    )
    return EXIT_TOLERANCE if exceeded else EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("QSL_JOBS", "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsl-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="scenario JSON file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--steps", type=int, default=None, help="override grid steps")
        p.add_argument("--jobs", type=int, default=_default_jobs(), help="worker processes (default: $QSL_JOBS or 1)")

    common(sub.add_parser("simulate", help="propagate and write leakage/fidelity series"))
    common(sub.add_parser("bounds", help="evaluate bound series and QSL time bounds"))
    v = sub.add_parser("verify", help="run randomized verification suites")
    common(v, config=False)
    v.add_argument("--suite", choices=("bounds", "lemmas", "theorem1", "all"), default="all")
    v.add_argument("--count", type=int, default=20)
    v.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    common(sub.add_parser("sweep", help="sweep one resonance parameter"))
    return parser


COMMANDS = {"simulate": cmd_simulate, "bounds": cmd_bounds, "verify": cmd_verify, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
