"""End-to-end pipeline (build, branch-and-bound, analysis, report) and the
three named studies: charger levels, solar penetration and degradation cost."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import data_io
from .analysis import (
    ACResiduals, LiftedSolution, PostCheck, QualityReport, RecoveredPhasors, RecoveryError, ScenarioReport,
    decode, post_checks, quality_metrics, recover_phasors, scenario_report, validate_ac,
)
from .bnb import BnBSettings, MipOutcome, solve_mip
from .builder import Instance, ScenarioConfig, prepare
from .conic import ConeLayout, ConicProgram, SolverSettings
from .data_io import ProfileSet, fmt
from .fleet import FleetConfig
from .network import NetworkCase

REPORT_BUS = 18
DESK_POINTS = (15, 16, 17, 18, 24, 25, 32, 33)


@dataclass(frozen=True)
class Preset:
    name: str
    points: tuple[int, ...] | None  # None = every point of the fleet section
    rel_gap: float
    description: str = ""


PRESETS = {
    "desk": Preset("desk", DESK_POINTS, 1e-3, "eight charging points on the two long laterals, gap 1e-3"),
    "full": Preset("full", None, 1e-4, "a charging point at every load bus"),
}

STUDIES = ("charging-levels", "solar-penetration", "degradation-cost")


@dataclass(frozen=True)
class StudyInputs:
    network: NetworkCase
    profiles: ProfileSet
    fleet: FleetConfig
    case_path: str = "33bus"
    profiles_path: str | None = None

    @classmethod
    def load(cls, case="33bus", profiles=None, fleet=None) -> "StudyInputs":
        case_path = data_io.resolve_case_path(case)
        if profiles is None:
            doc_profiles = _case_profiles_ref(case_path)
            prof = data_io.load_profiles(doc_profiles) if doc_profiles else None
        else:
            prof = data_io.load_profiles(profiles)
        if prof is None:
            raise data_io.CaseFormatError(f"{case_path}: no profile file given or referenced")
        network = data_io.load_case(case_path, prof)
        fleet_cfg = data_io.load_fleet(fleet if fleet is not None else case_path)
        return cls(network, prof, fleet_cfg, str(case), None if profiles is None else str(profiles))


def _case_profiles_ref(path: Path):
    import yaml

    with open(path) as fh:
        doc = yaml.safe_load(fh)
    ref = doc.get("profiles") if isinstance(doc, dict) else None
    return path.parent / ref if ref else None


@dataclass(frozen=True)
class RunSettings:
    bnb: BnBSettings = field(default_factory=BnBSettings)
    solver: SolverSettings = field(default_factory=SolverSettings)
    post_tol: float = 1e-6

    @classmethod
    def for_preset(cls, preset: Preset, workers: int = 1, time_limit: float | None = None,
                   gap: float | None = None) -> "RunSettings":
        return cls(BnBSettings(rel_gap_tol=gap or preset.rel_gap, workers=workers, time_limit=time_limit))


@dataclass(eq=False)
class ScenarioResult:
    config: ScenarioConfig
    instance: Instance | None = None
    program: ConicProgram | None = None
    mip: MipOutcome | None = None
    solution: LiftedSolution | None = None
    phasors: RecoveredPhasors | None = None
    ac: ACResiduals | None = None
    quality: QualityReport | None = None
    post: PostCheck | None = None
    report: ScenarioReport | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None and self.report is not None

    @property
    def status(self) -> str:
        if self.error:
            return "error"
        return self.mip.status.value if self.mip else "not-run"


def analyse(name: str, instance: Instance, program: ConicProgram, x: np.ndarray, post_tol: float = 1e-6,
            integrality_tol: float = 1e-5, info: dict | None = None):
    sol = decode(program, x)
    ph = recover_phasors(sol, instance.network)
    ac = validate_ac(ph, sol, instance.network, instance.fleet)
    q = quality_metrics(sol, ph, instance.network, ac=ac)
    post = post_checks(sol, instance.network, instance.fleet, post_tol, integrality_tol)
    rep = scenario_report(name, sol, q, instance.network, [ev.bus for ev in instance.fleet.evs], info)
    return sol, ph, ac, q, post, rep


def run_scenario(inputs: StudyInputs, config: ScenarioConfig, settings: RunSettings | None = None) -> ScenarioResult:
    settings = settings or RunSettings()
    res = ScenarioResult(config)
    try:
        res.instance = prepare(inputs.network, inputs.profiles, inputs.fleet, config)
        res.program = res.instance.build()
        res.mip = solve_mip(res.program, settings.bnb, settings.solver)
        if res.mip.x is None:
            res.error = f"no incumbent ({res.mip.status.value})"
            return res
        info = {"status": res.mip.status.value, "gap": res.mip.gap, "nodes": res.mip.nodes}
        (res.solution, res.phasors, res.ac, res.quality, res.post, res.report) = analyse(
            config.name, res.instance, res.program, res.mip.x, settings.post_tol,
            settings.bnb.integrality_tol, info)
    except (RecoveryError, ValueError, ArithmeticError) as exc:
        res.error = f"{type(exc).__name__}: {exc}"
    return res


# --- studies ----------------------------------------------------------------

@dataclass(frozen=True)
class StudySpec:
    kind: str
    variants: tuple[ScenarioConfig, ...]
    base: ScenarioConfig

    def __post_init__(self):
        if not self.variants:
            raise ValueError("a study needs at least one variant")
        axis = {"charging-levels": "charger_mix", "solar-penetration": "solar_penetration",
                "degradation-cost": "degradation_cost"}.get(self.kind)
        if axis is None and self.kind != "custom":
            raise ValueError(f"unknown study kind {self.kind!r}")
        if axis:
            for v in self.variants:
                if replace(v, name=self.base.name, **{axis: getattr(self.base, axis)}) != self.base:
                    raise ValueError(f"variant {v.name} differs from the base outside {axis}")


def base_config(preset: Preset) -> ScenarioConfig:
    return ScenarioConfig(name="base", charger_mix="fast", solar_penetration=0.10, degradation_cost=0.05,
                          points=preset.points)


def study_spec(kind: str, preset: Preset | str = "desk", base: ScenarioConfig | None = None) -> StudySpec:
    if isinstance(preset, str):
        preset = PRESETS[preset]
    base = base or base_config(preset)
    if kind == "charging-levels":
        vs = [replace(base, name=m, charger_mix=m) for m in ("fast", "combined", "level2")]
    elif kind == "solar-penetration":
        vs = [replace(base, name=f"solar{int(round(100 * r)):02d}", solar_penetration=r) for r in (0.05, 0.10, 0.20)]
    elif kind == "degradation-cost":
        vs = [replace(base, name=f"cd{c:g}", degradation_cost=c) for c in (0.05, 0.25, 1.0)]
    else:
        raise ValueError(f"unknown study {kind!r}; choose from {', '.join(STUDIES)}")
    return StudySpec(kind, tuple(vs), base)


@dataclass(frozen=True)
class ComparisonTable:
    variants: tuple[str, ...]
    status: tuple[str, ...]
    total_cost: np.ndarray
    energy_cost: np.ndarray
    degradation_cost: np.ndarray
    peak_grid_kw: np.ndarray
    min_voltage_bus18: np.ndarray
    hours_below_bus18: np.ndarray
    bus_ids: tuple[int, ...]
    hours_below: np.ndarray  # (variants, buses)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["variant", "status", "total_cost", "energy_cost", "degradation_cost", "peak_grid_kw",
                    f"min_voltage_bus{REPORT_BUS}", f"hours_below_bus{REPORT_BUS}"])
        for k, name in enumerate(self.variants):
            w.writerow([name, self.status[k], fmt(self.total_cost[k]), fmt(self.energy_cost[k]),
                        fmt(self.degradation_cost[k]), fmt(self.peak_grid_kw[k]),
                        fmt(self.min_voltage_bus18[k]), int(self.hours_below_bus18[k])])
        return buf.getvalue()

    def violations_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bus", *self.variants])
        for i, b in enumerate(self.bus_ids):
            w.writerow([b, *(int(self.hours_below[k, i]) for k in range(len(self.variants)))])
        return buf.getvalue()


def comparison(results: list[ScenarioResult]) -> ComparisonTable:
    ok = [r for r in results if r.ok]
    bus_ids = ok[0].report.bus_ids if ok else ()
    nan = math.nan

    def col(f):
        return np.array([f(r) if r.ok else nan for r in results])

    hb = np.array([r.report.hours_below if r.ok else np.full(len(bus_ids), -1) for r in results]).reshape(
        len(results), len(bus_ids))
    has18 = REPORT_BUS in bus_ids
    return ComparisonTable(
        variants=tuple(r.config.name for r in results),
        status=tuple(r.status for r in results),
        total_cost=col(lambda r: r.report.costs["total"]),
        energy_cost=col(lambda r: r.report.costs["energy"]),
        degradation_cost=col(lambda r: r.report.costs["degradation"]),
        peak_grid_kw=col(lambda r: float(r.report.grid_p_kw.max())),
        min_voltage_bus18=col(lambda r: float(r.report.bus_voltage(REPORT_BUS).min()) if has18 else nan),
        hours_below_bus18=np.array([r.report.hours_below_at(REPORT_BUS) if r.ok and has18 else -1 for r in results]),
        bus_ids=tuple(bus_ids), hours_below=hb,
    )


@dataclass(eq=False)
class StudyResult:
    spec: StudySpec
    results: list[ScenarioResult]
    table: ComparisonTable


def run_study(spec: StudySpec, inputs: StudyInputs, settings: RunSettings | None = None,
              variant_workers: int = 1) -> StudyResult:
    """Run every variant; a failing variant is reported, never fatal for the rest."""
    settings = settings or RunSettings()

    def one(cfg):
        try:
            return run_scenario(inputs, cfg, settings)
        except Exception as exc:  # isolate unexpected failures per variant
            return ScenarioResult(cfg, error=f"{type(exc).__name__}: {exc}")

    if variant_workers > 1:
        with ThreadPoolExecutor(max_workers=variant_workers) as pool:
            results = list(pool.map(one, spec.variants))
    else:
        results = [one(v) for v in spec.variants]
    return StudyResult(spec, results, comparison(results))


# --- persistence ----------------------------------------------------------------

SOLUTION_FORMAT = "evopf-solution/1"


def solution_document(result: ScenarioResult, inputs: StudyInputs) -> dict:
    cfg = asdict(result.config)
    if cfg["points"] is not None:
        cfg["points"] = list(cfg["points"])
    return {
        "format": SOLUTION_FORMAT,
        "case": inputs.case_path,
        "profiles": inputs.profiles_path,
        "config": cfg,
        "objective": result.mip.objective,
        "x": [float(v) for v in result.mip.x],
    }


def write_scenario(result: ScenarioResult, inputs: StudyInputs, directory) -> list[Path]:
    directory = Path(directory)
    files = data_io.write_report(result.report, directory, hour=REPORT_BUS)
    p = directory / "solution.json"
    with open(p, "w") as fh:
        json.dump(solution_document(result, inputs), fh, indent=1)
        fh.write("\n")
    return files + [p]


def write_study(study: StudyResult, inputs: StudyInputs, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for r in study.results:
        if r.ok:
            written += write_scenario(r, inputs, out / r.config.name)
    for name, text in (("comparison.csv", study.table.to_csv()),
                       ("comparison_violations.csv", study.table.violations_csv())):
        with open(out / name, "w", newline="") as fh:
            fh.write(text)
        written.append(out / name)
    return written


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    messages: tuple[str, ...]


def validate_solution(path, case=None, profiles=None, tol: float = 1e-6) -> ValidationResult:
    """Re-check a saved solution against a fresh build of its scenario."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != SOLUTION_FORMAT:
        raise data_io.CaseFormatError(f"{path}: not a solution file")
    inputs = StudyInputs.load(case or doc["case"], profiles or doc.get("profiles"))
    cfg = dict(doc["config"])
    if cfg.get("points") is not None:
        cfg["points"] = tuple(cfg["points"])
    config = ScenarioConfig(**cfg)
    inst = prepare(inputs.network, inputs.profiles, inputs.fleet, config)
    prog = inst.build()
    x = np.asarray(doc["x"], dtype=float)
    msgs = []
    if x.shape != (prog.n,):
        return ValidationResult(False, (f"solution has {x.size} entries, scenario needs {prog.n}",))
    # linear feasibility of the raw vector
    eq = np.abs(prog.A @ x - prog.b)
    scale = 1.0 + np.abs(prog.b)
    if eq.size and (eq / scale).max() > tol:
        k = int(np.argmax(eq / scale))
        msgs.append(f"equality row {k} violated by {eq[k]:.3e}")
    if np.any(x < prog.lb - tol) or np.any(x > prog.ub + tol):
        msgs.append("variable bounds violated")
    layout = ConeLayout.from_slices(list(prog.cones), prog.G.shape[0])
    dist = layout.dist(prog.h - prog.G @ x)
    if dist > tol:
        msgs.append(f"cone constraints violated by {dist:.3e}")
    obj = float(prog.c @ x)
    if abs(obj - doc.get("objective", obj)) > 1e-9 * max(1.0, abs(obj)):
        msgs.append(f"stored objective {doc.get('objective')} does not match {obj}")
    try:
        _, _, ac, _, post, _ = analyse(config.name, inst, prog, x, tol)
        if not post.ok:
            msgs += post.failures()
        if ac.max > tol:
            msgs.append(f"AC residual {ac.max:.3e} above {tol:.0e}")
    except RecoveryError as exc:
        msgs.append(str(exc))
    return ValidationResult(not msgs, tuple(msgs))
