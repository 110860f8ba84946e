"""Case files, profile tables and result reports.

A case is a YAML document with named table sections (``buses``,
``branches``, ``loads``, ``solar``) written as ``columns`` + ``rows`` plus an
optional ``fleet`` section. Time series live in a plain CSV profile file the
case points at. Values are in engineering units unless ``units: pu``.
"""

from __future__ import annotations

import csv
import io
import logging
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .fleet import ChargerLevel, FleetConfig, FleetError
from .network import Branch, Bus, DisconnectedNetworkError, Load, NetworkCase, NetworkError, SolarUnit, check_radial

log = logging.getLogger(__name__)

BUNDLED = {"33bus": "case33.yaml", "ieee33": "case33.yaml"}


class CaseFormatError(ValueError):
    """Schema violation or dangling reference in an input file."""


@dataclass(frozen=True, eq=False)
class ProfileSet:
    tou_price: np.ndarray  # $/MWh
    demand_shape: np.ndarray
    solar_shape: np.ndarray
    r_c: np.ndarray
    r_d: np.ndarray
    p_travel_kw: np.ndarray  # per EV

    FIELDS = ("tou_price", "demand_shape", "solar_shape", "r_c", "r_d", "p_travel_kw")

    def __post_init__(self):
        for name in self.FIELDS:
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        lengths = {len(getattr(self, name)) for name in self.FIELDS}
        if len(lengths) != 1:
            raise CaseFormatError(f"profile columns have different lengths {sorted(lengths)}")
        if np.any(self.r_c < 0) or np.any(self.r_c > 1) or np.any(self.r_d < 0) or np.any(self.r_d > 1):
            raise CaseFormatError("charging/travel ratios must lie in [0, 1]")
        if np.any(self.r_c + self.r_d > 1 + 1e-12):
            bad = int(np.argmax(self.r_c + self.r_d)) + 1
            raise CaseFormatError(f"r_c + r_d exceeds 1 at hour {bad}")
        for name in ("demand_shape", "solar_shape", "p_travel_kw"):
            if np.any(getattr(self, name) < 0):
                raise CaseFormatError(f"{name} must be nonnegative")

    @property
    def horizon(self) -> int:
        return len(self.tou_price)

    def __eq__(self, other):
        return isinstance(other, ProfileSet) and all(
            np.array_equal(getattr(self, f), getattr(other, f)) for f in self.FIELDS
        )


def resolve_case_path(name_or_path) -> Path:
    key = str(name_or_path)
    if key in BUNDLED:
        return Path(str(resources.files("evopf.data").joinpath(BUNDLED[key])))
    return Path(key)


def bundled_path(filename: str) -> Path:
    return Path(str(resources.files("evopf.data").joinpath(filename)))


def load_profiles(path, horizon: int | None = None) -> ProfileSet:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(ProfileSet.FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise CaseFormatError(f"{path}: missing profile columns {sorted(missing)}")
        cols: dict[str, list[float]] = {name: [] for name in ProfileSet.FIELDS}
        for row in reader:
            for name in ProfileSet.FIELDS:
                try:
                    cols[name].append(float(row[name]))
                except (TypeError, ValueError) as exc:
                    raise CaseFormatError(f"{path}: bad value in column {name}: {row[name]!r}") from exc
    prof = ProfileSet(**cols)
    if horizon is not None and prof.horizon != horizon:
        raise CaseFormatError(f"{path}: {prof.horizon} rows, expected horizon {horizon}")
    return prof


def write_profiles(prof: ProfileSet, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour", *ProfileSet.FIELDS])
        for t in range(prof.horizon):
            w.writerow([t + 1, *(repr(float(getattr(prof, f)[t])) for f in ProfileSet.FIELDS)])


def _table(doc: dict, key: str, required: tuple[str, ...]) -> list[dict]:
    sec = doc.get(key)
    if sec is None:
        return []
    if not isinstance(sec, dict) or "columns" not in sec:
        raise CaseFormatError(f"section {key!r} needs 'columns' and 'rows'")
    cols = list(sec["columns"])
    missing = set(required) - set(cols)
    if missing:
        raise CaseFormatError(f"section {key!r} lacks columns {sorted(missing)}")
    out = []
    for row in sec.get("rows") or []:
        if len(row) != len(cols):
            raise CaseFormatError(f"section {key!r}: row {row} does not match columns {cols}")
        out.append(dict(zip(cols, row)))
    return out


def _read_doc(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise CaseFormatError(f"{path}: not a case document")
    return doc


def load_case(path, profiles: ProfileSet | None = None) -> NetworkCase:
    """Read a case file; loads and solar units take their hourly shape from
    ``profiles`` or, if omitted, from the profile file named in the case."""
    path = resolve_case_path(path)
    doc = _read_doc(path)
    units = doc.get("units", "engineering")
    if units not in ("engineering", "pu"):
        raise CaseFormatError(f"unknown units {units!r}")
    bases = doc.get("bases", {})
    kv = float(bases.get("kv", 12.66))
    mva = float(bases.get("mva", 100.0))
    eng = units == "engineering"
    zb = kv**2 / mva
    kw = 1000.0 * mva

    if profiles is None and "profiles" in doc:
        profiles = load_profiles(path.parent / doc["profiles"])
    horizon = profiles.horizon if profiles is not None else int(doc.get("horizon", 1))
    demand = profiles.demand_shape if profiles is not None else np.ones(horizon)
    sun = profiles.solar_shape if profiles is not None else np.ones(horizon)
    scale = float(doc.get("load_scale", 1.0))

    slack = doc.get("slack_bus")
    try:
        buses = tuple(
            Bus(int(r["id"]), float(r.get("vmin", 0.9)), float(r.get("vmax", 1.1)), int(r["id"]) == slack)
            for r in _table(doc, "buses", ("id",))
        )
        if not buses:
            raise CaseFormatError("case has no buses")
        if slack not in {b.id for b in buses}:
            raise CaseFormatError(f"slack bus {slack!r} is not a bus")
        branches = tuple(
            Branch(
                int(r["from"]), int(r["to"]),
                float(r["r_ohm"]) / zb if eng else float(r["r"]),
                float(r["x_ohm"]) / zb if eng else float(r["x"]),
                float(r["s_max_mva"]) / mva if eng else float(r["s_max"]),
            )
            for r in _table(doc, "branches", ("from", "to") + (("r_ohm", "x_ohm", "s_max_mva") if eng else ("r", "x", "s_max")))
        )
        loads = tuple(
            Load(
                int(r["bus"]),
                scale * float(r["p_kw"]) / kw if eng else scale * float(r["p"]),
                scale * float(r["q_kvar"]) / kw if eng else scale * float(r["q"]),
                demand,
            )
            for r in _table(doc, "loads", ("bus",) + (("p_kw", "q_kvar") if eng else ("p", "q")))
        )
        solar = tuple(
            SolarUnit(int(r["bus"]), float(r["capacity_kw"]) / kw if eng else float(r["capacity"]), sun)
            for r in _table(doc, "solar", ("bus",) + (("capacity_kw",) if eng else ("capacity",)))
        )
        case = NetworkCase(str(doc.get("name", path.stem)), buses, branches, loads, solar, kv, mva)
    except NetworkError as exc:
        if isinstance(exc, DisconnectedNetworkError):
            raise
        raise CaseFormatError(f"{path}: {exc}") from exc
    try:
        if not check_radial(case):
            log.warning("%s: network is not radial; the relaxation is not guaranteed exact", case.name)
    except DisconnectedNetworkError:
        log.warning("%s: network is disconnected", case.name)
    return case


def write_case(case: NetworkCase, path, fleet: FleetConfig | None = None, profiles_file: str | None = None) -> None:
    """Write ``case`` in per-unit form. Hourly shapes are not stored; reload
    with the same :class:`ProfileSet` to reproduce the case exactly."""
    doc = {
        "name": case.name,
        "units": "pu",
        "bases": {"kv": case.base_kv, "mva": case.base_mva},
        "slack_bus": case.slack.id,
        "buses": {"columns": ["id", "vmin", "vmax"], "rows": [[b.id, b.vmin, b.vmax] for b in case.buses]},
        "branches": {
            "columns": ["from", "to", "r", "x", "s_max"],
            "rows": [[br.from_bus, br.to_bus, br.r, br.x, br.s_max] for br in case.branches],
        },
        "loads": {"columns": ["bus", "p", "q"], "rows": [[ld.bus, ld.p_peak, ld.q_peak] for ld in case.loads]},
        "solar": {"columns": ["bus", "capacity"], "rows": [[s.bus, s.capacity] for s in case.solar]},
    }
    if profiles_file:
        doc["profiles"] = profiles_file
    if fleet is not None:
        doc["fleet"] = fleet_to_dict(fleet)
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False, default_flow_style=None)


def fleet_to_dict(fleet: FleetConfig) -> dict:
    out = {
        "levels": {
            "columns": ["name", "p_max_kw", "degradation_weight"],
            "rows": [[lv.name, lv.p_max_kw, lv.degradation_weight] for lv in fleet.levels],
        },
        "points": list(fleet.points),
        "evs_per_point": fleet.evs_per_point,
        "e_min_kwh": fleet.e_min_kwh,
        "e_max_kwh": fleet.e_max_kwh,
        "eta_c": fleet.eta_c,
        "eta_d": fleet.eta_d,
    }
    if fleet.point_levels:
        out["point_levels"] = {int(k): list(v) for k, v in fleet.point_levels.items()}
    return out


def load_fleet(path) -> FleetConfig:
    """Fleet section of a case file, or a standalone fleet file."""
    doc = _read_doc(resolve_case_path(path))
    sec = doc.get("fleet", doc)
    try:
        levels = tuple(
            ChargerLevel(str(r["name"]), float(r["p_max_kw"]), float(r.get("degradation_weight", 1.0)))
            for r in _table(sec, "levels", ("name", "p_max_kw"))
        )
        return FleetConfig(
            levels=levels or FleetConfig().levels,
            points=tuple(int(p) for p in sec.get("points", ())),
            evs_per_point=int(sec.get("evs_per_point", 10)),
            e_min_kwh=float(sec.get("e_min_kwh", 8.0)),
            e_max_kwh=float(sec.get("e_max_kwh", 60.0)),
            eta_c=float(sec.get("eta_c", 0.9)),
            eta_d=float(sec.get("eta_d", 0.9)),
            point_levels={int(k): tuple(v) for k, v in (sec.get("point_levels") or {}).items()},
        )
    except (KeyError, TypeError, FleetError) as exc:
        raise CaseFormatError(f"{path}: bad fleet section: {exc}") from exc


# --- reports ---------------------------------------------------------------

def fmt(v: float) -> str:
    return format(float(v), ".10g")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def report_tables(report, hour: int = 18) -> dict[str, str]:
    """CSV file name -> text for one scenario report."""
    T = report.voltage.shape[0]
    if T == 0:
        raise ValueError("empty horizon")
    buses = list(report.bus_ids)
    hours = range(1, T + 1)
    tables = {
        "voltage.csv": _csv_text(["hour", *[f"bus{b}" for b in buses]],
                                 [[t, *report.voltage[t - 1]] for t in hours]),
        "grid_injection.csv": _csv_text(["hour", "p_kw", "q_kvar"],
                                        [[t, report.grid_p_kw[t - 1], report.grid_q_kvar[t - 1]] for t in hours]),
        "charging.csv": _csv_text(["hour", *[f"ev_bus{b}" for b in report.ev_buses]],
                                  [[t, *report.charging_kw[t - 1]] for t in hours]),
        "costs.csv": _csv_text(["item", "value"], [[k, float(v)] for k, v in report.costs.items()]),
        "violations.csv": _csv_text(["bus", "hours_below"], [[b, int(h)] for b, h in zip(buses, report.hours_below)]),
    }
    if 1 <= hour <= T:
        tables[f"voltage_h{hour}.csv"] = _csv_text(["bus", "voltage"], [[b, v] for b, v in zip(buses, report.voltage[hour - 1])])
    return tables


def write_report(report, directory, svg: bool = True, hour: int = 18) -> list[Path]:
    """Write one scenario's CSV tables (and SVG charts) into ``directory``."""
    from . import svgplot

    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {directory}: {exc}") from exc
    if not os.access(directory, os.W_OK):
        raise PermissionError(f"report directory {directory} is not writable")
    files = report_tables(report, hour)
    if svg:
        T = report.voltage.shape[0]
        hrs = list(range(1, T + 1))
        pos = {b: k for k, b in enumerate(report.bus_ids)}
        if 18 in pos:
            files["voltage_bus18.svg"] = svgplot.line_chart(
                {report.name: (hrs, report.voltage[:, pos[18]])}, "Bus 18 voltage", "hour", "p.u.", hline=0.95)
        files["grid_injection.svg"] = svgplot.line_chart(
            {report.name: (hrs, report.grid_p_kw)}, "Grid injection", "hour", "kW")
    written = []
    for name in sorted(files):
        p = directory / name
        with open(p, "w", newline="") as fh:
            fh.write(files[name])
        written.append(p)
    return written
