"""EV fleet semantics: charger levels, energy dynamics and availability.

Powers are per-unit on the system MVA base and energies are per-unit hours.
An :class:`EvSpec` may stand for ``count`` identical vehicles aggregated
into one; its bounds and charger power are then scaled by ``count``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np


class FleetError(ValueError):
    pass


@dataclass(frozen=True)
class ChargerLevel:
    name: str
    p_max_kw: float
    degradation_weight: float = 1.0

    def __post_init__(self):
        if not self.p_max_kw > 0:
            raise FleetError(f"charger level {self.name}: p_max must be positive")
        if self.degradation_weight < 0:
            raise FleetError(f"charger level {self.name}: negative degradation weight")

    def p_max(self, base_mva: float) -> float:
        return self.p_max_kw / (1000.0 * base_mva)


DEFAULT_LEVELS = (
    ChargerLevel("level1", 2.4),
    ChargerLevel("level2", 35.0),
    ChargerLevel("fast", 100.0),
)


def check_level_menu(levels) -> None:
    p = [lv.p_max_kw for lv in levels]
    if any(b <= a for a, b in zip(p, p[1:])):
        raise FleetError("charger levels must be strictly ordered by p_max")
    if len({lv.name for lv in levels}) != len(levels):
        raise FleetError("duplicate charger level names")


@dataclass(frozen=True, eq=False)
class EvSpec:
    bus: int
    e_min: float
    e_max: float
    eta_c: float
    eta_d: float
    levels: tuple[int, ...]  # indices into FleetModel.levels
    p_travel: np.ndarray  # per hour, aggregate, p.u.
    count: int = 1

    def __post_init__(self):
        object.__setattr__(self, "p_travel", np.asarray(self.p_travel, dtype=float))
        if not 0 <= self.e_min < self.e_max:
            raise FleetError(f"EV at bus {self.bus}: need 0 <= e_min < e_max")
        for eta in (self.eta_c, self.eta_d):
            if not 0 < eta <= 1:
                raise FleetError(f"EV at bus {self.bus}: efficiencies must lie in (0, 1]")
        if not self.levels:
            raise FleetError(f"EV at bus {self.bus}: no charger level available")
        if self.count < 1:
            raise FleetError(f"EV at bus {self.bus}: count must be >= 1")


@dataclass(frozen=True)
class FleetModel:
    levels: tuple[ChargerLevel, ...]
    evs: tuple[EvSpec, ...]
    r_c: np.ndarray
    r_d: np.ndarray
    base_mva: float = 100.0

    def __post_init__(self):
        check_level_menu(self.levels)
        r_c = np.asarray(self.r_c, dtype=float)
        r_d = np.asarray(self.r_d, dtype=float)
        if r_c.shape != r_d.shape:
            raise FleetError("r_c and r_d lengths differ")
        for ev in self.evs:
            if len(ev.p_travel) != len(r_c):
                raise FleetError(f"EV at bus {ev.bus}: travel profile length differs from horizon")
            if any(not 0 <= j < len(self.levels) for j in ev.levels):
                raise FleetError(f"EV at bus {ev.bus}: unknown charger level")

    @property
    def horizon(self) -> int:
        return len(self.r_c)

    def level_cap(self, ev: EvSpec, j: int) -> np.ndarray:
        """Per-hour upper limit on level ``j`` charging power: count * p_max * R_c."""
        return ev.count * self.levels[j].p_max(self.base_mva) * np.asarray(self.r_c)

    def travel_draw(self, ev: EvSpec) -> np.ndarray:
        """Energy drawn from the battery by travel each hour: P_tr R_d / eta_d."""
        return ev.p_travel * np.asarray(self.r_d) / ev.eta_d


def energy_step(e_prev, p_charge, p_travel, r_d, eta_c, eta_d):
    """Battery energy after one hour of charging and travel."""
    return e_prev - (p_travel * r_d / eta_d - eta_c * p_charge)


def cyclic_closure(trajectory, charging, travel, r_d, eta_c, eta_d) -> np.ndarray:
    """Residuals of the periodic energy balance, one per hour.

    Hour 0 is balanced against the last hour of the horizon.
    """
    E = np.asarray(trajectory, dtype=float)
    pc = np.asarray(charging, dtype=float)
    tr = np.asarray(travel, dtype=float)
    rd = np.broadcast_to(np.asarray(r_d, dtype=float), E.shape)
    if not (E.shape == pc.shape == tr.shape):
        raise FleetError("trajectory, charging and travel lengths differ")
    prev = np.roll(E, 1)
    return E - energy_step(prev, pc, tr, rd, eta_c, eta_d)


@dataclass
class PatternGuard:
    limit: int = 10_000


def enumerate_level_patterns(spec, horizon: int, guard: PatternGuard | None = None):
    """All per-hour level choices for one EV. ``spec`` is an :class:`EvSpec`
    (its own level menu) or a plain number of levels. Each pattern is a tuple
    with ``-1`` for no charging or the position of the active level in the
    menu. Yields ``(n_levels+1)**horizon`` items."""
    n_levels = len(spec.levels) if isinstance(spec, EvSpec) else int(spec)
    if n_levels < 1 or horizon < 1:
        raise FleetError("need at least one level and one hour")
    guard = guard or PatternGuard()
    total = (n_levels + 1) ** horizon
    if total > guard.limit:
        raise FleetError(f"{total} level patterns exceed the enumeration limit of {guard.limit}")
    return itertools.product(range(-1, n_levels), repeat=horizon)


def pattern_to_binaries(pattern, n_levels: int) -> np.ndarray:
    """``(horizon, n_levels)`` 0/1 array for one pattern."""
    out = np.zeros((len(pattern), n_levels))
    for t, j in enumerate(pattern):
        if j >= 0:
            out[t, j] = 1.0
    return out


@dataclass(frozen=True)
class FleetConfig:
    """Fleet section of a case file, in engineering units."""

    levels: tuple[ChargerLevel, ...] = DEFAULT_LEVELS
    points: tuple[int, ...] = ()
    evs_per_point: int = 10
    e_min_kwh: float = 8.0
    e_max_kwh: float = 60.0
    eta_c: float = 0.9
    eta_d: float = 0.9
    point_levels: dict = field(default_factory=dict)  # optional per-bus level names

    def level_index(self, name: str) -> int:
        for k, lv in enumerate(self.levels):
            if lv.name == name:
                return k
        raise FleetError(f"unknown charger level {name!r}")


def build_fleet(config: FleetConfig, assignment: dict[int, tuple[str, ...]], p_travel_kw, r_c, r_d,
                base_mva: float, ev_penetration: float = 1.0, aggregate: bool = True) -> FleetModel:
    """Fleet model for the charging points in ``assignment`` (bus -> level names).

    Each point hosts ``round(evs_per_point * ev_penetration)`` vehicles, modelled
    as one aggregate EV or, with ``aggregate=False``, as separate EVs.
    """
    if not 0 < ev_penetration <= 1:
        raise FleetError("ev_penetration must lie in (0, 1]")
    n = int(round(config.evs_per_point * ev_penetration))
    if n < 1:
        raise FleetError("no vehicles left at the requested penetration")
    kwh = 1000.0 * base_mva
    p_tr = np.asarray(p_travel_kw, dtype=float) / kwh
    evs = []
    for bus in sorted(assignment):
        idx = tuple(sorted(config.level_index(name) for name in assignment[bus]))
        copies, count = ((1, n) if aggregate else (n, 1))
        for _ in range(copies):
            evs.append(EvSpec(
                bus=bus,
                e_min=count * config.e_min_kwh / kwh,
                e_max=count * config.e_max_kwh / kwh,
                eta_c=config.eta_c,
                eta_d=config.eta_d,
                levels=idx,
                p_travel=count * p_tr,
                count=count,
            ))
    return FleetModel(tuple(config.levels), tuple(evs), np.asarray(r_c, float), np.asarray(r_d, float), base_mva)
