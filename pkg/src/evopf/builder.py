"""Assemble the mixed-integer conic program for one scenario.

Decision variables (per hour ``t``):

* ``P_g``, ``Q_g``     grid injection at the slack bus
* ``P_s``              dispatched solar per unit
* ``P_c``              total charging power per EV
* ``P_cj``, ``I``      charging power and on/off mark per (EV, available level)
* ``u``                epigraph of the squared (normalised) level power
* ``E``                battery energy per EV
* ``c_ii``             squared voltage magnitude per bus
* ``c_ij``, ``s_ij``   lifted cross products, one pair per line
* ``P_ij`` ... ``Q_ji`` branch flows in both orientations

Only one ``(c_ij, s_ij)`` pair is stored per line; the reverse orientation
reads ``c_ji = c_ij`` and ``s_ji = -s_ij``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .conic import ConeSlice, ConicProgram
from .fleet import FleetModel, build_fleet, FleetConfig
from .network import NetworkCase, NetworkError, case_admittance, check_radial, SolarUnit

DEGRADATION_UNIT_KW = 100.0  # degradation cost is C_D per (100 kW)^2 per EV-hour


class BuildError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    """Objective and interface knobs that are not part of the network or fleet."""

    tou_price: np.ndarray  # $/MWh per hour
    degradation_cost: float = 0.05
    allow_export: bool = False
    v_slack: float = 1.0
    limit_both_directions: bool = True

    def __post_init__(self):
        object.__setattr__(self, "tou_price", np.asarray(self.tou_price, dtype=float))
        if self.degradation_cost < 0:
            raise BuildError("degradation cost must be nonnegative")
        if not self.v_slack > 0:
            raise BuildError("slack voltage must be positive")


@dataclass(frozen=True)
class BuildOptions:
    # (n_evs, horizon) array of level indices, -1 for "not charging"
    fix_binaries: np.ndarray | None = None
    relax_binaries: bool = False

    def __post_init__(self):
        if self.fix_binaries is not None and self.relax_binaries:
            raise BuildError("fix_binaries and relax_binaries are mutually exclusive")


class VariableIndex(dict):
    """Block name -> array of column ids, plus the structural metadata needed
    to decode a solution vector."""

    def __init__(self):
        super().__init__()
        self.n = 0
        self.pairs: list[tuple[int, int]] = []  # (ev index, level index) per level column row
        self.ev_buses: list[int] = []
        self.horizon = 0
        self.bus_ids: list[int] = []
        self.branch_ends: list[tuple[int, int]] = []

    def add(self, name: str, *shape: int) -> np.ndarray:
        if name in self:
            raise BuildError(f"variable block {name!r} allocated twice")
        size = int(np.prod(shape)) if shape else 1
        ids = np.arange(self.n, self.n + size).reshape(shape)
        self.n += size
        self[name] = ids
        return ids

    def block_of(self, col: int) -> str:
        for name, ids in self.items():
            if ids.size and ids.flat[0] <= col <= ids.flat[-1]:
                return name
        raise KeyError(col)


# Model symbols and where they live. Building checks every entry resolves.
SYMBOLS = {
    "P_g": ("var", "P_g"), "Q_g": ("var", "Q_g"), "P_s": ("var", "P_s"),
    "P_c": ("var", "P_c"), "P_cj": ("var", "P_cj"), "I_cj": ("var", "I"),
    "E": ("var", "E"), "c_ii": ("var", "c_ii"), "c_ij": ("var", "c_ij"),
    "s_ij": ("var", "s_ij"), "P_ij": ("var", "P_ij"), "Q_ij": ("var", "Q_ij"),
    "u": ("var", "u"),
    "C_E": ("data", "scenario.tou_price"), "C_D": ("data", "scenario.degradation_cost"),
    "P_max_cj": ("data", "fleet.levels"), "R_c": ("data", "fleet.r_c"), "R_d": ("data", "fleet.r_d"),
    "P_tr": ("data", "ev.p_travel"), "E_min": ("data", "ev.e_min"), "E_max": ("data", "ev.e_max"),
    "gamma_c": ("data", "ev.eta_c"), "gamma_d": ("data", "ev.eta_d"),
    "A_s": ("data", "solar.availability"), "P_d": ("data", "load.p_profile"), "Q_d": ("data", "load.q_profile"),
    "G_ij": ("data", "admittance.g_off"), "B_ij": ("data", "admittance.b_off"),
    "V_min": ("data", "bus.vmin"), "V_max": ("data", "bus.vmax"), "S_max": ("data", "branch.s_max"),
}


def _check_symbols(index: VariableIndex) -> None:
    for sym, (kind, where) in SYMBOLS.items():
        if kind == "var" and where not in index:
            raise BuildError(f"model symbol {sym} has no variable block {where!r}")


class _Rows:
    """Accumulates sparse rows by named block."""

    def __init__(self, n: int):
        self.n = n
        self.r: list[np.ndarray] = []
        self.c: list[np.ndarray] = []
        self.v: list[np.ndarray] = []
        self.rhs: list[np.ndarray] = []
        self.m = 0
        self.blocks: dict[str, np.ndarray] = {}

    def add(self, name: str, rows, cols, vals, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float).ravel()
        k = len(rhs)
        self.r.append(np.asarray(rows, dtype=np.int64).ravel() + self.m)
        self.c.append(np.asarray(cols, dtype=np.int64).ravel())
        self.v.append(np.asarray(vals, dtype=float).ravel())
        self.rhs.append(rhs)
        ids = np.arange(self.m, self.m + k)
        prev = self.blocks.get(name)
        self.blocks[name] = ids if prev is None else np.concatenate([prev, ids])
        self.m += k
        return ids

    def matrix(self) -> tuple[sp.csr_matrix, np.ndarray]:
        if not self.r:
            return sp.csr_matrix((0, self.n)), np.zeros(0)
        M = sp.coo_matrix(
            (np.concatenate(self.v), (np.concatenate(self.r), np.concatenate(self.c))), shape=(self.m, self.n)
        ).tocsr()
        M.sum_duplicates()
        return M, np.concatenate(self.rhs)


def epigraph_quadratic(p_col, u_col, scale: float = 1.0):
    """Cone rows for ``(p/scale)^2 <= u`` as ``||(2p/scale, u-1)|| <= u+1``.

    Returns ``(rows, cols, vals, h)`` for ``h - G x`` in a 3-dim second-order
    cone, with ``G`` entries given as (row, col, value) triplets.
    """
    rows = np.array([0, 1, 2])
    cols = np.array([u_col, p_col, u_col])
    vals = np.array([-1.0, -2.0 / scale, -1.0])
    h = np.array([1.0, 0.0, -1.0])
    return rows, cols, vals, h


def _reachability(fleet: FleetModel) -> None:
    T = fleet.horizon
    for e, ev in enumerate(fleet.evs):
        draw = fleet.travel_draw(ev)
        if np.any(draw > ev.e_max - ev.e_min + 1e-12):
            t = int(np.argmax(draw))
            raise BuildError(f"EV {e} at bus {ev.bus}: travel draw at hour {t + 1} exceeds its usable energy")
        cap = np.zeros(T)
        for j in ev.levels:
            cap = np.maximum(cap, fleet.level_cap(ev, j))
        if ev.eta_c * cap.sum() < draw.sum() - 1e-12:
            raise BuildError(f"EV {e} at bus {ev.bus}: daily travel energy cannot be recharged")


def build(network: NetworkCase, fleet: FleetModel, scenario: Scenario,
          options: BuildOptions | None = None) -> ConicProgram:
    options = options or BuildOptions()
    radial = False
    try:
        radial = check_radial(network)
    except NetworkError:
        pass
    if not radial:
        raise BuildError(f"{network.name}: the relaxation is only built for radial networks")
    T = len(scenario.tou_price)
    if network.horizon not in (0, T) or fleet.horizon != T:
        raise BuildError("horizon mismatch between network profiles, fleet and prices")
    pos = network.bus_position()
    for ev in fleet.evs:
        if ev.bus not in pos:
            raise BuildError(f"EV attached to unknown bus {ev.bus}")
    _reachability(fleet)

    N, L, S, E = network.n_buses, len(network.branches), len(network.solar), len(fleet.evs)
    Y = case_admittance(network)
    pairs = [(e, j) for e, ev in enumerate(fleet.evs) for j in ev.levels]
    K = len(pairs)
    slack = pos[network.slack.id]

    idx = VariableIndex()
    idx.pairs = pairs
    idx.ev_buses = [ev.bus for ev in fleet.evs]
    idx.horizon = T
    idx.bus_ids = network.bus_ids
    idx.branch_ends = [(pos[br.from_bus], pos[br.to_bus]) for br in network.branches]
    Pg = idx.add("P_g", T)
    Qg = idx.add("Q_g", T)
    Ps = idx.add("P_s", S, T)
    Pc = idx.add("P_c", E, T)
    Pcj = idx.add("P_cj", K, T)
    Icj = idx.add("I", K, T)
    U = idx.add("u", K, T)
    En = idx.add("E", E, T)
    cii = idx.add("c_ii", N, T)
    cij = idx.add("c_ij", L, T)
    sij = idx.add("s_ij", L, T)
    Pf = idx.add("P_ij", L, T)
    Qf = idx.add("Q_ij", L, T)
    Pr = idx.add("P_ji", L, T)
    Qr = idx.add("Q_ji", L, T)
    _check_symbols(idx)
    n = idx.n

    # --- bounds -----------------------------------------------------------
    lb = np.full(n, -np.inf)
    ub = np.full(n, np.inf)
    if not scenario.allow_export:
        lb[Pg] = 0.0
    for s, unit in enumerate(network.solar):
        lb[Ps[s]] = 0.0
        ub[Ps[s]] = unit.availability
    lb[Pc] = 0.0
    lb[Pcj] = 0.0
    lb[Icj] = 0.0
    ub[Icj] = 1.0
    lb[U] = 0.0
    caps = np.array([fleet.level_cap(fleet.evs[e], j) for e, j in pairs]).reshape(K, T)
    dead = caps <= 0.0
    ub[Pcj[dead]] = 0.0
    ub[Icj[dead]] = 0.0
    for e, ev in enumerate(fleet.evs):
        lb[En[e]] = ev.e_min
        ub[En[e]] = ev.e_max
    for k, bus in enumerate(network.buses):
        lb[cii[k]] = bus.vmin**2
        ub[cii[k]] = bus.vmax**2
    lb[cii[slack]] = ub[cii[slack]] = scenario.v_slack**2

    # --- equalities -------------------------------------------------------
    eq = _Rows(n)
    tt = np.arange(T)
    one = np.ones(T)
    for k, (i, j) in enumerate(idx.branch_ends):
        g, b = Y.g_off[k], Y.b_off[k]
        # P_ij = -G c_ii + G c_ij + B s_ij ; Q_ij = B c_ii - B c_ij + G s_ij
        for name, flow, ci, sgn_s, gg, bb in (
            ("flow_p", Pf, i, 1.0, g, b), ("flow_p", Pr, j, -1.0, g, b),
        ):
            eq.add(name, np.tile(tt, 4), np.concatenate([flow[k], cii[ci], cij[k], sij[k]]),
                   np.concatenate([one, gg * one, -gg * one, -sgn_s * bb * one]), np.zeros(T))
        for name, flow, ci, sgn_s, gg, bb in (
            ("flow_q", Qf, i, 1.0, g, b), ("flow_q", Qr, j, -1.0, g, b),
        ):
            eq.add(name, np.tile(tt, 4), np.concatenate([flow[k], cii[ci], cij[k], sij[k]]),
                   np.concatenate([one, -bb * one, bb * one, -sgn_s * gg * one]), np.zeros(T))

    out_p: list[list[np.ndarray]] = [[] for _ in range(N)]
    out_q: list[list[np.ndarray]] = [[] for _ in range(N)]
    for k, (i, j) in enumerate(idx.branch_ends):
        out_p[i].append(Pf[k]); out_q[i].append(Qf[k])
        out_p[j].append(Pr[k]); out_q[j].append(Qr[k])
    pd = np.zeros((N, T))
    qd = np.zeros((N, T))
    for ld in network.loads:
        pd[pos[ld.bus]] += ld.p_profile
        qd[pos[ld.bus]] += ld.q_profile
    gscale = float(np.max(np.abs(Y.g_off), initial=0.0)) + float(np.max(np.abs(Y.b_off), initial=0.0))
    for i in range(N):
        # generation - load = shunt term + outgoing flows + EV charging
        cols, vals = [], []
        if i == slack:
            cols.append(Pg); vals.append(one)
        for s, unit in enumerate(network.solar):
            if pos[unit.bus] == i:
                cols.append(Ps[s]); vals.append(one)
        for f in out_p[i]:
            cols.append(f); vals.append(-one)
        for e, ev in enumerate(fleet.evs):
            if pos[ev.bus] == i:
                cols.append(Pc[e]); vals.append(-one)
        gsum = Y.row_sum_g(i)
        if abs(gsum) > 1e-12 * gscale:
            cols.append(cii[i]); vals.append(-gsum * one)
        m = len(cols)
        eq.add("balance_p", np.tile(tt, m), np.concatenate(cols) if m else [], np.concatenate(vals) if m else [], pd[i])

        cols, vals = [], []
        if i == slack:
            cols.append(Qg); vals.append(one)
        for f in out_q[i]:
            cols.append(f); vals.append(-one)
        bsum = Y.row_sum_b(i)
        if abs(bsum) > 1e-12 * gscale:
            cols.append(cii[i]); vals.append(bsum * one)
        m = len(cols)
        eq.add("balance_q", np.tile(tt, m), np.concatenate(cols) if m else [], np.concatenate(vals) if m else [], qd[i])

    for e, ev in enumerate(fleet.evs):
        ks = [k for k, (ee, _) in enumerate(pairs) if ee == e]
        cols = [Pc[e]] + [Pcj[k] for k in ks]
        vals = [one] + [-one for _ in ks]
        eq.add("ev_level_sum", np.tile(tt, len(cols)), np.concatenate(cols), np.concatenate(vals), np.zeros(T))
        # E_t - E_{t-1} - eta_c P_c = -P_tr R_d / eta_d, hour 0 wraps to the last hour
        prev = En[e][np.roll(tt, 1)]
        eq.add("ev_energy", np.tile(tt, 3), np.concatenate([En[e], prev, Pc[e]]),
               np.concatenate([one, -one, -ev.eta_c * one]), -fleet.travel_draw(ev))

    A, b = eq.matrix()

    # --- cones ------------------------------------------------------------
    cone = _Rows(n)
    slices: list[ConeSlice] = []

    def push(name, kind, size, rows, cols, vals, h):
        start = cone.m
        cone.add(name, rows, cols, vals, h)
        count = len(np.asarray(h).ravel()) // size
        for q in range(count):
            slices.append(ConeSlice(kind, start + q * size, size))

    if K:
        # P_cj - cap * I <= 0
        kk = np.arange(K * T)
        push("level_cap", "l", K * T, np.concatenate([kk, kk]),
             np.concatenate([Pcj.ravel(), Icj.ravel()]),
             np.concatenate([np.ones(K * T), -caps.ravel()]), np.zeros(K * T))
        # at most one level per (EV, hour)
        groups = {}
        for k, (e, _) in enumerate(pairs):
            groups.setdefault(e, []).append(k)
        multi = [ks for ks in groups.values() if len(ks) > 1]
        if multi:
            rows, cols = [], []
            for g_no, ks in enumerate(multi):
                for k in ks:
                    rows.append(g_no * T + tt)
                    cols.append(Icj[k])
            push("level_exclusive", "l", len(multi) * T, np.concatenate(rows), np.concatenate(cols),
                 np.ones(sum(len(ks) for ks in multi) * T), np.ones(len(multi) * T))

    for k, (i, j) in enumerate(idx.branch_ends):
        # (c_ii + c_jj, 2 c_ij, 2 s_ij, c_ii - c_jj) in Q^4
        r4 = (4 * tt)[:, None] + np.array([0, 0, 1, 2, 3, 3])[None, :]
        c4 = np.stack([cii[i], cii[j], cij[k], sij[k], cii[i], cii[j]], axis=1)
        v4 = np.tile([-1.0, -1.0, -2.0, -2.0, -1.0, 1.0], (T, 1))
        push("soc_lift", "q", 4, r4, c4, v4, np.zeros(4 * T))
    for k, br in enumerate(network.branches):
        flows = [(Pf[k], Qf[k])]
        if scenario.limit_both_directions:
            flows.append((Pr[k], Qr[k]))
        for p_ids, q_ids in flows:
            r3 = (3 * tt)[:, None] + np.array([1, 2])[None, :]
            c3 = np.stack([p_ids, q_ids], axis=1)
            h3 = np.zeros((T, 3))
            h3[:, 0] = br.s_max
            push("line_limit", "q", 3, r3, c3, -np.ones((T, 2)), h3)
    scales = np.zeros(K)
    for k, (e, j) in enumerate(pairs):
        ev = fleet.evs[e]
        scales[k] = ev.count * fleet.levels[j].p_max(fleet.base_mva)
        rows, cols, vals, h = [], [], [], []
        for t in range(T):
            r_, c_, v_, h_ = epigraph_quadratic(Pcj[k, t], U[k, t], scales[k])
            rows.append(r_ + 3 * t); cols.append(c_); vals.append(v_); h.append(h_)
        push("epigraph", "q", 3, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), np.concatenate(h))

    G, h = cone.matrix()

    # --- objective --------------------------------------------------------
    c = np.zeros(n)
    c[Pg] = scenario.tou_price * fleet.base_mva  # $/MWh * MW per p.u.
    per_kw = 1000.0 * fleet.base_mva / DEGRADATION_UNIT_KW  # p.u. -> multiples of 100 kW
    for k, (e, j) in enumerate(pairs):
        ev = fleet.evs[e]
        # n identical EVs sharing P: n * C_D * w * (per_kw * P / n)^2, with P = scale * sqrt(u)
        coef = scenario.degradation_cost * fleet.levels[j].degradation_weight * per_kw**2 * scales[k] ** 2 / ev.count
        c[U[k]] = coef

    integer = np.zeros(0, dtype=int) if options.relax_binaries else Icj.ravel().copy()
    sos1 = ()
    if not options.relax_binaries:
        groups = {}
        for k, (e, _) in enumerate(pairs):
            groups.setdefault(e, []).append(k)
        sos1 = tuple(np.array([Icj[k, t] for k in groups[e]]) for e in sorted(groups) for t in range(T))

    prog = ConicProgram(
        c=c, A=A, b=b, G=G, h=h, cones=tuple(slices), lb=lb, ub=ub,
        integer=integer, sos1=sos1, var_blocks=idx, eq_blocks=eq.blocks, cone_blocks=cone.blocks,
    )
    if options.fix_binaries is not None:
        prog = fix_pattern(prog, options.fix_binaries)
    return prog


def pattern_values(index: VariableIndex, pattern) -> tuple[np.ndarray, np.ndarray]:
    """Columns and 0/1 values fixing every ``I`` to the given level choice.

    ``pattern`` is ``(n_evs, horizon)`` with a level index or ``-1`` per hour.
    """
    pattern = np.asarray(pattern, dtype=int)
    n_ev = len(index.ev_buses)
    if pattern.shape != (n_ev, index.horizon):
        raise BuildError(f"binary pattern must have shape {(n_ev, index.horizon)}, got {pattern.shape}")
    Icj = index["I"]
    vals = np.zeros(Icj.shape)
    for k, (e, j) in enumerate(index.pairs):
        vals[k] = pattern[e] == j
    known = {(e, j) for e, j in index.pairs}
    for e in range(n_ev):
        for t in range(index.horizon):
            if pattern[e, t] >= 0 and (e, pattern[e, t]) not in known:
                raise BuildError(f"EV {e} has no level {pattern[e, t]}")
    return Icj.ravel(), vals.ravel()


def fix_pattern(prog: ConicProgram, pattern) -> ConicProgram:
    # a level switched on in an hour with zero availability just keeps P_cj = 0
    cols, vals = pattern_values(prog.var_blocks, pattern)
    return prog.with_fixed(cols, vals)


# --- scenario preparation ---------------------------------------------------

CHARGER_MIXES = ("fast", "level2", "combined", "level1", "menu")


def charger_assignment(config: FleetConfig, mix: str, points=None) -> dict[int, tuple[str, ...]]:
    """Charger levels per charging point for a named mix.

    ``combined`` puts fast chargers on even bus ids and level-2 chargers on
    odd ones (so bus 18 is fast); ``menu`` offers both at every point.
    """
    points = tuple(config.points if points is None else points)
    if mix in ("fast", "level2", "level1"):
        out = {p: (mix,) for p in points}
    elif mix == "combined":
        out = {p: ("fast",) if p % 2 == 0 else ("level2",) for p in points}
    elif mix == "menu":
        out = {p: ("level2", "fast") for p in points}
    elif mix == "custom":
        out = {p: tuple(config.point_levels[p]) for p in points}
    else:
        raise BuildError(f"unknown charger mix {mix!r}")
    return out


def solar_penetration(network: NetworkCase) -> float:
    load = sum(float(ld.p_profile.sum()) for ld in network.loads)
    sun = sum(float(u.availability.sum()) for u in network.solar)
    return sun / load if load > 0 else 0.0


def with_solar_penetration(network: NetworkCase, ratio: float) -> NetworkCase:
    """Rescale every solar unit by a common factor so that daily available
    solar energy is ``ratio`` times daily real load energy."""
    if not 0 <= ratio <= 1:
        raise BuildError("solar penetration must lie in [0, 1]")
    current = solar_penetration(network)
    if current == 0:
        if ratio == 0:
            return network
        raise BuildError("network has no solar availability to scale")
    f = ratio / current
    units = tuple(SolarUnit(u.bus, u.capacity * f, u.shape) for u in network.solar)
    return replace(network, solar=units)


@dataclass(frozen=True)
class ScenarioConfig:
    """One study variant: charger mix plus the scalar knobs varied by the studies."""

    name: str = "base"
    charger_mix: str = "fast"
    solar_penetration: float | None = 0.10  # None keeps the case's own capacities
    degradation_cost: float = 0.05
    ev_penetration: float = 0.5
    points: tuple[int, ...] | None = None  # None = every charging point of the fleet config
    allow_export: bool = False
    aggregate: bool = True

    def __post_init__(self):
        if self.ev_penetration is not None and not 0 < self.ev_penetration <= 1:
            raise BuildError("EV penetration must lie in (0, 1]")
        if self.solar_penetration is not None and not 0 <= self.solar_penetration <= 1:
            raise BuildError("solar penetration must lie in [0, 1]")
        if self.degradation_cost < 0:
            raise BuildError("degradation cost must be nonnegative")


@dataclass(frozen=True)
class Instance:
    network: NetworkCase
    fleet: FleetModel
    scenario: Scenario
    config: ScenarioConfig = field(default_factory=ScenarioConfig)

    def build(self, options: BuildOptions | None = None) -> ConicProgram:
        return build(self.network, self.fleet, self.scenario, options)


def prepare(network: NetworkCase, profiles, fleet_config: FleetConfig, config: ScenarioConfig) -> Instance:
    """Apply a scenario configuration to the base case and profiles."""
    if config.solar_penetration is not None:
        network = with_solar_penetration(network, config.solar_penetration)
    assignment = charger_assignment(fleet_config, config.charger_mix, config.points)
    fleet = build_fleet(fleet_config, assignment, profiles.p_travel_kw, profiles.r_c, profiles.r_d,
                        network.base_mva, config.ev_penetration, config.aggregate)
    scen = Scenario(profiles.tou_price, config.degradation_cost, config.allow_export)
    return Instance(network, fleet, scen, config)


# --- structural census --------------------------------------------------------

def census(prog: ConicProgram) -> dict[str, int]:
    """Counts per variable block, equality block and cone block."""
    out: dict[str, int] = {}
    for name, ids in prog.var_blocks.items():
        out[f"var.{name}"] = int(np.size(ids))
    for name, ids in prog.eq_blocks.items():
        out[f"eq.{name}"] = int(len(ids))
    dims = {}
    for sl in prog.cones:
        key = "orthant_rows" if sl.kind == "l" else f"cones_{sl.size}d"
        dims[key] = dims.get(key, 0) + (sl.size if sl.kind == "l" else 1)
    out.update(dims)
    for name, ids in prog.cone_blocks.items():
        out[f"cone_rows.{name}"] = int(len(ids))
    out["variables"] = prog.n
    out["equalities"] = prog.A.shape[0]
    out["cone_rows"] = prog.G.shape[0]
    out["integer"] = int(len(prog.integer))
    out["sos1_groups"] = len(prog.sos1)
    return out


def census_formula(N: int, L: int, T: int, S: int, E: int, K: int, multi_groups: int = 0,
                   multi_members: int = 0, both_directions: bool = True) -> dict[str, int]:
    """Closed-form census of :func:`build`.

    ``K`` is the number of (EV, level) pairs; ``multi_groups`` counts EVs with
    more than one level and ``multi_members`` the level pairs they hold.
    """
    lim = 2 if both_directions else 1
    var = {
        "P_g": T, "Q_g": T, "P_s": S * T, "P_c": E * T, "P_cj": K * T, "I": K * T, "u": K * T,
        "E": E * T, "c_ii": N * T, "c_ij": L * T, "s_ij": L * T,
        "P_ij": L * T, "Q_ij": L * T, "P_ji": L * T, "Q_ji": L * T,
    }
    out = {f"var.{k}": v for k, v in var.items()}
    eqs = {"flow_p": 2 * L * T, "flow_q": 2 * L * T, "balance_p": N * T, "balance_q": N * T}
    if E:
        eqs.update({"ev_level_sum": E * T, "ev_energy": E * T})
    out.update({f"eq.{k}": v for k, v in eqs.items()})
    out["orthant_rows"] = K * T + multi_groups * T
    if out["orthant_rows"] == 0:
        del out["orthant_rows"]
    out["cones_4d"] = L * T
    out["cones_3d"] = lim * L * T + K * T
    cone_rows = {"soc_lift": 4 * L * T, "line_limit": 3 * lim * L * T}
    if K:
        cone_rows["level_cap"] = K * T
        cone_rows["epigraph"] = 3 * K * T
    if multi_groups:
        cone_rows["level_exclusive"] = multi_groups * T
    out.update({f"cone_rows.{k}": v for k, v in cone_rows.items()})
    out["variables"] = sum(var.values())
    out["equalities"] = sum(eqs.values())
    out["cone_rows"] = sum(cone_rows.values())
    out["integer"] = K * T
    out["sos1_groups"] = E * T if K else 0
    return out
