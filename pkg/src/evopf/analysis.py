"""Post-solve analysis: decode, exactness, phasor recovery and AC validation.

Everything here works from a decoded :class:`LiftedSolution`; the recovered
phasors are checked against the original nonconvex power-flow equations, not
the relaxed ones used to build the program.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .builder import VariableIndex
from .conic import ConicProgram
from .fleet import FleetModel, cyclic_closure
from .network import NetworkCase, case_admittance, tree_order

RECOVERY_THRESHOLD = 1e-5
REPORT_THRESHOLD = 0.95


class RecoveryError(ValueError):
    """The lifted solution is too far from rank one to recover phasors."""


@dataclass(frozen=True, eq=False)
class LiftedSolution:
    c_ii: np.ndarray  # (buses, T)
    c_ij: np.ndarray  # (lines, T)
    s_ij: np.ndarray
    P_ij: np.ndarray
    Q_ij: np.ndarray
    P_ji: np.ndarray
    Q_ji: np.ndarray
    P_g: np.ndarray  # (T,)
    Q_g: np.ndarray
    P_s: np.ndarray  # (solar units, T)
    P_c: np.ndarray  # (EVs, T)
    P_cj: np.ndarray  # (EV-level pairs, T)
    I: np.ndarray
    u: np.ndarray
    E: np.ndarray  # (EVs, T)
    pairs: tuple[tuple[int, int], ...]
    branch_ends: tuple[tuple[int, int], ...]
    objective: float
    energy_cost: float
    degradation_cost: float

    @property
    def horizon(self) -> int:
        return self.P_g.shape[0]

    def level_power(self, ev: int) -> dict[int, np.ndarray]:
        return {j: self.P_cj[k] for k, (e, j) in enumerate(self.pairs) if e == ev}


def decode(program: ConicProgram, x: np.ndarray) -> LiftedSolution:
    idx: VariableIndex = program.var_blocks
    x = np.asarray(x, dtype=float)
    if x.shape != (program.n,):
        raise ValueError(f"solution has {x.size} entries, program has {program.n} columns")

    def get(name):
        return x[idx[name]]

    energy = float(program.c[idx["P_g"]] @ get("P_g"))
    degr = float(program.c[idx["u"]].ravel() @ get("u").ravel())
    return LiftedSolution(
        c_ii=get("c_ii"), c_ij=get("c_ij"), s_ij=get("s_ij"),
        P_ij=get("P_ij"), Q_ij=get("Q_ij"), P_ji=get("P_ji"), Q_ji=get("Q_ji"),
        P_g=get("P_g"), Q_g=get("Q_g"), P_s=get("P_s"), P_c=get("P_c"),
        P_cj=get("P_cj"), I=get("I"), u=get("u"), E=get("E"),
        pairs=tuple(idx.pairs), branch_ends=tuple(idx.branch_ends),
        objective=float(program.c @ x), energy_cost=energy, degradation_cost=degr,
    )


def exactness_residual(sol: LiftedSolution, network: NetworkCase | None = None) -> np.ndarray:
    """``|c_ij^2 + s_ij^2 - c_ii c_jj|`` per line and hour."""
    if not sol.branch_ends:
        return np.zeros((0, sol.horizon))
    i = np.array([a for a, _ in sol.branch_ends])
    j = np.array([b for _, b in sol.branch_ends])
    return np.abs(sol.c_ij**2 + sol.s_ij**2 - sol.c_ii[i] * sol.c_ii[j])


@dataclass(frozen=True, eq=False)
class RecoveredPhasors:
    e: np.ndarray  # real part, (buses, T)
    f: np.ndarray  # imaginary part

    @property
    def magnitude(self) -> np.ndarray:
        return np.hypot(self.e, self.f)

    @property
    def angle(self) -> np.ndarray:
        return np.arctan2(self.f, self.e)

    def lifted(self, branch_ends) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(c_ii, c_ij, s_ij)`` implied by these phasors."""
        e, f = self.e, self.f
        c_ii = e**2 + f**2
        if not branch_ends:
            return c_ii, np.zeros((0, e.shape[1])), np.zeros((0, e.shape[1]))
        i = np.array([a for a, _ in branch_ends])
        j = np.array([b for _, b in branch_ends])
        c_ij = e[i] * e[j] + f[i] * f[j]
        s_ij = e[j] * f[i] - f[j] * e[i]
        return c_ii, c_ij, s_ij


def recover_phasors(sol: LiftedSolution, network: NetworkCase,
                    threshold: float = RECOVERY_THRESHOLD) -> RecoveredPhasors:
    """Walk the tree from the slack bus: ``|V_j| = sqrt(c_jj)`` and
    ``theta_j = theta_i - atan2(s_ij, c_ij)`` along each edge."""
    res = exactness_residual(sol, network)
    if res.size and res.max() > threshold:
        k, t = np.unravel_index(int(np.argmax(res)), res.shape)
        br = network.branches[k]
        raise RecoveryError(
            f"relaxation not tight: residual {res[k, t]:.3e} on line {br.from_bus}-{br.to_bus} "
            f"at hour {t + 1} exceeds {threshold:.1e}"
        )
    tree = tree_order(network)
    N, T = sol.c_ii.shape
    mag = np.sqrt(np.maximum(sol.c_ii, 0.0))
    theta = np.zeros((N, T))
    for child in tree.order[1:]:
        parent = tree.parent[child]
        k = tree.parent_branch[child]
        a, _ = sol.branch_ends[k]
        sgn = 1.0 if a == parent else -1.0  # s_ji = -s_ij
        theta[child] = theta[parent] - np.arctan2(sgn * sol.s_ij[k], sol.c_ij[k])
    return RecoveredPhasors(mag * np.cos(theta), mag * np.sin(theta))


@dataclass(frozen=True)
class ACResiduals:
    flow_p: float
    flow_q: float
    balance_p: float
    balance_q: float

    @property
    def max(self) -> float:
        return max(self.flow_p, self.flow_q, self.balance_p, self.balance_q)


def _bus_profiles(network: NetworkCase, T: int):
    pos = network.bus_position()
    pd = np.zeros((network.n_buses, T))
    qd = np.zeros((network.n_buses, T))
    for ld in network.loads:
        pd[pos[ld.bus]] += ld.p_profile
        qd[pos[ld.bus]] += ld.q_profile
    return pd, qd


def ac_flows(ph: RecoveredPhasors, network: NetworkCase):
    """Branch flows from phasors in both orientations, via the nonlinear equations."""
    Y = case_admittance(network)
    e, f = ph.e, ph.f
    out = []
    for i, j in ((0, 1), (1, 0)):
        a = np.array([p[i] for p in Y.pairs], dtype=int)
        b = np.array([p[j] for p in Y.pairs], dtype=int)
        G = Y.g_off[:, None]
        B = Y.b_off[:, None]
        vv = e[a] ** 2 + f[a] ** 2
        cr = e[a] * e[b] + f[a] * f[b]
        cross = e[a] * f[b] - e[b] * f[a]
        P = -G * vv + G * cr - B * cross
        Q = B * vv - B * cr - G * cross
        out.append((P, Q))
    return out  # [(P_ij, Q_ij), (P_ji, Q_ji)]


def validate_ac(ph: RecoveredPhasors, sol: LiftedSolution, network: NetworkCase,
                fleet: FleetModel | None = None, ev_buses=None) -> ACResiduals:
    """Plug phasors into the AC flow and nodal balance equations."""
    T = sol.horizon
    N = network.n_buses
    pos = network.bus_position()
    Y = case_admittance(network)
    if network.branches:
        (Pf, Qf), (Pr, Qr) = ac_flows(ph, network)
        flow_p = float(max(np.abs(Pf - sol.P_ij).max(), np.abs(Pr - sol.P_ji).max()))
        flow_q = float(max(np.abs(Qf - sol.Q_ij).max(), np.abs(Qr - sol.Q_ji).max()))
    else:
        Pf = Qf = Pr = Qr = np.zeros((0, T))
        flow_p = flow_q = 0.0
    pd, qd = _bus_profiles(network, T)
    vv = ph.e**2 + ph.f**2
    gen_p = np.zeros((N, T))
    gen_q = np.zeros((N, T))
    slack = pos[network.slack.id]
    gen_p[slack] += sol.P_g
    gen_q[slack] += sol.Q_g
    for s, unit in enumerate(network.solar):
        gen_p[pos[unit.bus]] += sol.P_s[s]
    ev_load = np.zeros((N, T))
    buses = ev_buses if ev_buses is not None else ([ev.bus for ev in fleet.evs] if fleet else [])
    for e, bus in enumerate(buses):
        ev_load[pos[bus]] += sol.P_c[e]
    out_p = np.zeros((N, T))
    out_q = np.zeros((N, T))
    for k, (a, b) in enumerate(Y.pairs):
        out_p[a] += Pf[k]
        out_q[a] += Qf[k]
        out_p[b] += Pr[k]
        out_q[b] += Qr[k]
    gsum = np.array([Y.row_sum_g(i) for i in range(N)])[:, None]
    bsum = np.array([Y.row_sum_b(i) for i in range(N)])[:, None]
    bal_p = gen_p - (pd + gsum * vv + out_p + ev_load)
    bal_q = gen_q - qd - (-bsum * vv + out_q)
    return ACResiduals(flow_p, flow_q, float(np.abs(bal_p).max()), float(np.abs(bal_q).max()))


@dataclass(frozen=True, eq=False)
class QualityReport:
    voltage: np.ndarray  # (T, buses) magnitudes in p.u.
    threshold: float
    violations: tuple[tuple[int, int], ...]  # (bus id, hour) with |V| below the threshold
    hours_below: np.ndarray  # per bus
    max_exactness: float
    max_balance: float
    grid_p_kw: np.ndarray
    grid_q_kvar: np.ndarray
    costs: dict

    def hours_below_at(self, bus_ids, bus: int) -> int:
        return int(self.hours_below[list(bus_ids).index(bus)])


def quality_metrics(sol: LiftedSolution, ph: RecoveredPhasors, network: NetworkCase,
                    threshold: float = REPORT_THRESHOLD, ac: ACResiduals | None = None) -> QualityReport:
    V = ph.magnitude.T
    below = V < threshold
    ids = network.bus_ids
    viol = tuple((ids[i], t + 1) for t, i in zip(*np.nonzero(below)))
    viol = tuple(sorted(viol))
    kw = 1000.0 * network.base_mva
    res = exactness_residual(sol, network)
    costs = {
        "total": sol.objective,
        "energy": sol.energy_cost,
        "degradation": sol.degradation_cost,
    }
    return QualityReport(
        voltage=V, threshold=threshold, violations=viol, hours_below=below.sum(axis=0),
        max_exactness=float(res.max()) if res.size else 0.0,
        max_balance=ac.max if ac is not None else float("nan"),
        grid_p_kw=sol.P_g * kw, grid_q_kvar=sol.Q_g * kw, costs=costs,
    )


# --- constraint post-checks ---------------------------------------------------

@dataclass(frozen=True)
class PostCheck:
    violations: dict  # check name -> worst violation (<= 0 or tiny when satisfied)
    tol: float
    integrality_tol: float

    @property
    def ok(self) -> bool:
        return all(v <= (self.integrality_tol if k in ("integrality", "exclusive") else self.tol)
                   for k, v in self.violations.items())

    def failures(self) -> list[str]:
        out = []
        for k, v in self.violations.items():
            lim = self.integrality_tol if k in ("integrality", "exclusive") else self.tol
            if v > lim:
                out.append(f"{k}: {v:.3e} > {lim:.1e}")
        return out


def post_checks(sol: LiftedSolution, network: NetworkCase, fleet: FleetModel,
                tol: float = 1e-6, integrality_tol: float = 1e-5) -> PostCheck:
    """Worst violation of every EV, solar and line-limit constraint."""
    v: dict[str, float] = {}
    T = sol.horizon

    def worst(arr):
        arr = np.asarray(arr, dtype=float)
        return float(arr.max()) if arr.size else 0.0

    caps = np.array([fleet.level_cap(fleet.evs[e], j) for e, j in sol.pairs]).reshape(len(sol.pairs), T)
    v["level_power_lower"] = worst(-sol.P_cj)
    v["level_power_upper"] = worst(sol.P_cj - sol.I * caps)
    v["integrality"] = worst(np.minimum(np.abs(sol.I), np.abs(1.0 - sol.I)))
    excl = []
    level_sum = []
    for e in range(len(fleet.evs)):
        ks = [k for k, (ee, _) in enumerate(sol.pairs) if ee == e]
        excl.append(sol.I[ks].sum(axis=0) - 1.0)
        level_sum.append(np.abs(sol.P_cj[ks].sum(axis=0) - sol.P_c[e]))
    v["exclusive"] = worst(np.concatenate(excl)) if excl else 0.0
    v["level_sum"] = worst(np.concatenate(level_sum)) if level_sum else 0.0
    lo, hi, cyc = [], [], []
    for e, ev in enumerate(fleet.evs):
        lo.append(ev.e_min - sol.E[e])
        hi.append(sol.E[e] - ev.e_max)
        cyc.append(np.abs(cyclic_closure(sol.E[e], sol.P_c[e], ev.p_travel, fleet.r_d, ev.eta_c, ev.eta_d)))
    v["energy_lower"] = worst(np.concatenate(lo)) if lo else 0.0
    v["energy_upper"] = worst(np.concatenate(hi)) if hi else 0.0
    v["cyclic_balance"] = worst(np.concatenate(cyc)) if cyc else 0.0
    v["solar_lower"] = worst(-sol.P_s)
    v["solar_upper"] = worst(sol.P_s - np.array([u.availability for u in network.solar]).reshape(sol.P_s.shape))
    smax = np.array([br.s_max for br in network.branches])[:, None]
    v["line_limit"] = max(worst(np.hypot(sol.P_ij, sol.Q_ij) - smax), worst(np.hypot(sol.P_ji, sol.Q_ji) - smax))
    return PostCheck(v, tol, integrality_tol)


@dataclass(frozen=True, eq=False)
class ScenarioReport:
    """Per-scenario tables as written by :func:`evopf.data_io.write_report`."""

    name: str
    bus_ids: tuple[int, ...]
    voltage: np.ndarray  # (T, buses)
    ev_buses: tuple[int, ...]
    charging_kw: np.ndarray  # (T, EVs)
    grid_p_kw: np.ndarray
    grid_q_kvar: np.ndarray
    costs: dict
    hours_below: np.ndarray
    threshold: float = REPORT_THRESHOLD
    info: dict = field(default_factory=dict)

    def bus_voltage(self, bus: int) -> np.ndarray:
        return self.voltage[:, list(self.bus_ids).index(bus)]

    def hours_below_at(self, bus: int) -> int:
        return int(self.hours_below[list(self.bus_ids).index(bus)])

    def max_charging_kw(self) -> np.ndarray:
        return self.charging_kw.max(axis=0) if self.charging_kw.size else np.zeros(0)


def scenario_report(name: str, sol: LiftedSolution, q: QualityReport, network: NetworkCase,
                    ev_buses, info: dict | None = None) -> ScenarioReport:
    kw = 1000.0 * network.base_mva
    return ScenarioReport(
        name=name, bus_ids=tuple(network.bus_ids), voltage=q.voltage, ev_buses=tuple(ev_buses),
        charging_kw=(sol.P_c * kw).T, grid_p_kw=q.grid_p_kw, grid_q_kvar=q.grid_q_kvar,
        costs=dict(q.costs), hours_below=q.hours_below, threshold=q.threshold, info=dict(info or {}),
    )
