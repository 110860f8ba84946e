"""Reference AC power flow (fixed-point Z-bus iteration).

Builds the complex bus admittance matrix straight from branch impedances,
independently of :func:`evopf.network.build_admittance`, so it can serve as
an oracle for the relaxed model.
"""

from __future__ import annotations

import numpy as np

from .network import NetworkCase


def ybus(case: NetworkCase) -> np.ndarray:
    pos = case.bus_position()
    Y = np.zeros((case.n_buses, case.n_buses), dtype=complex)
    for br in case.branches:
        y = 1.0 / complex(br.r, br.x)
        i, j = pos[br.from_bus], pos[br.to_bus]
        Y[i, i] += y
        Y[j, j] += y
        Y[i, j] -= y
        Y[j, i] -= y
    return Y


def fixed_point_power_flow(
    case: NetworkCase,
    injection: np.ndarray,
    v_slack: complex = 1.0,
    tol: float = 1e-13,
    max_iter: int = 1000,
) -> np.ndarray:
    """Bus voltages for net complex power ``injection`` (p.u., by bus position).

    Iterates ``V_n = Y_nn^{-1} (conj(S_n / V_n) - Y_ns V_s)`` over non-slack
    buses; converges for lightly loaded radial feeders.
    """
    Y = ybus(case)
    s = case.bus_position()[case.slack.id]
    rest = np.array([k for k in range(case.n_buses) if k != s])
    Ynn = Y[np.ix_(rest, rest)]
    Yns = Y[rest, s]
    V = np.ones(case.n_buses, dtype=complex) * v_slack
    Sn = np.asarray(injection, dtype=complex)[rest]
    for _ in range(max_iter):
        Vn = np.linalg.solve(Ynn, np.conj(Sn / V[rest]) - Yns * v_slack)
        step = np.max(np.abs(Vn - V[rest]))
        V[rest] = Vn
        if step < tol:
            return V
    raise RuntimeError("fixed-point power flow did not converge")


def branch_flows(case: NetworkCase, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sending-end complex power per branch, both orientations: ``S_ij = V_i conj((V_i - V_j) y)``."""
    pos = case.bus_position()
    fwd = np.empty(len(case.branches), dtype=complex)
    rev = np.empty(len(case.branches), dtype=complex)
    for k, br in enumerate(case.branches):
        y = 1.0 / complex(br.r, br.x)
        vi, vj = V[pos[br.from_bus]], V[pos[br.to_bus]]
        fwd[k] = vi * np.conj((vi - vj) * y)
        rev[k] = vj * np.conj((vj - vi) * y)
    return fwd, rev
