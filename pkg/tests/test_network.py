import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evopf.analysis import RecoveredPhasors, ac_flows
from evopf.data_io import load_case
from evopf.network import (
    Branch, Bus, DisconnectedNetworkError, Load, NetworkCase, NetworkError, build_admittance, case_admittance,
    check_radial, neighbors, tree_order,
)
from evopf.powerflow import branch_flows, fixed_point_power_flow, ybus
from factories import path, two_bus


def _case(n, edges):
    buses = tuple(Bus(k, is_slack=(k == 1)) for k in range(1, n + 1))
    return NetworkCase("t", buses, tuple(Branch(a, b, 0.01, 0.02, 1.0) for a, b in edges))


@pytest.fixture(scope="module")
def case33():
    return load_case("33bus")


# --- build_admittance -----------------------------------------------------------

def test_pure_reactance_branch():
    Y = build_admittance([Branch(1, 2, 0.0, 1.0, 1.0)], 2, {1: 0, 2: 1})
    assert Y.G(0, 1) == 0.0
    assert Y.B(0, 1) == pytest.approx(1.0)
    assert Y.b_diag[0] == pytest.approx(-1.0)


def test_pure_resistance_branch():
    Y = build_admittance([Branch(1, 2, 1.0, 0.0, 1.0)], 2, {1: 0, 2: 1})
    assert Y.G(0, 1) == pytest.approx(-1.0)
    assert Y.B(0, 1) == 0.0
    assert Y.g_diag[0] == pytest.approx(1.0)


def test_admittance_matches_dense_ybus(case33):
    Y = case_admittance(case33)
    dense = ybus(case33)
    for k, (i, j) in enumerate(Y.pairs):
        assert Y.g_off[k] == pytest.approx(dense[i, j].real, rel=1e-14)
        assert Y.b_off[k] == pytest.approx(dense[i, j].imag, rel=1e-14)
    assert np.allclose(Y.g_diag, np.diag(dense).real, rtol=1e-14)
    assert np.allclose(Y.b_diag, np.diag(dense).imag, rtol=1e-14)


def test_row_sums_vanish_without_shunts(case33):
    Y = case_admittance(case33)
    for i in range(case33.n_buses):
        assert abs(Y.row_sum_g(i)) < 1e-9
        assert abs(Y.row_sum_b(i)) < 1e-9


def test_symmetric_lookup(case33):
    Y = case_admittance(case33)
    for i, j in Y.pairs:
        assert Y.G(i, j) == Y.G(j, i)
        assert Y.B(i, j) == Y.B(j, i)


def test_33bus_flow_equations_reproduce_power_flow(case33):
    """Admittance-based flows at a reference AC power-flow solution."""
    pos = case33.bus_position()
    s = np.zeros(case33.n_buses, dtype=complex)
    for ld in case33.loads:
        s[pos[ld.bus]] -= complex(ld.p_peak, ld.q_peak)
    V = fixed_point_power_flow(case33, s)
    ph = RecoveredPhasors(V.real[:, None], V.imag[:, None])
    (Pf, Qf), (Pr, Qr) = ac_flows(ph, case33)
    fwd, rev = branch_flows(case33, V)
    assert np.abs(Pf[:, 0] - fwd.real).max() <= 1e-8
    assert np.abs(Qf[:, 0] - fwd.imag).max() <= 1e-8
    assert np.abs(Pr[:, 0] - rev.real).max() <= 1e-8
    assert np.abs(Qr[:, 0] - rev.imag).max() <= 1e-8
    # nodal balance: injection equals the sum of outgoing flows
    out = np.zeros(case33.n_buses, dtype=complex)
    for k, br in enumerate(case33.branches):
        out[pos[br.from_bus]] += fwd[k]
        out[pos[br.to_bus]] += rev[k]
    slack = pos[case33.slack.id]
    mask = np.arange(case33.n_buses) != slack
    assert np.abs(out[mask] - s[mask]).max() <= 1e-8


@settings(max_examples=40, deadline=None)
@given(
    r=st.floats(0.001, 0.5), x=st.floats(0.001, 0.5),
    vi=st.floats(0.9, 1.1), vj=st.floats(0.9, 1.1), di=st.floats(-0.3, 0.3), dj=st.floats(-0.3, 0.3),
)
def test_flow_formula_matches_complex_arithmetic(r, x, vi, vj, di, dj):
    """Off-diagonal G/B in the lifted flow form equal S_ij = V_i conj((V_i - V_j) y)."""
    case = two_bus(r=r, x=x)
    Vi, Vj = vi * np.exp(1j * di), vj * np.exp(1j * dj)
    ph = RecoveredPhasors(np.array([[Vi.real], [Vj.real]]), np.array([[Vi.imag], [Vj.imag]]))
    (Pf, Qf), (Pr, Qr) = ac_flows(ph, case)
    y = 1.0 / complex(r, x)
    Sij = Vi * np.conj((Vi - Vj) * y)
    Sji = Vj * np.conj((Vj - Vi) * y)
    scale = max(1.0, abs(y))
    assert abs(Pf[0, 0] - Sij.real) <= 1e-12 * scale
    assert abs(Qf[0, 0] - Sij.imag) <= 1e-12 * scale
    assert abs(Pr[0, 0] - Sji.real) <= 1e-12 * scale
    assert abs(Qr[0, 0] - Sji.imag) <= 1e-12 * scale


def test_zero_impedance_rejected():
    with pytest.raises(NetworkError):
        Branch(1, 2, 0.0, 0.0, 1.0)


# --- topology -------------------------------------------------------------------

def test_33bus_is_radial(case33):
    assert case33.n_buses == 33 and len(case33.branches) == 32
    assert check_radial(case33)


def test_triangle_is_not_radial():
    assert check_radial(_case(3, [(1, 2), (2, 3), (3, 1)])) is False


def test_disconnected_raises_distinct_error():
    with pytest.raises(DisconnectedNetworkError):
        check_radial(_case(4, [(1, 2), (3, 4)]))


@pytest.mark.parametrize("n", [3, 4, 5])
def test_radial_iff_every_branch_is_a_bridge(n):
    """Enumerate all edge subsets of K_n that connect the graph."""
    all_edges = list(itertools.combinations(range(1, n + 1), 2))
    for m in range(n - 1, len(all_edges) + 1):
        for edges in itertools.combinations(all_edges, m):
            case = _case(n, edges)
            try:
                radial = check_radial(case)
            except DisconnectedNetworkError:
                continue
            bridges = True
            for k in range(len(edges)):
                try:
                    check_radial(_case(n, edges[:k] + edges[k + 1:]))
                    bridges = False
                except DisconnectedNetworkError:
                    pass
            assert radial == bridges


def test_neighbors_examples(case33):
    assert neighbors(path(3), 2) == [1, 3]
    assert neighbors(case33, 18) == [17]
    assert neighbors(case33, 1) == [2]


def test_neighbors_unknown_bus():
    with pytest.raises(NetworkError):
        neighbors(path(3), 9)


def test_tree_order_visits_every_bus_once(case33):
    tree = tree_order(case33)
    assert sorted(tree.order) == list(range(33))
    assert tree.order[0] == case33.bus_position()[case33.slack.id]
    assert len(tree.parent) == 32


def test_case_validation():
    with pytest.raises(NetworkError):
        NetworkCase("x", (Bus(1), Bus(2)), ())  # no slack
    with pytest.raises(NetworkError):
        NetworkCase("x", (Bus(1, is_slack=True),), (Branch(1, 99, 0.1, 0.1, 1.0),))
    with pytest.raises(NetworkError):
        NetworkCase("x", (Bus(1, is_slack=True), Bus(2)), (),
                    (Load(2, 0.1, 0.0, np.ones(2)), Load(1, 0.1, 0.0, np.ones(3))))
    with pytest.raises(NetworkError):
        Bus(1, vmin=1.1, vmax=0.9)
