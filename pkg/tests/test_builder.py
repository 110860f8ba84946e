import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evopf.analysis import decode, exactness_residual
from evopf.builder import (
    SYMBOLS, BuildError, BuildOptions, ScenarioConfig, build, census, census_formula, charger_assignment,
    epigraph_quadratic, fix_pattern, prepare, solar_penetration, with_solar_penetration,
)
from evopf.conic import ConeLayout, ConeSlice, Status, solve
from evopf.fleet import FleetConfig
from evopf.powerflow import fixed_point_power_flow
from evopf.scenarios import PRESETS
from factories import empty_fleet, path, scenario, two_bus, two_level_fleet

GOLDEN = Path(__file__).parent / "data" / "census_golden.json"


def _instance_formula(inst, both=True):
    net, fleet = inst.network, inst.fleet
    K = sum(len(ev.levels) for ev in fleet.evs)
    multi = [ev for ev in fleet.evs if len(ev.levels) > 1]
    return census_formula(net.n_buses, len(net.branches), fleet.horizon, len(net.solar), len(fleet.evs), K,
                          len(multi), sum(len(ev.levels) for ev in multi), both)


# --- cone and row structure -------------------------------------------------------

def test_two_bus_single_hour_cones():
    prog = build(two_bus(), empty_fleet(), scenario([30.0]))
    kinds = [(c.kind, c.size) for c in prog.cones]
    assert kinds.count(("q", 4)) == 1
    assert kinds.count(("q", 3)) == 2  # line limit at each end


def test_line_limit_one_direction():
    prog = build(two_bus(), empty_fleet(), scenario([30.0], limit_both_directions=False))
    kinds = [(c.kind, c.size) for c in prog.cones]
    assert kinds.count(("q", 4)) == 1 and kinds.count(("q", 3)) == 1
    c = census(prog)
    assert c == census_formula(2, 1, 1, 0, 0, 0, both_directions=False)


@pytest.mark.parametrize("key", ["full/fast", "full/menu", "desk/combined"])
def test_census_matches_formula_and_golden(inputs, key):
    preset, mix = key.split("/")
    inst = prepare(inputs.network, inputs.profiles, inputs.fleet,
                   ScenarioConfig("c", mix, points=PRESETS[preset].points))
    got = census(inst.build())
    assert got == _instance_formula(inst)
    assert got == json.loads(GOLDEN.read_text())[key]


def test_doubling_horizon_doubles_counts():
    def counts(T):
        net = two_bus(T=T)
        return census(build(net, two_level_fleet(T=T), scenario(np.full(T, 30.0))))

    a, b = counts(2), counts(4)
    for k, v in a.items():
        if k != "sos1_groups":
            assert b[k] == 2 * v, k
    assert b["sos1_groups"] == 2 * a["sos1_groups"]


def test_every_symbol_resolves():
    prog = build(two_bus(T=2), two_level_fleet(T=2), scenario([30.0, 40.0]))
    for sym, (kind, where) in SYMBOLS.items():
        if kind == "var":
            assert where in prog.var_blocks, sym


# --- epigraph ---------------------------------------------------------------------

def _epigraph_holds(p, u, scale=1.0):
    rows, cols, vals, h = epigraph_quadratic(0, 1, scale)
    G = np.zeros((3, 2))
    G[rows, cols] = vals
    v = h - G @ np.array([p, u])
    return ConeLayout.from_slices([ConeSlice("q", 0, 3)], 3).dist(v) <= 1e-12


@pytest.mark.parametrize("p,u", [(3.0, 9.0), (0.0, 0.0), (0.5, 0.25)])
def test_epigraph_tight_points(p, u):
    assert _epigraph_holds(p, u)
    assert not _epigraph_holds(p, u - 1e-3)


@settings(max_examples=60, deadline=None)
@given(st.floats(-50, 50), st.floats(0, 3000), st.floats(0.1, 10))
def test_epigraph_membership_iff_square(p, u, scale):
    want = (p / scale) ** 2 <= u
    slack = abs((p / scale) ** 2 - u)
    if slack > 1e-6 * max(1.0, u):
        assert _epigraph_holds(p, u, scale) == want


# --- binaries ---------------------------------------------------------------------

def test_fix_after_build_equals_fix_during_build():
    net, fleet, sc = two_bus(T=2), two_level_fleet(T=2), scenario([30.0, 40.0])
    pattern = np.array([[1, -1]])
    a = build(net, fleet, sc, BuildOptions(fix_binaries=pattern))
    b = fix_pattern(build(net, fleet, sc), pattern)
    r = build(net, fleet, sc, BuildOptions(relax_binaries=True))
    for p in (b, r):
        assert (a.A != p.A).nnz == 0 and (a.G != p.G).nnz == 0
        assert np.array_equal(a.h, p.h) and np.array_equal(a.b, p.b) and np.array_equal(a.c, p.c)
    assert np.array_equal(a.lb, b.lb) and np.array_equal(a.ub, b.ub)
    assert len(r.integer) == 0 and len(a.integer) == 4


def test_bad_pattern_shape():
    prog = build(two_bus(T=2), two_level_fleet(T=2), scenario([30.0, 40.0]))
    with pytest.raises(BuildError):
        fix_pattern(prog, np.array([[0, 0, 0]]))
    with pytest.raises(BuildError):
        BuildOptions(fix_binaries=np.zeros((1, 2)), relax_binaries=True)


def test_no_charging_with_travel_is_infeasible():
    prog = build(two_bus(T=2), two_level_fleet(T=2), scenario([30.0, 40.0]),
                 BuildOptions(fix_binaries=np.array([[-1, -1]])))
    assert solve(prog).status is Status.PRIMAL_INFEASIBLE


def test_no_charging_without_travel_is_feasible():
    prog = build(two_bus(T=2), two_level_fleet(T=2, r_d=[0.0, 0.0]), scenario([30.0, 40.0]),
                 BuildOptions(fix_binaries=np.array([[-1, -1]])))
    assert solve(prog).status is Status.OPTIMAL


def test_unrechargeable_travel_rejected():
    with pytest.raises(BuildError, match="recharged"):
        build(two_bus(T=2), two_level_fleet(T=2, r_c=[1e-4, 1e-4]), scenario([30.0, 40.0]))


def test_meshed_network_rejected():
    from evopf.network import Branch, Bus, NetworkCase

    buses = (Bus(1, is_slack=True), Bus(2), Bus(3))
    br = (Branch(1, 2, 0.01, 0.01, 1.0), Branch(2, 3, 0.01, 0.01, 1.0), Branch(3, 1, 0.01, 0.01, 1.0))
    with pytest.raises(BuildError, match="radial"):
        build(NetworkCase("mesh", buses, br), empty_fleet(), scenario([30.0]))


# --- relaxation against a power flow ------------------------------------------------

@pytest.mark.parametrize("net", [two_bus(p=0.02, q=0.01), path(5, load=0.004)], ids=["two-bus", "path5"])
def test_pure_opf_matches_power_flow(net):
    """No EVs, no solar: the only dispatch is the physical one."""
    prog = build(net, empty_fleet(), scenario([30.0]))
    out = solve(prog)
    assert out.status is Status.OPTIMAL
    sol = decode(prog, out.x)
    s = np.zeros(net.n_buses, dtype=complex)
    pos = net.bus_position()
    for ld in net.loads:
        s[pos[ld.bus]] -= complex(ld.p_peak, ld.q_peak)
    V = fixed_point_power_flow(net, s)
    assert np.abs(sol.c_ii[:, 0] - np.abs(V) ** 2).max() <= 1e-6
    assert exactness_residual(sol).max() <= 1e-6


def test_voltage_drops_with_load():
    """Heavier feeder loading never raises the lowest squared voltage."""
    lows = []
    for load in (0.002, 0.004, 0.008):
        net = path(5, load=load)
        prog = build(net, empty_fleet(), scenario([30.0]))
        lows.append(decode(prog, solve(prog).x).c_ii.min())
    assert lows[0] >= lows[1] >= lows[2]


# --- scenario preparation ----------------------------------------------------------

def test_combined_mix_puts_fast_on_even_buses():
    cfg = FleetConfig(points=(17, 18, 33))
    assert charger_assignment(cfg, "combined") == {17: ("level2",), 18: ("fast",), 33: ("level2",)}
    assert charger_assignment(cfg, "menu")[18] == ("level2", "fast")
    with pytest.raises(BuildError):
        charger_assignment(cfg, "warp")


@pytest.mark.parametrize("ratio", [0.05, 0.10, 0.20])
def test_solar_penetration_rescale(inputs, ratio):
    assert solar_penetration(with_solar_penetration(inputs.network, ratio)) == pytest.approx(ratio, rel=1e-12)


def test_scenario_config_validation():
    with pytest.raises(BuildError):
        ScenarioConfig(ev_penetration=0.0)
    with pytest.raises(BuildError):
        ScenarioConfig(solar_penetration=1.5)
    with pytest.raises(BuildError):
        ScenarioConfig(degradation_cost=-1.0)
