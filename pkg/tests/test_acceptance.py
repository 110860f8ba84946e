"""End-to-end acceptance criteria. Each test records one PASS/FAIL line for the terminal summary."""

import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, STUDY_SECONDS, desk_study
from evopf.analysis import decode, recover_phasors
from evopf.bnb import BnBSettings, MipStatus, solve_mip
from evopf.builder import build
from evopf.conic import Status, solve
from evopf.data_io import report_tables
from evopf.powerflow import fixed_point_power_flow, ybus
from evopf.scenarios import PRESETS, RunSettings, base_config, run_scenario, run_study, study_spec
from factories import (
    KWH, empty_fleet, enumerate_optimum, epigraph_example, norm_cone_example, scenario, two_bus, two_level_fleet,
)

EXACT_TOL = 1e-6  # cone tightness, AC residuals, cyclic closure, line limits
ORACLE_REL = 1e-6
STUDY_SECONDS_MAX = 15 * 60.0
PF_TOL = 1e-6


def _record(n: int, ok: bool, detail: str):
    ACCEPTANCE_LINES.append(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def _desk_results(inputs):
    return [r for kind in ("charging-levels", "solar-penetration", "degradation-cost")
            for r in desk_study(kind, inputs).results]


def test_criterion_1_branch_and_bound_matches_enumeration():
    net, fleet, sc = two_bus(T=2), two_level_fleet(T=2), scenario([30.0, 40.0])
    t0 = time.perf_counter()
    mip = solve_mip(build(net, fleet, sc), BnBSettings(rel_gap_tol=1e-9))
    elapsed = time.perf_counter() - t0
    ref = enumerate_optimum(net, fleet, sc)
    rel = abs(mip.objective - ref) / abs(ref)
    ok = mip.status is MipStatus.OPTIMAL and rel <= ORACLE_REL and elapsed < 10.0
    _record(1, ok, f"rel diff {rel:.1e} (<= {ORACLE_REL:.0e}), {elapsed:.2f} s (< 10 s), 9 patterns")


def test_criterion_2_radial_exactness(inputs):
    results = _desk_results(inputs)
    ok = all(r.ok for r in results)
    exact = max(r.quality.max_exactness for r in results if r.ok)
    ac = max(r.ac.max for r in results if r.ok)
    ok = ok and exact <= EXACT_TOL and ac <= EXACT_TOL
    _record(2, ok, f"{len(results)} desk solutions recovered, max tightness {exact:.1e}, max AC residual {ac:.1e}"
                   f" (<= {EXACT_TOL:.0e})")


def _gap_abs(r, gap_tol):
    return max(r.mip.gap, gap_tol) * abs(r.report.costs["total"])


def test_criterion_3_charging_level_ordering(charging_study):
    fast, comb, l2 = charging_study.results
    assert all(r.ok for r in (fast, comb, l2))
    tol = PRESETS["desk"].rel_gap
    c = [r.report.costs["total"] for r in (fast, comb, l2)]
    d1, d2 = c[1] - c[0], c[2] - c[1]
    g1 = _gap_abs(fast, tol) + _gap_abs(comb, tol)
    g2 = _gap_abs(comb, tol) + _gap_abs(l2, tol)
    h_fast, h_l2 = fast.report.hours_below_at(18), l2.report.hours_below_at(18)
    secs = STUDY_SECONDS["charging-levels"]
    ok = d1 > g1 and d2 > g2 and h_fast >= h_l2 and secs <= STUDY_SECONDS_MAX
    _record(3, ok, f"cost fast {c[0]:.2f} < combined {c[1]:.2f} < level2 {c[2]:.2f} (gaps {g1:.2f}, {g2:.2f});"
                   f" bus-18 hours below 0.95: fast {h_fast} >= level2 {h_l2}; {secs:.1f} s")


def test_criterion_4_solar_penetration(solar_study):
    assert all(r.ok for r in solar_study.results)
    t = solar_study.table
    cost, vmin = t.total_cost, t.min_voltage_bus18
    secs = STUDY_SECONDS["solar-penetration"]
    ok = bool(np.all(np.diff(cost) < 0) and np.all(np.diff(vmin) >= -EXACT_TOL)) and secs <= STUDY_SECONDS_MAX
    _record(4, ok, f"cost {np.round(cost, 2).tolist()} strictly decreasing; min bus-18 voltage"
                   f" {np.round(vmin, 4).tolist()} non-decreasing; {secs:.1f} s")


def test_criterion_5_degradation_cost(degradation_study):
    assert all(r.ok for r in degradation_study.results)
    peak = np.array([r.report.max_charging_kw() for r in degradation_study.results])  # (C_D, EVs)
    deg = np.array([r.report.costs["degradation"] for r in degradation_study.results])
    slack = EXACT_TOL * KWH  # solver tolerance expressed in kW
    ok = bool(np.all(np.diff(peak, axis=0) <= slack) and np.all(np.diff(deg) >= 0))
    _record(5, ok, f"peak kW per EV non-increasing over C_D (max rise {np.diff(peak, axis=0).max():.2f});"
                   f" degradation term {np.round(deg, 3).tolist()} non-decreasing")


def _two_bus_vs_power_flow():
    net = two_bus(p=0.1, q=0.05, r=0.05, x=0.05)
    prog = build(net, empty_fleet(), scenario([30.0]))
    out = solve(prog)
    sol = decode(prog, out.x)
    ph = recover_phasors(sol, net)
    V = fixed_point_power_flow(net, np.array([0.0, -0.1 - 0.05j]))
    S_g = V[0] * np.conj(ybus(net)[0] @ V)
    v_err = np.abs(np.abs(V) - ph.magnitude[:, 0]).max()
    s_err = max(abs(sol.P_g[0] - S_g.real), abs(sol.Q_g[0] - S_g.imag))
    return out.optimal, max(v_err, s_err)


def test_criterion_6_solver_suite():
    a = solve(norm_cone_example())
    b = solve(epigraph_example())
    lo = solve(epigraph_example(sense=1.0))
    pf_ok, pf_err = _two_bus_vs_power_flow()
    prog = build(two_bus(T=2), two_level_fleet(T=2), scenario([30.0, 40.0]))
    runs = [solve(prog.relaxed()) for _ in range(3)]
    same = all(np.array_equal(r.x, runs[0].x) and np.array_equal(r.z, runs[0].z) for r in runs[1:])
    ok = (a.status is Status.OPTIMAL and abs(a.x[0] - 5.0) <= 1e-7
          and b.status is Status.OPTIMAL and abs(b.x[1] - 1.0) <= 1e-7
          and lo.status is Status.OPTIMAL and abs(lo.x[1] - 0.25) <= 1e-7
          and pf_ok and pf_err <= PF_TOL and same)
    _record(6, ok, f"x* = {a.x[0]:.9f}; u* = {b.x[1]:.9f} (lower end {lo.x[1]:.9f}); 2-bus OPF vs power flow"
                   f" {pf_err:.1e}; repeated solves bit-identical: {same}")


def test_criterion_7_post_checks(inputs):
    results = _desk_results(inputs)
    worst: dict[str, float] = {}
    ok = all(r.ok for r in results)
    for r in results:
        if not r.ok:
            continue
        ok = ok and r.post.ok
        for k, v in r.post.violations.items():
            worst[k] = max(worst.get(k, -np.inf), v)
    ok = ok and worst["cyclic_balance"] <= EXACT_TOL and worst["line_limit"] <= EXACT_TOL
    ok = ok and worst["exclusive"] <= BnBSettings().integrality_tol
    _record(7, ok, f"{len(results)} incumbents; cyclic closure {worst['cyclic_balance']:.1e}, exclusivity"
                   f" {worst['exclusive']:.1e}, line limit {worst['line_limit']:.1e}")


@pytest.fixture(scope="module")
def menu_runs(inputs):
    """A desk instance with both charger levels at every point, forced to branch for 24 nodes."""
    cfg = replace(base_config(PRESETS["desk"]), name="menu", charger_mix="menu")
    return [run_scenario(inputs, cfg, RunSettings(BnBSettings(rel_gap_tol=1e-9, workers=w, node_limit=24)))
            for w in (1, 4)]


def test_criterion_8_worker_count_determinism(inputs, charging_study, menu_runs):
    par = run_study(study_spec("charging-levels", "desk"), inputs, RunSettings.for_preset(PRESETS["desk"], workers=4))
    same_x = all(np.array_equal(a.mip.x, b.mip.x) for a, b in zip(charging_study.results, par.results))
    same_tables = (par.table.to_csv() == charging_study.table.to_csv()
                   and par.table.violations_csv() == charging_study.table.violations_csv()
                   and all(report_tables(a.report) == report_tables(b.report)
                           for a, b in zip(charging_study.results, par.results)))
    one, four = menu_runs
    same_tree = (np.array_equal(one.mip.x, four.mip.x) and one.mip.edges == four.mip.edges
                 and report_tables(one.report) == report_tables(four.report))
    ok = same_x and same_tables and same_tree and len(one.mip.edges) > 1
    _record(8, ok, f"workers 1 vs 4: study incumbents equal {same_x}, tables equal {same_tables};"
                   f" branching run ({one.mip.nodes} nodes) identical {same_tree}")
