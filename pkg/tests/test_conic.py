import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from evopf.analysis import decode
from evopf.builder import build
from evopf.conic import ConeLayout, ConeSlice, NTScaling, SolverSettings, StandardForm, Status, residuals, solve
from evopf.conic.equilibrate import ruiz
from evopf.powerflow import fixed_point_power_flow
from factories import conic_program, empty_fleet, epigraph_example, norm_cone_example, scenario, two_bus


_program = conic_program


def _random_feasible(rng, n=6, p=2, q_dims=(3, 4), n_lp=3):
    """Random SOCP with strictly feasible primal and dual points, so it has an optimum."""
    slices, m = [], 0
    slices.append(ConeSlice("l", 0, n_lp))
    m = n_lp
    for d in q_dims:
        slices.append(ConeSlice("q", m, d))
        m += d
    L = ConeLayout.from_slices(slices, m)
    A = rng.standard_normal((p, n))
    G = rng.standard_normal((m, n))
    x0 = rng.standard_normal(n)
    s0 = L.unit() + 0.3 * L.project(rng.standard_normal(m))
    z0 = L.unit() + 0.3 * L.project(rng.standard_normal(m))
    y0 = rng.standard_normal(p)
    c = -A.T @ y0 - G.T @ z0
    return _program(c, A, A @ x0, G, G @ x0 + s0, slices)


# --- worked examples ---------------------------------------------------------------

def test_norm_cone_example():
    out = solve(norm_cone_example())
    assert out.status is Status.OPTIMAL
    assert out.x[0] == pytest.approx(5.0, abs=1e-7)
    assert out.objective == pytest.approx(5.0, abs=1e-7)


def test_epigraph_example():
    out = solve(epigraph_example())
    assert out.status is Status.OPTIMAL
    assert out.x[1] == pytest.approx(1.0, abs=1e-7)


def test_epigraph_lower_end_is_p_squared():
    out = solve(epigraph_example(sense=1.0))
    assert out.status is Status.OPTIMAL
    assert out.x[1] == pytest.approx(0.25, abs=1e-7)


def test_bound_only_variables():
    prog = _program([1.0, -1.0], np.zeros((0, 2)), [], np.zeros((0, 2)), [], [], lb=[-2.0, 0.0], ub=[3.0, 4.0])
    out = solve(prog)
    assert np.allclose(out.x, [-2.0, 4.0], atol=1e-7)


@settings(max_examples=15, deadline=None)
@given(p=st.floats(0.0, 0.03), q=st.floats(-0.01, 0.02), r=st.floats(0.01, 0.2), x=st.floats(0.01, 0.2))
def test_two_bus_opf_matches_power_flow(p, q, r, x):
    net = two_bus(p=p, q=q, r=r, x=x)
    prog = build(net, empty_fleet(), scenario([30.0]))
    out = solve(prog)
    assert out.status is Status.OPTIMAL
    sol = decode(prog, out.x)
    V = fixed_point_power_flow(net, np.array([0.0, -complex(p, q)]))
    assert abs(sol.c_ii[1, 0] - abs(V[1]) ** 2) <= 1e-6
    # slack injection equals load plus losses
    loss = abs((V[0] - V[1]) / complex(r, x)) ** 2 * r
    assert sol.P_g[0] == pytest.approx(p + loss, abs=1e-6)


# --- residuals -----------------------------------------------------------------------

def test_residual_of_zero_point():
    prog = _program([1.0, 1.0], [[1.0, 2.0]], [3.0], [[-1.0, 0.0]], [0.0], [ConeSlice("l", 0, 1)])
    rep = residuals(prog, np.zeros(2), np.zeros(1), np.zeros(1))
    assert rep.primal == pytest.approx(3.0)
    assert rep.dual == pytest.approx(np.sqrt(2.0))


def test_residual_grows_with_perturbation():
    prog = _random_feasible(np.random.default_rng(3))
    out = solve(prog)
    assert out.status is Status.OPTIMAL
    base = residuals(prog, out.x, out.y, out.z).primal
    prev = base
    for eps in (1e-4, 1e-2, 1.0):
        r = residuals(prog, out.x + eps * np.ones(prog.n), out.y, out.z).primal
        assert r > prev
        prev = r


# --- invariances ---------------------------------------------------------------------

@pytest.mark.parametrize("alpha", [1e-3, 7.0, 1e3])
def test_objective_scaling_invariance(alpha):
    prog = _random_feasible(np.random.default_rng(11))
    a, b = solve(prog), solve(prog.scaled_objective(alpha))
    assert a.status is Status.OPTIMAL and b.status is Status.OPTIMAL
    assert np.allclose(a.x, b.x, atol=1e-5)
    assert b.objective == pytest.approx(alpha * a.objective, rel=1e-6, abs=1e-6 * alpha)


def test_repeated_solves_are_bit_identical():
    prog = build(two_bus(T=3, shape=[1.0, 0.5, 0.8]), empty_fleet(3), scenario([20.0, 35.0, 60.0]))
    a, b = solve(prog), solve(prog)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.z, b.z) and a.iterations == b.iterations


@pytest.mark.parametrize("seed", range(6))
def test_random_socp_against_reference_solver(seed):
    """Compare optima with an independent interior-point code."""
    clarabel = pytest.importorskip("clarabel")
    prog = _random_feasible(np.random.default_rng(seed))
    out = solve(prog)
    assert out.status is Status.OPTIMAL
    std = StandardForm.from_program(prog)
    cones = [clarabel.ZeroConeT(std.A.shape[0])]
    for sl in sorted(prog.cones, key=lambda s: s.start):
        cones.append(clarabel.NonnegativeConeT(sl.size) if sl.kind == "l" else clarabel.SecondOrderConeT(sl.size))
    M = sp.vstack([std.A, std.G]).tocsc()
    ref_settings = clarabel.DefaultSettings()
    ref_settings.verbose = False
    ref = clarabel.DefaultSolver(sp.csc_matrix((prog.n, prog.n)), std.c, M, np.concatenate([std.b, std.h]),
                                 cones, ref_settings).solve()
    assert str(ref.status) == "Solved"
    assert out.objective == pytest.approx(ref.obj_val, rel=1e-6, abs=1e-7)


# --- infeasibility ---------------------------------------------------------------------

def test_primal_infeasible_certificate():
    """x >= 1 and x <= 0."""
    prog = _program([1.0], np.zeros((0, 1)), [], [[-1.0], [1.0]], [-1.0, 0.0], [ConeSlice("l", 0, 2)])
    out = solve(prog)
    assert out.status is Status.PRIMAL_INFEASIBLE
    std = StandardForm.from_program(prog)
    y, z = out.certificate[: std.A.shape[0]], out.certificate[std.A.shape[0]:]
    assert std.b @ y + std.h @ z == pytest.approx(-1.0)
    assert np.linalg.norm(std.A.T @ y + std.G.T @ z) <= 1e-8
    assert std.layout.dist(z) <= 1e-8


def test_dual_infeasible_certificate():
    """min -x  s.t.  x >= 0 is unbounded below."""
    prog = _program([-1.0], np.zeros((0, 1)), [], [[-1.0]], [0.0], [ConeSlice("l", 0, 1)])
    out = solve(prog)
    assert out.status is Status.DUAL_INFEASIBLE
    d = out.certificate
    assert prog.c @ d == pytest.approx(-1.0)
    assert -(prog.G @ d)[0] >= -1e-8


def test_settings_validation():
    with pytest.raises(ValueError):
        SolverSettings(feas_tol=0.0)
    with pytest.raises(ValueError):
        SolverSettings(step_fraction=1.0)


# --- cone primitives -------------------------------------------------------------------

LAYOUT = ConeLayout.from_slices([ConeSlice("l", 0, 2), ConeSlice("q", 2, 3), ConeSlice("q", 5, 4)], 9)
vec9 = st.lists(st.floats(-10, 10), min_size=9, max_size=9).map(np.array)


def _interior(v):
    return LAYOUT.project(v) + 0.5 * LAYOUT.unit()


@settings(max_examples=80, deadline=None)
@given(vec9)
def test_projection_properties(v):
    p = LAYOUT.project(v)
    assert LAYOUT.min_eig(p) >= -1e-9
    assert np.allclose(LAYOUT.project(p), p, atol=1e-9)
    # v - p lies in the polar cone and is orthogonal to p (Moreau)
    r = p - v
    assert LAYOUT.min_eig(r) >= -1e-9
    assert abs(p @ r) <= 1e-8 * max(1.0, v @ v)


@settings(max_examples=80, deadline=None)
@given(vec9, vec9)
def test_jordan_solve_inverts_product(a, v):
    lam = _interior(a)
    x = LAYOUT.jordan_solve(lam, v)
    assert np.allclose(LAYOUT.jordan(lam, x), v, atol=1e-8 * max(1.0, np.abs(v).max()))


@settings(max_examples=80, deadline=None)
@given(vec9, vec9)
def test_max_step_reaches_boundary(a, d):
    x = _interior(a)
    alpha = LAYOUT.max_step(x, d)
    if alpha < 1e6:
        assert abs(LAYOUT.min_eig(x + alpha * d)) <= 1e-7 * max(1.0, alpha * np.abs(d).max())
        assert LAYOUT.min_eig(x + 0.99 * alpha * d) > 0
    else:
        assert LAYOUT.min_eig(x + 10.0 * d) >= 0


@settings(max_examples=80, deadline=None)
@given(vec9, vec9)
def test_nt_scaling_identity(a, b):
    s, z = _interior(a), _interior(b)
    W = NTScaling.compute(LAYOUT, s, z)
    assert np.allclose(W.apply(z), W.lam, rtol=1e-8, atol=1e-9)
    assert np.allclose(W.apply_inv(s), W.lam, rtol=1e-8, atol=1e-9)
    assert np.allclose(W.apply_inv(W.apply(a)), a, atol=1e-8 * max(1.0, np.abs(a).max()))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_ruiz_shares_scale_within_each_cone(seed):
    rng = np.random.default_rng(seed)
    A = sp.csc_matrix(rng.standard_normal((2, 5)) * 10.0 ** rng.integers(-3, 3, (2, 5)))
    G = sp.csc_matrix(rng.standard_normal((9, 5)) * 10.0 ** rng.integers(-3, 3, (9, 5)))
    eq, _, _ = ruiz(A, G, rng.standard_normal(5), LAYOUT)
    for idx in LAYOUT.soc.values():
        blk = eq.row_cone[idx]
        assert np.all(blk == blk[:, :1])
    assert np.all(eq.col > 0) and np.all(eq.row_cone > 0)
