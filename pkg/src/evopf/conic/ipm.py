"""Primal-dual interior-point method on the homogeneous self-dual embedding.

The embedding of ``min c'x s.t. Ax = b, Gx + s = h, s in K`` is

    [0]   [  0   A'  G'  c ] [x]
    [0] = [ -A   0   0   b ] [y]
    [s]   [ -G   0   0   h ] [z]
    [k]   [ -c' -b' -h'  0 ] [t]

with ``s, z in K`` and ``t, k >= 0``. Each iteration takes a Mehrotra
predictor-corrector step in Nesterov-Todd scaled variables; both the
predictor and corrector reuse one factorisation of the reduced KKT matrix.
``t -> 0`` with ``k > 0`` signals infeasibility, and the iterates then carry
the certificate.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .cones import NTScaling
from .equilibrate import identity, ruiz
from .kkt import KKTSystem
from .program import ConicProgram, StandardForm


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    OPTIMAL_INACCURATE = "optimal-inaccurate"  # stalled, but within the reduced tolerances
    PRIMAL_INFEASIBLE = "primal-infeasible"
    PRIMAL_INFEASIBLE_INACCURATE = "primal-infeasible-inaccurate"  # certificate within the reduced tolerance
    DUAL_INFEASIBLE = "dual-infeasible"
    ITERATION_LIMIT = "iteration-limit"
    NUMERICAL_FAILURE = "numerical-failure"


@dataclass(frozen=True)
class SolverSettings:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iterations: int = 200
    static_reg: float = 1e-9
    refine_steps: int = 5
    step_fraction: float = 0.99
    equilibrate: bool = True
    ruiz_iterations: int = 25
    reduced_tol: float = 1e-6  # accepted for primal, dual and gap residuals when progress stalls
    # accepted certificate residual when progress stalls; a certificate with
    # residual r rules out every feasible point with ||x|| < 1/r
    reduced_infeas_tol: float = 1e-4
    log: Callable[[str], None] | None = field(default=None, compare=False)

    def __post_init__(self):
        if min(self.feas_tol, self.gap_tol, self.static_reg, self.reduced_tol, self.reduced_infeas_tol) <= 0:
            raise ValueError("solver tolerances must be positive")
        if not 0 < self.step_fraction < 1:
            raise ValueError("step_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class ResidualReport:
    primal: float  # ||(Ax - b, dist_K(h - Gx))||
    dual: float  # ||(A'y + G'z + c, dist_K(z))||
    gap: float  # |c'x + b'y + h'z|
    pobj: float
    dobj: float
    primal_scale: float
    dual_scale: float

    @property
    def primal_rel(self) -> float:
        return self.primal / self.primal_scale

    @property
    def dual_rel(self) -> float:
        return self.dual / self.dual_scale

    @property
    def gap_rel(self) -> float:
        return self.gap / max(1.0, min(abs(self.pobj), abs(self.dobj)))

    def converged(self, settings: SolverSettings) -> bool:
        return (
            self.primal_rel <= settings.feas_tol
            and self.dual_rel <= settings.feas_tol
            and self.gap_rel <= settings.gap_tol
        )


@dataclass
class SolveOutcome:
    status: Status
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    s: np.ndarray
    objective: float
    residuals: ResidualReport | None
    iterations: int
    certificate: np.ndarray | None = None

    @property
    def optimal(self) -> bool:
        """True for OPTIMAL and OPTIMAL_INACCURATE: the point is a usable solution."""
        return self.status in (Status.OPTIMAL, Status.OPTIMAL_INACCURATE)

    @property
    def infeasible(self) -> bool:
        """True when a primal infeasibility certificate was found."""
        return self.status in (Status.PRIMAL_INFEASIBLE, Status.PRIMAL_INFEASIBLE_INACCURATE)


def _residuals_std(std: StandardForm, x, y, z) -> ResidualReport:
    L = std.layout
    rp = np.concatenate([std.A @ x - std.b, (std.h - std.G @ x) - L.project(std.h - std.G @ x)])
    rd = np.concatenate([std.A.T @ y + std.G.T @ z + std.c, z - L.project(z)])
    pobj = float(std.c @ x)
    dobj = float(-std.b @ y - std.h @ z)
    return ResidualReport(
        primal=float(np.linalg.norm(rp)),
        dual=float(np.linalg.norm(rd)),
        gap=abs(pobj - dobj),
        pobj=pobj,
        dobj=dobj,
        primal_scale=1.0 + max(np.linalg.norm(std.b), np.linalg.norm(std.h)),
        dual_scale=1.0 + float(np.linalg.norm(std.c)),
    )


def residuals(program: ConicProgram, x, y, z) -> ResidualReport:
    """Residuals of a candidate primal-dual point.

    ``y`` has one entry per equality row of the standard form (program rows
    followed by one row per fixed variable) and ``z`` one entry per cone row
    (program cone rows followed by finite lower then upper bound rows).
    :func:`solve` applies the same test after dividing ``c`` by a power of
    two near ``max|c|``; ``SolveOutcome.residuals`` refers to that program.
    """
    return _residuals_std(StandardForm.from_program(program), x, y, z)


def _shift_into_cone(v: np.ndarray, layout) -> np.ndarray:
    alpha = -layout.min_eig(v)
    if alpha >= -1e-8:
        return v + (1.0 + max(alpha, 0.0)) * layout.unit()
    return v


def solve(program: ConicProgram, settings: SolverSettings | None = None) -> SolveOutcome:
    settings = settings or SolverSettings()
    if program.n == 0:
        raise ValueError("empty program")
    program.check_finite()
    if not program.is_continuous:
        raise ValueError("program has free integer columns; relax or fix them first")
    std = StandardForm.from_program(program)
    # Stopping tests run on the objective normalised by a power of two near
    # max|c|, so scaling c leaves the iterates and the returned argmin unchanged.
    cmax = float(np.abs(std.c).max())
    if cmax == 0.0:
        return solve_standard(std, settings)
    k = 2.0 ** -np.frexp(cmax)[1]
    out = solve_standard(replace(std, c=std.c * k), settings)
    cert = out.certificate
    if out.status is Status.DUAL_INFEASIBLE and cert is not None:
        cert = cert * k
    return replace(out, y=out.y / k, z=out.z / k, objective=out.objective / k, certificate=cert)


def solve_standard(std: StandardForm, settings: SolverSettings) -> SolveOutcome:
    log = settings.log
    L = std.layout
    n, p, m = std.n, std.A.shape[0], std.G.shape[0]
    if m == 0:
        raise ValueError("program has no cone rows; add bounds or cones")

    if settings.equilibrate:
        eq, A, G = ruiz(std.A, std.G, std.c, L, settings.ruiz_iterations)
    else:
        eq, A, G = identity(std.A, std.G), std.A, std.G
    c = eq.cost * eq.col * std.c
    b = eq.row_eq * std.b
    h = eq.row_cone * std.h
    AT, GT = A.T.tocsr(), G.T.tocsr()

    def unscale(x, y, z, s, tau):
        return (
            eq.col * x / tau,
            eq.row_eq * y / (eq.cost * tau),
            eq.row_cone * z / (eq.cost * tau),
            s / eq.row_cone / tau,
        )

    kkt = KKTSystem(A, G, L, settings.static_reg, settings.refine_steps)
    try:
        kkt.factor(None)
    except Exception as exc:  # pragma: no cover - qdldl raises on zero pivots
        raise ArithmeticError(f"initial KKT factorisation failed: {exc}") from exc

    sol = kkt.solve(np.concatenate([np.zeros(n), b, h]))
    x = sol[:n]
    s = _shift_into_cone(-sol[n + p:], L)
    sol = kkt.solve(np.concatenate([-c, np.zeros(p), np.zeros(m)]))
    y = sol[n:n + p]
    z = _shift_into_cone(sol[n + p:], L)
    tau = kappa = 1.0
    deg = L.degree
    e = L.unit()

    best = None
    best_cert = (math.inf, None)
    status = Status.ITERATION_LIMIT
    it = 0
    for it in range(settings.max_iterations + 1):
        xu, yu, zu, su = unscale(x, y, z, s, tau)
        rep = _residuals_std(std, xu, yu, zu)
        if log:
            log(
                f"it={it:3d} pobj={rep.pobj:+.9e} dobj={rep.dobj:+.9e} pres={rep.primal_rel:.2e} "
                f"dres={rep.dual_rel:.2e} gap={rep.gap_rel:.2e} tau={tau:.2e} kappa={kappa:.2e}"
            )
        if not all(map(math.isfinite, (rep.primal, rep.dual, rep.gap))):
            status = Status.NUMERICAL_FAILURE
            break
        merit = max(rep.primal_rel, rep.dual_rel, rep.gap_rel)
        if best is None or merit < best[0]:
            best = (merit, xu, yu, zu, su, rep)
        if rep.converged(settings):
            return SolveOutcome(Status.OPTIMAL, xu, yu, zu, su, rep.pobj, rep, it)

        # infeasibility certificates (unscaled, normalised)
        if tau < kappa:
            yc, zc = eq.row_eq * y, eq.row_cone * z
            val = -(std.b @ yc + std.h @ zc)
            if val > 0:
                yc, zc = yc / val, zc / val
                res = np.linalg.norm(np.concatenate([std.A.T @ yc + std.G.T @ zc, zc - L.project(zc)]))
                cert = np.concatenate([yc, zc])
                if res <= settings.feas_tol:
                    return SolveOutcome(Status.PRIMAL_INFEASIBLE, xu, yu, zu, su, math.nan, rep, it, cert)
                if res < best_cert[0]:
                    best_cert = (res, cert)
            xc = eq.col * x
            val = -(std.c @ xc)
            if val > 0:
                xc = xc / val
                gx = -(std.G @ xc)
                res = np.linalg.norm(np.concatenate([std.A @ xc, gx - L.project(gx)]))
                if res <= settings.feas_tol:
                    return SolveOutcome(Status.DUAL_INFEASIBLE, xu, yu, zu, su, math.nan, rep, it, xc)
        if it == settings.max_iterations:
            break

        rx = -(AT @ y) - GT @ z - c * tau
        ry = A @ x - b * tau
        rz = s + G @ x - h * tau
        rt = kappa + c @ x + b @ y + h @ z
        mu = (s @ z + tau * kappa) / (deg + 1)

        try:
            W = NTScaling.compute(L, s, z)
            lam = W.lam
            kkt.factor(W)
        except Exception as exc:
            if log:
                log(f"scaling/factorisation failed: {exc}")
            status = Status.NUMERICAL_FAILURE
            break
        sol1 = kkt.solve(np.concatenate([-c, b, h]))
        x1, y1, z1 = sol1[:n], sol1[n:n + p], sol1[n + p:]
        den = c @ x1 + b @ y1 + h @ z1 - kappa / tau

        def direction(eta, ds_target, dk_target):
            rhs = np.concatenate([eta * rx, -eta * ry, -eta * rz - W.apply(L.jordan_solve(lam, ds_target))])
            sol2 = kkt.solve(rhs)
            x2, y2, z2 = sol2[:n], sol2[n:n + p], sol2[n + p:]
            dtau = (-eta * rt - dk_target / tau - (c @ x2 + b @ y2 + h @ z2)) / den
            dx = x2 + dtau * x1
            dy = y2 + dtau * y1
            dz = z2 + dtau * z1
            ds = W.apply(L.jordan_solve(lam, ds_target) - W.apply(dz))
            dkappa = (dk_target - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkappa

        def step_length(ds, dz, dtau, dkappa):
            a = min(L.max_step(s, ds), L.max_step(z, dz))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        # predictor
        aff = direction(1.0, -L.jordan(lam, lam), -tau * kappa)
        a_aff = min(1.0, step_length(aff[3], aff[2], aff[4], aff[5]))
        sigma = (1.0 - a_aff) ** 3
        # corrector
        corr = L.jordan(W.apply_inv(aff[3]), W.apply(aff[2]))
        ds_t = -L.jordan(lam, lam) + sigma * mu * e - corr
        dk_t = -tau * kappa + sigma * mu - aff[4] * aff[5]
        dx, dy, dz, ds, dtau, dkappa = direction(1.0 - sigma, ds_t, dk_t)
        if not np.all(np.isfinite(dx)) or not math.isfinite(dtau):
            if log:
                log("non-finite search direction")
            status = Status.NUMERICAL_FAILURE
            break
        alpha = min(1.0, settings.step_fraction * step_length(ds, dz, dtau, dkappa))
        if alpha < 1e-12:
            if log:
                log(f"step length collapsed ({alpha:.1e})")
            status = Status.NUMERICAL_FAILURE
            break
        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa

    merit, xu, yu, zu, su, rep = best
    if status is Status.NUMERICAL_FAILURE and merit <= settings.reduced_tol:
        status = Status.OPTIMAL_INACCURATE
    elif status is Status.NUMERICAL_FAILURE and best_cert[0] <= settings.reduced_infeas_tol:
        return SolveOutcome(Status.PRIMAL_INFEASIBLE_INACCURATE, xu, yu, zu, su, math.nan, rep, it, best_cert[1])
    return SolveOutcome(status, xu, yu, zu, su, rep.pobj, rep, it)
