"""Branch-and-bound over the charging-level binaries.

Each (EV, hour) owns an SOS1 group of level binaries of which at most one is
on. Branching splits the most fractional group into one child per level
("this level on, the others off") plus a "no charging" child.

Nodes are evaluated in fixed-size batches. Batch composition depends only on
the search state, never on the worker count, and results are merged in node
order, so the search is identical for any number of workers.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .conic import ConicProgram, SolveOutcome, SolverSettings, solve

log = logging.getLogger(__name__)


class MipStatus(str, Enum):
    OPTIMAL = "optimal-within-gap"
    INFEASIBLE = "infeasible"
    LIMIT = "limit-reached"


@dataclass(frozen=True)
class BnBSettings:
    integrality_tol: float = 1e-5
    rel_gap_tol: float = 1e-4
    node_limit: int = 100_000
    time_limit: float | None = None  # seconds
    workers: int = 1
    node_batch: int = 4
    branching: str = "sos1-most-fractional"
    node_selection: str = "best-bound-plunge"
    heuristic: bool = True
    log: object = None  # callable taking one progress line

    def __post_init__(self):
        if not (self.integrality_tol > 0 and self.rel_gap_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.node_limit < 1 or self.workers < 1 or self.node_batch < 1:
            raise ValueError("node_limit, workers and node_batch must be >= 1")
        if self.branching != "sos1-most-fractional":
            raise ValueError(f"unknown branching rule {self.branching!r}")
        if self.node_selection not in ("best-bound-plunge", "best-bound", "depth-first"):
            raise ValueError(f"unknown node selection rule {self.node_selection!r}")


@dataclass(frozen=True)
class BnBNode:
    """Partial assignment of binaries; ``fixed`` holds sorted (column, value) pairs."""

    fixed: tuple[tuple[int, float], ...] = ()
    parent_bound: float = -math.inf
    depth: int = 0
    id: int = 0
    parent: int = -1

    def apply(self, program: ConicProgram) -> ConicProgram:
        if not self.fixed:
            return program
        cols, vals = zip(*self.fixed)
        return program.with_fixed(list(cols), list(vals))


@dataclass
class MipOutcome:
    status: MipStatus
    x: np.ndarray | None  # incumbent
    objective: float
    bound: float
    gap: float
    nodes: int
    edges: list[tuple[int, int, float, float]] = field(default_factory=list)  # (parent, child, parent obj, child obj)
    failed_nodes: int = 0
    root: SolveOutcome | None = None
    certificate: np.ndarray | None = None
    elapsed: float = 0.0
    heuristic_used: bool = False


def relative_gap(incumbent: float, bound: float) -> float:
    if not math.isfinite(incumbent):
        return math.inf
    if not math.isfinite(bound):
        return math.inf
    return max(0.0, incumbent - bound) / max(1.0, abs(incumbent))


def is_integral(program: ConicProgram, x: np.ndarray, tol: float) -> bool:
    v = x[program.integer]
    return bool(np.all(np.minimum(np.abs(v), np.abs(1.0 - v)) <= tol))


def _group_score(v: np.ndarray) -> float:
    return float(np.sum(np.minimum(v, 1.0 - v)))


def branch_sos1(node: BnBNode, program: ConicProgram, x: np.ndarray, tol: float, next_id: int = 0,
                bound: float | None = None) -> list[BnBNode]:
    """Children partitioning the most fractional SOS1 group (lowest index on ties)."""
    if program.integer.size == 0 or is_integral(program, x, tol):
        raise ValueError("cannot branch on an integral node")
    lb = node.apply(program).lb
    ub = node.apply(program).ub
    best, best_score = None, -1.0
    for g, cols in enumerate(program.sos1):
        v = np.clip(x[cols], 0.0, 1.0)
        if np.all(np.minimum(v, 1.0 - v) <= tol):
            continue
        score = _group_score(v)
        if score > best_score:
            best, best_score = g, score
    if best is None:
        raise ValueError("fractional binaries outside every SOS1 group")
    cols = program.sos1[best]
    fixed = dict(node.fixed)
    parent = bound if bound is not None else node.parent_bound
    children = []
    for k, col in enumerate(cols):
        if ub[col] < 1.0:
            continue
        child = dict(fixed)
        for m, other in enumerate(cols):
            child[int(other)] = 1.0 if m == k else 0.0
        children.append(child)
    none = dict(fixed)
    for col in cols:
        if lb[col] > 0.0:
            none = None
            break
        none[int(col)] = 0.0
    if none is not None:
        children.append(none)
    return [
        BnBNode(tuple(sorted(ch.items())), parent, node.depth + 1, next_id + i, node.id)
        for i, ch in enumerate(children)
    ]


def round_assignment(program: ConicProgram, x: np.ndarray, tol: float = 1e-5) -> np.ndarray:
    """0/1 values for ``program.integer``: per SOS1 group, switch on the member
    with the largest relaxed value when it holds more than half the group
    mass; otherwise switch the group off."""
    vals = np.zeros(program.n)
    for cols in program.sos1:
        v = np.clip(x[cols], 0.0, 1.0)
        mass = v.sum()
        if mass <= tol:
            continue
        k = int(np.argmax(v))  # first maximum = lowest index
        if v[k] > 0.5 * mass:
            vals[cols[k]] = 1.0
    return vals[program.integer]


def round_heuristic(program: ConicProgram, x: np.ndarray, solver: SolverSettings | None = None,
                    tol: float = 1e-5) -> tuple[np.ndarray, SolveOutcome] | None:
    """Round a relaxed solution and repair the continuous part with one
    fixed-binary solve. Returns ``(x, outcome)`` or ``None``."""
    vals = round_assignment(program, x, tol)
    fixed = program.with_fixed(program.integer, vals)
    if np.any(fixed.lb > fixed.ub):
        return None
    out = solve(fixed.relaxed(), solver)
    if not out.optimal:
        return None
    return out.x, out


def _solve_node(program: ConicProgram, node: BnBNode, solver: SolverSettings) -> SolveOutcome:
    return solve(node.apply(program).relaxed(), solver)


def solve_mip(program: ConicProgram, settings: BnBSettings | None = None,
              solver: SolverSettings | None = None) -> MipOutcome:
    settings = settings or BnBSettings()
    solver = solver or SolverSettings()
    t0 = time.perf_counter()
    tol = settings.integrality_tol
    emit = settings.log

    def progress(nodes, open_, bound, inc):
        line = (f"bnb nodes={nodes} open={open_} bound={bound:.9g} incumbent={inc:.9g} "
                f"gap={relative_gap(inc, bound):.3e} t={time.perf_counter() - t0:.1f}s")
        if emit:
            emit(line)
        log.info(line)

    if program.integer.size == 0 or program.is_continuous:
        out = solve(program.relaxed(), solver)
        return _single(out, t0)

    root = _solve_node(program, BnBNode(), solver)
    if root.infeasible:
        return MipOutcome(MipStatus.INFEASIBLE, None, math.inf, math.inf, math.inf, 1, root=root,
                          certificate=root.certificate, elapsed=time.perf_counter() - t0)
    if not root.optimal:
        return MipOutcome(MipStatus.LIMIT, None, math.inf, -math.inf, math.inf, 1, failed_nodes=1, root=root,
                          elapsed=time.perf_counter() - t0)

    inc_x, inc_obj = None, math.inf
    used_heuristic = False

    def polish(x):
        """Snap binaries and re-solve so the incumbent satisfies every constraint at solver accuracy."""
        vals = np.round(np.clip(x[program.integer], 0.0, 1.0))
        out = solve(program.with_fixed(program.integer, vals).relaxed(), solver)
        return out if out.optimal else None

    def offer(out: SolveOutcome):
        nonlocal inc_x, inc_obj
        if out.objective < inc_obj:
            inc_x, inc_obj = out.x, out.objective

    nodes = 1
    edges: list[tuple[int, int, float, float]] = []
    failed = 0
    if is_integral(program, root.x, tol):
        pol = polish(root.x)
        if pol is not None:
            offer(pol)
        else:
            failed += 1
    elif settings.heuristic:
        h = round_heuristic(program, root.x, solver, tol)
        if h is not None:
            offer(h[1])
            used_heuristic = True

    heap: list = []
    counter = 1

    def push(node: BnBNode):
        heapq.heappush(heap, (_key(node, inc_x is None, settings.node_selection), node.id, node))

    if not is_integral(program, root.x, tol):
        for ch in branch_sos1(BnBNode(), program, root.x, tol, counter, root.objective):
            push(ch)
            counter += 1
    bound = root.objective
    progress(nodes, len(heap), bound, inc_obj)

    status = MipStatus.OPTIMAL
    with ThreadPoolExecutor(max_workers=settings.workers) if settings.workers > 1 else _Serial() as pool:
        while heap:
            # prune by bound, then test termination
            open_bound = min(item[2].parent_bound for item in heap)
            bound = min(open_bound, inc_obj)
            if relative_gap(inc_obj, bound) <= settings.rel_gap_tol:
                break
            if nodes >= settings.node_limit or (
                settings.time_limit is not None and time.perf_counter() - t0 > settings.time_limit
            ):
                status = MipStatus.LIMIT
                break
            batch = []
            while heap and len(batch) < settings.node_batch and nodes + len(batch) < settings.node_limit:
                _, _, node = heapq.heappop(heap)
                if relative_gap(inc_obj, node.parent_bound) <= settings.rel_gap_tol and inc_x is not None:
                    continue  # pruned by bound
                batch.append(node)
            if not batch:
                continue
            results = list(pool.map(lambda nd: _solve_node(program, nd, solver), batch))
            nodes += len(batch)
            plunge = inc_x is None
            for node, out in zip(batch, results):
                if out.infeasible:
                    continue
                if not out.optimal:
                    failed += 1
                    continue
                edges.append((node.parent, node.id, node.parent_bound, out.objective))
                if out.objective >= inc_obj - settings.rel_gap_tol * max(1.0, abs(inc_obj)) and inc_x is not None:
                    continue
                if is_integral(program, out.x, tol):
                    pol = polish(out.x)
                    if pol is not None:
                        offer(pol)
                    else:
                        failed += 1
                    continue
                for ch in branch_sos1(node, program, out.x, tol, counter, out.objective):
                    push(ch)
                    counter += 1
            if plunge and inc_x is not None:
                # incumbent found: switch from plunging to best-bound order
                heap = [(_key(it[2], False, settings.node_selection), it[1], it[2]) for it in heap]
                heapq.heapify(heap)
            bound = min([it[2].parent_bound for it in heap] + [inc_obj])
            progress(nodes, len(heap), bound, inc_obj)

    if not heap:
        bound = inc_obj
    if inc_x is None:
        st = MipStatus.INFEASIBLE if status == MipStatus.OPTIMAL and failed == 0 else MipStatus.LIMIT
        return MipOutcome(st, None, math.inf, bound, math.inf, nodes, edges, failed, root,
                          elapsed=time.perf_counter() - t0)
    if failed and status == MipStatus.OPTIMAL:
        status = MipStatus.LIMIT
    gap = relative_gap(inc_obj, bound)
    progress(nodes, len(heap), bound, inc_obj)
    return MipOutcome(status, inc_x, inc_obj, bound, gap, nodes, edges, failed, root,
                      elapsed=time.perf_counter() - t0, heuristic_used=used_heuristic)


def _key(node: BnBNode, plunging: bool, rule: str):
    if rule == "depth-first" or (plunging and rule == "best-bound-plunge"):
        return (-node.depth, node.parent_bound)
    return (node.parent_bound, 0)


class _Serial:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False

    def map(self, fn, items):
        return map(fn, items)


def _single(out: SolveOutcome, t0: float) -> MipOutcome:
    el = time.perf_counter() - t0
    if out.optimal:
        return MipOutcome(MipStatus.OPTIMAL, out.x, out.objective, out.objective, 0.0, 1, root=out, elapsed=el)
    if out.infeasible:
        return MipOutcome(MipStatus.INFEASIBLE, None, math.inf, math.inf, math.inf, 1, root=out,
                          certificate=out.certificate, elapsed=el)
    return MipOutcome(MipStatus.LIMIT, None, math.inf, -math.inf, math.inf, 1, failed_nodes=1, root=out, elapsed=el)
