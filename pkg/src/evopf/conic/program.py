"""Continuous/mixed-integer conic program container.

The program is

    minimize    c'x
    subject to  A x = b
                h - G x in K          (K = product of cones listed in ``cones``)
                lb <= x <= ub
                x[j] integer for j in ``integer``

Cone slices address rows of ``G``/``h``. Bounds are kept apart from ``G`` so
that branch-and-bound can fix variables without rebuilding the matrices; the
solver turns them into orthant rows (or equality rows when ``lb == ub``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .cones import ConeLayout, ConeSlice


@dataclass(frozen=True)
class ConicProgram:
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    G: sp.csr_matrix
    h: np.ndarray
    cones: tuple[ConeSlice, ...]
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    # groups of integer columns of which at most one may be nonzero
    sos1: tuple[np.ndarray, ...] = ()
    # name -> column ids / row ids; bookkeeping for census and decoding
    var_blocks: dict = field(default_factory=dict)
    eq_blocks: dict = field(default_factory=dict)
    cone_blocks: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.c)
        if self.A.shape[1] != n or self.G.shape[1] != n:
            raise ValueError("A and G must have one column per variable")
        if self.A.shape[0] != len(self.b) or self.G.shape[0] != len(self.h):
            raise ValueError("right-hand sides do not match matrix rows")
        if len(self.lb) != n or len(self.ub) != n:
            raise ValueError("bounds must have one entry per variable")
        if np.any(self.lb > self.ub):
            raise ValueError("lower bound above upper bound")
        ConeLayout.from_slices(list(self.cones), self.G.shape[0])

    @property
    def n(self) -> int:
        return len(self.c)

    @property
    def is_continuous(self) -> bool:
        """True when every integer-marked column is fixed by its bounds."""
        idx = self.integer
        return len(idx) == 0 or bool(np.all(self.lb[idx] == self.ub[idx]))

    def relaxed(self) -> "ConicProgram":
        return replace(self, integer=np.zeros(0, dtype=int), sos1=())

    def with_fixed(self, columns, values) -> "ConicProgram":
        columns = np.asarray(columns, dtype=int)
        values = np.asarray(values, dtype=float)
        lb = self.lb.copy()
        ub = self.ub.copy()
        lb[columns] = values
        ub[columns] = values
        return replace(self, lb=lb, ub=ub)

    def with_bounds(self, lb: np.ndarray, ub: np.ndarray) -> "ConicProgram":
        return replace(self, lb=np.asarray(lb, dtype=float), ub=np.asarray(ub, dtype=float))

    def scaled_objective(self, alpha: float) -> "ConicProgram":
        return replace(self, c=self.c * alpha)

    def check_finite(self) -> None:
        for name in ("c", "b", "h"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite entries in {name}")
        for name in ("A", "G"):
            if not np.all(np.isfinite(getattr(self, name).data)):
                raise ValueError(f"non-finite entries in {name}")
        if np.any(np.isnan(self.lb)) or np.any(np.isnan(self.ub)):
            raise ValueError("NaN in variable bounds")


@dataclass(frozen=True)
class StandardForm:
    """``min c'x  s.t.  Ax = b,  h - Gx in K`` with bounds folded into ``A``/``G``."""

    c: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    G: sp.csc_matrix
    h: np.ndarray
    layout: ConeLayout

    @property
    def n(self) -> int:
        return len(self.c)

    @classmethod
    def from_program(cls, prog: ConicProgram) -> "StandardForm":
        n = prog.n
        fixed = np.flatnonzero(prog.lb == prog.ub)
        free_lo = np.flatnonzero(np.isfinite(prog.lb) & (prog.lb < prog.ub))
        free_hi = np.flatnonzero(np.isfinite(prog.ub) & (prog.lb < prog.ub))

        A_fix = sp.csr_matrix((np.ones(len(fixed)), (np.arange(len(fixed)), fixed)), shape=(len(fixed), n))
        A = sp.vstack([prog.A, A_fix], format="csc")
        b = np.concatenate([prog.b, prog.lb[fixed]])

        nb = len(free_lo) + len(free_hi)
        rows = np.arange(nb)
        cols = np.concatenate([free_lo, free_hi])
        vals = np.concatenate([-np.ones(len(free_lo)), np.ones(len(free_hi))])
        G_bnd = sp.csr_matrix((vals, (rows, cols)), shape=(nb, n))
        G = sp.vstack([prog.G, G_bnd], format="csc")
        h = np.concatenate([prog.h, -prog.lb[free_lo], prog.ub[free_hi]])

        slices = list(prog.cones)
        if nb:
            slices.append(ConeSlice("l", prog.G.shape[0], nb))
        layout = ConeLayout.from_slices(slices, G.shape[0])
        return cls(prog.c.astype(float), A, b, G, h, layout)
