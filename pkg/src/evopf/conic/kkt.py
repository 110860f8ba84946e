"""Regularised quasi-definite KKT system

    [ d I   A'   G'          ] [dx]
    [ A    -d I  0           ] [dy]
    [ G     0   -W'W - d I   ] [dz]

factored with QDLDL (LDL' with AMD ordering; every pivot of a quasi-definite
matrix exists, so no numerical pivoting is needed). The sparsity pattern is
fixed at construction; each iteration only refreshes the ``W'W`` values.
Solutions are polished by iterative refinement against the unregularised
matrix.

Close to the optimum of degenerate problems the ``W'W`` blocks of nearly
tight cones become so ill-conditioned that pivot-free LDL loses all accuracy.
When a refined solve misses ``fallback_tol`` the system switches, for the
rest of the solve, to a threshold-pivoted sparse LU of the same matrix.
"""

from __future__ import annotations

import numpy as np
import qdldl
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cones import ConeLayout, NTScaling


class KKTSystem:
    def __init__(self, A: sp.csc_matrix, G: sp.csc_matrix, layout: ConeLayout, reg: float, refine_steps: int = 3,
                 fallback_tol: float = 1e-10):
        self.n = A.shape[1]
        self.p = A.shape[0]
        self.m = G.shape[0]
        self.layout = layout
        self.reg = reg
        self.refine_steps = refine_steps
        n, p, m = self.n, self.p, self.m
        N = n + p + m

        A = A.tocoo()
        G = G.tocoo()
        rows = [np.arange(n), A.col, G.col, np.arange(n, n + p)]
        cols = [np.arange(n), n + A.row, n + p + G.row, np.arange(n, n + p)]
        self._n_static = (n, A.nnz + G.nnz, p)
        self._offdiag = np.concatenate([A.data, G.data])

        # cone block pattern, upper triangle only
        off = n + p
        blk_r = [off + layout.lp]
        blk_c = [off + layout.lp]
        self._soc_tri = {}
        for d, idx in layout.soc.items():
            iu, ju = np.triu_indices(d)
            self._soc_tri[d] = (iu, ju)
            blk_r.append((off + idx[:, iu]).ravel())
            blk_c.append((off + idx[:, ju]).ravel())
        r = np.concatenate(rows + blk_r)
        c = np.concatenate(cols + blk_c)
        nnz = len(r)
        tag = sp.coo_matrix((np.arange(1, nnz + 1, dtype=float), (r, c)), shape=(N, N)).tocsc()
        if tag.nnz != nnz:
            raise ValueError("duplicate entries in KKT pattern")
        self._perm = tag.data.astype(np.int64) - 1
        self._indices = tag.indices.copy()
        self._indptr = tag.indptr.copy()
        self.N = N

        self._solver = None
        self._upper = None
        self._lu = None
        self.fallback_tol = fallback_tol
        self.pivoting = False  # sticky once LDL accuracy has failed
        self.last_residual = 0.0

    def _values(self, scaling: NTScaling | None) -> np.ndarray:
        L = self.layout
        if scaling is None:
            lp = np.ones(len(L.lp))
            socs = {d: np.broadcast_to(np.eye(d), (idx.shape[0], d, d)) for d, idx in L.soc.items()}
        else:
            lp, socs = scaling.squared_blocks()
        n, _, p = self._n_static
        parts = [np.full(n, self.reg), self._offdiag, np.full(p, -self.reg), -lp - self.reg]
        for d, idx in L.soc.items():
            iu, ju = self._soc_tri[d]
            blk = -socs[d][:, iu, ju]
            blk = blk - self.reg * (iu == ju)[None, :]
            parts.append(blk.ravel())
        return np.concatenate(parts)

    def factor(self, scaling: NTScaling | None) -> None:
        """Factor the KKT matrix; on a breakdown the regularisation is raised
        (up to 1e-4) and the factorisation retried."""
        self._lu = None
        if self.pivoting:
            data = self._values(scaling)[self._perm]
            self._upper = sp.csc_matrix((data, self._indices, self._indptr), shape=(self.N, self.N))
            self._set_dreg()
            self._factor_lu()
            return
        while True:
            data = self._values(scaling)[self._perm]
            U = sp.csc_matrix((data, self._indices, self._indptr), shape=(self.N, self.N))
            try:
                if self._solver is None:
                    self._solver = qdldl.Solver(U, upper=True)
                else:
                    self._solver.update(U, upper=True)
                break
            except RuntimeError:
                if self.reg >= 1e-4:
                    raise
                self._solver = None
                self.reg *= 100.0
        self._upper = U
        self._set_dreg()

    def _set_dreg(self):
        self._dreg = np.concatenate([np.full(self.n, self.reg), np.full(self.p, -self.reg), np.full(self.m, -self.reg)])

    def _factor_lu(self):
        U = self._upper
        full = (U + U.T - sp.diags(U.diagonal())).tocsc()
        self._lu = spla.splu(full, permc_spec="COLAMD", diag_pivot_thresh=0.1)

    def _matvec(self, v: np.ndarray) -> np.ndarray:
        U = self._upper
        return U @ v + U.T @ v - U.diagonal() * v - self._dreg * v

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self._lu is None:
            sol = self._refined(self._solver.solve, rhs)
            if self.last_residual <= self.fallback_tol:
                return sol
            self.pivoting = True
            self._factor_lu()
        return self._refined(self._lu.solve, rhs)

    def _refined(self, base, rhs: np.ndarray) -> np.ndarray:
        sol = base(rhs)
        bnorm = np.linalg.norm(rhs, np.inf)
        res = rhs - self._matvec(sol)
        rnorm = np.linalg.norm(res, np.inf)
        for _ in range(self.refine_steps):
            if rnorm <= 1e-14 * (1.0 + bnorm):
                break
            cand = sol + base(res)
            cres = rhs - self._matvec(cand)
            cnorm = np.linalg.norm(cres, np.inf)
            if not cnorm < rnorm:  # refinement stalled or diverging
                break
            sol, res, rnorm = cand, cres, cnorm
        self.last_residual = rnorm / (1.0 + bnorm)
        return sol
