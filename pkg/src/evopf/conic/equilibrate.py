"""Ruiz equilibration of the constraint matrices.

Rows belonging to one second-order cone share a single scale factor so the
scaled cone is still a second-order cone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .cones import ConeLayout


@dataclass
class Equilibration:
    col: np.ndarray  # D: x = D * x_scaled
    row_eq: np.ndarray  # E: A_scaled = E A D
    row_cone: np.ndarray  # F: G_scaled = F G D
    cost: float  # c_scaled = cost * D c


def _abs_max(M: sp.csc_matrix, axis: int, size: int) -> np.ndarray:
    if M.nnz == 0:
        return np.zeros(size)
    return np.asarray(abs(M).max(axis=axis).todense()).ravel()


def ruiz(A: sp.csc_matrix, G: sp.csc_matrix, c: np.ndarray, layout: ConeLayout, iterations: int = 15, tol: float = 1e-3):
    n = A.shape[1]
    D = np.ones(n)
    E = np.ones(A.shape[0])
    F = np.ones(G.shape[0])
    As, Gs = A.copy(), G.copy()
    for _ in range(iterations):
        cn = np.maximum(_abs_max(As, 0, n), _abs_max(Gs, 0, n))
        rA = _abs_max(As, 1, As.shape[0])
        rG = _abs_max(Gs, 1, Gs.shape[0])
        for idx in layout.soc.values():
            rG[idx] = rG[idx].max(axis=1, keepdims=True)
        norms = np.concatenate([cn, rA, rG])
        norms = norms[norms > 0]
        if len(norms) == 0 or np.all(np.abs(1.0 - norms) <= tol):
            break
        dc = 1.0 / np.sqrt(np.where(cn > 0, cn, 1.0))
        da = 1.0 / np.sqrt(np.where(rA > 0, rA, 1.0))
        dg = 1.0 / np.sqrt(np.where(rG > 0, rG, 1.0))
        As = sp.diags(da) @ As @ sp.diags(dc)
        Gs = sp.diags(dg) @ Gs @ sp.diags(dc)
        D *= dc
        E *= da
        F *= dg
    cs = D * c
    cmax = np.linalg.norm(cs, np.inf)
    cost = 1.0 / cmax if cmax > 0 else 1.0
    return Equilibration(D, E, F, cost), As.tocsc(), Gs.tocsc()


def identity(A: sp.csc_matrix, G: sp.csc_matrix) -> Equilibration:
    return Equilibration(np.ones(A.shape[1]), np.ones(A.shape[0]), np.ones(G.shape[0]), 1.0)
