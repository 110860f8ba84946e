"""Cone bookkeeping and Nesterov-Todd scaling for products of
nonnegative orthants and second-order cones.

Second-order cones are grouped by dimension so that every operation is a
handful of vectorised numpy calls regardless of how many cones there are.
A vector ``v`` living in the cone space is addressed through integer index
arrays: ``v[self.lp]`` is the orthant part and ``v[idx]`` with
``idx = self.soc[d]`` is a ``(k, d)`` array, one row per cone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _jdet(v: np.ndarray) -> np.ndarray:
    """``v0^2 - ||v1||^2`` per row, factored to avoid cancellation near the boundary."""
    r = np.linalg.norm(v[:, 1:], axis=1)
    return (v[:, 0] - r) * (v[:, 0] + r)


@dataclass(frozen=True)
class ConeSlice:
    """A contiguous run of cone rows: ``kind`` is ``"l"`` (orthant) or ``"q"`` (SOC)."""

    kind: str
    start: int
    size: int

    def __post_init__(self):
        if self.kind not in ("l", "q"):
            raise ValueError(f"unknown cone kind {self.kind!r}")
        if self.size < 1 or self.start < 0:
            raise ValueError("cone slice must be non-empty with a non-negative start")
        if self.kind == "q" and self.size < 2:
            raise ValueError("second-order cones need dimension >= 2")

    @property
    def stop(self) -> int:
        return self.start + self.size


@dataclass
class ConeLayout:
    m: int
    lp: np.ndarray
    soc: dict[int, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_slices(cls, slices: list[ConeSlice], m: int) -> "ConeLayout":
        covered = np.zeros(m, dtype=int)
        lp = []
        socs: dict[int, list[np.ndarray]] = {}
        for sl in slices:
            if sl.stop > m:
                raise ValueError(f"cone slice {sl} runs past {m} rows")
            covered[sl.start:sl.stop] += 1
            rows = np.arange(sl.start, sl.stop)
            if sl.kind == "l":
                lp.append(rows)
            else:
                socs.setdefault(sl.size, []).append(rows)
        if np.any(covered != 1):
            raise ValueError("cone slices must be disjoint and cover every cone row")
        lp_arr = np.concatenate(lp) if lp else np.zeros(0, dtype=int)
        soc = {d: np.vstack(v) for d, v in sorted(socs.items())}
        return cls(m=m, lp=lp_arr, soc=soc)

    @property
    def degree(self) -> int:
        return len(self.lp) + sum(idx.shape[0] for idx in self.soc.values())

    def unit(self) -> np.ndarray:
        e = np.zeros(self.m)
        e[self.lp] = 1.0
        for idx in self.soc.values():
            e[idx[:, 0]] = 1.0
        return e

    def min_eig(self, v: np.ndarray) -> float:
        """Smallest spectral value of ``v``; positive iff ``v`` is interior."""
        out = np.inf
        if len(self.lp):
            out = min(out, float(v[self.lp].min()))
        for idx in self.soc.values():
            blk = v[idx]
            out = min(out, float((blk[:, 0] - np.linalg.norm(blk[:, 1:], axis=1)).min()))
        return out

    def project(self, v: np.ndarray) -> np.ndarray:
        """Euclidean projection onto the cone."""
        p = v.copy()
        p[self.lp] = np.maximum(v[self.lp], 0.0)
        for idx in self.soc.values():
            blk = v[idx]
            t = blk[:, 0]
            xn = np.linalg.norm(blk[:, 1:], axis=1)
            res = blk.copy()
            inside = xn <= t
            below = xn <= -t
            mid = ~(inside | below)
            res[below] = 0.0
            if np.any(mid):
                a = 0.5 * (t[mid] + xn[mid])
                res[mid, 0] = a
                res[mid, 1:] = (a / xn[mid])[:, None] * blk[mid, 1:]
            p[idx] = res
        return p

    def dist(self, v: np.ndarray) -> float:
        return float(np.linalg.norm(v - self.project(v)))

    def jordan(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        out = np.empty(self.m)
        out[self.lp] = u[self.lp] * v[self.lp]
        for idx in self.soc.values():
            a, b = u[idx], v[idx]
            res = np.empty_like(a)
            res[:, 0] = np.einsum("ij,ij->i", a, b)
            res[:, 1:] = a[:, :1] * b[:, 1:] + b[:, :1] * a[:, 1:]
            out[idx] = res
        return out

    def jordan_solve(self, lam: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Solve ``lam o x = v`` for ``x`` (``lam`` interior)."""
        out = np.empty(self.m)
        out[self.lp] = v[self.lp] / lam[self.lp]
        for idx in self.soc.values():
            lb, vb = lam[idx], v[idx]
            l0 = lb[:, 0]
            det = _jdet(lb)
            x0 = (l0 * vb[:, 0] - np.einsum("ij,ij->i", lb[:, 1:], vb[:, 1:])) / det
            res = np.empty_like(vb)
            res[:, 0] = x0
            res[:, 1:] = (vb[:, 1:] - x0[:, None] * lb[:, 1:]) / l0[:, None]
            out[idx] = res
        return out

    def max_step(self, x: np.ndarray, dx: np.ndarray) -> float:
        """Largest ``a >= 0`` with ``x + a*dx`` in the cone (``x`` interior), capped at 1e30."""
        alpha = 1e30
        if len(self.lp):
            d = dx[self.lp]
            neg = d < 0
            if np.any(neg):
                alpha = min(alpha, float(np.min(-x[self.lp][neg] / d[neg])))
        for idx in self.soc.values():
            xb, db = x[idx], dx[idx]
            xnorm = np.sqrt(np.maximum(_jdet(xb), 1e-300))
            xbar = xb / xnorm[:, None]
            # hyperbolic rotation taking xbar to the cone axis, applied to d
            rho0 = xbar[:, 0] * db[:, 0] - np.einsum("ij,ij->i", xbar[:, 1:], db[:, 1:])
            coef = (rho0 + db[:, 0]) / (xbar[:, 0] + 1.0)
            rho1 = db[:, 1:] - coef[:, None] * xbar[:, 1:]
            sigma = (np.linalg.norm(rho1, axis=1) - rho0) / xnorm
            pos = sigma > 0
            if np.any(pos):
                alpha = min(alpha, float(1.0 / sigma[pos].max()))
        return alpha


@dataclass
class NTScaling:
    """Nesterov-Todd scaling ``W`` with ``W z = W^{-1} s = lam``.

    For the orthant ``W = diag(sqrt(s/z))``. For each second-order cone
    ``W = beta * [[w0, w1'], [w1, I + w1 w1'/(1 + w0)]]`` with ``w'Jw = 1``.
    """

    layout: ConeLayout
    lp_w: np.ndarray
    beta: dict[int, np.ndarray]
    wbar: dict[int, np.ndarray]
    lam: np.ndarray

    @classmethod
    def compute(cls, layout: ConeLayout, s: np.ndarray, z: np.ndarray) -> "NTScaling":
        lam = np.empty(layout.m)
        sl, zl = s[layout.lp], z[layout.lp]
        lp_w = np.sqrt(sl / zl)
        lam[layout.lp] = np.sqrt(sl * zl)
        beta, wbar = {}, {}
        for d, idx in layout.soc.items():
            sb, zb = s[idx], z[idx]
            snorm = np.sqrt(np.maximum(_jdet(sb), 1e-300))
            znorm = np.sqrt(np.maximum(_jdet(zb), 1e-300))
            sbar = sb / snorm[:, None]
            zbar = zb / znorm[:, None]
            gamma = np.sqrt(0.5 * (1.0 + np.einsum("ij,ij->i", sbar, zbar)))
            w = np.empty_like(sbar)
            w[:, 0] = (sbar[:, 0] + zbar[:, 0]) / (2.0 * gamma)
            w[:, 1:] = (sbar[:, 1:] - zbar[:, 1:]) / (2.0 * gamma)[:, None]
            b = np.sqrt(snorm / znorm)
            beta[d] = b
            wbar[d] = w
            # lam = W z computed in closed form for accuracy
            lb = np.empty_like(sbar)
            lb[:, 0] = gamma
            lb[:, 1:] = ((gamma + zbar[:, 0]) * sbar[:, 1:].T + (gamma + sbar[:, 0]) * zbar[:, 1:].T).T / (
                (sbar[:, 0] + zbar[:, 0] + 2.0 * gamma)[:, None]
            )
            lam[idx] = lb * np.sqrt(snorm * znorm)[:, None]
        return cls(layout, lp_w, beta, wbar, lam)

    def _apply(self, v: np.ndarray, inverse: bool) -> np.ndarray:
        L = self.layout
        out = np.empty(L.m)
        out[L.lp] = v[L.lp] / self.lp_w if inverse else v[L.lp] * self.lp_w
        for d, idx in L.soc.items():
            w = self.wbar[d]
            vb = v[idx]
            w1 = w[:, 1:] if not inverse else -w[:, 1:]
            w0 = w[:, 0]
            dot1 = np.einsum("ij,ij->i", w1, vb[:, 1:])
            res = np.empty_like(vb)
            res[:, 0] = w0 * vb[:, 0] + dot1
            res[:, 1:] = vb[:, 1:] + ((vb[:, 0] + dot1 / (1.0 + w0))[:, None]) * w1
            scale = 1.0 / self.beta[d] if inverse else self.beta[d]
            out[idx] = res * scale[:, None]
        return out

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self._apply(v, inverse=False)

    def apply_inv(self, v: np.ndarray) -> np.ndarray:
        return self._apply(v, inverse=True)

    def squared_blocks(self) -> tuple[np.ndarray, dict[int, np.ndarray]]:
        """Diagonal of ``W^2`` on the orthant and dense ``W^2`` blocks per SOC group."""
        blocks = {}
        for d, w in self.wbar.items():
            k = w.shape[0]
            Wm = np.empty((k, d, d))
            w0 = w[:, 0]
            w1 = w[:, 1:]
            Wm[:, 0, 0] = w0
            Wm[:, 0, 1:] = w1
            Wm[:, 1:, 0] = w1
            Wm[:, 1:, 1:] = np.eye(d - 1)[None] + np.einsum("ki,kj->kij", w1, w1) / (1.0 + w0)[:, None, None]
            Wm *= self.beta[d][:, None, None]
            blocks[d] = np.einsum("kij,kjl->kil", Wm, Wm)
        return self.lp_w**2, blocks
