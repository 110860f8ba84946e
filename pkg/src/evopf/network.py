"""Static radial distribution network model and bus admittance quantities."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np


class NetworkError(ValueError):
    """Invalid network data."""


class DisconnectedNetworkError(NetworkError):
    """The branch graph does not reach every bus."""


@dataclass(frozen=True)
class Bus:
    id: int
    vmin: float = 0.90
    vmax: float = 1.10
    is_slack: bool = False

    def __post_init__(self):
        if not 0 < self.vmin < self.vmax:
            raise NetworkError(f"bus {self.id}: need 0 < vmin < vmax")


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    s_max: float

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise NetworkError(f"branch {self.from_bus}-{self.to_bus} is a self loop")
        if self.r < 0:
            raise NetworkError(f"branch {self.from_bus}-{self.to_bus}: negative resistance")
        if self.r == 0 and self.x == 0:
            raise NetworkError(f"branch {self.from_bus}-{self.to_bus}: zero impedance")
        if not self.s_max > 0:
            raise NetworkError(f"branch {self.from_bus}-{self.to_bus}: s_max must be positive")

    @property
    def admittance(self) -> complex:
        return 1.0 / complex(self.r, self.x)


def _as_shape(shape) -> np.ndarray:
    arr = np.asarray(shape, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Load:
    """Demand at ``bus``: peak values (p.u.) times a per-hour shape."""

    bus: int
    p_peak: float
    q_peak: float
    shape: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "shape", _as_shape(self.shape))
        if self.p_peak < 0 or np.any(self.shape < 0):
            raise NetworkError(f"load at bus {self.bus}: negative real demand")

    @property
    def p_profile(self) -> np.ndarray:
        return self.p_peak * self.shape

    @property
    def q_profile(self) -> np.ndarray:
        return self.q_peak * self.shape

    def __eq__(self, other):
        return (
            isinstance(other, Load)
            and (self.bus, self.p_peak, self.q_peak) == (other.bus, other.p_peak, other.q_peak)
            and np.array_equal(self.shape, other.shape)
        )


@dataclass(frozen=True, eq=False)
class SolarUnit:
    bus: int
    capacity: float
    shape: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "shape", _as_shape(self.shape))
        if self.capacity < 0 or np.any(self.shape < 0):
            raise NetworkError(f"solar unit at bus {self.bus}: negative availability")

    @property
    def availability(self) -> np.ndarray:
        return self.capacity * self.shape

    def __eq__(self, other):
        return (
            isinstance(other, SolarUnit)
            and (self.bus, self.capacity) == (other.bus, other.capacity)
            and np.array_equal(self.shape, other.shape)
        )


@dataclass(frozen=True)
class NetworkCase:
    name: str
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    loads: tuple[Load, ...] = ()
    solar: tuple[SolarUnit, ...] = ()
    base_kv: float = 12.66
    base_mva: float = 100.0

    def __post_init__(self):
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise NetworkError("duplicate bus ids")
        if sum(b.is_slack for b in self.buses) != 1:
            raise NetworkError("exactly one slack bus is required")
        known = set(ids)
        for br in self.branches:
            for end in (br.from_bus, br.to_bus):
                if end not in known:
                    raise NetworkError(f"branch {br.from_bus}-{br.to_bus} references unknown bus {end}")
        for item in (*self.loads, *self.solar):
            if item.bus not in known:
                raise NetworkError(f"{type(item).__name__} references unknown bus {item.bus}")
        horizons = {len(item.shape) for item in (*self.loads, *self.solar)}
        if len(horizons) > 1:
            raise NetworkError(f"inconsistent profile lengths {sorted(horizons)}")

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def horizon(self) -> int:
        for item in (*self.loads, *self.solar):
            return len(item.shape)
        return 0

    @property
    def slack(self) -> Bus:
        return next(b for b in self.buses if b.is_slack)

    @property
    def bus_ids(self) -> list[int]:
        return [b.id for b in self.buses]

    def bus_position(self) -> dict[int, int]:
        return {b.id: k for k, b in enumerate(self.buses)}

    @property
    def z_base(self) -> float:
        return self.base_kv**2 / self.base_mva


@dataclass(frozen=True)
class AdmittanceView:
    """Off-diagonal bus admittance entries per branch plus diagonals.

    ``g_off[k]``/``b_off[k]`` belong to branch ``k`` and are symmetric in its
    two endpoints; ``g_diag``/``b_diag`` are indexed by bus position.
    """

    g_off: np.ndarray
    b_off: np.ndarray
    g_diag: np.ndarray
    b_diag: np.ndarray
    pairs: tuple[tuple[int, int], ...]  # branch endpoints as bus positions
    neighbors: tuple[tuple[int, ...], ...]

    def G(self, i: int, j: int) -> float:
        return self._lookup(self.g_off, i, j)

    def B(self, i: int, j: int) -> float:
        return self._lookup(self.b_off, i, j)

    def _lookup(self, arr, i, j):
        for k, (a, b) in enumerate(self.pairs):
            if (a, b) == (i, j) or (a, b) == (j, i):
                return float(arr[k])
        return 0.0

    def row_sum_g(self, i: int) -> float:
        """``G_ii + sum_j G_ij`` (zero without shunts)."""
        return float(self.g_diag[i] + sum(self.g_off[k] for k, (a, b) in enumerate(self.pairs) if i in (a, b)))

    def row_sum_b(self, i: int) -> float:
        return float(self.b_diag[i] + sum(self.b_off[k] for k, (a, b) in enumerate(self.pairs) if i in (a, b)))


def build_admittance(branches, n_buses: int, positions: dict[int, int] | None = None) -> AdmittanceView:
    """Off-diagonals ``Y_ij = -1/(r + jx)``; diagonals are negated row sums."""
    positions = positions or {k: k for k in range(n_buses)}
    g_off = np.empty(len(branches))
    b_off = np.empty(len(branches))
    g_diag = np.zeros(n_buses)
    b_diag = np.zeros(n_buses)
    pairs = []
    adj: list[set[int]] = [set() for _ in range(n_buses)]
    for k, br in enumerate(branches):
        if br.r == 0 and br.x == 0:
            raise NetworkError("zero-impedance branch")
        i, j = positions.get(br.from_bus, -1), positions.get(br.to_bus, -1)
        if not (0 <= i < n_buses and 0 <= j < n_buses):
            raise NetworkError(f"branch endpoint out of range: {br.from_bus}-{br.to_bus}")
        z2 = br.r**2 + br.x**2
        g_off[k] = -br.r / z2
        b_off[k] = br.x / z2
        g_diag[i] -= g_off[k]
        g_diag[j] -= g_off[k]
        b_diag[i] -= b_off[k]
        b_diag[j] -= b_off[k]
        pairs.append((i, j))
        adj[i].add(j)
        adj[j].add(i)
    return AdmittanceView(g_off, b_off, g_diag, b_diag, tuple(pairs), tuple(tuple(sorted(a)) for a in adj))


def case_admittance(case: NetworkCase) -> AdmittanceView:
    return build_admittance(case.branches, case.n_buses, case.bus_position())


def _components(n: int, edges) -> int:
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    count = n
    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            count -= 1
    return count


def check_radial(case: NetworkCase) -> bool:
    """True iff the branch graph is a spanning tree.

    Raises ``DisconnectedNetworkError`` when some bus cannot be reached.
    """
    pos = case.bus_position()
    edges = [(pos[br.from_bus], pos[br.to_bus]) for br in case.branches]
    if _components(case.n_buses, edges) != 1:
        raise DisconnectedNetworkError(f"{case.name}: network is not connected")
    return len(case.branches) == case.n_buses - 1


def neighbors(case: NetworkCase, bus: int) -> list[int]:
    if bus not in case.bus_position():
        raise NetworkError(f"unknown bus {bus}")
    out = set()
    for br in case.branches:
        if br.from_bus == bus:
            out.add(br.to_bus)
        elif br.to_bus == bus:
            out.add(br.from_bus)
    return sorted(out)


@dataclass(frozen=True)
class TreeOrder:
    """Breadth-first orientation of a radial network from its slack bus."""

    order: tuple[int, ...]  # bus positions, slack first
    parent: dict[int, int] = field(default_factory=dict)  # child position -> parent position
    parent_branch: dict[int, int] = field(default_factory=dict)  # child position -> branch index


def tree_order(case: NetworkCase) -> TreeOrder:
    if not check_radial(case):
        raise NetworkError(f"{case.name}: network is not radial")
    pos = case.bus_position()
    adj: dict[int, list[tuple[int, int]]] = {k: [] for k in range(case.n_buses)}
    for k, br in enumerate(case.branches):
        i, j = pos[br.from_bus], pos[br.to_bus]
        adj[i].append((j, k))
        adj[j].append((i, k))
    root = pos[case.slack.id]
    order = [root]
    parent, pbranch = {}, {}
    queue = deque([root])
    seen = {root}
    while queue:
        u = queue.popleft()
        for v, k in sorted(adj[u]):
            if v not in seen:
                seen.add(v)
                parent[v] = u
                pbranch[v] = k
                order.append(v)
                queue.append(v)
    return TreeOrder(tuple(order), parent, pbranch)
