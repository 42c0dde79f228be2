"""ODE problems u' = f(u, t), u(0) = u0 and piecewise polynomial solutions."""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from .tableau import CG, DG, MethodTableau, get_tableau
from .timeslab import FINALIZED, Element

__all__ = [
    "OdeSystem",
    "Solution",
    "TrajectoryError",
    "UniformSolution",
    "numerical_jacobian",
    "read_trajectory",
    "write_trajectory",
]

RhsFull = Callable[[np.ndarray, float], np.ndarray]
RhsComponent = Callable[[int, Sequence[float], float], float]


class TrajectoryError(ValueError):
    """Malformed or inconsistent trajectory data."""


@dataclass
class OdeSystem:
    """The initial value problem u' = f(u, t) on (0, T].

    Either right-hand side form may be omitted; the missing one is derived
    from the other.  ``sparsity[i]`` lists the components f_i depends on
    and ``step_groups`` lists components that must share their time steps
    (for instance position and velocity of one body).  Every call routed
    through :meth:`f_component` or :meth:`f` is counted in ``nevals``
    (a full evaluation counts N).
    """

    u0: np.ndarray
    T: float
    rhs_full: Optional[RhsFull] = None
    rhs_component: Optional[RhsComponent] = None
    jacobian_diag: Optional[Callable[[int, Sequence[float], float], float]] = None
    jacobian_full: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    sparsity: Optional[list[list[int]]] = None
    step_groups: Optional[list[list[int]]] = None
    name: str = ""
    nevals: int = field(default=0, repr=False)

    def __post_init__(self):
        self.u0 = np.array(self.u0, dtype=float).ravel()
        if self.u0.size == 0:
            raise ValueError("u0 must be nonempty")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError(f"final time must be positive, got {self.T!r}")
        if self.rhs_full is None and self.rhs_component is None:
            raise ValueError("need rhs_full or rhs_component")
        if self.rhs_component is None:
            full = self.rhs_full
            self.rhs_component = lambda i, u, t: float(full(np.asarray(u, dtype=float), t)[i])
        if self.rhs_full is None:
            comp = self.rhs_component
            n = self.u0.size
            self.rhs_full = lambda u, t: np.array([comp(i, u, t) for i in range(n)])
        if self.sparsity is not None:
            if len(self.sparsity) != self.N:
                raise ValueError("sparsity must list dependencies for every component")
            self.sparsity = [sorted(set(int(l) for l in deps)) for deps in self.sparsity]

    @property
    def N(self) -> int:
        return self.u0.size

    def deps(self, i: int) -> Sequence[int]:
        if self.sparsity is None:
            return range(self.N)
        return self.sparsity[i]

    def f_component(self, i: int, u: Sequence[float], t: float) -> float:
        self.nevals += 1
        return self.rhs_component(i, u, t)

    def f(self, u: np.ndarray, t: float) -> np.ndarray:
        self.nevals += self.N
        return np.asarray(self.rhs_full(u, t), dtype=float)

    def jacobian(self, u: np.ndarray, t: float) -> np.ndarray:
        """Full Jacobian, analytic when available, else forward differences."""
        if self.jacobian_full is not None:
            return np.asarray(self.jacobian_full(np.asarray(u, dtype=float), t), dtype=float)
        return numerical_jacobian(self, u, t)

    def dfdu_diag(self, i: int, u: list, t: float) -> float:
        """d f_i / d u_i, by a one-sided difference when not given."""
        if self.jacobian_diag is not None:
            return self.jacobian_diag(i, u, t)
        ui = u[i]
        h = 1e-8 * (1.0 + abs(ui))
        f0 = self.f_component(i, u, t)
        u[i] = ui + h
        f1 = self.f_component(i, u, t)
        u[i] = ui
        return (f1 - f0) / h


def numerical_jacobian(sys: OdeSystem, u: np.ndarray, t: float, h: float = 1e-8) -> np.ndarray:
    """Forward-difference Jacobian with column steps h * (1 + |u_b|)."""
    if not h > 0:
        raise ValueError("difference step must be positive")
    u = np.array(u, dtype=float)
    f0 = sys.f(u, t)
    J = np.empty((sys.N, sys.N))
    for b in range(sys.N):
        hb = h * (1.0 + abs(u[b]))
        ub = u.copy()
        ub[b] += hb
        J[:, b] = (sys.f(ub, t) - f0) / hb
    return J


class _Track:
    __slots__ = ("elements", "ends")

    def __init__(self):
        self.elements: list[Element] = []
        self.ends: list[float] = []


class Solution:
    """Finalized elements of every component, appended in time order.

    An element owns the interval (t0, t1]; t = 0 evaluates to the initial
    value.  Beyond a component's frontier the last element is extrapolated;
    before the first element the constant initial value is used.
    """

    def __init__(self, u0: Sequence[float], T: float):
        self.u0 = np.array(u0, dtype=float).ravel()
        self.T = float(T)
        self._u0 = self.u0.tolist()
        self.tracks = [_Track() for _ in range(self.u0.size)]

    @property
    def N(self) -> int:
        return self.u0.size

    def frontier(self, i: int) -> float:
        ends = self.tracks[i].ends
        return ends[-1] if ends else 0.0

    @property
    def frontiers(self) -> list[float]:
        return [self.frontier(i) for i in range(self.N)]

    def num_elements(self, i: Optional[int] = None) -> int:
        if i is None:
            return sum(len(tr.ends) for tr in self.tracks)
        return len(self.tracks[i].ends)

    def append(self, e: Element) -> None:
        tr = self.tracks[e.i]
        start = tr.ends[-1] if tr.ends else 0.0
        if e.t0 != start:
            raise ValueError(f"element {e!r} does not continue component {e.i} at t = {start!r}")
        e.state = FINALIZED
        e.j = len(tr.ends) + 1
        tr.elements.append(e)
        tr.ends.append(e.t1)

    def last(self, i: int) -> Optional[Element]:
        els = self.tracks[i].elements
        return els[-1] if els else None

    def end_value(self, i: int) -> float:
        els = self.tracks[i].elements
        return els[-1].dofs[-1] if els else self._u0[i]

    def element_at(self, i: int, t: float) -> Optional[Element]:
        tr = self.tracks[i]
        if not tr.ends:
            return None
        j = bisect.bisect_left(tr.ends, t)
        if j == len(tr.ends):
            j -= 1
        return tr.elements[j]

    def evaluate(self, i: int, t: float) -> float:
        if not (0.0 <= t <= self.T):
            raise ValueError(f"t = {t!r} outside [0, {self.T!r}]")
        return self._value(i, t)

    def _value(self, i: int, t: float) -> float:
        if t <= 0.0:
            return self._u0[i]
        e = self.element_at(i, t)
        if e is None:
            return self._u0[i]
        return e.value(t)

    def state(self, t: float) -> np.ndarray:
        return np.array([self._value(i, t) for i in range(self.N)])

    def values(self, ts: Sequence[float]) -> np.ndarray:
        """U at each time, shape (len(ts), N)."""
        return np.array([[self._value(i, t) for i in range(self.N)] for t in ts]).reshape(len(ts), self.N)

    def elements(self, i: int) -> Iterator[Element]:
        return iter(self.tracks[i].elements)

    def all_elements(self) -> Iterator[Element]:
        for tr in self.tracks:
            yield from tr.elements

    def min_step(self) -> float:
        return min((e.k for e in self.all_elements()), default=self.T)


class UniformSolution:
    """Solution with one common time grid and one method for all components.

    ``dofs`` has shape (M, N, q + 1) for M steps on ``grid`` (length M + 1).
    """

    def __init__(self, u0, grid, dofs, tab: MethodTableau):
        self.u0 = np.array(u0, dtype=float).ravel()
        self.grid = np.asarray(grid, dtype=float)
        self.dofs = np.asarray(dofs, dtype=float)
        self.tab = tab
        self.T = float(self.grid[-1])
        if self.dofs.shape != (self.grid.size - 1, self.u0.size, tab.ndofs):
            raise ValueError("dofs shape does not match grid, dimension and order")

    @property
    def N(self) -> int:
        return self.u0.size

    def frontier(self, i: int) -> float:
        return self.T

    @property
    def frontiers(self) -> list[float]:
        return [self.T] * self.N

    def num_elements(self, i: Optional[int] = None) -> int:
        M = self.grid.size - 1
        return M * self.N if i is None else M

    def values(self, ts) -> np.ndarray:
        """U at each time, shape (len(ts), N)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        M = self.grid.size - 1
        j = np.clip(np.searchsorted(self.grid[1:], ts, side="left"), 0, M - 1)
        k = self.grid[j + 1] - self.grid[j]
        s = (ts - self.grid[j]) / k
        B = self.tab.basis(s)
        out = np.einsum("tn,tin->ti", B, self.dofs[j])
        out[ts <= 0.0] = self.u0
        return out

    def evaluate(self, i: int, t: float) -> float:
        if not (0.0 <= t <= self.T):
            raise ValueError(f"t = {t!r} outside [0, {self.T!r}]")
        return float(self.values([t])[0, i])

    def state(self, t: float) -> np.ndarray:
        return self.values([t])[0]

    def end_value(self, i: int) -> float:
        return float(self.dofs[-1, i, -1])

    def node_values(self) -> np.ndarray:
        """U at the grid points, shape (M + 1, N)."""
        return np.vstack([self.u0, self.dofs[:, :, -1]])

    def elements(self, i: int) -> Iterator[Element]:
        prev = None
        for j in range(self.grid.size - 1):
            e = Element(i, float(self.grid[j]), float(self.grid[j + 1]), self.tab, self.dofs[j, i].tolist(), prev)
            e.state = FINALIZED
            e.j = j + 1
            prev = e
            yield e

    def all_elements(self) -> Iterator[Element]:
        for i in range(self.N):
            yield from self.elements(i)

    def min_step(self) -> float:
        return float(np.min(np.diff(self.grid)))

    def to_solution(self) -> Solution:
        sol = Solution(self.u0, self.T)
        for i in range(self.N):
            for e in self.elements(i):
                sol.append(e)
        return sol


# -- trajectory files ---------------------------------------------------------

TRAJECTORY_HEADER = ["component", "j", "t_begin", "t_end", "family", "q"]


def write_trajectory(sol, path) -> None:
    """One row per element; a j = 0 row per component stores the initial value.

    Columns: component, j, t_begin, t_end, family, q, dof_0 .. dof_Q where Q
    is the largest order present; unused trailing dof cells are empty.
    """
    from .io import atomic_writer

    rows = []
    qmax = 0
    for i in range(sol.N):
        fam = None
        for e in sol.elements(i):
            fam = fam or e.family
            qmax = max(qmax, e.q)
            rows.append([i, e.j, repr(e.t0), repr(e.t1), e.family, e.q] + [repr(float(d)) for d in e.dofs])
        rows.append([i, 0, repr(0.0), repr(0.0), fam or DG, 0, repr(float(sol.u0[i]))])
    rows.sort(key=lambda r: (r[0], r[1]))
    header = TRAJECTORY_HEADER + [f"dof_{n}" for n in range(qmax + 1)]
    with atomic_writer(path) as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow(r + [""] * (len(header) - len(r)))


def read_trajectory(path) -> Solution:
    """Inverse of :func:`write_trajectory`."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TrajectoryError(f"{path}: empty file") from None
        if header[: len(TRAJECTORY_HEADER)] != TRAJECTORY_HEADER:
            raise TrajectoryError(f"{path}: bad header {header!r}")
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                i, j = int(row[0]), int(row[1])
                t0, t1 = float(row[2]), float(row[3])
                fam, q = row[4], int(row[5])
                dofs = [float(x) for x in row[6 : 7 + q]]
            except (ValueError, IndexError) as exc:
                raise TrajectoryError(f"{path}:{lineno}: {exc}") from None
            if fam not in (CG, DG) or len(dofs) != q + 1:
                raise TrajectoryError(f"{path}:{lineno}: bad family/order record")
            records.append((i, j, t0, t1, fam, q, dofs))
    if not records:
        raise TrajectoryError(f"{path}: no records")
    N = max(r[0] for r in records) + 1
    u0 = [None] * N
    for r in records:
        if r[1] == 0:
            u0[r[0]] = r[6][0]
    if any(v is None for v in u0):
        raise TrajectoryError(f"{path}: missing initial value row for some component")
    T = max(r[3] for r in records)
    sol = Solution(u0, T)
    prev = [None] * N
    for i, j, t0, t1, fam, q, dofs in sorted(records, key=lambda r: (r[0], r[1])):
        if j == 0:
            continue
        e = Element(i, t0, t1, get_tableau(fam, q), dofs, prev[i])
        try:
            sol.append(e)
        except ValueError as exc:
            raise TrajectoryError(f"{path}: {exc}") from None
        prev[i] = e
    return sol
