"""Solve drivers.

:func:`solve_multiadaptive` runs the time-slab loop (build, iterate, cut,
extend) with per-component orders and steps.  :func:`solve_uniform` is a
vectorized solver for the special case of one common step and order for all
components; it serves as the standard-method baseline and for reference runs.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .iteration import (
    DIAGONAL_NEWTON,
    ConvergenceReport,
    IterationConfig,
    SlabContext,
    iterate_slab,
    residual_measure,
)
from .system import OdeSystem, Solution, UniformSolution
from .tableau import CG, DG, MethodTableau, get_tableau
from .timeslab import DYADIC, STRATEGIES, Element, EmptySlab, build_slab, cut_covered, extend_slab

__all__ = [
    "FixedSteps",
    "MethodConfig",
    "SolveStats",
    "SolverError",
    "canonical_family",
    "solve_multiadaptive",
    "solve_uniform",
]

log = logging.getLogger(__name__)

MAX_RETRIES = 40

_FAMILY_ALIASES = {"cg": CG, "mcg": CG, "dg": DG, "mdg": DG}


class SolverError(RuntimeError):
    """The slab iteration could not be made to converge."""


def canonical_family(name: str) -> str:
    try:
        return _FAMILY_ALIASES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown method {name!r}; expected mcg or mdg") from None


@dataclass
class MethodConfig:
    """Method family, per-component orders and slab partitioning."""

    family: str = CG
    order: Union[int, Sequence[int]] = 1
    strategy: str = DYADIC
    k_max: float = math.inf
    # steps below this fraction of T after repeated reductions abort the solve
    k_floor: float = 1e-12

    def __post_init__(self):
        self.family = canonical_family(self.family)
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if not self.k_max > 0:
            raise ValueError("k_max must be positive")

    def orders(self, N: int) -> list[int]:
        if isinstance(self.order, (int, np.integer)):
            return [int(self.order)] * N
        orders = [int(q) for q in self.order]
        if len(orders) != N:
            raise ValueError(f"need {N} orders, got {len(orders)}")
        return orders

    def tableaux(self, N: int) -> list[MethodTableau]:
        return [get_tableau(self.family, q) for q in self.orders(N)]


class FixedSteps:
    """Step policy with preset steps: a number, one per component, or a callable (i, t) -> k."""

    def __init__(self, steps):
        self.steps = steps

    def step(self, i: int, t: float) -> float:
        s = self.steps
        if callable(s):
            return float(s(i, t))
        if isinstance(s, (int, float, np.floating)):
            return float(s)
        return float(s[i])

    def initial(self, sys: OdeSystem) -> list[float]:
        return [self.step(i, 0.0) for i in range(sys.N)]

    def update(self, i: int, t: float, elements: Sequence[Element]) -> float:
        return self.step(i, t)

    @property
    def needs_residuals(self) -> bool:
        return False


@dataclass
class SolveStats:
    slabs: int = 0
    sweeps: int = 0
    retries: int = 0
    elements: int = 0
    nevals: int = 0
    wall_time: float = 0.0
    max_residual: float = 0.0
    warnings: list = field(default_factory=list)
    trace: list = field(default_factory=list)


def _group_min(steps: list[float], groups) -> list[float]:
    if not groups:
        return steps
    for g in groups:
        k = min(steps[i] for i in g)
        for i in g:
            steps[i] = k
    return steps


def _worst_components(slab, frac: float = 0.1) -> set[int]:
    """Components holding the largest defects.

    Ranked by the unscaled defect res * k: dividing by k would single out
    short elements, whose residuals mostly reflect their neighbours.
    """
    defects = [(e.res * e.k, e.i) for e in slab.all_elements()]
    bad = {i for d, i in defects if not math.isfinite(d)}
    if bad:
        return bad
    worst = max((d for d, _ in defects), default=0.0)
    return {i for d, i in defects if d >= frac * worst}


def _trace(stats: SolveStats, trace: Optional[Callable[[str], None]], event: str, slab, sol) -> None:
    fr = sol.frontiers
    line = (f"event={event} slab_end={slab.slab_end!r} elements={len(slab)} "
            f"min_frontier={min(fr)!r} max_frontier={max(fr)!r}")
    stats.trace.append(line)
    if trace is not None:
        trace(line)


def solve_multiadaptive(
    sys: OdeSystem,
    method: MethodConfig,
    steps,
    iteration: Optional[IterationConfig] = None,
    trace: Optional[Callable[[str], None]] = None,
    keep_trace: bool = False,
) -> tuple[Solution, SolveStats]:
    """Integrate ``sys`` over (0, T] with individual steps per component.

    ``steps`` is a :class:`FixedSteps` or any object with the same
    ``initial``/``update``/``needs_residuals`` interface (the step
    controller).  When a slab fails to converge, the proposed steps of the
    components holding the largest residuals are multiplied by the
    configured reduction factor and the slab is rebuilt.
    """
    if not isinstance(steps, FixedSteps) and not hasattr(steps, "update"):
        steps = FixedSteps(steps)
    cfg = iteration or IterationConfig()
    N, T = sys.N, sys.T
    tabs = method.tableaux(N)
    sol = Solution(sys.u0, T)
    ctx = SlabContext(sys, sol)
    stats = SolveStats()
    nevals0 = sys.nevals
    t_start = time.perf_counter()
    k_floor = method.k_floor * T
    groups = sys.step_groups

    def make_element(i, t0, t1, prev):
        if prev is None:
            prev = sol.last(i)
        x0 = prev.dofs[-1] if prev is not None else ctx.u0[i]
        return Element(i, t0, t1, tabs[i], [x0] * tabs[i].ndofs, prev)

    def log_event(event, slab):
        if keep_trace or trace is not None:
            _trace(stats, trace, event, slab, sol)

    proposals = _group_min([min(k, method.k_max) for k in steps.initial(sys)], groups)
    slab = None
    while True:
        try:
            if slab is None or not len(slab):
                slab = build_slab(sol.frontiers, proposals, method.strategy, T, make_element, method.k_max)
                log_event("build", slab)
            else:
                slab = extend_slab(slab, proposals, method.strategy, T, make_element, method.k_max)
                log_event("extend", slab)
        except EmptySlab:
            break
        report = _iterate_with_retries(slab, cfg, ctx, proposals, method, sol, make_element, stats, k_floor, groups)
        stats.slabs += 1
        stats.sweeps += report.sweeps
        stats.max_residual = max(stats.max_residual, report.max_residual)
        if keep_trace or trace is not None:
            _trace(stats, trace, "sweep", slab, sol)
        if steps.needs_residuals:
            for e in slab.all_elements():
                residual_measure(e, ctx)
        cut = cut_covered(slab)
        if not cut:
            raise SolverError(f"no progress at slab end {slab.slab_end!r}")
        by_comp: dict[int, list[Element]] = {}
        for e in cut:
            sol.append(e)
            by_comp.setdefault(e.i, []).append(e)
        log_event("cut", slab)
        for i, els in by_comp.items():
            proposals[i] = min(steps.update(i, els[-1].t1, els), method.k_max)
        _group_min(proposals, groups)
    stats.elements = sol.num_elements()
    stats.nevals = sys.nevals - nevals0
    stats.wall_time = time.perf_counter() - t_start
    stats.warnings = list(ctx.warnings)
    return sol, stats


def _iterate_with_retries(slab, cfg, ctx, proposals, method, sol, make_element, stats, k_floor, groups):
    stalled_prev = None
    for _ in range(MAX_RETRIES + 1):
        report: ConvergenceReport = iterate_slab(slab, cfg, ctx)
        if report.converged:
            return report
        if not report.diverged:
            # shorter steps lower a true contraction residual; at the round-off floor they raise it
            if stalled_prev is not None and report.max_residual > 0.5 * stalled_prev:
                raise SolverError(
                    f"slab iteration stalls at residual {report.max_residual!r} even after step "
                    f"reduction; tol_discrete {cfg.tol_discrete!r} is likely below round-off")
            stalled_prev = report.max_residual
        else:
            stalled_prev = None
        worst = _worst_components(slab)
        stats.retries += 1
        for i in worst:
            used = min((e.k for e in slab.elements[i]), default=proposals[i])
            proposals[i] = min(proposals[i], used) * cfg.step_reduction_factor
        _group_min(proposals, groups)
        if min(proposals) < k_floor:
            raise SolverError(
                f"slab iteration did not converge (max residual {report.max_residual!r}) "
                f"even with steps reduced below {k_floor!r}")
        log.info("slab at t=%r did not converge (%s, sweeps %d, residual %r); reducing steps of components %s",
                 min(slab.frontiers), "diverged" if report.diverged else "stalled", report.sweeps,
                 report.max_residual, sorted(worst))
        # discard the unconverged slab; nothing in it was finalized
        slab.elements = [[] for _ in slab.elements]
        fresh = build_slab(sol.frontiers, proposals, method.strategy, sol.T, make_element, method.k_max)
        slab.elements = fresh.elements
        slab.slab_end = fresh.slab_end
        slab.stats = fresh.stats
    raise SolverError(f"slab at t={min(slab.frontiers)!r} did not converge after {MAX_RETRIES} step reductions")


# -- uniform steps ---------------------------------------------------------------

FIXPOINT = "fixpoint"
NEWTON = "newton"
DIAGONAL = "diagonal-newton"
_UNIFORM_SCHEMES = {"fixpoint": FIXPOINT, "fixed-point": FIXPOINT, "newton": NEWTON,
                    "diagonal-newton": DIAGONAL, DIAGONAL_NEWTON: DIAGONAL}


def _grid(T: float, k) -> np.ndarray:
    if np.ndim(k) == 0:
        k = float(k)
        if not k > 0:
            raise ValueError("step must be positive")
        M = max(1, int(round(T / k)))
        if abs(M * k - T) > 1e-9 * T:
            M = math.ceil(T / k)
        return np.linspace(0.0, T, M + 1)
    grid = np.asarray(k, dtype=float)
    if grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must start at 0 and increase strictly")
    return grid


def solve_uniform(
    sys: OdeSystem,
    family: str,
    q: int,
    k,
    scheme: str = NEWTON,
    tol: float = 1e-13,
    max_iter: int = 50,
    T: Optional[float] = None,
) -> UniformSolution:
    """Solve with one step and one order for all components.

    ``k`` is a step (the grid is uniform on [0, T]) or an explicit grid.
    Schemes: ``fixpoint`` iterates the element equations directly;
    ``newton`` uses the full local Jacobian, frozen at the start of the
    step; ``diagonal-newton`` keeps only its diagonal.  Iteration stops when
    the update falls below ``tol`` relative to the solution scale.
    """
    family = canonical_family(family)
    scheme = _UNIFORM_SCHEMES.get(scheme)
    if scheme is None:
        raise ValueError("unknown scheme")
    tab = get_tableau(family, q)
    T = sys.T if T is None else float(T)
    grid = _grid(T, k)
    M = grid.size - 1
    N = sys.N
    nodes = tab.nodes
    ff = tab.first_free
    W = tab.weights
    nfree = W.shape[0]
    dofs = np.empty((M, N, tab.ndofs))
    x0 = sys.u0.copy()
    for j in range(M):
        t0, t1 = grid[j], grid[j + 1]
        h = t1 - t0
        ts = t0 + nodes * h
        ts[-1] = t1
        X = np.repeat(x0[:, None], tab.ndofs, axis=1)
        if scheme != FIXPOINT:
            J = sys.jacobian(x0, t0)
            if scheme == DIAGONAL:
                J = np.diag(np.diag(J))
            # unknowns ordered (node m, component a)
            A = np.eye(nfree * N) - h * np.kron(W[:, ff:], J)
            lu = lu_factor(A)
        for it in range(max_iter):
            F = np.stack([sys.f(X[:, n], ts[n]) for n in range(tab.ndofs)], axis=1)
            target = x0[:, None] + h * F @ W.T
            if scheme == FIXPOINT:
                delta = target - X[:, ff:]
            else:
                R = (X[:, ff:] - target).T.ravel()
                delta = -lu_solve(lu, R).reshape(nfree, N).T
            X[:, ff:] += delta
            if not np.all(np.isfinite(X)):
                raise SolverError(f"iteration diverged on step {j} at t={t0!r}")
            if np.max(np.abs(delta)) <= tol * (1.0 + np.max(np.abs(X))):
                break
        else:
            raise SolverError(f"no convergence in {max_iter} iterations on step {j} at t={t0!r}")
        dofs[j] = X
        x0 = X[:, -1].copy()
    return UniformSolution(sys.u0, grid, dofs, tab)
