"""Solving the element equations on a time-slab.

Elements are updated one at a time in sweep order.  Values of other
components are taken from the current iterate: interpolated inside known
elements and extrapolated beyond them.  Two update schemes are provided,
direct fixed point iteration and a diagonally damped Newton iteration in
which the Jacobian is replaced by its diagonal.
"""

from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass

from .tableau import CG
from .timeslab import ACTIVE, CONVERGED, Element, TimeSlab, sweep_order

__all__ = [
    "DIAGONAL_NEWTON",
    "FIXED_POINT",
    "ConvergenceReport",
    "IterationConfig",
    "SlabContext",
    "computational_residual",
    "element_update",
    "element_update_fixpoint",
    "element_update_newton",
    "iterate_slab",
    "residual_measure",
]

log = logging.getLogger(__name__)

FIXED_POINT = "fixed-point"
DIAGONAL_NEWTON = "diagonal-newton"
_SCHEME_ALIASES = {"fixpoint": FIXED_POINT, "fixed-point": FIXED_POINT, "newton": DIAGONAL_NEWTON,
                   "diagonal-newton": DIAGONAL_NEWTON}

_SINGULAR = 1e-14
# consecutive residual increases before a slow rise counts as divergence
DIVERGENCE_STREAK = 2


def canonical_scheme(name: str) -> str:
    try:
        return _SCHEME_ALIASES[name]
    except KeyError:
        raise ValueError(f"unknown iteration scheme {name!r}") from None


@dataclass
class IterationConfig:
    scheme: str = FIXED_POINT
    tol_discrete: float = 1e-10
    max_sweeps: int = 100
    divergence_guard: float = 10.0
    step_reduction_factor: float = 0.5

    def __post_init__(self):
        self.scheme = canonical_scheme(self.scheme)
        if not self.tol_discrete > 0:
            raise ValueError("tol_discrete must be positive")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be at least 1")
        if not self.divergence_guard > 1:
            raise ValueError("divergence_guard must exceed 1")
        if not 0 < self.step_reduction_factor < 1:
            raise ValueError("step_reduction_factor must lie in (0, 1)")


@dataclass
class ConvergenceReport:
    converged: bool
    sweeps: int
    max_residual: float
    diverged: bool = False
    scheme: str = FIXED_POINT

    def log_line(self, slab_index: int) -> str:
        return (f"slab={slab_index} sweeps={self.sweeps} max_residual={self.max_residual!r} "
                f"scheme={self.scheme} converged={self.converged}")


class SlabContext:
    """Global state seen by an element update: finalized solution plus slab iterate."""

    def __init__(self, sys, sol, slab: TimeSlab | None = None):
        self.sys = sys
        self.sol = sol
        self.slab = slab
        self.u = sys.u0.tolist()
        self.u0 = sys.u0.tolist()
        self.warnings: list[str] = []

    def value(self, l: int, t: float) -> float:
        els = self.slab.elements[l] if self.slab is not None else ()
        if els and t > els[0].t0:
            last = els[-1]
            if t >= last.t1:
                e = last
            else:
                e = els[bisect.bisect_left(els, t, key=_end)]
            return e.value(t)
        return self.sol._value(l, t)

    def incoming(self, e: Element) -> float:
        p = e.prev
        return p.dofs[-1] if p is not None else self.u0[e.i]

    def fill(self, i: int, t: float, own: float) -> list:
        u = self.u
        value = self.value
        for l in self.sys.deps(i):
            u[l] = own if l == i else value(l, t)
        return u


def _end(e: Element) -> float:
    return e.t1


def _node_rhs(e: Element, ctx: SlabContext):
    """Incoming value and f_i at the quadrature times with the current iterate."""
    i = e.i
    dofs = e.dofs
    x0 = ctx.incoming(e)
    if e.tab.family == CG:
        dofs[0] = x0
    sys = ctx.sys
    deps = sys.deps(i)
    u = ctx.u
    value = ctx.value
    f = []
    for n, t in enumerate(e.tnodes):
        own = dofs[n]
        for l in deps:
            u[l] = own if l == i else value(l, t)
        f.append(sys.f_component(i, u, t))
    return x0, f


def _defects(e: Element, x0: float, f: list) -> list:
    """F_m = xi_m - xi_0 - k sum_n W[m][n] f_n over the free dofs."""
    k = e.k
    ff = e.tab.first_free
    dofs = e.dofs
    out = []
    for m, row in enumerate(e.tab.weights_list):
        acc = 0.0
        for w, fn in zip(row, f):
            acc += w * fn
        out.append(dofs[ff + m] - x0 - k * acc)
    return out


def computational_residual(e: Element, ctx: SlabContext) -> float:
    """max_m |xi_m - xi_0 - k sum_n W[m][n] f_n| / k for the current dofs.

    The last row is the end-point defect U(t_ij) - U(t_i,j-1) - integral of f
    (with the incoming value replacing U(t_i,j-1) for dG); the other rows
    make a zero residual equivalent to a fixed point of the update.
    """
    x0, f = _node_rhs(e, ctx)
    return max(abs(d) for d in _defects(e, x0, f)) / e.k


def _apply_fixpoint(e: Element, x0: float, f: list) -> None:
    k = e.k
    ff = e.tab.first_free
    dofs = e.dofs
    for m, row in enumerate(e.tab.weights_list):
        acc = 0.0
        for w, fn in zip(row, f):
            acc += w * fn
        dofs[ff + m] = x0 + k * acc


def element_update_fixpoint(e: Element, ctx: SlabContext) -> list:
    """One fixed point update of the element equations; returns the new dofs.

    ``e.res`` receives the computational residual of the state before the update.
    """
    x0, f = _node_rhs(e, ctx)
    e.res = max(abs(d) for d in _defects(e, x0, f)) / e.k
    _apply_fixpoint(e, x0, f)
    return e.dofs


def _solve_small(A: list, b: list):
    """Gaussian elimination with partial pivoting; None if singular."""
    n = len(b)
    A = [row[:] for row in A]
    b = b[:]
    for c in range(n):
        p = max(range(c, n), key=lambda r: abs(A[r][c]))
        if abs(A[p][c]) < _SINGULAR:
            return None
        if p != c:
            A[c], A[p] = A[p], A[c]
            b[c], b[p] = b[p], b[c]
        piv = A[c][c]
        for r in range(c + 1, n):
            fac = A[r][c] / piv
            if fac:
                Ar, Ac = A[r], A[c]
                for j in range(c, n):
                    Ar[j] -= fac * Ac[j]
                b[r] -= fac * b[c]
    x = [0.0] * n
    for r in range(n - 1, -1, -1):
        acc = b[r]
        Ar = A[r]
        for j in range(r + 1, n):
            acc -= Ar[j] * x[j]
        x[r] = acc / Ar[r]
    return x


def damping_factor(k: float, dfdu: float) -> float:
    """theta = 1 / (1 - k df_i/du_i) for the dG(0) element."""
    return 1.0 / (1.0 - k * dfdu)


def element_update_newton(e: Element, ctx: SlabContext) -> list:
    """Diagonal Newton update; returns the new dofs.

    The local matrix I - k J_ii W (restricted to the free dofs) uses
    J_ii = d f_i / d u_i evaluated once at the element midpoint.  For dG(0)
    this is the damped update (1 - theta) U + theta (U_prev + k f_i).
    """
    x0, f = _node_rhs(e, ctx)
    F = _defects(e, x0, f)
    k = e.k
    e.res = max(abs(d) for d in F) / k
    tmid = 0.5 * (e.t0 + e.t1)
    u = ctx.fill(e.i, tmid, e.value(tmid))
    J = ctx.sys.dfdu_diag(e.i, u, tmid)
    tab = e.tab
    ff = tab.first_free
    W = tab.weights_list
    n = len(F)
    if n == 1:
        denom = 1.0 - k * J * W[0][ff]
        if abs(denom) < _SINGULAR:
            delta = None
        else:
            delta = [F[0] / denom]
    else:
        M = [[(1.0 if a == b else 0.0) - k * J * W[a][ff + b] for b in range(n)] for a in range(n)]
        delta = _solve_small(M, F)
    if delta is None:
        msg = f"singular local Newton matrix on element {e!r}; using a fixed point update"
        ctx.warnings.append(msg)
        log.warning(msg)
        _apply_fixpoint(e, x0, f)
        return e.dofs
    dofs = e.dofs
    for m in range(n):
        dofs[ff + m] -= delta[m]
    return dofs


def element_update(e: Element, ctx: SlabContext, scheme: str) -> list:
    if scheme == DIAGONAL_NEWTON:
        return element_update_newton(e, ctx)
    return element_update_fixpoint(e, ctx)


def iterate_slab(slab: TimeSlab, cfg: IterationConfig, ctx: SlabContext) -> ConvergenceReport:
    """Sweep over the slab until every computational residual is below tolerance.

    Each sweep visits the elements by increasing end time.  Stops early when
    the largest residual is not finite, grows by ``divergence_guard`` over
    consecutive increases, or by its square in a single sweep.  A lone rise
    is tolerated because values propagate between components one sweep at a
    time.
    """
    ctx.slab = slab
    order = sweep_order(slab)
    update = element_update_newton if cfg.scheme == DIAGONAL_NEWTON else element_update_fixpoint
    tol = cfg.tol_discrete
    prev = None
    streak_start = None
    streak = 0
    report = ConvergenceReport(False, 0, math.inf, scheme=cfg.scheme)
    for sweep in range(1, cfg.max_sweeps + 1):
        worst = 0.0
        for e in order:
            update(e, ctx)
            if e.res > worst or e.res != e.res:
                worst = e.res
        report.sweeps = sweep
        report.max_residual = worst
        if worst <= tol:
            report.converged = True
            break
        if not math.isfinite(worst):
            report.diverged = True
            break
        if prev is not None and worst > prev:
            if streak == 0:
                streak_start = prev
            streak += 1
            if worst >= cfg.divergence_guard ** 2 * prev or (
                    streak >= DIVERGENCE_STREAK and worst >= cfg.divergence_guard * streak_start):
                report.diverged = True
                break
        else:
            streak = 0
        prev = worst
    for e in order:
        e.state = CONVERGED if e.res <= tol else ACTIVE
    slab.stats.sweeps = report.sweeps
    slab.stats.max_residual = report.max_residual
    slab.stats.converged = report.converged
    return report


def residual_measure(e: Element, ctx: SlabContext) -> float:
    """r_ij: max |dU_i/dt - f_i(U, t)| over the quadrature nodes and both end-points."""
    tab = e.tab
    k = e.k
    x0, f = _node_rhs(e, ctx)
    dofs = e.dofs
    D = tab.diff_list
    r = 0.0
    for n, row in enumerate(D):
        du = 0.0
        for d, y in zip(row, dofs):
            du += d * y
        r = max(r, abs(du / k - f[n]))
    if tab.family != CG:
        # the left end-point is not a Radau node
        own = tab.evaluate(dofs, 0.0)
        du = sum(d * y for d, y in zip(tab.left_derivative_list, dofs))
        t = e.t0
        u = ctx.fill(e.i, t, own)
        r = max(r, abs(du / k - ctx.sys.f_component(e.i, u, t)))
    e.r = r
    return r
