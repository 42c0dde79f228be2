"""Individual step selection and the outer adaptive loop.

Each component picks its next step so that its share of the error estimate
matches TOL / N: k^p * r * S = TOL / N, with p the order exponent, r the
latest residual measure and S the stability factor.  The raw step is then
smoothed, either by taking the geometric mean with the previous step or by a
PI regulator.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .iteration import IterationConfig
from .system import OdeSystem, Solution
from .timeslab import Element

__all__ = [
    "GEOMETRIC_MEAN",
    "PI",
    "AdaptiveResult",
    "ControllerState",
    "StepController",
    "adaptive_solve",
    "error_estimate_max",
    "error_estimate_sum",
    "propose_step",
    "raw_step",
]

log = logging.getLogger(__name__)

GEOMETRIC_MEAN = "geomean"
PI = "pi"
NONE = "none"
REGULATORS = (GEOMETRIC_MEAN, PI, NONE)


@dataclass
class ControllerState:
    """Regulator memory and global parameters of the step law.

    ``k_prev`` and ``r_prev`` hold the last accepted step and residual per
    component; ``orders`` holds the exponents p_i (q for cG, q + 1 for dG).
    """

    tol: float
    orders: list[int]
    stability: list[float]
    regulator: str = GEOMETRIC_MEAN
    k_min: float = 1e-12
    k_max: float = math.inf
    alpha: float = 0.3
    beta: float = 0.1
    u_scale: float = 1.0
    # extra factor on TOL / N used by the adaptive loop to aim below TOL
    target_scale: float = 1.0
    k_prev: list[Optional[float]] = field(default_factory=list)
    r_prev: list[Optional[float]] = field(default_factory=list)

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("TOL must be positive")
        if not 0 < self.k_min <= self.k_max:
            raise ValueError("need 0 < k_min <= k_max")
        if self.regulator not in REGULATORS:
            raise ValueError(f"unknown regulator {self.regulator!r}")
        if any(p < 1 for p in self.orders):
            raise ValueError("order exponents must be at least 1")
        if len(self.stability) != self.N:
            raise ValueError("need one stability factor per component")
        if not self.k_prev:
            self.k_prev = [None] * self.N
        if not self.r_prev:
            self.r_prev = [None] * self.N

    @property
    def N(self) -> int:
        return len(self.orders)

    @property
    def r_floor(self) -> float:
        return 1e-15 * (1.0 + self.u_scale)

    def clamp(self, k: float) -> float:
        return min(self.k_max, max(self.k_min, k))


def raw_step(tol_per_component: float, S: float, r: float, p: int) -> float:
    """Solve k^p * r * S = TOL / N for k."""
    denom = S * r
    if denom <= 0.0:
        return math.inf
    return (tol_per_component / denom) ** (1.0 / p)


def propose_step(i: int, r_latest: float, state: ControllerState) -> float:
    """Next step for component ``i`` from its latest residual measure.

    Updates the regulator memory of ``state`` and returns the clamped step.
    The raw step is clamped to [k_min, k_max] before smoothing, so the
    geometric mean never moves further than half-way (in log) towards it.
    """
    if r_latest < 0:
        raise ValueError("residual measure must be nonnegative")
    p = state.orders[i]
    S = max(state.stability[i], 0.0)
    r = max(r_latest, state.r_floor)
    tol_i = state.target_scale * state.tol / state.N
    k_raw = state.clamp(raw_step(tol_i, S, r, p) if S > 0 else math.inf)
    k_prev = state.k_prev[i]
    if k_prev is None or state.regulator == NONE:
        k_new = k_raw
    elif state.regulator == GEOMETRIC_MEAN:
        k_new = math.sqrt(k_prev * k_raw)
    else:
        r_prev = state.r_prev[i] if state.r_prev[i] is not None else r
        if S > 0:
            target = tol_i / (S * k_prev ** p)
            k_new = k_prev * (target / r) ** (state.alpha / p) * (max(r_prev, state.r_floor) / r) ** (state.beta / p)
        else:
            k_new = state.k_max
    k_new = state.clamp(k_new)
    state.k_prev[i] = k_new
    state.r_prev[i] = r
    return k_new


class StepController:
    """Step policy for :func:`solve_multiadaptive` driven by residual measures."""

    needs_residuals = True

    def __init__(self, state: ControllerState, k_init: Sequence[float]):
        self.state = state
        self.k_init = [state.clamp(k) for k in k_init]

    def initial(self, sys: OdeSystem) -> list[float]:
        return list(self.k_init)

    def update(self, i: int, t: float, elements: Sequence[Element]) -> float:
        r = max(e.r for e in elements)
        # smooth against the step actually used, which quantization may have shortened
        self.state.k_prev[i] = elements[-1].k
        return propose_step(i, r, self.state)


def error_estimate_sum(elements: Iterable[Element], weights) -> float:
    """Sum over all elements of k^(p+1) * r * s.

    ``weights`` maps ``(i, j)`` to the stability weight s_ij (a dict, or any
    object supporting ``weights[i, j]``); ``j`` is the element's position in
    its component, starting at 1.
    """
    total = 0.0
    for e in elements:
        try:
            s = weights[e.i, e.j]
        except (KeyError, IndexError):
            raise ValueError(f"no stability weight for element ({e.i}, {e.j})") from None
        total += e.k ** (e.tab.order + 1) * e.r * s
    return total


def error_estimate_max(S: Sequence[float], elements: Iterable[Element]) -> float:
    """Sum over components of S_i * max_j k^p * r."""
    worst = [0.0] * len(S)
    for e in elements:
        worst[e.i] = max(worst[e.i], e.k ** e.tab.order * e.r)
    return float(sum(s * w for s, w in zip(S, worst)))


@dataclass
class AdaptiveResult:
    solution: Solution
    report: "object"
    E: float
    accepted: bool
    rounds: int
    stats: "object" = None
    history: list = field(default_factory=list)


def adaptive_solve(
    sys: OdeSystem,
    method,
    tol: float,
    dual_data=None,
    *,
    regulator: str = GEOMETRIC_MEAN,
    k_min: Optional[float] = None,
    k_max: Optional[float] = None,
    k_init: Optional[float] = None,
    iteration: Optional[IterationConfig] = None,
    scheme: str = "fixpoint",
    rounds_max: int = 10,
    safety: float = 0.5,
    dual_step: Optional[float] = None,
    keep_trace: bool = False,
) -> AdaptiveResult:
    """Solve, certify with the dual problem, and repeat until E <= TOL.

    Round one uses S_i = 1.  Later rounds use the stability factors from the
    previous dual solve.  From round three on, the step target is also
    lowered by TOL / E of the previous round.  ``safety`` scales the per-component
    target TOL / N so the first round tends to land below TOL.
    """
    from .dual import dual_data_presets, stability_weights, solve_dual
    from .solver import MethodConfig, solve_multiadaptive

    if not tol > 0:
        raise ValueError("TOL must be positive")
    if rounds_max < 1:
        raise ValueError("rounds_max must be at least 1")
    N, T = sys.N, sys.T
    if not isinstance(method, MethodConfig):
        raise TypeError("method must be a MethodConfig")
    k_max = min(method.k_max, 0.1 * T) if k_max is None else k_max
    k_min = 1e-10 * T if k_min is None else k_min
    k_init = min(k_max, 1e-3 * T) if k_init is None else k_init
    method = MethodConfig(method.family, method.order, method.strategy, k_max, method.k_floor)
    orders = [t.order for t in method.tableaux(N)]
    if dual_data is None:
        dual_data = dual_data_presets("endpoint-uniform", N=N)
    S = [1.0] * N
    target_scale = safety
    result = None
    history = []
    u_scale = float(np.max(np.abs(sys.u0)))
    for rnd in range(1, rounds_max + 1):
        Smax = max(S)
        tol_discrete = 0.1 * tol / (N * max(Smax, 1e-12) * T)
        it = iteration or IterationConfig(scheme=scheme, tol_discrete=tol_discrete)
        state = ControllerState(tol, orders, list(S), regulator, k_min, k_max, u_scale=u_scale,
                                target_scale=target_scale)
        ctrl = StepController(state, [k_init] * N)
        sol, stats = solve_multiadaptive(sys, method, ctrl, it, keep_trace=keep_trace)
        report = stability_weights(solve_dual(sol, sys, dual_data, k_dual=dual_step), sol)
        E = error_estimate_sum(sol.all_elements(), report.weights)
        report.E = E
        accepted = E <= tol
        history.append((rnd, E, sol.num_elements()))
        log.info("round %d: E=%r elements=%d accepted=%s", rnd, E, sol.num_elements(), accepted)
        result = AdaptiveResult(sol, report, E, accepted, rnd, stats, history)
        if accepted:
            break
        if rnd > 1:
            # the factors already came from a dual solve, so aim lower instead
            target_scale *= min(1.0, tol / E)
        floor = 1e-6 * max(max(report.S), 1e-300)
        S = [max(s, floor) for s in report.S]
        if max(S) <= 0:
            S = [1.0] * N
    return result
