"""Benchmark studies: multi-adaptive versus uniform steps, and convergence orders."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .controller import ControllerState, StepController
from .iteration import IterationConfig
from .problems import front_position, mass_spring_chain, mass_spring_steps, propagating_front, scalar_linear
from .solver import FixedSteps, MethodConfig, solve_multiadaptive

__all__ = [
    "BenchmarkRow",
    "SUITES",
    "convergence_study",
    "front_study",
    "mass_spring_study",
    "fitted_slope",
]


@dataclass
class BenchmarkRow:
    suite: str
    case: str
    N: int
    method: str
    error: float
    steps_total: int
    f_evals: int
    wall_time: float

    HEADER = ("suite", "case", "N", "method", "error", "steps_total", "f_evals", "wall_time")

    def as_tuple(self) -> tuple:
        return (self.suite, self.case, self.N, self.method, self.error, self.steps_total, self.f_evals, self.wall_time)


def fitted_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log y against log x."""
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def mass_spring_study(
    sizes: Sequence[int] = (10, 50, 100),
    k0: float = 2e-4,
    T: float = 0.1,
    m_small: float = 1e-4,
    family: str = "cg",
    order: int = 1,
    strategy: str = "rational",
    tol_discrete: float = 1e-10,
) -> list[BenchmarkRow]:
    """Preset steps k0 / 100 k0 (multi) against k0 everywhere (uniform), per chain size."""
    rows = []
    method = MethodConfig(family, order, strategy)
    it = IterationConfig("fixpoint", tol_discrete)
    for n in sizes:
        spec = mass_spring_chain(n, m_small=m_small, T=T)
        ref = spec.exact(T)
        for label, steps in (("multi", mass_spring_steps(spec, k0)), ("uniform", [k0] * spec.N)):
            t0 = time.perf_counter()
            sol, stats = solve_multiadaptive(spec.system, method, FixedSteps(steps), it)
            wall = time.perf_counter() - t0
            err = float(np.max(np.abs(sol.state(T) - ref)))
            rows.append(BenchmarkRow("mass-spring", f"n_masses={n}", spec.N, label, err,
                                     sol.num_elements(), stats.nevals, wall))
    return rows


CONVERGENCE_METHODS = (("dg", 0), ("cg", 1), ("dg", 1), ("cg", 2))


def convergence_study(
    steps: Sequence[float] = (0.1, 0.05, 0.025, 0.0125),
    methods=CONVERGENCE_METHODS,
    lam: float = -1.0,
    T: float = 1.0,
) -> tuple[list[BenchmarkRow], dict]:
    """End-point errors on u' = lam u for a ladder of uniform steps; returns rows and slopes."""
    spec = scalar_linear(lam, T)
    exact = spec.exact(T)[0]
    rows = []
    slopes = {}
    it = IterationConfig("newton", 1e-14)
    for fam, q in methods:
        errs = []
        for k in steps:
            t0 = time.perf_counter()
            sol, stats = solve_multiadaptive(spec.system, MethodConfig(fam, q), FixedSteps(k), it)
            err = abs(sol.end_value(0) - exact)
            errs.append(err)
            rows.append(BenchmarkRow("convergence", f"k={k!r}", 1, f"m{fam}({q})", err,
                                     sol.num_elements(), stats.nevals, time.perf_counter() - t0))
        slopes[f"m{fam}({q})"] = fitted_slope(steps, errs)
    return rows, slopes


def controlled_front_run(n_nodes: int = 16, L: float = 1.0, T: float = 60.0, tol: float = 1e-5,
                         order: int = 2, k_max: float = 10.0, mono: bool = False, strategy: str = "rational"):
    """Front problem with the step controller (S_i = 1) and diagonal Newton.

    With ``mono`` all components form one step group, which turns the same
    machinery into a mono-adaptive solver.
    """
    spec = propagating_front(n_nodes, L, T=T)
    sys = spec.system
    if mono:
        sys.step_groups = [list(range(sys.N))]
    state = ControllerState(tol, [order] * sys.N, [1.0] * sys.N, k_min=1e-8 * T, k_max=k_max, target_scale=0.5)
    ctrl = StepController(state, [1e-3] * sys.N)
    it = IterationConfig("newton", 0.1 * tol / (sys.N * T))
    method = MethodConfig("cg", order, strategy, k_max=k_max)
    sol, stats = solve_multiadaptive(sys, method, ctrl, it)
    return spec, sol, stats


def front_study(configs=((16, 1.0), (32, 2.0)), T: float = 60.0, tol: float = 1e-5) -> tuple[list[BenchmarkRow], dict]:
    """Multi- versus mono-adaptive on both front configurations; returns rows and time ratios."""
    rows = []
    ratios = {}
    for n, L in configs:
        times = {}
        for label, mono in (("multi", False), ("mono", True)):
            t0 = time.perf_counter()
            spec, sol, stats = controlled_front_run(n, L, T, tol, mono=mono)
            wall = time.perf_counter() - t0
            u = sol.state(T)
            err = float(np.max(np.abs(u[0::2] + u[1::2] - 1.0)))
            times[label] = wall
            rows.append(BenchmarkRow("front", f"nodes={n} L={L!r}", spec.N, label, err,
                                     sol.num_elements(), stats.nevals, wall))
        ratios[f"nodes={n}"] = times["mono"] / times["multi"] if times["multi"] > 0 else math.nan
    return rows, ratios


def front_step_profile(sol, spec, t: float):
    """Per-component step of the element containing ``t``, and the front position."""
    steps = np.array([sol.element_at(i, t).k for i in range(spec.N)])
    u = sol.state(t)
    return steps, front_position(spec.x, u[0::2])


SUITES = {
    "mass-spring": mass_spring_study,
    "convergence": convergence_study,
    "front": front_study,
}
