"""The eleven acceptance criteria, each at its stated tolerance and runtime budget.

Run with ``pytest tests/test_acceptance.py`` (verdict lines appear in the
terminal summary) or directly with ``python tests/test_acceptance.py``.
"""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from acceptance_log import record  # noqa: E402
from slab_checks import random_cycles  # noqa: E402

from multiadaptive.benchmarks import controlled_front_run, convergence_study, fitted_slope, mass_spring_study  # noqa: E402
from multiadaptive.controller import adaptive_solve  # noqa: E402
from multiadaptive.dual import computational_error_model, stability_growth  # noqa: E402
from multiadaptive.iteration import IterationConfig, SlabContext, element_update_newton, iterate_slab  # noqa: E402
from multiadaptive.problems import front_position, lorenz, mass_spring_chain, scalar_linear, solar_system  # noqa: E402
from multiadaptive.solver import FixedSteps, MethodConfig, solve_multiadaptive, solve_uniform  # noqa: E402
from multiadaptive.system import Solution  # noqa: E402
from multiadaptive.tableau import DG, get_tableau  # noqa: E402
from multiadaptive.timeslab import Element, build_slab  # noqa: E402


def _check(label, budget, body):
    t0 = time.perf_counter()
    ok, detail = body()
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed < budget
    record(label, ok, detail, elapsed, budget)
    assert ok, detail


def backward_euler_oracle(lam, u0, k, n):
    """Closed-form iteration of u_{n+1} = u_n + k lam u_{n+1}."""
    out, u = [], u0
    for _ in range(n):
        u = u / (1.0 - k * lam)
        out.append(u)
    return out


def test_c01_backward_euler_oracle():
    def body():
        spec = scalar_linear(-1.0, T=1.0)
        sol, _ = solve_multiadaptive(spec.system, MethodConfig("dg", 0), FixedSteps(0.01),
                                     IterationConfig("newton", 1e-14))
        values = [e.dofs[0] for e in sol.elements(0)]
        oracle = backward_euler_oracle(-1.0, 1.0, 0.01, 100)
        dev = max(abs(a - b) for a, b in zip(values, oracle))
        return len(values) == 100 and dev <= 1e-12, f"steps {len(values)}, max deviation {dev:.2e} <= 1e-12"

    _check("C1 backward-Euler oracle", 1.0, body)


def test_c02_convergence_orders():
    def body():
        _, slopes = convergence_study(steps=(0.1, 0.05, 0.025, 0.0125), methods=(("dg", 0), ("cg", 1), ("dg", 1)))
        windows = {"mdg(0)": (1.0, 0.2), "mcg(1)": (2.0, 0.2), "mdg(1)": (3.0, 0.3)}
        ok = all(abs(slopes[m] - c) <= w for m, (c, w) in windows.items())
        return ok, ", ".join(f"{m} slope {slopes[m]:.3f}" for m in windows)

    _check("C2 convergence orders", 5.0, body)


def test_c03_multiadaptive_scaling():
    def body():
        sizes = (10, 50, 100)
        rows = mass_spring_study(sizes=sizes, k0=2e-4, T=0.1)
        multi = [r for r in rows if r.method == "multi"]
        uni = [r for r in rows if r.method == "uniform"]
        spread = lambda xs: max(xs) / min(xs)
        multi_steps = spread([r.steps_total for r in multi])
        multi_evals = spread([r.f_evals for r in multi])
        growth_ok = all(
            u.steps_total / uni[0].steps_total >= 0.8 * n / 10 and u.f_evals / uni[0].f_evals >= 0.8 * n / 10
            for n, u in zip(sizes, uni))
        err_ratio = max(max(m.error, u.error) / min(m.error, u.error) for m, u in zip(multi, uni))
        ok = multi_steps <= 2 and multi_evals <= 2 and growth_ok and err_ratio <= 10
        detail = (f"multi steps x{multi_steps:.2f}, evals x{multi_evals:.2f} across N; uniform steps "
                  + "/".join(str(u.steps_total) for u in uni)
                  + f", evals x{uni[-1].f_evals / uni[0].f_evals:.1f}; worst error ratio {err_ratio:.1f}")
        return ok, detail

    _check("C3 multi-adaptive scaling", 60.0, body)


def test_c04_stiff_iteration():
    def body():
        spec = scalar_linear(-1000.0, T=1.0)
        sys_ = spec.system

        def slab():
            tab = get_tableau(DG, 0)
            e = Element(0, 0.0, 0.01, tab, [1.0])
            s = build_slab([0.0], [0.01], "dyadic", 1.0, lambda i, t0, t1, prev: e)
            return e, s, SlabContext(sys_, Solution(sys_.u0, 1.0), s)

        _, s, ctx = slab()
        fix = iterate_slab(s, IterationConfig("fixpoint", 1e-10), ctx)
        e, s, ctx = slab()
        for n in range(1, 51):
            element_update_newton(e, ctx)
            if abs(e.dofs[0] - 1 / 11) <= 1e-10:
                break
        err = abs(e.dofs[0] - 1 / 11)
        ok = fix.diverged and not fix.converged and err <= 1e-10 and n <= 50
        return ok, f"fixed point diverged={fix.diverged} after {fix.sweeps} sweeps; Newton error {err:.1e} in {n} iterations"

    _check("C4 stiff iteration", 1.0, body)


def test_c05_lorenz_stability_growth():
    def body():
        spec = lorenz(T=30.0)
        primal = solve_uniform(spec.system, "cg", 5, 0.05, scheme="newton")
        Ts = np.linspace(10.0, 30.0, 21)
        rows = stability_growth(primal, spec.system, Ts, k_dual=0.01)
        S0 = np.array([r[1] for r in rows])
        slope = float(np.polyfit(Ts, np.log10(S0), 1)[0])
        drops = int(np.sum(np.diff(S0) < 0))
        ok = 0.25 <= slope <= 0.50
        return ok, f"slope of log10 S0 {slope:.3f} in [0.25, 0.50]; {len(Ts)} samples, {drops} local decreases"

    _check("C5 Lorenz stability growth", 300.0, body)


def test_c06_lorenz_computability():
    def body():
        spec = lorenz(T=50.0)
        a = solve_uniform(spec.system, "cg", 5, 0.1, scheme="newton")
        spec.system.u0 = spec.system.u0 + np.array([1e-12, 0.0, 0.0])
        b = solve_uniform(spec.system, "cg", 5, 0.1, scheme="newton")
        ts = np.linspace(0.0, 50.0, 5001)
        diff = np.max(np.abs(a.values(ts) - b.values(ts)), axis=1)
        hit = np.nonzero(diff >= 1.0)[0]
        t_sep = float(ts[hit[0]]) if hit.size else math.inf
        E_C = computational_error_model(None, 0.1, T=45.0, preset="lorenz")
        ok = t_sep < 50.0 and E_C == 1.0
        return ok, f"separation >= 1 at t = {t_sep:.1f}; E_C(T=45, k_min=0.1) = {E_C!r}"

    _check("C6 Lorenz computability", 30.0, body)


def _energy_series(spec, sol, T):
    ts = np.linspace(0.0, T, 2 * 10_000 + 1)
    E = np.array([spec.invariants["energy"](u) for u in sol.values(ts)])
    return ts, E


def test_c07_energy_behavior():
    def body():
        T = 100.0
        spec = mass_spring_chain(2, m_small=1.0, T=T)
        cg = solve_uniform(spec.system, "cg", 1, 0.01)
        ts, E = _energy_series(spec, cg, T)
        E0 = E[0]
        dev = np.abs(E - E0) / E0
        half = ts <= T / 2
        first, second = dev[half].max(), dev[~half].max()
        dg = solve_uniform(spec.system, "dg", 0, 0.01)
        node_E = np.array([spec.invariants["energy"](u) for u in dg.node_values()])
        monotone = bool(np.all(np.diff(node_E) <= 0.0))
        ok = cg.num_elements(0) == 10_000 and second <= 2 * first and monotone
        return ok, (f"mcG(1) max relative deviation {first:.2e} (first half) vs {second:.2e} (second half); "
                    f"mdG(0) energy monotone decreasing: {monotone}, {node_E[0]:.4f} -> {node_E[-1]:.4f}")

    _check("C7 energy behavior", 10.0, body)


def _growth_exponent(family):
    spec = solar_system(bodies=["Sun", "Earth", "Moon"], T=5.0)
    coarse = solve_uniform(spec.system, family, 1, 1e-3, scheme="fixpoint", tol=1e-14)
    fine = solve_uniform(spec.system, family, 1, 1e-4, scheme="fixpoint", tol=1e-14)
    ts = np.linspace(0.0, 5.0, 5001)[1:]
    err = np.linalg.norm(coarse.values(ts) - fine.values(ts), axis=1)
    envelope = np.maximum.accumulate(err)
    keep = ts >= 0.5
    return fitted_slope(ts[keep], envelope[keep])


def test_c08_solar_error_growth():
    def body():
        p_cg = _growth_exponent("cg")
        p_dg = _growth_exponent("dg")
        ok = 0.6 <= p_cg <= 1.4 and 1.5 <= p_dg <= 2.5
        return ok, f"growth exponent cG(1) {p_cg:.2f} in [0.6, 1.4], dG(1) {p_dg:.2f} in [1.5, 2.5]"

    _check("C8 solar-system error growth", 600.0, body)


def test_c09_front_localization():
    def body():
        spec, sol, _ = controlled_front_run(16, 1.0, T=60.0, tol=1e-5)
        t = 50.0
        steps = np.array([sol.element_at(i, t).k for i in range(spec.N)])
        u = sol.state(t)
        front = front_position(spec.x, u[0::2])
        node_min = int(np.argmin(steps)) // 2
        h = spec.x[1] - spec.x[0]
        dist = abs(spec.x[node_min] - front) / h
        ratio = steps.max() / steps.min()
        sum_dev = float(np.max(np.abs(u[0::2] + u[1::2] - 1.0)))
        ok = dist <= 3 and ratio >= 10 and sum_dev <= 1e-6
        return ok, (f"front at x = {front:.3f}, smallest step at node {node_min} ({dist:.1f} nodes away); "
                    f"step ratio {ratio:.0f}; species-sum deviation {sum_dev:.1e}")

    _check("C9 front localization", 300.0, body)


def test_c10_bound_validity():
    def body():
        spec = scalar_linear(-1.0, T=1.0)
        res = adaptive_solve(spec.system, MethodConfig("cg", 1), 1e-4)
        err = abs(res.solution.end_value(0) - math.exp(-1.0))
        ok = res.accepted and err <= res.E <= 100 * err
        return ok, f"E = {res.E:.2e}, true error {err:.2e}, effectivity {res.E / err:.1f}, accepted={res.accepted}"

    _check("C10 a-posteriori bound validity", 5.0, body)


def test_c11_slab_invariants():
    def body():
        n = random_cycles(10_000, seed=2024)
        return n == 10_000, f"{n} randomized cycles without an invariant violation"

    _check("C11 slab invariant suite", 30.0, body)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
