import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multiadaptive.controller import (
    GEOMETRIC_MEAN,
    PI,
    ControllerState,
    StepController,
    adaptive_solve,
    error_estimate_max,
    error_estimate_sum,
    propose_step,
    raw_step,
)
from multiadaptive.problems import scalar_linear
from multiadaptive.solver import MethodConfig
from multiadaptive.system import OdeSystem
from multiadaptive.tableau import CG, DG, get_tableau
from multiadaptive.timeslab import Element


def state(N=1, p=1, regulator="none", tol=1e-3, **kw):
    return ControllerState(tol * N, [p] * N, [1.0] * N, regulator, **kw)


def element(i, j, k, r, family=CG, q=1, t0=0.0):
    e = Element(i, t0, t0 + k, get_tableau(family, q))
    e.j = j
    e.r = r
    return e


def test_raw_step_examples():
    assert raw_step(1e-3, 1.0, 1.0, 1) == pytest.approx(1e-3)
    assert raw_step(1e-3, 1.0, 1.0, 2) == pytest.approx(math.sqrt(1e-3))
    assert raw_step(1e-3, 1.0, 0.0, 1) == math.inf


def test_propose_step_examples():
    assert propose_step(0, 1.0, state()) == pytest.approx(1e-3)
    assert propose_step(0, 1.0, state(p=2)) == pytest.approx(0.03162, rel=1e-4)


def test_geometric_mean_smoothing():
    st_ = state(regulator=GEOMETRIC_MEAN, tol=0.04)
    st_.k_prev[0] = 0.01
    # raw step 0.04 from TOL/N = 0.04, r = 1, p = 1
    assert propose_step(0, 1.0, st_) == pytest.approx(0.02)


def test_pi_regulator_at_target_keeps_step():
    st_ = state(regulator=PI, tol=1e-3)
    st_.k_prev[0] = 0.01
    st_.r_prev[0] = 0.1
    # k^p r S = TOL/N exactly, and r unchanged: no change
    assert propose_step(0, 0.1, st_) == pytest.approx(0.01)
    assert propose_step(0, 1.0, st_) < 0.01


def test_clamping_and_zero_residual():
    st_ = state(k_min=1e-4, k_max=0.5)
    assert propose_step(0, 0.0, st_) == 0.5
    assert propose_step(0, 1e12, st_) == 1e-4


def test_state_validation():
    with pytest.raises(ValueError):
        ControllerState(0.0, [1], [1.0])
    with pytest.raises(ValueError):
        ControllerState(1.0, [1], [1.0], "bang-bang")
    with pytest.raises(ValueError):
        ControllerState(1.0, [1], [1.0, 2.0])
    with pytest.raises(ValueError):
        ControllerState(1.0, [1], [1.0], k_min=1.0, k_max=0.1)
    with pytest.raises(ValueError):
        propose_step(0, -1.0, state())


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-8, 1e2), st.integers(1, 6), st.sampled_from(["none", GEOMETRIC_MEAN, PI]),
       st.floats(1e-6, 1.0))
def test_proposals_stay_in_bounds(r, p, regulator, k_prev):
    st_ = state(p=p, regulator=regulator, k_min=1e-6, k_max=1.0)
    st_.k_prev[0] = k_prev
    k = propose_step(0, r, st_)
    assert 1e-6 <= k <= 1.0


def test_step_controller_uses_worst_residual():
    st_ = state(tol=1e-3)
    ctrl = StepController(st_, [0.1])
    k = ctrl.update(0, 0.2, [element(0, 1, 0.1, 0.5), element(0, 2, 0.1, 1.0, t0=0.1)])
    assert k == pytest.approx(1e-3)


def test_error_estimate_sum_examples():
    assert error_estimate_sum([element(0, 1, 0.1, 0.0)], {(0, 1): 5.0}) == 0.0
    assert error_estimate_sum([element(0, 1, 0.1, 2.0)], {(0, 1): 3.0}) == pytest.approx(0.06)
    with pytest.raises(ValueError):
        error_estimate_sum([element(0, 1, 0.1, 2.0)], {})


def test_error_estimate_sum_against_brute_force():
    rng = np.random.default_rng(7)
    els, weights = [], {}
    for i, n in ((0, 2), (1, 3)):
        t = 0.0
        for j in range(1, n + 1):
            k, r, s = rng.uniform(0.01, 0.2), rng.uniform(0, 3), rng.uniform(0, 2)
            fam, q = (CG, 2) if i == 0 else (DG, 1)
            els.append(element(i, j, k, r, fam, q, t0=t))
            weights[i, j] = s
            t += k
    brute = 0.0
    for e in els:
        p = e.tab.q if e.tab.family == CG else e.tab.q + 1
        brute += e.k ** (p + 1) * e.r * weights[e.i, e.j]
    assert error_estimate_sum(els, weights) == pytest.approx(brute, rel=1e-14)


def test_error_estimate_max_examples():
    assert error_estimate_max([1.0], [element(0, 1, 0.1, 0.0)]) == 0.0
    els = [element(0, 1, 0.1, 1.0), element(0, 2, 0.2, 1.0, t0=0.1)]
    assert error_estimate_max([2.0], els) == pytest.approx(0.4)
    for e in els:
        assert error_estimate_max([2.0], els) >= 2.0 * e.k * e.r


def test_adaptive_zero_rhs_hits_k_max():
    sys = OdeSystem([1.0], 1.0, rhs_component=lambda i, u, t: 0.0)
    res = adaptive_solve(sys, MethodConfig("cg", 1), 1e-6, k_max=0.25, k_init=0.25)
    assert res.accepted and res.rounds == 1 and res.E == 0.0
    assert all(e.k == pytest.approx(0.25) for e in res.solution.elements(0))


def test_adaptive_scalar_decay():
    spec = scalar_linear(-1.0, T=1.0)
    res = adaptive_solve(spec.system, MethodConfig("cg", 1), 1e-4)
    err = abs(res.solution.end_value(0) - math.exp(-1.0))
    assert res.accepted and res.rounds <= 3
    assert res.E >= err


def test_adaptive_rejects_bad_input():
    spec = scalar_linear()
    with pytest.raises(ValueError):
        adaptive_solve(spec.system, MethodConfig(), -1.0)
    with pytest.raises(TypeError):
        adaptive_solve(spec.system, "cg", 1e-3)
