import math

import numpy as np
import pytest

from multiadaptive.dual import (
    DegenerateDualData,
    DualData,
    computational_error_model,
    dual_data_presets,
    fundamental_matrix,
    solve_dual,
    stability_factor_bound,
    stability_growth,
    stability_weights,
    write_stability_growth,
    write_weights,
)
from multiadaptive.problems import lorenz, scalar_linear
from multiadaptive.solver import solve_uniform
from multiadaptive.system import OdeSystem


def zero_system(N=2, T=1.0):
    return OdeSystem(np.ones(N), T, rhs_full=lambda u, t: np.zeros(N), jacobian_full=lambda u, t: np.zeros((N, N)))


def diagonal_system(lams, T=1.0):
    lams = np.asarray(lams, dtype=float)
    return OdeSystem(np.ones(lams.size), T, rhs_full=lambda u, t: lams * u,
                     jacobian_full=lambda u, t: np.diag(lams))


def primal_of(sys, k=0.01):
    return solve_uniform(sys, "cg", 1, k)


def test_presets():
    d = dual_data_presets("endpoint-component", N=3, n=2)
    np.testing.assert_array_equal(d.phi_T, [0, 1, 0])
    np.testing.assert_array_equal(d.g(0.3), [0, 0, 0])
    d = dual_data_presets("average-component", N=3, n=1)
    np.testing.assert_array_equal(d.phi_T, [0, 0, 0])
    np.testing.assert_array_equal(d.g(0.1), [1, 0, 0])
    np.testing.assert_array_equal(d.g(0.9), [1, 0, 0])
    d = dual_data_presets("endpoint-l2", N=3, approx_error=[3.0, 4.0, 0.0])
    np.testing.assert_allclose(d.phi_T, [0.6, 0.8, 0.0])
    d = dual_data_presets("endpoint-uniform", N=4)
    assert np.linalg.norm(d.phi_T) == pytest.approx(1.0)


def test_preset_errors():
    with pytest.raises(ValueError):
        dual_data_presets("endpoint-component", N=3, n=4)
    with pytest.raises(DegenerateDualData):
        dual_data_presets("endpoint-l2", N=2, approx_error=[0.0, 0.0])
    with pytest.raises(DegenerateDualData):
        DualData(np.zeros(3))
    with pytest.raises(ValueError):
        dual_data_presets("midpoint", N=2)


def test_zero_rhs_dual_is_constant():
    sys = zero_system()
    dual = solve_dual(primal_of(sys), sys, DualData([0.3, -2.0]))
    np.testing.assert_allclose(dual.values(np.linspace(0, 1, 11)), np.tile([0.3, -2.0], (11, 1)), atol=1e-14)


def test_scalar_dual_closed_form():
    lam = -1.0
    spec = scalar_linear(lam, T=1.0)
    dual = solve_dual(primal_of(spec.system), spec.system, DualData([1.0]), k_dual=1e-3)
    ts = np.linspace(0.05, 0.95, 10)
    np.testing.assert_allclose(dual.values(ts)[:, 0], np.exp(lam * (1.0 - ts)), atol=1e-6)
    assert dual(1.0)[0] == 1.0


def test_constant_forcing_dual():
    sys = zero_system(N=3, T=2.0)
    data = dual_data_presets("average-component", N=3, n=2)
    dual = solve_dual(primal_of(sys), sys, data, k_dual=0.01)
    ts = np.linspace(0, 2, 9)
    phi = dual.values(ts)
    np.testing.assert_allclose(phi[:, 1], 2.0 - ts, atol=1e-12)
    np.testing.assert_allclose(phi[:, [0, 2]], 0.0, atol=1e-14)


def test_dual_needs_covering_primal():
    spec = scalar_linear(T=1.0)
    primal = solve_uniform(spec.system, "cg", 1, 0.1, T=0.5)
    with pytest.raises(ValueError):
        solve_dual(primal, spec.system, DualData([1.0]), T=1.0)
    with pytest.raises(ValueError):
        solve_dual(primal_of(spec.system), spec.system, DualData([1.0, 1.0]))


def test_fundamental_matrix_zero_and_diagonal():
    sys = zero_system(N=3)
    ts, Phi = fundamental_matrix(primal_of(sys), sys, k_dual=0.01)
    np.testing.assert_allclose(Phi, np.broadcast_to(np.eye(3), Phi.shape), atol=1e-14)
    lams = [-1.0, 0.5]
    sys = diagonal_system(lams)
    ts, Phi = fundamental_matrix(primal_of(sys), sys, k_dual=1e-3)
    for i, lam in enumerate(lams):
        np.testing.assert_allclose(Phi[:, i, i], np.exp(lam * (1.0 - ts)), rtol=1e-5)
    assert np.max(np.abs(Phi[:, 0, 1])) == 0.0


def test_stability_factor_bound_closed_forms():
    sys = zero_system(N=2, T=3.0)
    ts, Phi = fundamental_matrix(primal_of(sys), sys, k_dual=0.01, n_samples=301)
    assert stability_factor_bound(ts, Phi, 0) == pytest.approx(3.0, rel=1e-12)
    lam = -1.0
    spec = scalar_linear(lam, T=2.0)
    ts, Phi = fundamental_matrix(primal_of(spec.system), spec.system, k_dual=1e-3)
    assert stability_factor_bound(ts, Phi, 0) == pytest.approx((math.exp(lam * 2.0) - 1) / lam, rel=1e-4)
    with pytest.raises(ValueError):
        stability_factor_bound(ts, Phi, 3)
    with pytest.raises(ValueError):
        stability_factor_bound(ts[:4], Phi[:4], 1)


def test_stability_weights_constant_dual():
    sys = zero_system()
    primal = primal_of(sys, k=0.1)
    rep = stability_weights(solve_dual(primal, sys, DualData([1.0, 1.0])), primal)
    assert rep.S == [0.0, 0.0]
    assert all(w == 0.0 for w in rep.weights.values())


def test_stability_weights_scalar():
    lam = -1.0
    spec = scalar_linear(lam, T=1.0)
    primal = primal_of(spec.system, k=0.05)
    rep = stability_weights(solve_dual(primal, spec.system, DualData([1.0]), k_dual=1e-3), primal)
    expected = abs(lam) * (math.exp(lam) - 1) / lam
    assert rep.S[0] == pytest.approx(expected, rel=1e-3)
    assert all(w >= 0 for w in rep.weights.values())
    total = sum(e.k * rep.weights[0, e.j] for e in primal.elements(0))
    assert total == pytest.approx(rep.S[0], rel=0.05)
    assert rep.E_C == pytest.approx(rep.S_global[0] * 1e-16 / 0.05)


def test_computational_error_model():
    assert computational_error_model(None, 0.1, T=45, preset="lorenz") == 1.0
    assert computational_error_model(None, 0.1, T=30, preset="lorenz") == pytest.approx(1e-5)
    assert computational_error_model(1.0, 1e-3) == pytest.approx(1e-13)
    with pytest.raises(ValueError):
        computational_error_model(1.0, 0.0)
    with pytest.raises(ValueError):
        computational_error_model(None, 0.1, preset="lorenz")


def test_lorenz_fundamental_matrix_grows():
    spec = lorenz(T=20.0)
    primal = solve_uniform(spec.system, "cg", 5, 0.05)
    rows = stability_growth(primal, spec.system, [5.0, 20.0], k_dual=0.01)
    assert rows[1][1] > 10 * rows[0][1]


def test_writers(tmp_path):
    lam = -1.0
    spec = scalar_linear(lam, T=1.0)
    primal = primal_of(spec.system, k=0.1)
    rep = stability_weights(solve_dual(primal, spec.system, DualData([1.0])), primal)
    write_weights(tmp_path / "w.csv", rep)
    lines = (tmp_path / "w.csv").read_text().splitlines()
    assert lines[0] == "component,j,s_ij" and len(lines) == 11
    write_stability_growth(tmp_path / "g.csv", stability_growth(primal, spec.system, [0.5, 1.0]))
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines[0] == "T_sample,S0_bar,S1_bar,S2_bar" and len(lines) == 3
