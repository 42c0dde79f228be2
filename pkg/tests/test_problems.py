import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from multiadaptive.problems import (
    GRAVITATIONAL_CONSTANT,
    PROBLEMS,
    front_position,
    lorenz,
    make_problem,
    mass_spring_chain,
    mass_spring_steps,
    propagating_front,
    read_bodies,
    scalar_linear,
    solar_system,
)
from multiadaptive.solver import solve_uniform
from multiadaptive.system import numerical_jacobian


def test_scalar_linear():
    assert scalar_linear(0.0).exact(0.7)[0] == 1.0
    assert scalar_linear(-1.0).exact(1.0)[0] == pytest.approx(0.367879, abs=1e-6)
    assert scalar_linear(-1000.0).system.f([1.0], 0.0)[0] == -1000.0


def test_mass_spring_dimension_and_steps():
    spec = mass_spring_chain(5, m_small=1e-4)
    assert spec.N == 10
    assert mass_spring_steps(spec, 1e-3) == [1e-3, 1e-3] + [0.1] * 8


def test_mass_spring_equilibrium_is_constant():
    spec = mass_spring_chain(4, m_small=1.0, displacement=0.0)
    np.testing.assert_array_equal(spec.system.f(spec.system.u0, 0.0), 0.0)


def test_mass_spring_two_mass_period():
    spec = mass_spring_chain(2, m_small=1.0, stiffness=1.0, displacement=0.1)
    # modes of [[2, -1], [-1, 2]]: omega^2 in {1, 3}
    omegas = np.sqrt(np.linalg.eigvalsh(np.array([[2.0, -1.0], [-1.0, 2.0]])))
    np.testing.assert_allclose(omegas, [1.0, math.sqrt(3.0)])
    # the sum of displacements is the slow mode alone
    T = 2 * math.pi / omegas[0]
    u = spec.exact(T)
    assert (u[0] + u[2]) == pytest.approx(0.1, rel=1e-3)
    uni = solve_uniform(spec.system, "cg", 2, T / 2000, T=T)
    np.testing.assert_allclose(uni.state(T), spec.exact(T), atol=1e-8)


def test_mass_spring_component_and_full_forms_agree():
    spec = mass_spring_chain(4, m_small=0.1)
    u = np.random.default_rng(0).standard_normal(spec.N)
    full = spec.system.f(u, 0.0)
    for i in range(spec.N):
        assert spec.system.f_component(i, list(u), 0.0) == pytest.approx(full[i], abs=1e-14)
        assert set(spec.system.deps(i)) >= set(np.nonzero(spec.matrix[i])[0])


def test_lorenz():
    spec = lorenz()
    np.testing.assert_allclose(spec.system.f(spec.system.u0, 0.0), [-10.0, 28.0, 0.0])
    np.testing.assert_array_equal(spec.system.f(np.zeros(3), 0.0), 0.0)
    eig = np.linalg.eigvals(spec.system.jacobian(np.zeros(3), 0.0))
    assert np.min(np.abs(eig + 8.0 / 3.0)) < 1e-12


def test_bundled_bodies():
    recs = read_bodies()
    names = [r["name"] for r in recs]
    assert names[:4] == ["Sun", "Mercury", "Venus", "Earth"] and "Moon" in names and len(recs) == 11
    assert all(r["mass"] > 0 for r in recs)
    earth = recs[3]
    assert np.linalg.norm(earth["r"]) == pytest.approx(1.0, abs=0.03)
    assert np.linalg.norm(earth["v"]) == pytest.approx(2 * math.pi, rel=0.03)


def test_body_file_errors(tmp_path):
    p = tmp_path / "bodies.csv"
    p.write_text("# comment\nname,mass,x,y,z,vx,vy,vz\nA,1,0,0,0,0,0,oops\n")
    with pytest.raises(ValueError, match="record"):
        read_bodies(p)
    with pytest.raises(ValueError):
        solar_system(bodies=["Sun", "Vulcan"])


def test_gravitational_constant():
    assert GRAVITATIONAL_CONSTANT == pytest.approx(39.478, abs=1e-3)


def test_circular_two_body_period():
    recs = [
        {"name": "A", "mass": 1.0, "r": np.zeros(3), "v": np.zeros(3)},
        {"name": "B", "mass": 1e-30, "r": np.array([1.0, 0, 0]), "v": np.array([0, 2 * math.pi, 0])},
    ]
    spec = solar_system(records=recs, T=1.0, recenter=False)
    uni = solve_uniform(spec.system, "cg", 2, 1e-3)
    np.testing.assert_allclose(uni.state(1.0)[6:9], [1.0, 0.0, 0.0], atol=1e-4)


def test_solar_momentum_and_jacobian():
    spec = solar_system(bodies=["Sun", "Earth", "Moon"], T=0.05)
    sys = spec.system
    J = sys.jacobian(sys.u0, 0.0)
    np.testing.assert_allclose(J, numerical_jacobian(sys, sys.u0, 0.0, h=1e-7), atol=1e-3 * np.max(np.abs(J)))
    uni = solve_uniform(sys, "cg", 2, 1e-4)
    p0 = spec.invariants["momentum"](sys.u0)
    p1 = spec.invariants["momentum"](uni.state(0.05))
    assert np.linalg.norm(p1 - p0) <= 1e-9 * 0.05 + 1e-15


def test_front_configurations():
    spec = propagating_front()
    assert spec.N == 32 and spec.system.T == 100.0 and spec.params["eps"] == 1e-5
    spec = propagating_front(32, 2.0)
    assert spec.N == 64 and spec.x[-1] == 2.0


@settings(max_examples=20, deadline=None)
@given(arrays(np.float64, 32, elements=st.floats(0, 1)))
def test_front_forms_agree(u):
    spec = propagating_front()
    full = spec.system.f(u, 0.0)
    for i in range(spec.N):
        assert spec.system.f_component(i, list(u), 0.0) == pytest.approx(full[i], abs=1e-12)
    np.testing.assert_allclose(np.diag(spec.system.jacobian(u, 0.0)),
                               [spec.system.dfdu_diag(i, list(u), 0.0) for i in range(spec.N)])


def test_front_species_sum_is_conserved():
    spec = propagating_front(T=5.0)
    uni = solve_uniform(spec.system, "cg", 1, 0.05)
    for t in (1.0, 3.0, 5.0):
        np.testing.assert_allclose(spec.invariants["species_sum"](uni.state(t)), 1.0, atol=1e-8)


def test_front_position():
    x = np.linspace(0, 1, 11)
    assert front_position(x, (x >= 0.35).astype(float)) == pytest.approx(0.35, abs=0.05)
    assert front_position(x, np.clip((x - 0.2) * 5, 0, 1)) == pytest.approx(0.3)


def test_make_problem():
    assert set(PROBLEMS) == {"scalar_linear", "lorenz", "mass_spring", "solar_system", "front"}
    spec = make_problem("scalar-linear", lam="-2", T="3")
    assert spec.params["lam"] == -2.0 and spec.system.T == 3.0
    assert make_problem("mass_spring", n_masses="3").N == 6
    assert make_problem("solar_system", bodies="Sun,Earth").N == 12
    with pytest.raises(ValueError, match="available"):
        make_problem("brusselator")
    with pytest.raises(ValueError):
        make_problem("lorenz", rho="28")
