"""Benchmark problems as ready-made :class:`OdeSystem` instances."""

from __future__ import annotations

import csv
import inspect
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import expm

from .system import OdeSystem

__all__ = [
    "GRAVITATIONAL_CONSTANT",
    "PROBLEMS",
    "ProblemSpec",
    "lorenz",
    "make_problem",
    "front_position",
    "mass_spring_chain",
    "mass_spring_steps",
    "propagating_front",
    "read_bodies",
    "scalar_linear",
    "solar_system",
]

GRAVITATIONAL_CONSTANT = 4.0 * math.pi ** 2  # AU^3 / (solar mass yr^2)


@dataclass
class ProblemSpec:
    """A named system plus reference facts.

    ``exact`` (if known) maps t to the exact state; ``invariants`` maps a
    name to a function of the state that the exact flow conserves.
    """

    name: str
    system: OdeSystem
    params: dict = field(default_factory=dict)
    exact: Optional[Callable[[float], np.ndarray]] = None
    invariants: dict = field(default_factory=dict)
    notes: str = ""

    @property
    def N(self) -> int:
        return self.system.N


# -- scalar -----------------------------------------------------------------------


def scalar_linear(lam: float = -1.0, T: float = 1.0, u0: float = 1.0) -> ProblemSpec:
    """u' = lam * u with the exponential as exact solution."""
    lam = float(lam)
    sys = OdeSystem(
        [u0], T,
        rhs_full=lambda u, t: lam * np.asarray(u, dtype=float),
        rhs_component=lambda i, u, t: lam * u[0],
        jacobian_diag=lambda i, u, t: lam,
        jacobian_full=lambda u, t: np.array([[lam]]),
        sparsity=[[0]],
        name="scalar_linear",
    )
    return ProblemSpec("scalar_linear", sys, {"lam": lam, "T": T, "u0": u0},
                       exact=lambda t: np.array([u0 * math.exp(lam * t)]))


# -- mass-spring chain --------------------------------------------------------------


def mass_spring_chain(
    n_masses: int = 5,
    m_small: float = 1e-4,
    stiffness: float = 1.0,
    T: float = 1.0,
    displacement: float = 0.1,
) -> ProblemSpec:
    """Masses in a line joined by springs, with walls at both ends.

    Mass 0 has mass ``m_small``, the others mass 1.  State layout is
    interleaved: u[2a] is the displacement of mass a from equilibrium and
    u[2a+1] its velocity.  Initially everything is at rest in equilibrium
    except mass 0, displaced by ``displacement``.  A mass m oscillates at a
    frequency of order 1/sqrt(m), so preset steps scale like sqrt(m); see
    :func:`mass_spring_steps`.
    """
    n = int(n_masses)
    if n < 2:
        raise ValueError("need at least two masses")
    if not (m_small > 0 and stiffness > 0):
        raise ValueError("masses and stiffness must be positive")
    m = [m_small] + [1.0] * (n - 1)
    inv_m = [stiffness / mi for mi in m]
    N = 2 * n
    A = np.zeros((N, N))
    for a in range(n):
        A[2 * a, 2 * a + 1] = 1.0
        A[2 * a + 1, 2 * a] = -2.0 * inv_m[a]
        if a > 0:
            A[2 * a + 1, 2 * (a - 1)] = inv_m[a]
        if a < n - 1:
            A[2 * a + 1, 2 * (a + 1)] = inv_m[a]

    def rhs_component(i, u, t):
        a, vel = divmod(i, 2)
        if not vel:
            return u[i + 1]
        x = u[i - 1]
        left = u[i - 3] if a > 0 else 0.0
        right = u[i + 1] if a < n - 1 else 0.0
        return inv_m[a] * (left - 2.0 * x + right)

    diag = [A[i, i] for i in range(N)]
    sparsity = []
    for i in range(N):
        a, vel = divmod(i, 2)
        if vel:
            sparsity.append([2 * b for b in (a - 1, a, a + 1) if 0 <= b < n])
        else:
            sparsity.append([i + 1])
    u0 = np.zeros(N)
    u0[0] = displacement
    masses = np.array(m)

    def energy(u):
        u = np.asarray(u, dtype=float)
        x, v = u[0::2], u[1::2]
        ext = np.concatenate([[0.0], x, [0.0]])
        return 0.5 * np.dot(masses, v * v) + 0.5 * stiffness * np.sum(np.diff(ext) ** 2)

    sys = OdeSystem(
        u0, T,
        rhs_full=lambda u, t: A @ np.asarray(u, dtype=float),
        rhs_component=rhs_component,
        jacobian_diag=lambda i, u, t: diag[i],
        jacobian_full=lambda u, t: A,
        sparsity=sparsity,
        step_groups=[[2 * a, 2 * a + 1] for a in range(n)],
        name="mass_spring",
    )
    spec = ProblemSpec(
        "mass_spring", sys,
        {"n_masses": n, "m_small": m_small, "stiffness": stiffness, "T": T, "displacement": displacement},
        exact=lambda t: expm(A * t) @ u0,
        invariants={"energy": energy},
        notes="fast component pair is (0, 1); steps k0 there and 100 k0 elsewhere",
    )
    spec.matrix = A
    return spec


def mass_spring_steps(spec: ProblemSpec, k0: float, ratio: float = 100.0) -> list[float]:
    """Preset steps: k0 for the small mass, ratio * k0 for all others."""
    return [k0 if i < 2 else ratio * k0 for i in range(spec.N)]


# -- Lorenz -------------------------------------------------------------------------


def lorenz(sigma: float = 10.0, r: float = 28.0, b: float = 8.0 / 3.0, T: float = 50.0,
           u0: Sequence[float] = (1.0, 0.0, 0.0)) -> ProblemSpec:
    def rhs_full(u, t):
        x, y, z = u
        return np.array([sigma * (y - x), r * x - y - x * z, x * y - b * z])

    def rhs_component(i, u, t):
        if i == 0:
            return sigma * (u[1] - u[0])
        if i == 1:
            return r * u[0] - u[1] - u[0] * u[2]
        return u[0] * u[1] - b * u[2]

    def jac(u, t):
        x, y, z = u
        return np.array([[-sigma, sigma, 0.0], [r - z, -1.0, -x], [y, x, -b]])

    diag = (-sigma, -1.0, -b)
    sys = OdeSystem(
        list(u0), T, rhs_full=rhs_full, rhs_component=rhs_component,
        jacobian_diag=lambda i, u, t: diag[i], jacobian_full=jac, name="lorenz",
    )
    return ProblemSpec("lorenz", sys, {"sigma": sigma, "r": r, "b": b, "T": T})


# -- solar system -------------------------------------------------------------------


def read_bodies(path=None) -> list[dict]:
    """Body records (name, mass, position, velocity) from a CSV file.

    Without ``path`` the bundled 11-body file is used: Sun, Moon and nine
    planets on 2000-01-01, barycentric, AU and AU/yr, masses in solar
    masses.  The values come from public analytic ephemerides and are
    approximate (about five significant digits).
    """
    if path is None:
        text = resources.files("multiadaptive").joinpath("data/solar_system.csv").read_text(encoding="utf-8")
        lines = text.splitlines()
        where = "bundled solar_system.csv"
    else:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        where = str(path)
    rows = [ln for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.DictReader(rows)
    bodies = []
    for lineno, row in enumerate(reader, start=2):
        try:
            bodies.append({
                "name": row["name"].strip(),
                "mass": float(row["mass"]),
                "r": np.array([float(row[c]) for c in ("x", "y", "z")]),
                "v": np.array([float(row[c]) for c in ("vx", "vy", "vz")]),
            })
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{where}: record {lineno}: {exc}") from None
    return bodies


def solar_system(path=None, bodies: Optional[Sequence[str]] = None, T: float = 5.0,
                 recenter: bool = True, records: Optional[list[dict]] = None) -> ProblemSpec:
    """Newtonian n-body system with G = 4 pi^2 (AU, yr, solar masses).

    The state holds (x, y, z, vx, vy, vz) for each body in turn.  ``bodies``
    selects a subset by name; ``recenter`` moves the selection to its own
    barycentric frame.  ``records`` overrides the file entirely.
    """
    recs = records if records is not None else read_bodies(path)
    if bodies is not None:
        by_name = {r["name"]: r for r in recs}
        missing = [b for b in bodies if b not in by_name]
        if missing:
            raise ValueError(f"unknown bodies {missing}")
        recs = [by_name[b] for b in bodies]
    nb = len(recs)
    if nb < 2:
        raise ValueError("need at least two bodies")
    m = np.array([r["mass"] for r in recs], dtype=float)
    if np.any(m <= 0):
        raise ValueError("masses must be positive")
    pos = np.array([r["r"] for r in recs], dtype=float)
    vel = np.array([r["v"] for r in recs], dtype=float)
    for a in range(nb):
        for c in range(a + 1, nb):
            if np.array_equal(pos[a], pos[c]):
                raise ValueError(f"bodies {recs[a]['name']} and {recs[c]['name']} coincide")
    if recenter:
        pos = pos - (m[:, None] * pos).sum(0) / m.sum()
        vel = vel - (m[:, None] * vel).sum(0) / m.sum()
    G = GRAVITATIONAL_CONSTANT
    Gm = G * m
    u0 = np.concatenate([pos, vel], axis=1).ravel()
    N = 6 * nb

    def split(u):
        s = np.asarray(u, dtype=float).reshape(nb, 6)
        return s[:, :3], s[:, 3:]

    def accelerations(r):
        d = r[None, :, :] - r[:, None, :]  # d[a, c] = r_c - r_a
        dist2 = np.einsum("abk,abk->ab", d, d)
        np.fill_diagonal(dist2, 1.0)
        inv3 = dist2 ** -1.5
        np.fill_diagonal(inv3, 0.0)
        return np.einsum("ab,abk->ak", inv3 * Gm[None, :], d)

    def rhs_full(u, t):
        r, v = split(u)
        return np.concatenate([v, accelerations(r)], axis=1).ravel()

    def rhs_component(i, u, t):
        a, c = divmod(i, 6)
        if c < 3:
            return u[i + 3]
        c -= 3
        base = 6 * a
        ra = (u[base], u[base + 1], u[base + 2])
        acc = 0.0
        for b in range(nb):
            if b == a:
                continue
            o = 6 * b
            dx, dy, dz = u[o] - ra[0], u[o + 1] - ra[1], u[o + 2] - ra[2]
            d2 = dx * dx + dy * dy + dz * dz
            acc += Gm[b] * (dx, dy, dz)[c] / (d2 * math.sqrt(d2))
        return acc

    def jacobian(u, t):
        r, _ = split(u)
        J = np.zeros((N, N))
        for a in range(nb):
            J[6 * a:6 * a + 3, 6 * a + 3:6 * a + 6] = np.eye(3)
            for b in range(nb):
                if b == a:
                    continue
                d = r[b] - r[a]
                dn = np.linalg.norm(d)
                blk = Gm[b] * (np.eye(3) / dn ** 3 - 3.0 * np.outer(d, d) / dn ** 5)
                J[6 * a + 3:6 * a + 6, 6 * b:6 * b + 3] = blk
                J[6 * a + 3:6 * a + 6, 6 * a:6 * a + 3] -= blk
        return J

    def jacobian_diag(i, u, t):
        # positions feed velocities and vice versa; no component depends on itself
        return 0.0

    def energy(u):
        r, v = split(u)
        kin = 0.5 * np.sum(m * np.sum(v * v, axis=1))
        pot = 0.0
        for a in range(nb):
            for b in range(a + 1, nb):
                pot -= G * m[a] * m[b] / np.linalg.norm(r[a] - r[b])
        return kin + pot

    def momentum(u):
        _, v = split(u)
        return (m[:, None] * v).sum(0)

    def angular_momentum(u):
        r, v = split(u)
        return (m[:, None] * np.cross(r, v)).sum(0)

    sparsity = []
    for a in range(nb):
        sparsity += [[6 * a + c + 3] for c in range(3)]
        sparsity += [[6 * b + c for b in range(nb) for c in range(3)]] * 3
    sys = OdeSystem(
        u0, T, rhs_full=rhs_full, rhs_component=rhs_component, jacobian_diag=jacobian_diag,
        jacobian_full=jacobian, sparsity=sparsity,
        step_groups=[list(range(6 * a, 6 * a + 6)) for a in range(nb)], name="solar_system",
    )
    spec = ProblemSpec(
        "solar_system", sys, {"bodies": [r["name"] for r in recs], "T": T},
        invariants={"energy": energy, "momentum": momentum, "angular_momentum": angular_momentum},
        notes="initial data from public analytic ephemerides; approximate",
    )
    spec.names = [r["name"] for r in recs]
    spec.masses = m
    return spec


# -- propagating front ----------------------------------------------------------------


def propagating_front(n_nodes: int = 16, L: float = 1.0, eps: float = 1e-5, T: float = 100.0,
                      x0: float = 0.2) -> ProblemSpec:
    """Two-species reaction-diffusion system on a uniform grid of ``n_nodes`` points.

    u1' = eps u1'' - u1 u2^2, u2' = eps u2'' + u1 u2^2 with zero-flux ends
    (mirrored ghost values).  Layout: u[2j] = u1 at node j, u[2j+1] = u2.
    Initially u1 = 1 for x >= x0 and 0 before, u2 = 1 - u1.
    """
    n = int(n_nodes)
    if n < 3:
        raise ValueError("need at least three nodes")
    if not (eps > 0 and L > 0):
        raise ValueError("eps and L must be positive")
    h = L / (n - 1)
    c = eps / (h * h)
    x = np.linspace(0.0, L, n)
    u1 = (x >= x0).astype(float)
    u0 = np.empty(2 * n)
    u0[0::2] = u1
    u0[1::2] = 1.0 - u1
    N = 2 * n

    def lap(v):
        out = np.empty_like(v)
        out[1:-1] = v[:-2] - 2.0 * v[1:-1] + v[2:]
        out[0] = 2.0 * (v[1] - v[0])
        out[-1] = 2.0 * (v[-2] - v[-1])
        return c * out

    def rhs_full(u, t):
        u = np.asarray(u, dtype=float)
        a, b = u[0::2], u[1::2]
        react = a * b * b
        out = np.empty(N)
        out[0::2] = lap(a) - react
        out[1::2] = lap(b) + react
        return out

    def rhs_component(i, u, t):
        j, s = divmod(i, 2)
        left = u[i - 2] if j > 0 else u[i + 2]
        right = u[i + 2] if j < n - 1 else u[i - 2]
        diff = c * (left - 2.0 * u[i] + right)
        a, b = (u[i], u[i + 1]) if s == 0 else (u[i - 1], u[i])
        react = a * b * b
        return diff - react if s == 0 else diff + react

    def jacobian(u, t):
        u = np.asarray(u, dtype=float)
        J = np.zeros((N, N))
        for j in range(n):
            for s in range(2):
                i = 2 * j + s
                J[i, i] -= 2.0 * c
                J[i, 2 * (j - 1 if j > 0 else j + 1) + s] += c
                J[i, 2 * (j + 1 if j < n - 1 else j - 1) + s] += c
            a, b = u[2 * j], u[2 * j + 1]
            da, db = b * b, 2.0 * a * b
            J[2 * j, 2 * j] -= da
            J[2 * j, 2 * j + 1] -= db
            J[2 * j + 1, 2 * j] += da
            J[2 * j + 1, 2 * j + 1] += db
        return J

    def jacobian_diag(i, u, t):
        j, s = divmod(i, 2)
        if s == 0:
            return -2.0 * c - u[i + 1] ** 2
        return -2.0 * c + 2.0 * u[i - 1] * u[i]

    sparsity = []
    for j in range(n):
        nb = sorted({max(j - 1, 0) if j > 0 else 1, j, min(j + 1, n - 1) if j < n - 1 else n - 2})
        for s in range(2):
            sparsity.append(sorted({2 * k + s for k in nb} | {2 * j, 2 * j + 1}))
    sys = OdeSystem(
        u0, T, rhs_full=rhs_full, rhs_component=rhs_component, jacobian_diag=jacobian_diag,
        jacobian_full=jacobian, sparsity=sparsity,
        step_groups=[[2 * j, 2 * j + 1] for j in range(n)], name="front",
    )
    spec = ProblemSpec(
        "front", sys, {"n_nodes": n, "L": L, "eps": eps, "T": T, "x0": x0},
        invariants={"species_sum": lambda u: np.asarray(u)[0::2] + np.asarray(u)[1::2]},
    )
    spec.x = x
    return spec


def front_position(x: np.ndarray, u1: np.ndarray, level: float = 0.5) -> float:
    """First location where u1 rises through ``level`` (linear interpolation)."""
    above = np.nonzero(u1 >= level)[0]
    if above.size == 0:
        return float(x[-1])
    j = above[0]
    if j == 0:
        return float(x[0])
    a, b = u1[j - 1], u1[j]
    return float(x[j - 1] + (level - a) / (b - a) * (x[j] - x[j - 1]))


# -- registry ---------------------------------------------------------------------------

PROBLEMS = {
    "scalar_linear": scalar_linear,
    "lorenz": lorenz,
    "mass_spring": mass_spring_chain,
    "solar_system": solar_system,
    "front": propagating_front,
}


def make_problem(name: str, **params) -> ProblemSpec:
    """Construct a registered problem; string parameters are converted to the default's type."""
    key = name.replace("-", "_")
    try:
        ctor = PROBLEMS[key]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; available: {', '.join(sorted(PROBLEMS))}") from None
    sig = inspect.signature(ctor)
    kwargs = {}
    for k, v in params.items():
        if k not in sig.parameters:
            raise ValueError(f"problem {key} has no parameter {k!r}")
        kwargs[k] = _convert(v, sig.parameters[k].default) if isinstance(v, str) else v
    return ctor(**kwargs)


def _convert(text: str, default):
    if isinstance(default, bool):
        return text.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple) or default is None:
        if "," in text:
            parts = [p.strip() for p in text.split(",") if p.strip()]
            try:
                return tuple(float(p) for p in parts)
            except ValueError:
                return tuple(parts)
        return text
    return text
