"""Backward dual problem, stability factors and weights.

The dual solution phi solves phi' = -J(U(t), t)^T phi - g(t) backwards from
phi(T) = phi_T, with J the Jacobian along the computed trajectory U.  It is
computed in reversed time tau = T - t with a uniform-step Galerkin method;
since the problem is linear every step is one block linear solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .io import write_csv
from .tableau import DG, get_tableau

__all__ = [
    "DegenerateDualData",
    "DualData",
    "DualSolution",
    "StabilityReport",
    "computational_error_model",
    "dual_data_presets",
    "fundamental_matrix",
    "solve_dual",
    "stability_factor_bound",
    "stability_growth",
    "stability_weights",
    "write_stability_growth",
    "write_weights",
]

# highest derivative of the dual used for weights and bounds
MAX_DERIVATIVE = 2
MIN_SAMPLES = 1001


class DegenerateDualData(ValueError):
    """Dual data that vanish identically."""


@dataclass
class DualData:
    """Terminal value phi_T and forcing g(t) (None for g = 0)."""

    phi_T: np.ndarray
    forcing: Optional[Callable[[float], np.ndarray]] = None

    def __post_init__(self):
        self.phi_T = np.array(self.phi_T, dtype=float).ravel()
        if self.forcing is None and not np.any(self.phi_T):
            raise DegenerateDualData("dual data vanish: phi_T = 0 and g = 0")

    def g(self, t: float) -> np.ndarray:
        if self.forcing is None:
            return np.zeros_like(self.phi_T)
        return np.asarray(self.forcing(t), dtype=float)


def dual_data_presets(kind: str, N: int, n: Optional[int] = None, approx_error=None) -> DualData:
    """Standard dual data.

    ``endpoint-component``: phi_T = e_n (n counted from 1), g = 0.
    ``endpoint-l2``: phi_T = e(T) / |e(T)| for an approximate error vector.
    ``average-component``: phi_T = 0, g = e_n.
    ``endpoint-uniform``: phi_T = (1, ..., 1) / sqrt(N), g = 0.
    """
    if kind in ("endpoint-component", "average-component"):
        if n is None or not 1 <= n <= N:
            raise ValueError(f"{kind} needs a component index in 1..{N}")
        e = np.zeros(N)
        e[n - 1] = 1.0
        if kind == "endpoint-component":
            return DualData(e)
        return DualData(np.zeros(N), lambda t, e=e: e)
    if kind == "endpoint-l2":
        err = np.asarray(approx_error, dtype=float).ravel()
        if err.size != N:
            raise ValueError(f"approximate error must have length {N}")
        norm = np.linalg.norm(err)
        if norm == 0.0:
            raise DegenerateDualData("approximate error vanishes at the final time")
        return DualData(err / norm)
    if kind == "endpoint-uniform":
        return DualData(np.ones(N) / math.sqrt(N))
    raise ValueError(f"unknown dual data preset {kind!r}")


class DualSolution:
    """Piecewise polynomial dual, stored in reversed time, evaluated in forward time.

    ``dofs`` has shape (M, N, R, q + 1) for R simultaneous right-hand sides.
    """

    def __init__(self, T, tau_grid, phi_T, dofs, tab, jac=None):
        self.T = float(T)
        self.tau = np.asarray(tau_grid, dtype=float)
        self.phi_T = np.asarray(phi_T, dtype=float)
        self.dofs = dofs
        self.tab = tab
        self._jac = jac

    @property
    def N(self) -> int:
        return self.dofs.shape[1]

    @property
    def k(self) -> float:
        return float(self.tau[1] - self.tau[0])

    def values(self, ts) -> np.ndarray:
        """phi at forward times ``ts``: shape (len(ts), N) or (len(ts), N, R)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        tau = self.T - ts
        M = self.tau.size - 1
        j = np.clip(np.searchsorted(self.tau[1:], tau, side="left"), 0, M - 1)
        s = (tau - self.tau[j]) / (self.tau[j + 1] - self.tau[j])
        B = self.tab.basis(s)
        out = np.einsum("tn,tirn->tir", B, self.dofs[j])
        start = tau <= 0.0
        if np.any(start):
            out[start] = self.phi_T if self.phi_T.ndim == 2 else self.phi_T[:, None]
        if self.phi_T.ndim == 1:
            return out[:, :, 0]
        return out

    def __call__(self, t: float) -> np.ndarray:
        return self.values([t])[0]


def _check_covers(primal, T: float) -> None:
    fr = min(primal.frontiers)
    if fr < T * (1.0 - 1e-12):
        raise ValueError(f"primal solution ends at {fr!r}, before the dual terminal time {T!r}")


def _default_dual_step(primal, T: float) -> float:
    return min(0.01 * T, 10.0 * primal.min_step())


def _primal_states(primal, ts: np.ndarray) -> np.ndarray:
    return np.asarray(primal.values(ts), dtype=float).reshape(len(ts), -1)


def _solve_linear_backward(primal, sys, phi_T, forcing, T, k_dual, family, q):
    tab = get_tableau(family, q)
    M = max(1, math.ceil(T / k_dual - 1e-9))
    tau = np.linspace(0.0, T, M + 1)
    N = sys.N
    X0 = np.array(phi_T, dtype=float).reshape(N, -1)
    R = X0.shape[1]
    W = tab.weights
    ff = tab.first_free
    nfree, nd = W.shape
    # forward times of all quadrature nodes, step by step
    tnodes = T - (tau[:-1, None] + tab.nodes[None, :] * np.diff(tau)[:, None])
    tnodes[:, -1] = T - tau[1:]
    U = _primal_states(primal, np.clip(tnodes.ravel(), 0.0, T)).reshape(M, nd, N)
    dofs = np.empty((M, N, R, nd))
    eye = np.eye(nfree * N)
    for j in range(M):
        h = tau[j + 1] - tau[j]
        A = np.stack([sys.jacobian(U[j, n], tnodes[j, n]).T for n in range(nd)])
        rhs = np.repeat(X0[None], nfree, axis=0)  # (m, N, R)
        if forcing is not None:
            G = np.stack([np.asarray(forcing(tnodes[j, n]), dtype=float) for n in range(nd)])  # (n, N)
            rhs = rhs + h * np.einsum("mn,na->ma", W, G)[:, :, None]
        if ff:
            rhs = rhs + h * np.einsum("m,ab,br->mar", W[:, 0], A[0], X0)
        blocks = h * W[:, ff:, None, None] * A[None, ff:]  # (m, n, a, b)
        Mat = eye - blocks.transpose(0, 2, 1, 3).reshape(nfree * N, nfree * N)
        sol = np.linalg.solve(Mat, rhs.reshape(nfree * N, R)).reshape(nfree, N, R)
        X = np.empty((N, R, nd))
        if ff:
            X[:, :, 0] = X0
        X[:, :, ff:] = sol.transpose(1, 2, 0)
        dofs[j] = X
        X0 = X[:, :, -1]
    return tau, dofs, tab


def solve_dual(
    primal,
    sys,
    data: DualData,
    k_dual: Optional[float] = None,
    T: Optional[float] = None,
    family: str = DG,
    q: int = 1,
) -> DualSolution:
    """Solve the linearized dual problem backwards along ``primal``.

    ``T`` defaults to the primal final time and may be set lower to certify
    a shorter horizon.  ``k_dual`` defaults to min(0.01 T, 10 * smallest
    primal step).
    """
    T = primal.T if T is None else float(T)
    _check_covers(primal, T)
    if data.phi_T.size != sys.N:
        raise ValueError("dual data dimension does not match the system")
    k_dual = _default_dual_step(primal, T) if k_dual is None else float(k_dual)
    if not k_dual > 0:
        raise ValueError("dual step must be positive")
    forcing = data.forcing
    tau, dofs, tab = _solve_linear_backward(primal, sys, data.phi_T, forcing, T, k_dual, family, q)
    out = DualSolution(T, tau, data.phi_T, dofs, tab)
    out.primal = primal
    out.sys = sys
    out.data = data
    return out


def fundamental_matrix(
    primal,
    sys,
    k_dual: Optional[float] = None,
    T: Optional[float] = None,
    n_samples: int = MIN_SAMPLES,
    family: str = DG,
    q: int = 1,
):
    """Dual fundamental solution sampled on a uniform grid.

    Returns ``(ts, Phi)`` with ``Phi[s]`` the N x N matrix whose column j is
    the dual solution with phi_T = e_j and g = 0, at time ``ts[s]``.
    """
    T = primal.T if T is None else float(T)
    _check_covers(primal, T)
    k_dual = _default_dual_step(primal, T) if k_dual is None else float(k_dual)
    N = sys.N
    tau, dofs, tab = _solve_linear_backward(primal, sys, np.eye(N), None, T, k_dual, family, q)
    dual = DualSolution(T, tau, np.eye(N), dofs, tab)
    ts = np.linspace(0.0, T, n_samples)
    return ts, dual.values(ts)


def _derivatives(ts: np.ndarray, values: np.ndarray, order: int) -> np.ndarray:
    out = values
    for _ in range(order):
        out = np.gradient(out, ts, axis=0, edge_order=2)
    return out


def stability_factor_bound(ts, Phi, q: int) -> float:
    """Integral over time of the 2-norm of the q-th derivative of Phi."""
    if q not in (0, 1, 2):
        raise ValueError("q must be 0, 1 or 2")
    ts = np.asarray(ts, dtype=float)
    Phi = np.asarray(Phi, dtype=float)
    if ts.size < 2 * q + 3:
        raise ValueError(f"need at least {2 * q + 3} samples for derivative order {q}")
    D = _derivatives(ts, Phi, q)
    norms = np.linalg.norm(D, ord=2, axis=(1, 2))
    return float(trapezoid(norms, ts))


@dataclass
class StabilityReport:
    """Dual trajectory plus everything derived from it."""

    dual: DualSolution
    S: list[float]
    weights: dict
    S_global: dict = field(default_factory=dict)
    S_bar: dict = field(default_factory=dict)
    E_C: float = float("nan")
    E: float = float("nan")


def _dual_derivative_samples(dual: DualSolution, ts: np.ndarray):
    """phi and phi' on ``ts``; phi' from the dual equation itself."""
    phi = dual.values(ts)
    U = _primal_states(dual.primal, ts)
    dphi = np.empty_like(phi)
    for s, t in enumerate(ts):
        dphi[s] = -dual.sys.jacobian(U[s], t).T @ phi[s] - dual.data.g(t)
    return phi, dphi


def stability_weights(dual: DualSolution, primal, n_samples: Optional[int] = None) -> StabilityReport:
    """Per-element weights s_ij and per-component factors S_i.

    With C_i(t) the running integral of |phi_i^(p)|, the weight of element
    (t0, t1] is (C_i(t1) - C_i(t0)) / k and S_i = C_i(T), so S_i is exactly
    the sum of k * s_ij.  The first derivative comes from the dual equation,
    the second from differencing it; higher orders are capped at two.
    Interpolation constants are taken as 1.
    """
    T = dual.T
    if n_samples is None:
        n_samples = max(2 * MIN_SAMPLES - 1, 8 * (dual.tau.size - 1) + 1)
    ts = np.linspace(0.0, T, n_samples)
    phi, dphi = _dual_derivative_samples(dual, ts)
    derivs = [phi, dphi, np.gradient(dphi, ts, axis=0, edge_order=2)]
    cum = [cumulative_trapezoid(np.abs(d), ts, axis=0, initial=0.0) for d in derivs]
    weights = {}
    S = []
    for i in range(primal.N):
        els = [e for e in primal.elements(i) if e.t0 < T]
        if not els:
            S.append(0.0)
            continue
        orders = np.array([min(e.tab.order, MAX_DERIVATIVE) for e in els])
        t0 = np.array([e.t0 for e in els])
        t1 = np.minimum([e.t1 for e in els], T)
        w = np.empty(len(els))
        for p in np.unique(orders):
            sel = orders == p
            C = cum[p][:, i]
            w[sel] = (np.interp(t1[sel], ts, C) - np.interp(t0[sel], ts, C)) / (t1[sel] - t0[sel])
        for e, wj in zip(els, w):
            weights[i, e.j] = float(max(wj, 0.0))
        S.append(float(cum[orders[-1]][-1, i]))
    S_global = {d: float(trapezoid(np.linalg.norm(derivs[d], axis=1), ts)) for d in range(3)}
    report = StabilityReport(dual, S, weights, S_global)
    report.E_C = computational_error_model(S_global[0], primal.min_step())
    return report


def computational_error_model(S0: float, k_min: float, T: Optional[float] = None, preset: Optional[str] = None) -> float:
    """Accumulated round-off model: S0 * 1e-16 / k_min.

    With ``preset="lorenz"`` the stability factor is replaced by the growth
    law 10^(T/3), giving 10^(T/3 - 16) / k_min.
    """
    if not k_min > 0:
        raise ValueError("k_min must be positive")
    if preset is None:
        if not S0 > 0:
            raise ValueError("S0 must be positive")
        return S0 * 1e-16 / k_min
    if preset == "lorenz":
        if T is None:
            raise ValueError("the lorenz preset needs T")
        return 10.0 ** (T / 3.0 - 16.0) / k_min
    raise ValueError(f"unknown preset {preset!r}")


def stability_growth(primal, sys, T_samples: Sequence[float], k_dual: Optional[float] = None,
                     n_samples: int = MIN_SAMPLES) -> list[tuple]:
    """(T, S0_bar, S1_bar, S2_bar) for each horizon in ``T_samples``."""
    rows = []
    for T in T_samples:
        ts, Phi = fundamental_matrix(primal, sys, k_dual=k_dual, T=T, n_samples=n_samples)
        rows.append((float(T),) + tuple(stability_factor_bound(ts, Phi, q) for q in range(3)))
    return rows


def write_stability_growth(path, rows) -> None:
    write_csv(path, ["T_sample", "S0_bar", "S1_bar", "S2_bar"], rows)


def write_weights(path, report: StabilityReport) -> None:
    rows = [(i, j, s) for (i, j), s in sorted(report.weights.items())]
    write_csv(path, ["component", "j", "s_ij"], rows)
