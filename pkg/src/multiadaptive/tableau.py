"""Quadrature nodes, Galerkin weight matrices and nodal basis evaluation.

Every element of the multi-adaptive solution is a polynomial of degree ``q``
on its local interval, represented by its values at ``q + 1`` nodes on the
reference interval ``[0, 1]``.  For the continuous family (cG) the nodes are
the Lobatto points (both end-points included); for the discontinuous family
(dG) they are the right Radau points (``s = 1`` included).

The element equations take the fixed point form

    xi_m = xi_0 + k * sum_n W[m, n] * f(U(t_n), t_n)

where ``xi_0`` is the left end-point value (cG) or the incoming value from
the previous element (dG), and ``t_n`` are the quadrature times.  ``W`` is
generated here by imposing the Galerkin orthogonality conditions with the
node quadrature.
"""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial import legendre as leg

__all__ = [
    "CG",
    "DG",
    "MAX_ORDER",
    "MethodTableau",
    "UnsupportedOrderError",
    "evaluate_basis",
    "get_tableau",
    "lobatto_nodes",
    "make_tableau",
    "radau_right_nodes",
    "write_tableau_csv",
]

CG = "cG"
DG = "dG"
MAX_ORDER = 15

_NEWTON_TOL = 1e-15
_NEWTON_MAXITER = 100


class UnsupportedOrderError(ValueError):
    """Raised for a (family, order) pair without a tableau."""


def _newton_roots(poly: leg.Legendre, guess: np.ndarray) -> np.ndarray:
    dpoly = poly.deriv()
    x = np.array(guess, dtype=float)
    for _ in range(_NEWTON_MAXITER):
        dx = poly(x) / dpoly(x)
        x -= dx
        if np.all(np.abs(dx) <= _NEWTON_TOL):
            break
    else:
        # one last look: roots stagnating at rounding level are fine
        if np.max(np.abs(poly(x) / dpoly(x))) > 1e-13:
            raise RuntimeError("Newton iteration for quadrature nodes did not converge")
    x.sort()
    if x.size > 1 and np.min(np.diff(x)) < 1e-8:
        raise RuntimeError("Newton iteration collapsed onto a repeated root")
    return x


def lobatto_nodes(npts: int) -> np.ndarray:
    """Gauss-Lobatto nodes on [-1, 1]: the end-points plus the roots of P'_{n-1}."""
    if npts < 2:
        raise UnsupportedOrderError("Lobatto rule needs at least two points")
    q = npts - 1
    if q == 1:
        return np.array([-1.0, 1.0])
    dp = leg.Legendre.basis(q).deriv()
    guess = -np.cos(np.pi * np.arange(1, q) / q)
    interior = _newton_roots(dp, guess)
    return np.concatenate([[-1.0], interior, [1.0]])


def radau_right_nodes(npts: int) -> np.ndarray:
    """Right Radau nodes on [-1, 1] (x = 1 included): roots of P_n - P_{n-1}."""
    if npts < 1:
        raise UnsupportedOrderError("Radau rule needs at least one point")
    if npts == 1:
        return np.array([1.0])
    g = leg.Legendre.basis(npts) - leg.Legendre.basis(npts - 1)
    # strip the known root at x = 1
    g = leg.Legendre(leg.legdiv(g.coef, leg.poly2leg([-1.0, 1.0]))[0])
    guess = np.cos(2.0 * np.pi * np.arange(1, npts) / (2 * npts - 1))
    interior = _newton_roots(g, guess)
    return np.concatenate([interior, [1.0]])


def _quadrature_weights(x: np.ndarray) -> np.ndarray:
    # sum_n w_n P_a(x_n) = int_{-1}^{1} P_a = 2 delta_a0
    npts = x.size
    V = leg.legvander(x, npts - 1)
    rhs = np.zeros(npts)
    rhs[0] = 2.0
    return np.linalg.solve(V.T, rhs)


def _barycentric_weights(s: np.ndarray) -> np.ndarray:
    diff = s[:, None] - s[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / np.prod(diff, axis=1)


def _galerkin_weights(family: str, x: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Weight matrix of the element equations (nodes ``x`` on [-1, 1])."""
    npts = x.size
    q = npts - 1
    # Lagrange basis in Legendre coefficients: column j holds l_j
    lag = np.linalg.inv(leg.legvander(x, q))
    gx, gw = leg.leggauss(q + 2)
    P = leg.legvander(gx, q)  # P[g, b] = P_b(gx)
    dlag = np.stack([leg.legval(gx, leg.legder(lag[:, j])) for j in range(npts)], axis=1)
    # int_{-1}^{1} l_n'(x) P_b(x) dx; the 2 from d/ds cancels the 1/2 from ds
    C = P.T @ (gw[:, None] * dlag)
    G = leg.legvander(x, q).T * omega[None, :]  # omega_n P_b(x_n)
    if family == CG:
        C = C[:q, 1:]
        G = G[:q, :]
    else:
        lag_left = leg.legval(-1.0, lag)
        P_left = leg.legval(-1.0, np.eye(npts))
        C = C + np.outer(P_left, lag_left)
    return np.linalg.solve(C, G)


@dataclass(frozen=True, eq=False)
class MethodTableau:
    """Precomputed data for one (family, order) pair.

    ``nodes`` and ``quad_weights`` live on [0, 1].  ``weights`` has shape
    ``(q, q+1)`` for cG (rows m = 1..q) and ``(q+1, q+1)`` for dG.
    """

    family: str
    q: int
    nodes: np.ndarray
    quad_weights: np.ndarray
    weights: np.ndarray
    bary: np.ndarray
    # plain-float copies for the element kernels
    nodes_list: list = field(repr=False)
    weights_list: list = field(repr=False)
    bary_list: list = field(repr=False)
    quad_list: list = field(repr=False)

    @property
    def ndofs(self) -> int:
        return self.q + 1

    @property
    def nfree(self) -> int:
        """Number of unknowns per element (q for cG, q + 1 for dG)."""
        return self.q if self.family == CG else self.q + 1

    @property
    def first_free(self) -> int:
        return 1 if self.family == CG else 0

    @property
    def order(self) -> int:
        """Exponent p in the step law: q for cG, q + 1 for dG."""
        return self.q if self.family == CG else self.q + 1

    def evaluate(self, dofs: Sequence[float], s: float) -> float:
        """Value at ``s`` of the interpolant through (node, dof) pairs."""
        nodes = self.nodes_list
        bary = self.bary_list
        if len(nodes) == 1:
            return dofs[0]
        if len(nodes) == 2:
            # linear: nodes (0, 1) for cG(1), (1/3, 1) for dG(1)
            s0 = nodes[0]
            return dofs[0] + (dofs[1] - dofs[0]) * (s - s0) / (1.0 - s0)
        ell = 1.0
        acc = 0.0
        for xj, wj, yj in zip(nodes, bary, dofs):
            d = s - xj
            if d == 0.0:
                return yj
            ell *= d
            acc += wj * yj / d
        return ell * acc

    def derivative(self, dofs: Sequence[float], s: float) -> float:
        """d/ds of the interpolant at ``s`` (reference coordinate)."""
        return float(self.basis_derivatives(np.array([s]))[0] @ np.asarray(dofs, dtype=float))

    def basis(self, s: np.ndarray) -> np.ndarray:
        """Nodal basis values, shape ``(len(s), q+1)``; valid outside [0, 1]."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        diff = s[:, None] - self.nodes[None, :]
        exact = diff == 0.0
        hit = exact.any(axis=1)
        diff[exact] = 1.0
        ell = np.prod(diff, axis=1)
        out = ell[:, None] * self.bary[None, :] / diff
        if hit.any():
            out[hit] = exact[hit].astype(float)
        return out

    def basis_derivatives(self, s: np.ndarray) -> np.ndarray:
        """d/ds of the nodal basis, shape ``(len(s), q+1)``."""
        # the derivative has degree q-1, so interpolating its nodal values is exact
        return self.basis(s) @ self.diff_matrix

    @functools.cached_property
    def diff_matrix(self) -> np.ndarray:
        """D[a, j] = l_j'(s_a)."""
        s, w = self.nodes, self.bary
        n = s.size
        D = np.zeros((n, n))
        for a in range(n):
            for j in range(n):
                if a != j:
                    D[a, j] = (w[j] / w[a]) / (s[a] - s[j])
            D[a, a] = -D[a].sum()
        return D

    @functools.cached_property
    def diff_list(self) -> list:
        return self.diff_matrix.tolist()

    @functools.cached_property
    def left_derivative_list(self) -> list:
        """l_j'(0), the basis derivatives at the left end-point."""
        return self.basis_derivatives(np.array([0.0]))[0].tolist()


def _build(family: str, q: int) -> MethodTableau:
    if family not in (CG, DG):
        raise UnsupportedOrderError(f"unknown method family {family!r}")
    if not isinstance(q, (int, np.integer)) or q > MAX_ORDER or q < 0 or (family == CG and q < 1):
        raise UnsupportedOrderError(f"unsupported order {q!r} for {family}")
    q = int(q)
    x = lobatto_nodes(q + 1) if family == CG else radau_right_nodes(q + 1)
    omega = _quadrature_weights(x) / 2.0
    W = _galerkin_weights(family, x, omega)
    s = (x + 1.0) / 2.0
    # pin the end-points exactly
    s[-1] = 1.0
    if family == CG:
        s[0] = 0.0
    bary = _barycentric_weights(s)
    return MethodTableau(
        family=family,
        q=q,
        nodes=s,
        quad_weights=omega,
        weights=W,
        bary=bary,
        nodes_list=s.tolist(),
        weights_list=W.tolist(),
        bary_list=bary.tolist(),
        quad_list=omega.tolist(),
    )


def make_tableau(family: str, q: int) -> MethodTableau:
    """Build a fresh tableau for ``family`` in {"cG", "dG"} and order ``q``."""
    return _build(family, q)


@functools.lru_cache(maxsize=None)
def get_tableau(family: str, q: int) -> MethodTableau:
    """Cached tableau; solvers share one immutable instance per (family, q)."""
    return _build(family, q)


def evaluate_basis(tab: MethodTableau, dofs: Sequence[float], s: float) -> float:
    """Evaluate (or extrapolate) the element polynomial with ``dofs`` at ``s``."""
    if len(dofs) != tab.ndofs:
        raise ValueError(f"expected {tab.ndofs} dofs for {tab.family}({tab.q}), got {len(dofs)}")
    return tab.evaluate([float(d) for d in dofs], float(s))


def write_tableau_csv(path, tableaux: Sequence[MethodTableau]) -> None:
    """Debug dump. Rows with m = -1 hold the nodes s_n; other rows are W[m, n]."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["family", "q", "m", "n", "value"])
        for tab in tableaux:
            for n, s in enumerate(tab.nodes):
                w.writerow([tab.family, tab.q, -1, n, repr(float(s))])
            for m in range(tab.weights.shape[0]):
                for n in range(tab.weights.shape[1]):
                    w.writerow([tab.family, tab.q, m + tab.first_free, n, repr(float(tab.weights[m, n]))])
