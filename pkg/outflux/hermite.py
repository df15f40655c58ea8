"""Bicubic Hermite stream-function space on a truncation mesh.

Every node carries (psi, psi_x, psi_y, psi_xy). Velocities v = (psi_y, -psi_x)
are H^1-conforming and exactly divergence free. Boundary nodes are clamped,
which gives v = 0 on the whole boundary of the truncation, and psi is odd in
x2, so v1 is even and v2 is odd. The free coefficients live on the upper
half; ``prolongation`` maps them to the full nodal vector with mirror signs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import numpy.typing as npt
from scipy import sparse

from outflux.fields import gauss_rule
from outflux.geometry import TruncationLadder
from outflux.mesh import TruncationMesh

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

DERIVATIVES = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
MIRROR_SIGNS = np.array([-1.0, -1.0, 1.0, 1.0])

_LOCAL = np.arange(16)
_CORNER = _LOCAL // 4
_DOF = _LOCAL % 4
_PX = _DOF % 2
_PY = _DOF // 2
_XI = 2 * (_CORNER % 2) + _PX
_YI = 2 * (_CORNER // 2) + _PY


def _hermite_1d(s: FloatArray, order: int) -> FloatArray:
    """Cubic Hermite functions (value 0, slope 0, value 1, slope 1) on [0, 1]."""
    s2 = s * s
    if order == 0:
        cols = [1 - 3 * s2 + 2 * s2 * s, s - 2 * s2 + s2 * s, 3 * s2 - 2 * s2 * s, s2 * s - s2]
    elif order == 1:
        cols = [6 * s2 - 6 * s, 1 - 4 * s + 3 * s2, 6 * s - 6 * s2, 3 * s2 - 2 * s]
    elif order == 2:
        cols = [12 * s - 6, 6 * s - 4, 6 - 12 * s, 6 * s - 2]
    else:
        raise ValueError(f"derivative order {order} is not supported")
    return np.stack(cols, axis=-1)


def hermite_basis(
    s: FloatArray, t: FloatArray, hx: FloatArray, hy: FloatArray, i: int, j: int
) -> FloatArray:
    """d^i/dx^i d^j/dy^j of the 16 local basis functions at local coordinates (s, t)."""
    X = _hermite_1d(s, i)[..., _XI]
    Y = _hermite_1d(t, j)[..., _YI]
    scale = hx[..., None] ** (_PX - i) * hy[..., None] ** (_PY - j)
    return np.asarray(X * Y * scale)


def _prolongation(mesh: TruncationMesh) -> sparse.csr_matrix:
    y = mesh.nodes[:, 1]
    free = ~mesh.boundary_node
    rows: list[IntArray] = []
    cols: list[IntArray] = []
    vals: list[FloatArray] = []
    count = 0
    upper = np.flatnonzero(free & (y > 0.0))
    n_up = upper.size
    red = count + 4 * np.arange(n_up)[:, None] + np.arange(4)[None, :]
    rows.append((4 * upper[:, None] + np.arange(4)).ravel())
    cols.append(red.ravel())
    vals.append(np.ones(red.size))
    lower = mesh.mirror[upper]
    rows.append((4 * lower[:, None] + np.arange(4)).ravel())
    cols.append(red.ravel())
    vals.append(np.tile(MIRROR_SIGNS, n_up))
    count += 4 * n_up
    axis = np.flatnonzero(free & (y == 0.0))
    red_axis = count + 2 * np.arange(axis.size)[:, None] + np.arange(2)[None, :]
    rows.append((4 * axis[:, None] + np.array([2, 3])).ravel())
    cols.append(red_axis.ravel())
    vals.append(np.ones(red_axis.size))
    count += 2 * axis.size
    P = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(4 * mesh.n_nodes, count),
    )
    return P.tocsr()


class HermiteSpace:
    """Symmetric zero-trace stream-function space with its quadrature tables."""

    def __init__(self, mesh: TruncationMesh, order: int = 4) -> None:
        self.mesh = mesh
        self.order = order
        self.n_full = 4 * mesh.n_nodes
        self.cell_dofs = (4 * mesh.cells[:, :, None] + np.arange(4)[None, None, :]).reshape(-1, 16)
        self.hx, self.hy = mesh.cell_sizes()
        self.P = _prolongation(mesh)
        self.n_free = int(self.P.shape[1])

        nodes, weights = gauss_rule(order)
        S, T = np.meshgrid(nodes, nodes, indexing="ij")
        S, T = S.ravel(), T.ravel()
        W = np.outer(weights, weights).ravel()
        i, j = mesh.cell_ij[:, 0], mesh.cell_ij[:, 1]
        x0, y0 = mesh.xs[i], mesh.ys[j]
        self.points = np.stack(
            [
                x0[:, None] + self.hx[:, None] * S[None, :],
                y0[:, None] + self.hy[:, None] * T[None, :],
            ],
            axis=-1,
        )
        self.weights = (self.hx * self.hy)[:, None] * W[None, :]
        hx = np.broadcast_to(self.hx[:, None], self.weights.shape)
        hy = np.broadcast_to(self.hy[:, None], self.weights.shape)
        ss = np.broadcast_to(S[None, :], self.weights.shape)
        tt = np.broadcast_to(T[None, :], self.weights.shape)
        D = {(a, b): hermite_basis(ss, tt, hx, hy, a, b) for a, b in DERIVATIVES}
        self.velocity = np.stack([D[0, 1], -D[1, 0]], axis=-1)
        self.gradient = np.stack(
            [np.stack([D[1, 1], D[0, 2]], axis=-1), np.stack([-D[2, 0], -D[1, 1]], axis=-1)],
            axis=-2,
        )
        self._stiffness: Optional[sparse.csr_matrix] = None
        logger.debug(
            f"Hermite space on Omega_{mesh.level}: {self.n_free} free of {self.n_full} coefficients"
        )

    @property
    def n_cells(self) -> int:
        return self.mesh.n_cells

    @property
    def quadrature_points(self) -> FloatArray:
        return self.points.reshape(-1, 2)

    def reduce_matrix(self, local: FloatArray) -> sparse.csr_matrix:
        """Assemble (cells, 16, 16) element matrices and restrict to the free space."""
        rows = np.broadcast_to(self.cell_dofs[:, :, None], local.shape).ravel()
        cols = np.broadcast_to(self.cell_dofs[:, None, :], local.shape).ravel()
        full = sparse.coo_matrix((local.ravel(), (rows, cols)), shape=(self.n_full, self.n_full))
        return (self.P.T @ full.tocsr() @ self.P).tocsr()

    def reduce_vector(self, local: FloatArray) -> FloatArray:
        """Assemble (cells, 16) element vectors and restrict to the free space."""
        full = np.bincount(self.cell_dofs.ravel(), weights=local.ravel(), minlength=self.n_full)
        return np.asarray(self.P.T @ full)

    def stiffness(self) -> sparse.csr_matrix:
        """Dirichlet form (grad v, grad eta) on the free space."""
        if self._stiffness is None:
            local = np.einsum(
                "cq,cqmij,cqnij->cmn", self.weights, self.gradient, self.gradient, optimize=True
            )
            self._stiffness = self.reduce_matrix(local)
        return self._stiffness

    def load(self, values: FloatArray) -> FloatArray:
        """int F . eta for a vector field sampled at the quadrature points."""
        local = np.einsum("cq,cqmi,cqi->cm", self.weights, self.velocity, values, optimize=True)
        return self.reduce_vector(local)

    def gradient_load(self, jac: FloatArray) -> FloatArray:
        """int grad G : grad eta for a Jacobian sampled at the quadrature points."""
        local = np.einsum("cq,cqmij,cqij->cm", self.weights, self.gradient, jac, optimize=True)
        return self.reduce_vector(local)

    def convection(self, wind: FloatArray) -> sparse.csr_matrix:
        """Skew part of int ((w . grad) v) . eta, so that c^T C c = 0 exactly."""
        local = np.einsum(
            "cq,cqmi,cqnij,cqj->cmn",
            self.weights,
            self.velocity,
            self.gradient,
            wind,
            optimize=True,
        )
        return self.reduce_matrix(0.5 * (local - local.transpose(0, 2, 1)))

    def reaction(self, jac: FloatArray) -> sparse.csr_matrix:
        """int ((v . grad) G) . eta for a Jacobian of G sampled at the quadrature points."""
        local = np.einsum(
            "cq,cqmi,cqij,cqnj->cmn", self.weights, self.velocity, jac, self.velocity, optimize=True
        )
        return self.reduce_matrix(local)

    def local_coefficients(self, coeffs: FloatArray) -> FloatArray:
        return coeffs[self.cell_dofs]


@dataclass
class DiscreteField:
    """Velocity v = curl psi with psi in a HermiteSpace, extended by zero."""

    space: HermiteSpace
    coeffs: FloatArray

    @classmethod
    def zeros(cls, space: HermiteSpace) -> DiscreteField:
        return cls(space, np.zeros(space.n_full))

    @classmethod
    def from_free(cls, space: HermiteSpace, free: FloatArray) -> DiscreteField:
        return cls(space, np.asarray(space.P @ free))

    @property
    def mesh(self) -> TruncationMesh:
        return self.space.mesh

    @property
    def level(self) -> int:
        return self.mesh.level

    def free_coefficients(self) -> FloatArray:
        """Free coefficients of a mirror-symmetric nodal vector."""
        P = self.space.P
        scale = np.asarray(P.multiply(P).sum(axis=0)).ravel()
        return np.asarray(P.T @ self.coeffs) / scale

    def _derivative(self, points: FloatArray, i: int, j: int) -> FloatArray:
        cell, s, t = self.mesh.locate(points)
        out = np.zeros(points.shape[0])
        inside = cell >= 0
        if not inside.any():
            return out
        c = cell[inside]
        B = hermite_basis(s[inside], t[inside], self.space.hx[c], self.space.hy[c], i, j)
        out[inside] = np.einsum("nm,nm->n", B, self.coeffs[self.space.cell_dofs[c]])
        return out

    def stream(self, points: FloatArray) -> FloatArray:
        return self._derivative(points, 0, 0)

    def evaluate(self, points: FloatArray) -> FloatArray:
        return np.stack([self._derivative(points, 0, 1), -self._derivative(points, 1, 0)], axis=1)

    def jacobian(self, points: FloatArray) -> FloatArray:
        J = np.empty((points.shape[0], 2, 2))
        J[:, 0, 0] = self._derivative(points, 1, 1)
        J[:, 0, 1] = self._derivative(points, 0, 2)
        J[:, 1, 0] = -self._derivative(points, 2, 0)
        J[:, 1, 1] = -J[:, 0, 0]
        return J

    def quadrature_values(self) -> tuple[FloatArray, FloatArray]:
        """Velocity (cells, q, 2) and gradient (cells, q, 2, 2) at the quadrature points."""
        local = self.space.local_coefficients(self.coeffs)
        vel = np.einsum("cqmi,cm->cqi", self.space.velocity, local, optimize=True)
        grad = np.einsum("cqmij,cm->cqij", self.space.gradient, local, optimize=True)
        return vel, grad

    def dirichlet_by_cell(self) -> FloatArray:
        _, grad = self.quadrature_values()
        return np.asarray(np.einsum("cq,cqij,cqij->c", self.space.weights, grad, grad))

    def _cells_between(
        self, x_min: Optional[float], x_max: Optional[float]
    ) -> npt.NDArray[np.bool_]:
        xc = self.mesh.cell_centers()[:, 0]
        mask = np.ones(xc.size, dtype=bool)
        if x_min is not None:
            mask &= xc > x_min
        if x_max is not None:
            mask &= xc < x_max
        return mask

    def dirichlet(self, x_min: Optional[float] = None, x_max: Optional[float] = None) -> float:
        """int |grad v|^2 over the cells with centers in (x_min, x_max)."""
        return float(self.dirichlet_by_cell()[self._cells_between(x_min, x_max)].sum())

    def l2_norm(self, x_min: Optional[float] = None, x_max: Optional[float] = None) -> float:
        vel, _ = self.quadrature_values()
        per_cell = np.einsum("cq,cqi,cqi->c", self.space.weights, vel, vel)
        return float(np.sqrt(per_cell[self._cells_between(x_min, x_max)].sum()))

    def divergence_norm(self) -> float:
        """Discrete L2 norm of div v at the quadrature points."""
        _, grad = self.quadrature_values()
        div = grad[..., 0, 0] + grad[..., 1, 1]
        return float(np.sqrt(np.sum(self.space.weights * div * div)))

    def dirichlet_profile(self, ladder: TruncationLadder) -> FloatArray:
        """y_k = int over Omega_k of |grad v|^2 for k = 0..level."""
        per_cell = self.dirichlet_by_cell()
        xc = self.mesh.cell_centers()[:, 0]
        return np.array([per_cell[xc < ladder.R(k)].sum() for k in range(self.level + 1)])

    def l2_difference(self, other: DiscreteField, x_max: float) -> float:
        """L2 norm of self - other over the cells of self left of x_max."""
        mask = self._cells_between(None, x_max)
        pts = self.space.points[mask].reshape(-1, 2)
        w = self.space.weights[mask].ravel()
        diff = self.evaluate(pts) - other.evaluate(pts)
        return float(np.sqrt(w @ np.sum(diff * diff, axis=1)))

    def prolong(self, space: HermiteSpace) -> DiscreteField:
        """Zero extension onto a nested finer-level space with the same grid spacing."""
        lookup = {
            (round(float(x), 9), round(float(y), 9)): n
            for n, (x, y) in enumerate(space.mesh.nodes)
        }
        coeffs = np.zeros(space.n_full)
        for n, (x, y) in enumerate(self.mesh.nodes):
            target = lookup.get((round(float(x), 9), round(float(y), 9)))
            if target is not None:
                coeffs[4 * target : 4 * target + 4] = self.coeffs[4 * n : 4 * n + 4]
        return DiscreteField(space, coeffs)
