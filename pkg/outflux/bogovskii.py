"""Divergence equation div u = f with zero trace on a ladder cell omega_k.

The cell is mapped onto a reference configuration of unit length by

    F(x) = scale * (x1 - R_k, x2),  scale = 2 L / g(R_k),

whose upper wall h_k(y1) = scale * g(y1 / scale + R_k) starts at 2L and never
exceeds 3L. The reference problem is solved once per cell with Q2-Q1
(Taylor-Hood) elements on a staircase of cells fully inside the reference
domain, as the minimizer of the Dirichlet energy under the divergence
constraint. Pulling back multiplies gradients by ``scale`` and divides the
datum by it, so the ratio |grad u| / |f| does not depend on the scaling.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import numpy.typing as npt
from scipy import integrate, sparse

from outflux.config import thread_count
from outflux.cutoffs import TruncationCutoff
from outflux.exceptions import CompatibilityError, DomainError, PreconditionError, QuadratureError
from outflux.fields import SymmetrizedField, composite_rule, gauss_rule, symmetrize
from outflux.geometry import TruncationLadder
from outflux.hermite import DiscreteField
from outflux.linalg import saddle_matrix, solve_sparse
from outflux.mesh import symmetric_nodes
from outflux.seeding import derive_seed

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]
BoolArray = npt.NDArray[np.bool_]
ScalarSource = Callable[[FloatArray], FloatArray]

COMPATIBILITY_TOL = 1e-8
HAT_COMPATIBILITY_TOL = 1e-6
DOMAIN_TOL = 1e-12
STAR_SAMPLES = 200

# local Q2 node (a, b) has index a + 3 b, local Q1 node (a, b) has index a + 2 b
_Q2_A = np.arange(9) % 3
_Q2_B = np.arange(9) // 3
_Q1_A = np.arange(4) % 2
_Q1_B = np.arange(4) // 2


def _quadratic_1d(s: FloatArray, order: int) -> FloatArray:
    if order == 0:
        cols = [2 * s * s - 3 * s + 1, 4 * s - 4 * s * s, 2 * s * s - s]
    else:
        cols = [4 * s - 3, 4 - 8 * s, 4 * s - 1]
    return np.stack(cols, axis=-1)


def _linear_1d(s: FloatArray) -> FloatArray:
    return np.stack([1 - s, s], axis=-1)


@dataclass(frozen=True)
class TransformReport:
    """Sampled invariants of the transformed cell."""

    y1_min: float
    y1_max: float
    max_abs_y2: float
    h_at_zero: float
    lipschitz: float
    star_pairs: int
    star_failures: int
    L: float

    @property
    def passed(self) -> bool:
        return (
            self.y1_min >= -DOMAIN_TOL
            and self.y1_max <= 1.0 + DOMAIN_TOL
            and self.max_abs_y2 <= 3.0 * self.L * (1 + 1e-12)
            and abs(self.h_at_zero - 2.0 * self.L) <= 1e-12 * self.L
            and self.lipschitz <= self.L * (1 + 1e-9)
            and self.star_failures == 0
        )

    def to_dict(self) -> dict[str, object]:
        return {
            "y1_range": [self.y1_min, self.y1_max],
            "max_abs_y2": self.max_abs_y2,
            "h_at_zero": self.h_at_zero,
            "lipschitz": self.lipschitz,
            "star_check": "pass" if self.star_failures == 0 else "fail",
            "star_pairs": self.star_pairs,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class BogovskiiTransform:
    """Affine map of the ladder cell omega_k onto the reference configuration."""

    ladder: TruncationLadder
    k: int

    def __post_init__(self) -> None:
        if not 0 <= self.k < self.ladder.K:
            raise PreconditionError(f"Bogovskii transform needs 0 <= k < {self.ladder.K}")

    @property
    def L(self) -> float:
        return self.ladder.L_eff

    @property
    def origin(self) -> float:
        return self.ladder.R(self.k)

    @property
    def scale(self) -> float:
        return 2.0 * self.L / self.ladder.g_at(self.k)

    @property
    def jacobian_det(self) -> float:
        return self.scale**2

    def profile(self, y1: FloatArray) -> FloatArray:
        """h_k(y1) = scale * g(y1 / scale + R_k)."""
        y1 = np.asarray(y1, dtype=float)
        return self.scale * self.ladder.profile.value(y1 / self.scale + self.origin)

    def contains_reference(self, points: FloatArray, tol: float = DOMAIN_TOL) -> BoolArray:
        y1 = points[:, 0]
        inside = (y1 >= -tol) & (y1 <= 1.0 + tol)
        h = np.zeros_like(y1)
        h[inside] = self.profile(np.clip(y1[inside], 0.0, 1.0))
        return np.asarray(inside & (np.abs(points[:, 1]) <= h * (1 + tol) + tol))

    def forward(self, points: FloatArray, check: bool = True) -> FloatArray:
        """F(x) for points of omega_k.

        Raises:
            DomainError: If a point lies outside omega_k
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        y = np.stack([(points[:, 0] - self.origin) * self.scale, points[:, 1] * self.scale], axis=1)
        if check and not np.all(self.contains_reference(y)):
            bad = points[~self.contains_reference(y)][0]
            raise DomainError(f"point ({bad[0]:.6g}, {bad[1]:.6g}) is outside omega_{self.k}")
        return y

    def inverse(self, points: FloatArray, check: bool = True) -> FloatArray:
        """F^-1(y) for points of the reference configuration.

        Raises:
            DomainError: If a point lies outside the reference configuration
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if check and not np.all(self.contains_reference(points)):
            bad = points[~self.contains_reference(points)][0]
            raise DomainError(
                f"point ({bad[0]:.6g}, {bad[1]:.6g}) is outside the reference of omega_{self.k}"
            )
        y1, y2 = points[:, 0], points[:, 1]
        return np.stack([y1 / self.scale + self.origin, y2 / self.scale], axis=1)

    def boundary_points(self, count: int, rng: np.random.Generator) -> FloatArray:
        """Random points on the boundary of the reference configuration."""
        part = rng.integers(0, 4, count)
        u = rng.uniform(0.0, 1.0, count)
        y1 = np.where(part < 2, u, np.where(part == 2, 0.0, 1.0))
        h = self.profile(y1)
        y2 = np.where(part == 0, h, np.where(part == 1, -h, (2.0 * u - 1.0) * h))
        return np.stack([y1, y2], axis=1)

    def star_check(self, pairs: int = STAR_SAMPLES, seed: int = 0, samples: int = 200) -> int:
        """Number of failed segments from the axis triangle to the boundary.

        p is uniform in the triangle with vertices (0, 0) and (1, +-L), q is
        on the boundary; the segment pq must stay in the closed reference domain.
        """
        rng = np.random.default_rng(derive_seed(seed, self.k))
        y1 = np.sqrt(rng.uniform(0.0, 1.0, pairs))
        p = np.stack([y1, self.L * y1 * rng.uniform(-1.0, 1.0, pairs)], axis=1)
        q = self.boundary_points(pairs, rng)
        t = np.linspace(0.0, 1.0, samples)
        failures = 0
        for a, b in zip(p, q):
            seg = a[None, :] + t[:, None] * (b - a)[None, :]
            if not np.all(self.contains_reference(seg)):
                failures += 1
        return failures

    def check_invariants(self, samples: int = 1000, seed: int = 0) -> TransformReport:
        """Sample the transformed boundary and check the cell invariants."""
        rng = np.random.default_rng(derive_seed(seed, self.k, 1))
        x1 = rng.uniform(*self.ladder.cell(self.k), samples)
        g = self.ladder.profile.value(x1)
        side = rng.choice([-1.0, 1.0], samples)
        y = self.forward(np.stack([x1, side * g], axis=1))
        grid = np.linspace(0.0, 1.0, 2001)
        h = self.profile(grid)
        failures = self.star_check(seed=seed)
        report = TransformReport(
            y1_min=float(y[:, 0].min()),
            y1_max=float(y[:, 0].max()),
            max_abs_y2=float(np.abs(y[:, 1]).max()),
            h_at_zero=float(self.profile(np.array([0.0]))[0]),
            lipschitz=float(np.max(np.abs(np.diff(h)) / np.diff(grid))),
            star_pairs=STAR_SAMPLES,
            star_failures=failures,
            L=self.L,
        )
        logger.debug(f"Transform omega_{self.k}: {report.to_dict()}")
        return report


@dataclass
class ReferenceMesh:
    """Staircase Q2-Q1 discretization of the reference configuration.

    A cell is active when it lies inside the reference domain. Single-column
    spikes are trimmed so every active cell has a vertex shared by four active
    cells.
    """

    n: int
    ys: FloatArray
    active: BoolArray
    velocity_index: npt.NDArray[np.int64]
    pressure_index: npt.NDArray[np.int64]

    @classmethod
    def build(cls, transform: BogovskiiTransform, resolution: int) -> ReferenceMesh:
        n = 2 * resolution
        hx = 1.0 / n
        grid = np.linspace(0.0, 1.0, 4 * n + 1)
        ys = symmetric_nodes(float(transform.profile(grid).max()), hx, hy=hx)
        xs = np.linspace(0.0, 1.0, n + 1)
        h_min = np.minimum.reduce(
            [transform.profile(xs[:-1]), transform.profile(0.5 * (xs[:-1] + xs[1:])),
             transform.profile(xs[1:])]
        )
        upper = np.maximum(np.abs(ys[:-1]), np.abs(ys[1:]))
        active = upper[None, :] <= h_min[:, None] * (1 + 1e-12)
        active = _trim_spikes(active)
        nx, ny = active.shape

        pad = np.zeros((nx + 2, ny + 2), dtype=bool)
        pad[1:-1, 1:-1] = active
        I = np.arange(2 * nx + 1)
        J = np.arange(2 * ny + 1)
        il, ir = (I - 1) // 2 + 1, I // 2 + 1
        jl, jr = (J - 1) // 2 + 1, J // 2 + 1
        interior = (
            pad[il[:, None], jl[None, :]]
            & pad[il[:, None], jr[None, :]]
            & pad[ir[:, None], jl[None, :]]
            & pad[ir[:, None], jr[None, :]]
        )
        velocity_index = np.full(interior.shape, -1, dtype=np.int64)
        velocity_index[interior] = np.arange(int(interior.sum()))

        used = np.zeros((nx + 1, ny + 1), dtype=bool)
        for di in (0, 1):
            for dj in (0, 1):
                used[di : nx + di, dj : ny + dj] |= active
        pressure_index = np.full(used.shape, -1, dtype=np.int64)
        pressure_index[used] = np.arange(int(used.sum()))
        return cls(n=n, ys=ys, active=active, velocity_index=velocity_index,
                   pressure_index=pressure_index)

    @property
    def hx(self) -> float:
        return 1.0 / self.n

    @property
    def hy(self) -> float:
        return float(self.ys[1] - self.ys[0])

    @property
    def n_velocity(self) -> int:
        return 2 * int((self.velocity_index >= 0).sum())

    @property
    def n_pressure(self) -> int:
        return int((self.pressure_index >= 0).sum())

    def cells(self) -> npt.NDArray[np.int64]:
        return np.argwhere(self.active)

    def locate(self, points: FloatArray) -> tuple[npt.NDArray[np.int64], FloatArray, FloatArray]:
        """Active cell (i, j) of each reference point, -1 outside, and local coordinates."""
        nx, ny = self.active.shape
        i = np.clip(np.floor(points[:, 0] * self.n).astype(np.int64), 0, nx - 1)
        j = np.clip(np.searchsorted(self.ys, points[:, 1], side="right") - 1, 0, ny - 1)
        inside = (
            (points[:, 0] >= 0.0)
            & (points[:, 0] <= 1.0)
            & (points[:, 1] >= self.ys[0])
            & (points[:, 1] <= self.ys[-1])
        )
        inside &= self.active[i, j]
        s = points[:, 0] * self.n - i
        t = (points[:, 1] - self.ys[j]) / self.hy
        ij = np.where(inside[:, None], np.stack([i, j], axis=1), -1)
        return ij, s, t


def _trim_spikes(active: BoolArray) -> BoolArray:
    heights = active.sum(axis=1)
    while True:
        left = np.concatenate(([0], heights[:-1]))
        right = np.concatenate((heights[1:], [0]))
        capped = np.minimum(heights, np.maximum(left, right))
        if np.array_equal(capped, heights):
            break
        heights = capped
    ny = active.shape[1]
    rows = np.abs(np.arange(ny) - (ny - 1) / 2.0)
    return np.asarray(rows[None, :] < heights[:, None] / 2.0)


def _reference_tables(
    hx: float, hy: float, order: int
) -> tuple[FloatArray, FloatArray, FloatArray, FloatArray, FloatArray]:
    nodes, weights = gauss_rule(order)
    S, T = np.meshgrid(nodes, nodes, indexing="ij")
    S, T = S.ravel(), T.ravel()
    W = np.outer(weights, weights).ravel() * hx * hy
    Qs, Qt = _quadratic_1d(S, 0), _quadratic_1d(T, 0)
    dQs, dQt = _quadratic_1d(S, 1), _quadratic_1d(T, 1)
    phi = Qs[:, _Q2_A] * Qt[:, _Q2_B]
    grad = np.stack([dQs[:, _Q2_A] * Qt[:, _Q2_B] / hx, Qs[:, _Q2_A] * dQt[:, _Q2_B] / hy], axis=-1)
    psi = _linear_1d(S)[:, _Q1_A] * _linear_1d(T)[:, _Q1_B]
    return np.stack([S, T], axis=1), W, phi, grad, psi


@dataclass
class DivSolution:
    """Zero-trace u on omega_k with div u = f, stored on the reference mesh.

    ``residual`` is taken against the load shifted by ``multiplier`` times the
    mean row, ``load_residual`` against the load itself.
    """

    transform: BogovskiiTransform
    mesh: ReferenceMesh
    values: FloatArray
    ratio: float
    residual: float
    source_norm: float
    dirichlet: float
    multiplier: float = 0.0
    load_residual: float = 0.0

    def _reference(self, points: FloatArray, derivative: bool) -> FloatArray:
        y = self.transform.forward(points, check=False)
        ij, s, t = self.mesh.locate(y)
        inside = ij[:, 0] >= 0
        shape = (points.shape[0], 2, 2) if derivative else (points.shape[0], 2)
        out = np.zeros(shape)
        if not inside.any():
            return out
        i, j = ij[inside, 0], ij[inside, 1]
        s, t = s[inside], t[inside]
        gathered = self.values[2 * i[:, None] + _Q2_A[None, :], 2 * j[:, None] + _Q2_B[None, :]]
        Qs, Qt = _quadratic_1d(s, 0), _quadratic_1d(t, 0)
        if not derivative:
            out[inside] = np.einsum("nm,nmi->ni", Qs[:, _Q2_A] * Qt[:, _Q2_B], gathered)
            return out
        dQs, dQt = _quadratic_1d(s, 1), _quadratic_1d(t, 1)
        d1 = dQs[:, _Q2_A] * Qt[:, _Q2_B] / self.mesh.hx
        d2 = Qs[:, _Q2_A] * dQt[:, _Q2_B] / self.mesh.hy
        out[inside] = self.transform.scale * np.stack(
            [np.einsum("nm,nmi->ni", d1, gathered), np.einsum("nm,nmi->ni", d2, gathered)],
            axis=-1,
        )
        return out

    def evaluate(self, points: FloatArray) -> FloatArray:
        """u(x) = v(F(x)); zero outside the staircase."""
        return self._reference(points, derivative=False)

    def jacobian(self, points: FloatArray) -> FloatArray:
        """du_i/dx_j = scale * dv_i/dy_j."""
        return self._reference(points, derivative=True)

    def to_dict(self) -> dict[str, float]:
        return {
            "k": self.transform.k,
            "ratio": self.ratio,
            "residual": self.residual,
            "source_norm": self.source_norm,
            "dirichlet": self.dirichlet,
            "multiplier": self.multiplier,
            "load_residual": self.load_residual,
        }


def cell_integrals(
    source: ScalarSource, ladder: TruncationLadder, k: int, panels: int = 64
) -> tuple[float, float]:
    """int f and int |f| over omega_k.

    The outer integral in x1 is adaptive; each section (-g, g) uses a
    composite Gauss rule.

    Raises:
        QuadratureError: If the adaptive rule misses its tolerance
    """

    def section(x1: float) -> FloatArray:
        g = float(ladder.profile.value(x1))
        y, w = composite_rule(-g, g, panels, order=8)
        values = source(np.stack([np.full(y.size, x1), y], axis=1))
        return np.array([w @ values, w @ np.abs(values)])

    a, b = ladder.cell(k)
    value, error = integrate.quad_vec(section, a, b, epsabs=1e-13, epsrel=1e-12, limit=400)
    if not np.all(np.isfinite(value)) or float(np.max(error)) > 1e-9 * (1.0 + float(value[1])):
        raise QuadratureError(f"cell integral over omega_{k} did not converge (error {error})")
    return float(value[0]), float(value[1])


def solve_div(
    transform: BogovskiiTransform,
    source: ScalarSource,
    resolution: int = 6,
    check: bool = True,
    order: int = 4,
) -> DivSolution:
    """Solve div u = f in omega_k with u = 0 on the boundary of omega_k.

    The reference velocity minimizes |grad v|^2 under the discrete constraint
    int q div v = int q f~ for all Q1 multipliers q; the constant multiplier
    mode is removed by one extra Lagrange row, whose value absorbs the
    discrete mean of f~.

    Args:
        transform: Transform of the cell
        source: f as a function of physical points
        resolution: Half the number of reference cells along y1
        check: Verify int f = 0 over omega_k before solving
        order: Gauss order per reference cell direction

    Returns:
        DivSolution with ratio |grad u| / |f| (0 for f = 0)

    Raises:
        CompatibilityError: If int f differs from zero by more than 1e-8 (1 + int |f|)
        SingularSystemError: If the saddle-point system cannot be solved
    """
    if check:
        mean, total = cell_integrals(source, transform.ladder, transform.k)
        if abs(mean) > COMPATIBILITY_TOL * (1.0 + total):
            raise CompatibilityError(
                f"int f over omega_{transform.k} is {mean:.3e}, not zero (int |f| = {total:.3e})"
            )
    mesh = ReferenceMesh.build(transform, resolution)
    ref_points, W, phi, grad, psi = _reference_tables(mesh.hx, mesh.hy, order)
    cells = mesh.cells()
    i, j = cells[:, 0], cells[:, 1]
    origin = np.stack([i * mesh.hx, mesh.ys[j]], axis=1)
    y = origin[:, None, :] + ref_points[None, :, :] * np.array([mesh.hx, mesh.hy])
    values = source(transform.inverse(y.reshape(-1, 2), check=False)).reshape(y.shape[:2])
    f_ref = values / transform.scale

    vnode = mesh.velocity_index[2 * i[:, None] + _Q2_A[None, :], 2 * j[:, None] + _Q2_B[None, :]]
    pnode = mesh.pressure_index[i[:, None] + _Q1_A[None, :], j[:, None] + _Q1_B[None, :]]
    K_loc = np.einsum("q,qmd,qnd->mn", W, grad, grad)
    B_loc = np.einsum("q,qp,qmd->pmd", W, psi, grad)
    m_loc = W @ psi

    nv, n_p, n_c = mesh.n_velocity, mesh.n_pressure, cells.shape[0]
    rows, cols, vals = [], [], []
    for d in (0, 1):
        r = np.broadcast_to(vnode[:, :, None], (n_c, 9, 9))
        c = np.broadcast_to(vnode[:, None, :], (n_c, 9, 9))
        keep = (r >= 0) & (c >= 0)
        rows.append(2 * r[keep] + d)
        cols.append(2 * c[keep] + d)
        vals.append(np.broadcast_to(K_loc, (n_c, 9, 9))[keep])
    K = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nv, nv)
    ).tocsr()
    rows, cols, vals = [], [], []
    for d in (0, 1):
        r = np.broadcast_to(pnode[:, :, None], (n_c, 4, 9))
        c = np.broadcast_to(vnode[:, None, :], (n_c, 4, 9))
        keep = c >= 0
        rows.append(r[keep])
        cols.append(2 * c[keep] + d)
        vals.append(np.broadcast_to(B_loc[:, :, d], (n_c, 4, 9))[keep])
    B = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n_p, nv)
    ).tocsr()
    mean = np.bincount(pnode.ravel(), weights=np.broadcast_to(m_loc, pnode.shape).ravel(),
                       minlength=n_p)
    load = np.bincount(pnode.ravel(), weights=np.einsum("q,qp,cq->cp", W, psi, f_ref).ravel(),
                       minlength=n_p)
    source_norm = float(np.sqrt(np.sum(W[None, :] * f_ref * f_ref)))

    full = np.zeros((*mesh.velocity_index.shape, 2))
    if source_norm == 0.0:
        logger.debug(f"solve_div on omega_{transform.k}: zero datum")
        return DivSolution(transform, mesh, full, 0.0, 0.0, 0.0, 0.0)

    matrix = saddle_matrix(K, B, mean)
    rhs = np.concatenate([np.zeros(nv), load, [0.0]])
    sol = solve_sparse(matrix, rhs, f"Bogovskii k={transform.k}, resolution={resolution}")
    v = sol[:nv]
    multiplier = float(sol[-1])
    target = load - multiplier * mean
    scale = max(float(np.linalg.norm(load)), 1e-300)
    residual = float(np.linalg.norm(B @ v - target)) / scale
    load_residual = float(np.linalg.norm(B @ v - load)) / scale
    dirichlet = float(v @ (K @ v))
    interior = mesh.velocity_index >= 0
    full[interior] = v.reshape(-1, 2)
    ratio = math.sqrt(dirichlet) / source_norm
    logger.debug(
        f"solve_div on omega_{transform.k}: {nv} velocity dofs, ratio {ratio:.4g}, "
        f"residual {residual:.2e}, against the raw load {load_residual:.2e}"
    )
    return DivSolution(
        transform, mesh, full, ratio, residual, source_norm, dirichlet, multiplier, load_residual
    )


def smooth_bump(points: FloatArray, center: tuple[float, float], radius: float) -> FloatArray:
    """exp(1 - 1 / (1 - s^2)) with s = |x - center| / radius, zero for s >= 1."""
    s2 = ((points[:, 0] - center[0]) ** 2 + (points[:, 1] - center[1]) ** 2) / radius**2
    out = np.zeros(points.shape[0])
    inside = s2 < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s2[inside]))
    return out


def two_bump_source(ladder: TruncationLadder, k: int) -> ScalarSource:
    """Sign-balanced pair of axis bumps in omega_k, even in x2 with zero mean."""
    a, b = ladder.cell(k)
    width = b - a
    radius = 0.2 * min(width, ladder.g_at(k))
    plus = (a + 0.25 * width, 0.0)
    minus = (a + 0.75 * width, 0.0)

    def source(points: FloatArray) -> FloatArray:
        return smooth_bump(points, plus, radius) - smooth_bump(points, minus, radius)

    return source


@dataclass
class BogovskiiStudy:
    """Ratios |grad u| / |f| of the two-bump problem over a range of cells."""

    solutions: dict[int, DivSolution] = field(default_factory=dict)

    @property
    def ratios(self) -> dict[int, float]:
        return {k: s.ratio for k, s in sorted(self.solutions.items())}

    @property
    def spread(self) -> float:
        values = [r for r in self.ratios.values() if r > 0]
        return max(values) / min(values) if values else 1.0


def uniformity_study(
    ladder: TruncationLadder,
    ks: Optional[list[int]] = None,
    resolution: int = 6,
    workers: Optional[int] = None,
) -> BogovskiiStudy:
    """Solve the two-bump problem on every requested cell, in parallel over k."""
    indices = list(range(ladder.K)) if ks is None else ks

    def run(k: int) -> DivSolution:
        return solve_div(BogovskiiTransform(ladder, k), two_bump_source(ladder, k), resolution)

    with ThreadPoolExecutor(max_workers=workers or thread_count()) as pool:
        solutions = list(pool.map(run, indices))
    study = BogovskiiStudy(dict(zip(indices, solutions)))
    logger.info(f"Bogovskii ratios over k={indices[0]}..{indices[-1]}: spread {study.spread:.3f}")
    return study


@dataclass
class HatCorrection:
    """Symmetrized v_hat with div v_hat = -grad theta_k . v on omega_k."""

    field: SymmetrizedField
    solution: DivSolution
    ratio: float
    l2_ratio: float
    compatibility: float

    def evaluate(self, points: FloatArray) -> FloatArray:
        return self.field.evaluate(points)

    def jacobian(self, points: FloatArray) -> FloatArray:
        return self.field.jacobian(points)


def corrector_hat_v(
    v: DiscreteField, ladder: TruncationLadder, k: int, resolution: int = 6
) -> HatCorrection:
    """Zero-trace v_hat on omega_k restoring the divergence of theta_k v.

    Args:
        v: Discrete solution on a level of at least k + 1
        ladder: Truncation ladder of v's mesh
        k: Cell index
        resolution: Reference resolution of the divergence solve

    Returns:
        HatCorrection with |grad v_hat| / |grad v|_(omega_k) and
        g(R_k) |grad v_hat| / |v|_(omega_k)

    Raises:
        PreconditionError: If cell k is not inside v's truncation
        CompatibilityError: If int grad theta_k . v is not zero, so v is not solenoidal
    """
    if not 0 <= k < v.level:
        raise PreconditionError(f"corrector_hat_v needs 0 <= k < {v.level}")
    theta = TruncationCutoff(ladder, k)
    transform = BogovskiiTransform(ladder, k)

    def source(points: FloatArray) -> FloatArray:
        _, d1, _ = theta.profile(points[:, 0])
        inside = (points[:, 0] >= ladder.R(k)) & (points[:, 0] <= ladder.R(k + 1))
        return np.where(inside, -d1 * v.evaluate(points)[:, 0], 0.0)

    a, b = ladder.cell(k)
    mask = v._cells_between(a, b)
    pts = v.space.points[mask].reshape(-1, 2)
    w = v.space.weights[mask].ravel()
    values = source(pts)
    total = float(w @ np.abs(values))
    mean = float(w @ values)
    compatibility = abs(mean) / total if total > 0 else 0.0
    if compatibility > HAT_COMPATIBILITY_TOL:
        raise CompatibilityError(
            f"int grad theta_{k} . v = {mean:.3e} (relative {compatibility:.2e}); "
            "v is not solenoidal"
        )
    solution = solve_div(transform, source, resolution, check=False)
    grad_v = math.sqrt(v.dirichlet(a, b))
    l2_v = v.l2_norm(a, b)
    grad_hat = math.sqrt(solution.dirichlet)
    ratio = grad_hat / grad_v if grad_v > 0 else 0.0
    l2_ratio = grad_hat * ladder.g_at(k) / l2_v if l2_v > 0 else 0.0
    logger.debug(f"v_hat on omega_{k}: ratio {ratio:.4g}, g-weighted ratio {l2_ratio:.4g}")
    return HatCorrection(symmetrize(solution), solution, ratio, l2_ratio, compatibility)
