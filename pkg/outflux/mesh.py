"""Symmetric tensor-grid meshes of the truncations Omega_k.

Cells of a Cartesian grid are kept when their center lies in the domain
(a staircase approximation of curved walls). The y-grid is the exact mirror
image of itself, so the active cell set, the node set and the boundary tags
are mirror-symmetric by construction.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import numpy.typing as npt

from outflux.exceptions import MeshResolutionError, PreconditionError
from outflux.geometry import DomainSpec, TruncationLadder

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]
BoolArray = npt.NDArray[np.bool_]

OUTER = 0
SECTION = -1


def tag_name(code: int) -> str:
    if code == OUTER:
        return "outer"
    if code == SECTION:
        return "section"
    return f"hole{code}"


@dataclass
class TruncationMesh:
    """Active cells of a tensor grid covering Omega_k.

    Cell corners are ordered (i, j), (i+1, j), (i, j+1), (i+1, j+1).
    """

    level: int
    xs: FloatArray
    ys: FloatArray
    active: BoolArray
    cell_id: IntArray
    node_index: IntArray
    nodes: FloatArray
    node_ij: IntArray
    cells: IntArray
    cell_ij: IntArray
    boundary_edges: IntArray
    edge_tags: IntArray
    boundary_node: BoolArray
    mirror: IntArray
    section_chain: IntArray
    edge_count: int
    hole_count: int

    @property
    def n_nodes(self) -> int:
        return int(self.nodes.shape[0])

    @property
    def n_cells(self) -> int:
        return int(self.cells.shape[0])

    @property
    def hy(self) -> float:
        return float(self.ys[1] - self.ys[0])

    @property
    def x_end(self) -> float:
        return float(self.xs[-1])

    def euler_characteristic(self) -> int:
        return self.n_nodes - self.edge_count + self.n_cells

    def cell_sizes(self) -> tuple[FloatArray, FloatArray]:
        i, j = self.cell_ij[:, 0], self.cell_ij[:, 1]
        return self.xs[i + 1] - self.xs[i], self.ys[j + 1] - self.ys[j]

    def cell_centers(self) -> FloatArray:
        i, j = self.cell_ij[:, 0], self.cell_ij[:, 1]
        return np.stack(
            [0.5 * (self.xs[i] + self.xs[i + 1]), 0.5 * (self.ys[j] + self.ys[j + 1])], axis=1
        )

    def tag_names(self) -> list[str]:
        return sorted({tag_name(int(code)) for code in self.edge_tags})

    def node_tags(self) -> dict[str, IntArray]:
        """Boundary nodes per tag; corner nodes may appear under two tags."""
        tags: dict[str, IntArray] = {}
        for code in np.unique(self.edge_tags):
            edges = self.boundary_edges[self.edge_tags == code]
            tags[tag_name(int(code))] = np.unique(edges.ravel())
        return tags

    def locate(self, points: FloatArray) -> tuple[IntArray, FloatArray, FloatArray]:
        """Active cell of each point (-1 outside) and local coordinates in [0, 1]."""
        nx, ny = self.active.shape
        i = np.clip(np.searchsorted(self.xs, points[:, 0], side="right") - 1, 0, nx - 1)
        j = np.clip(np.searchsorted(self.ys, points[:, 1], side="right") - 1, 0, ny - 1)
        inside = (
            (points[:, 0] >= self.xs[0])
            & (points[:, 0] <= self.xs[-1])
            & (points[:, 1] >= self.ys[0])
            & (points[:, 1] <= self.ys[-1])
        )
        cell = np.where(inside, self.cell_id[i, j], -1)
        s = (points[:, 0] - self.xs[i]) / (self.xs[i + 1] - self.xs[i])
        t = (points[:, 1] - self.ys[j]) / (self.ys[j + 1] - self.ys[j])
        return cell, s, t

    def cells_left_of(self, x1: float) -> BoolArray:
        """Cells whose center lies left of x1."""
        return np.asarray(self.cell_centers()[:, 0] < x1)


def _segment_nodes(breaks: list[float], h: float) -> FloatArray:
    pieces = []
    for a, b in zip(breaks, breaks[1:]):
        n = max(1, math.ceil((b - a) / h - 1e-9))
        pieces.append(a + (b - a) * np.arange(n) / n)
    pieces.append(np.array([breaks[-1]]))
    return np.concatenate(pieces)


def symmetric_nodes(half_height: float, h: float, hy: Optional[float] = None) -> FloatArray:
    """Mirror-exact y-nodes covering [-half_height, half_height]."""
    if hy is None:
        m = max(1, math.ceil(half_height / h - 1e-9))
        pos = half_height * (np.arange(1, m + 1) / m)
    else:
        m = max(1, math.ceil(half_height / hy - 1e-9))
        pos = hy * np.arange(1, m + 1)
    return np.concatenate((-pos[::-1], [0.0], pos))


def _clearance_check(spec: DomainSpec, h: float) -> None:
    for i, hole in enumerate(spec.holes, start=1):
        gap = spec.hole_clearance(i)
        if gap < 2.0 * h:
            raise MeshResolutionError(
                f"hole {i} is within {gap:.3g} of another boundary part; mesh size {h:.3g} "
                f"needs a clearance of at least 2h"
            )
        if min(hole.semi_x, hole.semi_y) < h:
            raise MeshResolutionError(f"hole {i} is smaller than the mesh size {h:.3g}")


def mesh_truncation(
    spec: DomainSpec,
    ladder: TruncationLadder,
    k: int,
    h: float,
    hy: Optional[float] = None,
) -> TruncationMesh:
    """Mesh Omega_k with target cell size h.

    Every ladder radius up to R_k is a grid line, so sigma(R_k) is an explicit
    node chain. Passing a fixed ``hy`` makes meshes of different levels nested.

    Raises:
        PreconditionError: If k is outside the ladder or h <= 0
        MeshResolutionError: If a hole is too close to another boundary part or unresolved
    """
    if not 0 <= k <= ladder.K or h <= 0:
        raise PreconditionError(f"mesh_truncation needs 0 <= k <= {ladder.K} and h > 0")
    step = max(h, hy or 0.0)
    _clearance_check(spec, step)
    breaks = [spec.x_left, *ladder.radii[: k + 1]]
    xs = _segment_nodes(breaks, h)
    xc = 0.5 * (xs[:-1] + xs[1:])
    g_nodes = spec.wall(xs)
    g_cells = spec.wall(xc)
    ys = symmetric_nodes(float(max(g_nodes.max(), g_cells.max())), h, hy)
    yc = 0.5 * (ys[:-1] + ys[1:])
    nx, ny = xc.size, yc.size

    X, Y = np.meshgrid(xc, np.abs(yc), indexing="ij")
    reason = np.full((nx, ny), OUTER, dtype=np.int64)
    active = Y < g_cells[:, None]
    for i, hole in enumerate(spec.holes, start=1):
        inside = hole.contains(X, Y) & active
        reason[inside] = i
        active &= ~inside
        if not inside.any():
            raise MeshResolutionError(f"hole {i} removes no cell at mesh size {h:.3g}")

    cell_id = np.full((nx, ny), -1, dtype=np.int64)
    cell_ij = np.argwhere(active)
    cell_id[cell_ij[:, 0], cell_ij[:, 1]] = np.arange(cell_ij.shape[0])

    used = np.zeros((nx + 1, ny + 1), dtype=bool)
    for di in (0, 1):
        for dj in (0, 1):
            used[di : nx + di, dj : ny + dj] |= active
    node_ij = np.argwhere(used)
    node_index = np.full((nx + 1, ny + 1), -1, dtype=np.int64)
    node_index[node_ij[:, 0], node_ij[:, 1]] = np.arange(node_ij.shape[0])
    nodes = np.stack([xs[node_ij[:, 0]], ys[node_ij[:, 1]]], axis=1)

    ci, cj = cell_ij[:, 0], cell_ij[:, 1]
    cells = np.stack(
        [
            node_index[ci, cj],
            node_index[ci + 1, cj],
            node_index[ci, cj + 1],
            node_index[ci + 1, cj + 1],
        ],
        axis=1,
    )

    pad_active = np.zeros((nx + 2, ny + 2), dtype=bool)
    pad_active[1:-1, 1:-1] = active
    pad_reason = np.full((nx + 2, ny + 2), OUTER, dtype=np.int64)
    pad_reason[1:-1, 1:-1] = reason
    pad_reason[-1, :] = SECTION

    # horizontal edge (i, j) joins nodes (i, j) and (i + 1, j)
    below, above = pad_active[1:-1, :-1], pad_active[1:-1, 1:]
    h_exists = below | above
    h_boundary = below ^ above
    h_reason = np.where(below, pad_reason[1:-1, 1:], pad_reason[1:-1, :-1])
    # vertical edge (i, j) joins nodes (i, j) and (i, j + 1)
    left, right = pad_active[:-1, 1:-1], pad_active[1:, 1:-1]
    v_exists = left | right
    v_boundary = left ^ right
    v_reason = np.where(left, pad_reason[1:, 1:-1], pad_reason[:-1, 1:-1])

    hi, hj = np.nonzero(h_boundary)
    vi, vj = np.nonzero(v_boundary)
    boundary_edges = np.concatenate(
        [
            np.stack([node_index[hi, hj], node_index[hi + 1, hj]], axis=1),
            np.stack([node_index[vi, vj], node_index[vi, vj + 1]], axis=1),
        ]
    )
    edge_tags = np.concatenate([h_reason[hi, hj], v_reason[vi, vj]])
    boundary_node = np.zeros(node_ij.shape[0], dtype=bool)
    boundary_node[boundary_edges.ravel()] = True

    mirror = node_index[node_ij[:, 0], ny - node_ij[:, 1]]
    section = node_index[nx, :]
    section_chain = section[section >= 0]

    mesh = TruncationMesh(
        level=k,
        xs=xs,
        ys=ys,
        active=active,
        cell_id=cell_id,
        node_index=node_index,
        nodes=nodes,
        node_ij=node_ij,
        cells=cells,
        cell_ij=cell_ij,
        boundary_edges=boundary_edges,
        edge_tags=edge_tags,
        boundary_node=boundary_node,
        mirror=mirror,
        section_chain=section_chain,
        edge_count=int(h_exists.sum() + v_exists.sum()),
        hole_count=spec.hole_count,
    )
    expected = 1 - spec.hole_count
    if mesh.euler_characteristic() != expected:
        raise MeshResolutionError(
            f"mesh of Omega_{k} has Euler characteristic {mesh.euler_characteristic()}, "
            f"expected {expected}; refine h={h:.3g}"
        )
    logger.info(
        f"Meshed Omega_{k}: {mesh.n_cells} cells, {mesh.n_nodes} nodes, "
        f"{boundary_edges.shape[0]} boundary edges"
    )
    return mesh
