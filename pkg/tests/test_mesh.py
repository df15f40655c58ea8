"""Tests for the symmetric truncation meshes."""

import numpy as np
import pytest

from outflux.exceptions import MeshResolutionError, PreconditionError
from outflux.geometry import DomainSpec, build_ladder
from outflux.mesh import mesh_truncation, symmetric_nodes


class TestSymmetricNodes:
    """Test mirror-exact node placement."""

    def test_mirror_exact(self):
        """Test that the nodes are their own mirror image."""
        ys = symmetric_nodes(1.3, 0.25)
        assert np.array_equal(ys, -ys[::-1])
        assert ys[0] == -1.3 and ys[-1] == 1.3

    def test_fixed_spacing(self):
        """Test that a fixed hy gives integer multiples of hy."""
        ys = symmetric_nodes(1.0, 0.3, hy=0.25)
        assert np.allclose(np.diff(ys), 0.25)
        assert ys[-1] >= 1.0


class TestMeshTruncation:
    """Test the structure of Omega_k meshes."""

    def test_channel_core(self, channel_spec, channel_ladder):
        """Test an 8 x 8 grid of the channel core."""
        mesh = mesh_truncation(channel_spec, channel_ladder, 0, 0.25)
        assert mesh.n_cells == 64
        assert mesh.n_nodes == 81
        assert mesh.euler_characteristic() == 1
        assert mesh.x_end == pytest.approx(2.0)
        assert mesh.section_chain.size == 9
        assert mesh.tag_names() == ["outer", "section"]

    def test_ladder_radii_are_grid_lines(self, channel_spec, channel_ladder):
        """Test that every radius up to R_k is a node line."""
        mesh = mesh_truncation(channel_spec, channel_ladder, 3, 0.3)
        for k in range(4):
            assert np.min(np.abs(mesh.xs - channel_ladder.R(k))) < 1e-12
        assert mesh.x_end == pytest.approx(channel_ladder.R(3))

    def test_mirror_map(self, channel_spec, channel_ladder):
        """Test that the mirror index maps nodes to their reflections."""
        mesh = mesh_truncation(channel_spec, channel_ladder, 1, 0.25)
        assert np.all(mesh.mirror >= 0)
        reflected = mesh.nodes[mesh.mirror]
        assert np.allclose(reflected[:, 0], mesh.nodes[:, 0])
        assert np.allclose(reflected[:, 1], -mesh.nodes[:, 1])

    def test_two_holes(self, two_hole_spec):
        """Test that each hole removes cells and gets its own tag."""
        ladder = build_ladder(two_hole_spec.profile, two_hole_spec.R0, 2)
        mesh = mesh_truncation(two_hole_spec, ladder, 1, 0.15)
        assert mesh.euler_characteristic() == -1
        assert mesh.tag_names() == ["hole1", "hole2", "outer", "section"]
        tags = mesh.node_tags()
        hole_nodes = mesh.nodes[tags["hole1"]]
        assert np.all(np.abs(hole_nodes[:, 0] - 1.0) <= 0.4)

    def test_hole_too_close_for_mesh(self, two_hole_spec):
        """Test that a coarse mesh cannot resolve the gap between holes."""
        ladder = build_ladder(two_hole_spec.profile, two_hole_spec.R0, 2)
        with pytest.raises(MeshResolutionError, match="clearance"):
            mesh_truncation(two_hole_spec, ladder, 1, 0.25)

    def test_level_out_of_range(self, channel_spec, channel_ladder):
        """Test that k must lie on the ladder."""
        with pytest.raises(PreconditionError):
            mesh_truncation(channel_spec, channel_ladder, 7, 0.25)
        with pytest.raises(PreconditionError):
            mesh_truncation(channel_spec, channel_ladder, 1, 0.0)

    def test_locate(self, channel_spec, channel_ladder):
        """Test point location inside and outside the mesh."""
        mesh = mesh_truncation(channel_spec, channel_ladder, 0, 0.25)
        cell, s, t = mesh.locate(np.array([[0.1, 0.1], [5.0, 0.0]]))
        assert cell[0] >= 0 and cell[1] == -1
        assert s[0] == pytest.approx(0.4)
        assert t[0] == pytest.approx(0.4)

    def test_nested_levels(self, paraboloid_ladder, paraboloid_profile):
        """Test that a fixed hy gives the same y-grid spacing on every level."""
        spec = DomainSpec(paraboloid_profile, R0=1.0, gamma=1.0)
        coarse = mesh_truncation(spec, paraboloid_ladder, 1, 0.25, hy=0.25)
        fine = mesh_truncation(spec, paraboloid_ladder, 2, 0.25, hy=0.25)
        assert np.allclose(coarse.ys, fine.ys[: coarse.ys.size] - fine.ys[0] + coarse.ys[0])
        assert fine.n_cells > coarse.n_cells
