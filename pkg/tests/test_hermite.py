"""Tests for the Hermite stream-function space."""

import numpy as np
import pytest

from outflux.hermite import DiscreteField, HermiteSpace
from outflux.mesh import mesh_truncation


@pytest.fixture
def space(channel_spec, channel_ladder):
    """Hermite space on the 4 x 4 channel core."""
    return HermiteSpace(mesh_truncation(channel_spec, channel_ladder, 0, 0.5, hy=0.5))


@pytest.fixture
def random_field(space):
    """A random discrete field."""
    rng = np.random.default_rng(5)
    return DiscreteField.from_free(space, rng.normal(size=space.n_free))


class TestHermiteSpace:
    """Test the operators of the discrete space."""

    def test_stiffness_is_spd(self, space):
        """Test that the Dirichlet form is symmetric positive definite on free coefficients."""
        K = space.stiffness().toarray()
        assert np.allclose(K, K.T, atol=1e-12)
        assert np.linalg.eigvalsh(K).min() > 0.0

    def test_convection_is_skew(self, space):
        """Test c^T C(w) c = 0 for any wind."""
        rng = np.random.default_rng(2)
        wind = rng.normal(size=space.points.shape[:2] + (2,))
        C = space.convection(wind)
        c = rng.normal(size=space.n_free)
        assert abs(c @ (C @ c)) <= 1e-10 * (c @ c) * abs(C).max()

    def test_dirichlet_matches_stiffness(self, space, random_field):
        """Test int |grad v|^2 = c^T K c."""
        free = random_field.free_coefficients()
        expected = free @ (space.stiffness() @ free)
        assert random_field.dirichlet() == pytest.approx(expected, rel=1e-10)

    def test_free_coefficients_recovered(self, space):
        """Test that the mirror-symmetric nodal vector maps back to its free part."""
        free = np.arange(space.n_free, dtype=float)
        field = DiscreteField.from_free(space, free)
        assert np.allclose(field.free_coefficients(), free)


class TestDiscreteField:
    """Test evaluation of discrete velocities."""

    def test_divergence_free(self, random_field):
        """Test that curl psi is exactly divergence free."""
        assert random_field.divergence_norm() <= 1e-12 * max(1.0, random_field.dirichlet())

    def test_symmetric(self, random_field):
        """Test v1 even and v2 odd in x2."""
        rng = np.random.default_rng(9)
        pts = np.stack([rng.uniform(0.05, 1.95, 50), rng.uniform(0.05, 0.95, 50)], axis=1)
        up = random_field.evaluate(pts)
        down = random_field.evaluate(pts * np.array([1.0, -1.0]))
        assert np.allclose(up[:, 0], down[:, 0])
        assert np.allclose(up[:, 1], -down[:, 1])

    def test_zero_trace(self, random_field):
        """Test v = 0 on the walls, the left end and the section."""
        pts = np.array([[1.1, 1.0], [1.3, -1.0], [0.0, 0.4], [2.0, -0.2]])
        assert np.allclose(random_field.evaluate(pts), 0.0, atol=1e-12)

    def test_zero_outside(self, random_field):
        """Test the extension by zero beyond the mesh."""
        assert np.allclose(random_field.evaluate(np.array([[3.0, 0.0]])), 0.0)

    def test_jacobian_matches_differences(self, random_field):
        """Test the discrete Jacobian against central differences inside a cell."""
        pts = np.array([[0.7, 0.3], [1.2, -0.6]])
        h = 1e-6
        J = random_field.jacobian(pts)
        for j, step in enumerate(np.eye(2) * h):
            fd = random_field.evaluate(pts + step) - random_field.evaluate(pts - step)
            assert np.allclose(J[:, :, j], fd / (2 * h), rtol=1e-5, atol=1e-6)

    def test_prolong_keeps_dirichlet(self, channel_spec, channel_ladder, random_field):
        """Test that zero extension to the next level preserves the energy."""
        fine = HermiteSpace(mesh_truncation(channel_spec, channel_ladder, 1, 0.5, hy=0.5))
        extended = random_field.prolong(fine)
        assert extended.dirichlet() == pytest.approx(random_field.dirichlet(), rel=1e-10)
        assert extended.dirichlet(x_min=2.0) == pytest.approx(0.0, abs=1e-12)

    def test_dirichlet_profile(self, channel_spec, channel_ladder, random_field):
        """Test y_0 = total energy on Omega_0."""
        profile = random_field.dirichlet_profile(channel_ladder)
        assert profile.shape == (1,)
        assert profile[0] == pytest.approx(random_field.dirichlet())
