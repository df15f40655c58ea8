"""Tests for the homotopy solver and the invading-domain continuation."""

import numpy as np
import pytest

from outflux.config import parse_config
from outflux.exceptions import HypothesisError, NonConvergenceError, PreconditionError
from outflux.extension import BoundaryData, assemble_extension
from outflux.fields import ZeroField
from outflux.geometry import DomainSpec, Hole, build_ladder
from outflux.hermite import DiscreteField
from outflux.mesh import mesh_truncation
from outflux.solver import (
    ForceField,
    HomotopyResult,
    LambdaRecord,
    LevelProblem,
    RunSetup,
    SolveConfig,
    assemble_system,
    choose_epsilon,
    energy_balance,
    f_star,
    homotopy_solve,
    invade,
    poiseuille_benchmark,
    poiseuille_convergence,
)


@pytest.fixture
def one_hole_spec(channel_profile):
    """Channel with one circular hole of radius 0.4 at x1 = 1."""
    return DomainSpec(channel_profile, R0=2.0, gamma=0.5, outlet="out",
                      holes=(Hole(1.0, 0.4, 0.4),))


@pytest.fixture
def one_hole_ladder(one_hole_spec):
    """Unit-step ladder from R0 = 2."""
    return build_ladder(one_hole_spec.profile, one_hole_spec.R0, 4)


@pytest.fixture
def draining(one_hole_spec, one_hole_ladder):
    """Extension of a unit flux out of the hole."""
    boundary = BoundaryData(hole_fluxes=(1.0,))
    return assemble_extension(boundary, one_hole_spec, epsilon=0.2, ladder=one_hole_ladder)


@pytest.fixture
def settings():
    """Coarse solver settings."""
    return SolveConfig(nu=1.0, epsilon=0.2, mesh_size=0.25, levels=2)


class TestForceField:
    """Test body forces."""

    def test_bump_is_symmetric(self):
        """Test that the bump force passes the parity check."""
        force = ForceField("bump", amplitude=2.0, center=1.0, radius=0.5)
        pts = np.random.default_rng(0).uniform(0.0, 2.0, (50, 2))
        assert force.check_symmetry(pts) <= 1e-12
        assert not force.is_zero

    def test_asymmetric_function_rejected(self):
        """Test that f1 odd in x2 violates the symmetry hypothesis."""
        force = ForceField("function", function=lambda p: np.stack([p[:, 1], 0 * p[:, 0]], axis=1))
        pts = np.array([[1.0, 0.5], [2.0, 0.3]])
        with pytest.raises(HypothesisError, match="not symmetric"):
            force.check_symmetry(pts)

    def test_function_needs_callable(self):
        """Test that kind 'function' requires a callable."""
        with pytest.raises(PreconditionError):
            ForceField("function")

    def test_scaled(self):
        """Test that scaling multiplies the values."""
        force = ForceField("bump", amplitude=1.0, center=0.0, radius=1.0)
        pts = np.array([[0.2, 0.1]])
        assert np.allclose(force.scaled(3.0).evaluate(pts), 3.0 * force.evaluate(pts))


class TestSolveConfig:
    """Test solver settings validation."""

    def test_homotopy_must_end_at_one(self):
        """Test that the homotopy ladder must reach 1."""
        with pytest.raises(PreconditionError, match="homotopy"):
            SolveConfig(homotopy=(0.0, 0.5))

    def test_positive_viscosity(self):
        """Test that nu must be positive."""
        with pytest.raises(PreconditionError):
            SolveConfig(nu=0.0)

    def test_from_config(self, channel_config_data):
        """Test that settings are read from a run configuration."""
        settings = SolveConfig.from_config(parse_config(channel_config_data))
        assert settings.epsilon == 0.2
        assert settings.levels == 2
        assert settings.homotopy[-1] == 1.0


class TestHomotopySolve:
    """Test one truncated problem."""

    def test_lambda_range(self, one_hole_spec, one_hole_ladder, draining, settings):
        """Test that lam outside [0, 1] is rejected."""
        problem = LevelProblem.build(one_hole_spec, one_hole_ladder, 1, draining, ForceField(),
                                     settings)
        with pytest.raises(PreconditionError):
            assemble_system(problem, 1.5, DiscreteField.zeros(problem.space))

    def test_zero_data_zero_solution(self, channel_spec, channel_ladder, settings):
        """Test that A = 0 and f = 0 give v = 0."""
        problem = LevelProblem.build(channel_spec, channel_ladder, 1, ZeroField(), ForceField(),
                                     settings)
        result = homotopy_solve(problem, settings)
        assert result.dirichlet == 0.0
        assert np.allclose(result.field.coeffs, 0.0)
        assert [r.lam for r in result.records] == list(settings.homotopy)

    def test_energy_identity(self, one_hole_spec, one_hole_ladder, draining, settings):
        """Test nu |grad v|^2 = right-hand side terms to 1e-8 at every lam."""
        problem = LevelProblem.build(one_hole_spec, one_hole_ladder, 1, draining, ForceField(),
                                     settings)
        result = homotopy_solve(problem, settings)
        assert result.energy_residual <= 1e-8
        assert result.dirichlet > 0.0
        balance = energy_balance(problem, 1.0, result.field.free_coefficients())
        assert balance.residual <= 1e-8
        assert result.field.divergence_norm() <= 1e-10

    def test_with_force(self, channel_spec, channel_ladder, settings):
        """Test that a bump force alone drives a nonzero symmetric solution."""
        force = ForceField("bump", amplitude=1.0, center=1.0, radius=0.5)
        problem = LevelProblem.build(channel_spec, channel_ladder, 1, ZeroField(), force, settings)
        result = homotopy_solve(problem, settings)
        assert result.dirichlet > 0.0
        assert result.energy_residual <= 1e-8
        pts = np.array([[1.0, 0.4], [1.5, 0.7]])
        up = result.field.evaluate(pts)
        down = result.field.evaluate(pts * np.array([1.0, -1.0]))
        assert np.allclose(up[:, 0], down[:, 0])
        assert np.allclose(up[:, 1], -down[:, 1])

    def test_nonconvergence_diagnostics(self, one_hole_spec, one_hole_ladder, draining):
        """Test that an exhausted Picard budget reports the failing parameter."""
        settings = SolveConfig(nu=1.0, epsilon=0.2, picard_max_iter=1, picard_tol=1e-300,
                               max_halvings=1)
        problem = LevelProblem.build(one_hole_spec, one_hole_ladder, 1, draining, ForceField(),
                                     settings)
        with pytest.raises(NonConvergenceError) as exc_info:
            homotopy_solve(problem, settings, ladder=(1.0,))
        assert exc_info.value.diagnostics["level"] == 1
        assert exc_info.value.exit_code == 3

    def test_apriori_constant(self):
        """Test the ratio |grad v|^2 / (|a|^2 + |a|^4 + |f|_*^2)."""
        records = [LambdaRecord(0.5, 3, 1e-12, 0.0, 1.0), LambdaRecord(1.0, 3, 1e-12, 0.0, 4.0)]
        result = HomotopyResult(field=None, records=records)
        assert result.apriori_constant(1.0, 0.0) == pytest.approx(2.0)
        assert result.apriori_constant(0.0, 0.0) == 0.0


class TestPoiseuille:
    """Test the manufactured channel solution."""

    def test_single_mesh(self):
        """Test a small error and an exact energy balance on one mesh."""
        case = poiseuille_benchmark(0.25)
        assert case.l2_error < 1e-2
        assert case.energy_residual <= 1e-8

    @pytest.mark.slow
    def test_convergence_order(self):
        """Test that the L2 error converges at order 3 within 0.5."""
        study = poiseuille_convergence((0.5, 0.25, 0.125))
        assert all(order >= 2.5 for order in study.orders)


class TestInvade:
    """Test the invading-domain continuation."""

    def test_levels(self, one_hole_spec, one_hole_ladder, draining, settings):
        """Test level records, monotone profiles and level differences."""
        state = invade(one_hole_spec, one_hole_ladder, draining, ForceField(), settings)
        assert [lv.level for lv in state.levels] == [1, 2]
        assert state.y.shape == (3,)
        assert np.all(np.diff(state.y) >= -1e-12)
        assert len(state.differences) == 1
        assert state.last.tail(0) == pytest.approx(state.y[2] - state.y[0])
        report = state.to_dict()
        assert report["levels"][0]["difference"] is None

    def test_too_many_levels(self, one_hole_spec, one_hole_ladder, draining, settings):
        """Test that the ladder bounds the number of levels."""
        with pytest.raises(PreconditionError):
            invade(one_hole_spec, one_hole_ladder, draining, ForceField(), settings, levels=9)


class TestDualNorm:
    """Test the weighted force norm."""

    def test_zero_force(self, channel_spec, channel_ladder):
        """Test |f|_* = 0 without force."""
        report = f_star(ForceField(), channel_spec, channel_ladder, 3, 0.25)
        assert report.f_star == 0.0
        assert report.values == [0.0, 0.0, 0.0]

    def test_bump_force(self, channel_spec, channel_ladder):
        """Test positive weighted norms with weights (1 + I_k)^(-1/2)."""
        force = ForceField("bump", amplitude=1.0, center=1.0, radius=0.5)
        report = f_star(force, channel_spec, channel_ladder, 2, 0.25)
        assert all(v > 0.0 for v in report.values)
        assert report.weights == pytest.approx([1.0 / np.sqrt(2.0), 1.0 / np.sqrt(3.0)], rel=1e-6)
        assert report.argmax in (1, 2)
        assert report.f_star == pytest.approx(max(report.weighted))


class TestEpsilonChoice:
    """Test the Leray-Hopf driven choice of epsilon."""

    def test_zero_datum_takes_largest(self, one_hole_spec, one_hole_ladder):
        """Test that a zero datum passes at the largest candidate."""
        choice = choose_epsilon(one_hole_spec, BoundaryData(hole_fluxes=(0.0,)), one_hole_ladder,
                                1.0, [0.05, 0.2, 0.1], trials=20)
        assert choice.epsilon == 0.2
        assert not choice.fallback

    def test_needs_candidates(self, one_hole_spec, one_hole_ladder):
        """Test that an empty candidate list is rejected."""
        with pytest.raises(PreconditionError):
            choose_epsilon(one_hole_spec, BoundaryData(hole_fluxes=(1.0,)), one_hole_ladder, 1.0,
                           [])

    def test_run_setup_uses_configured_epsilon(self, channel_config_data):
        """Test that a configured epsilon skips the selection."""
        setup = RunSetup.from_config(parse_config(channel_config_data))
        assert setup.epsilon == 0.2
        assert setup.choice is None
        assert setup.ladder.K == 3
        assert mesh_truncation(setup.spec, setup.ladder, 1, 0.25).level == 1
