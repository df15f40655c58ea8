"""Tests for the symmetric solenoidal extension of boundary data."""

import math

import numpy as np
import pytest

from outflux.cutoffs import OutletCutoff
from outflux.exceptions import GeometryError, PreconditionError
from outflux.extension import (
    BoundaryData,
    EllipseCollar,
    LerayHopfStatistic,
    SamplingRegion,
    StripSpec,
    assemble_extension,
    carrier_outlet,
    carrier_strip,
    corrector,
    leray_hopf_ratio,
    leray_hopf_trend,
    outlet_decay_check,
    trial_field,
)
from outflux.fields import ZeroField, hole_flux, mirror
from outflux.geometry import DomainSpec, Hole, build_ladder


@pytest.fixture
def one_hole_spec(channel_profile):
    """Channel with one circular hole of radius 0.4 at x1 = 1."""
    return DomainSpec(channel_profile, R0=2.0, gamma=0.5, outlet="out",
                      holes=(Hole(1.0, 0.4, 0.4),))


@pytest.fixture
def one_hole_ladder(one_hole_spec):
    """Unit-step ladder from R0 = 2."""
    return build_ladder(one_hole_spec.profile, one_hole_spec.R0, 6)


@pytest.fixture
def draining(one_hole_spec, one_hole_ladder):
    """Extension of a unit flux out of the hole."""
    boundary = BoundaryData(hole_fluxes=(1.0,))
    return assemble_extension(boundary, one_hole_spec, epsilon=0.2, ladder=one_hole_ladder)


def interior_points(spec, x_max, count=300, seed=4):
    """Random points of the domain left of x_max."""
    rng = np.random.default_rng(seed)
    pts = np.stack([rng.uniform(spec.x_left, x_max, 4 * count),
                    rng.uniform(-1.0, 1.0, 4 * count)], axis=1)
    return pts[spec.contains(pts)][:count]


class TestBoundaryData:
    """Test the boundary datum."""

    def test_fluxes_and_size(self):
        """Test the flux dictionary, the total and the Euclidean size."""
        data = BoundaryData(outer_flux=-0.5, hole_fluxes=(2.0, -0.5), swirl=(0.0, 0.0))
        assert data.fluxes() == {"outer": -0.5, "hole1": 2.0, "hole2": -0.5}
        assert data.total_flux == pytest.approx(1.0)
        assert data.size == pytest.approx(np.sqrt(4.5))
        assert not data.is_zero

    def test_hole_count_mismatch(self, one_hole_spec):
        """Test that fluxes must match the holes."""
        with pytest.raises(PreconditionError):
            BoundaryData(hole_fluxes=(1.0, 2.0)).validate(one_hole_spec)

    def test_hole_trace_flux(self, one_hole_spec):
        """Test that the hole trace carries its prescribed flux."""
        data = BoundaryData(hole_fluxes=(1.5,), swirl=(0.3,))

        class Trace:
            def evaluate(self, points):
                return data.trace(one_hole_spec, "hole1", points)

            def jacobian(self, points):
                return np.zeros((points.shape[0], 2, 2))

        assert hole_flux(Trace(), one_hole_spec.holes[0]) == pytest.approx(1.5, rel=1e-10)


class TestCarriers:
    """Test the strip and outlet carriers."""

    def test_outlet_carrier_crossing(self, one_hole_spec):
        """Test that a drain curve above the last hole is rejected."""
        cutoff = OutletCutoff(one_hole_spec.profile, gamma=2.0, epsilon=0.2, x_min=1.0)
        with pytest.raises(GeometryError, match="decrease gamma"):
            carrier_outlet(cutoff, 1.0, one_hole_spec)

    def test_outlet_carrier_hole_flux(self, one_hole_spec):
        """Test that b_inf takes the flux F out of the last hole."""
        cutoff = OutletCutoff(one_hole_spec.profile, gamma=0.5, epsilon=0.2, x_min=1.0)
        term = carrier_outlet(cutoff, 1.0, one_hole_spec)
        assert hole_flux(term.field, one_hole_spec.holes[0]) == pytest.approx(1.0, abs=1e-6)

    def test_strip_carrier_fluxes(self, two_hole_spec):
        """Test that b_0 moves its flux from the outer wall to the last hole only."""
        strips = StripSpec.auto(two_hole_spec)
        strips.validate(two_hole_spec)
        term = carrier_strip(strips, 0, 1.0, 0.2)
        first, last = two_hole_spec.holes
        assert hole_flux(term.field, first) == pytest.approx(0.0, abs=1e-7)
        assert hole_flux(term.field, last) == pytest.approx(-1.0, abs=1e-6)

    def test_strip_carrier_vanishes_on_edges(self, two_hole_spec):
        """Test that b_i vanishes on the strip edges x2 = +-delta."""
        strips = StripSpec.auto(two_hole_spec)
        term = carrier_strip(strips, 1, 1.0, 0.2)
        xs = np.linspace(*strips.corridor(1), 25)
        edges = np.concatenate([np.stack([xs, np.full(25, strips.delta)], axis=1),
                                np.stack([xs, np.full(25, -strips.delta)], axis=1)])
        assert np.allclose(term.field.evaluate(edges), 0.0)

    def test_strip_index_range(self, two_hole_spec):
        """Test that the last hole has no strip carrier."""
        strips = StripSpec.auto(two_hole_spec)
        with pytest.raises(PreconditionError):
            carrier_strip(strips, 2, 1.0, 0.2)

    def test_strips_need_holes(self, channel_spec):
        """Test that strips are undefined without holes."""
        with pytest.raises(PreconditionError):
            StripSpec.auto(channel_spec)

    def test_outlet_decay(self, draining, one_hole_ladder):
        """Test that |b_inf| g and |grad b_inf| g^2 stay bounded under sample doubling."""
        term = draining.terms_of("carrier_outlet")[0]
        cutoff = term.field.cutoff
        report = outlet_decay_check(term, cutoff, one_hole_ladder, cells=5, samples=200)
        assert report.stable
        assert report.sup_value > 0.0


class TestCorrector:
    """Test the Hopf-collar correctors."""

    def test_zero_residual(self):
        """Test that a zero residual gives the zero field."""
        collar = EllipseCollar(Hole(1.0, 0.4, 0.4), 0.2)
        term = corrector(lambda p: np.zeros((p.shape[0], 2)), collar, 0.2, "E_hole1")
        assert isinstance(term.field, ZeroField)

    def test_residual_with_flux(self):
        """Test that a residual with net flux is refused."""
        hole = Hole(1.0, 0.4, 0.4)
        collar = EllipseCollar(hole, 0.2)

        def radial(points):
            d = points - np.array([1.0, 0.0])
            return d / np.linalg.norm(d, axis=1)[:, None]

        with pytest.raises(PreconditionError, match="flux"):
            corrector(radial, collar, 0.2, "E_hole1")

    def test_tangential_trace_reproduced(self):
        """Test that a zero-flux tangential trace on a circle is matched on the curve."""
        hole = Hole(1.0, 0.4, 0.4)
        collar = EllipseCollar(hole, 0.2)

        def swirl(points):
            d = points - np.array([1.0, 0.0])
            theta = np.arctan2(d[:, 1], d[:, 0])
            return (np.sin(theta) / 0.4)[:, None] * np.stack([-d[:, 1], d[:, 0]], axis=1)

        term = corrector(swirl, collar, 0.2, "E_hole1")
        thetas = np.linspace(0.1, 6.2, 40)
        pts = hole.point(thetas)
        assert np.allclose(term.field.evaluate(pts), swirl(pts), atol=1e-4)
        far = np.array([[1.0, 0.9], [2.0, 0.0]])
        assert np.allclose(term.field.evaluate(far), 0.0)


class TestAssembleExtension:
    """Test the assembled extension A = B0 + B_inf."""

    def test_zero_datum(self, one_hole_spec):
        """Test that a = 0 gives A = 0."""
        ext = assemble_extension(BoundaryData(hole_fluxes=(0.0,)), one_hole_spec)
        assert ext.terms == []
        pts = interior_points(one_hole_spec, 4.0, 20)
        assert np.allclose(ext.evaluate(pts), 0.0)

    def test_ledger_balanced(self, draining):
        """Test that every component receives its flux and every section carries -F."""
        ledger = draining.ledger
        assert ledger.balanced(1e-6)
        assert ledger.totals["hole1"] == pytest.approx(1.0, abs=1e-6)
        assert ledger.totals["outer"] == pytest.approx(0.0, abs=1e-6)
        assert len(ledger.sections) == 6
        for value in ledger.sections.values():
            assert value == pytest.approx(-1.0, abs=1e-6)

    def test_divergence_free_and_symmetric(self, draining, one_hole_spec):
        """Test trace-free Jacobians and (even, odd) parity at interior points."""
        pts = interior_points(one_hole_spec, 5.0)
        J = draining.jacobian(pts)
        scale = max(1.0, float(np.abs(J).max()))
        assert np.max(np.abs(J[:, 0, 0] + J[:, 1, 1])) <= 1e-10 * scale
        up = draining.evaluate(pts)
        down = draining.evaluate(mirror(pts))
        assert np.allclose(up[:, 0], down[:, 0])
        assert np.allclose(up[:, 1], -down[:, 1])

    def test_trace_error(self, draining):
        """Test that A matches the datum on every boundary component."""
        errors = draining.trace_error()
        assert set(errors) == {"outer", "hole1"}
        assert max(errors.values()) < 1e-2

    def test_two_holes(self, two_hole_spec):
        """Test the section flux with fluxes on the outer wall and both holes."""
        ladder = build_ladder(two_hole_spec.profile, two_hole_spec.R0, 3)
        boundary = BoundaryData(outer_flux=-0.5, hole_fluxes=(2.0, -0.5))
        ext = assemble_extension(boundary, two_hole_spec, epsilon=0.2, ladder=ladder)
        kinds = sorted({term.kind for term in ext.terms})
        assert "carrier_strip" in kinds and "carrier_outlet" in kinds
        for value in ext.ledger.sections.values():
            assert value == pytest.approx(-1.0, abs=1e-6)
        assert ext.ledger.balanced(1e-6)


class TestLerayHopf:
    """Test the sampled Leray-Hopf statistic."""

    def test_needs_trials(self, draining, one_hole_spec, one_hole_ladder):
        """Test that fewer than 20 trials are rejected."""
        region = SamplingRegion.truncation(one_hole_spec, one_hole_ladder, 1)
        with pytest.raises(PreconditionError):
            leray_hopf_ratio(draining, one_hole_spec, region, trials=10)

    def test_zero_field(self, one_hole_spec, one_hole_ladder):
        """Test that A = 0 gives ratio 0."""
        region = SamplingRegion.cell(one_hole_ladder, 0)
        stat = leray_hopf_ratio(ZeroField(), one_hole_spec, region, trials=20)
        assert stat.max_ratio == 0.0
        assert stat.quadratic_max == 0.0
        assert stat.region == "omega_0"

    def test_independent_of_workers(self, draining, one_hole_spec, one_hole_ladder):
        """Test that the statistic does not depend on the thread count."""
        region = SamplingRegion.truncation(one_hole_spec, one_hole_ladder, 1)
        serial = leray_hopf_ratio(draining, one_hole_spec, region, trials=20, seed=3, workers=1)
        pooled = leray_hopf_ratio(draining, one_hole_spec, region, trials=20, seed=3, workers=4)
        assert serial == pooled
        assert serial.to_dict()["trials"] + serial.skipped == 20

    def test_epsilon_sweep(self, one_hole_spec, one_hole_ladder):
        """Test that the statistic falls strictly with eps and stays proportional to eps."""
        region = SamplingRegion.truncation(one_hole_spec, one_hole_ladder, 1)
        boundary = BoundaryData(hole_fluxes=(1.0,))
        stats = []
        for epsilon in (0.2, 0.1, 0.05):
            ext = assemble_extension(boundary, one_hole_spec, epsilon=epsilon,
                                     ladder=one_hole_ladder)
            stats.append(leray_hopf_ratio(ext, one_hole_spec, region, trials=24,
                                          epsilon=epsilon, seed=5))
        values = [s.max_ratio for s in stats]
        assert values[0] > values[1] > values[2] > 0.0
        scaled = [s.max_ratio / s.epsilon for s in stats]
        assert max(scaled) <= 3.0 * min(scaled)
        trend = leray_hopf_trend(stats)
        assert trend.monotone is True
        assert trend.scaling is True

    def test_cells_uniform(self, draining, one_hole_spec, one_hole_ladder):
        """Test that the statistic over the cells omega_0..omega_5 stays within a factor 3."""
        per_cell = [
            leray_hopf_ratio(draining, one_hole_spec, SamplingRegion.cell(one_hole_ladder, k),
                             trials=20, epsilon=0.2, seed=5)
            for k in range(6)
        ]
        values = [s.max_ratio for s in per_cell]
        assert min(values) > 0.0
        assert max(values) <= 3.0 * min(values)
        assert leray_hopf_trend([], per_cell).uniform is True


class TestTrialFamily:
    """Test the trial fields behind the Leray-Hopf statistic."""

    def test_shared_across_epsilon(self, one_hole_spec, one_hole_ladder):
        """Test that axis trials keep their center and layer depth when eps changes."""
        region = SamplingRegion.truncation(one_hole_spec, one_hole_ladder, 1)
        n_axis = 18
        for i in range(n_axis):
            coarse = trial_field(one_hole_spec, region, i, 24, 0.2, seed=3)
            fine = trial_field(one_hole_spec, region, i, 24, 0.1, seed=3)
            assert coarse is not None and fine is not None
            assert coarse.center == fine.center
            assert coarse.center[1] == 0.0
            depth = np.log(coarse.radius / fine.radius) / (1.0 / 0.1 - 1.0 / 0.2)
            assert i / n_axis <= depth <= (i + 1) / n_axis

    def test_clear_of_hole_collar(self, one_hole_spec, one_hole_ladder):
        """Test that every trial support stays right of the hole collar and inside the region."""
        region = SamplingRegion.truncation(one_hole_spec, one_hole_ladder, 1)
        collar_end = 1.4 + 0.5 * one_hole_spec.hole_clearance(1)
        trials = [trial_field(one_hole_spec, region, i, 24, 0.2, seed=3) for i in range(24)]
        assert all(t is not None for t in trials)
        for trial in trials:
            reach = trial.radius * (1.0 + trial.bend)
            assert trial.center[0] - trial.radius > collar_end
            assert trial.center[0] + reach < region.x_max

    def test_off_axis_pairs(self, one_hole_spec, one_hole_ladder):
        """Test that the last quarter of the trials are unbent mirrored pairs."""
        region = SamplingRegion.cell(one_hole_ladder, 0)
        for i in range(18, 24):
            trial = trial_field(one_hole_spec, region, i, 24, 0.2, seed=3)
            if trial is None:
                continue
            assert trial.center[1] > trial.radius
            assert trial.bend == 0.0
            assert len(trial.centers) == 2


def _stat(epsilon, value, region="Omega_1"):
    return LerayHopfStatistic(region=region, epsilon=epsilon, max_ratio=value,
                              quadratic_max=0.0, ratios=(value,), skipped=0)


class TestLerayHopfTrend:
    """Test the epsilon and cell verdicts."""

    def test_proportional(self):
        """Test a statistic proportional to eps, given out of order."""
        trend = leray_hopf_trend([_stat(0.05, 0.1), _stat(0.2, 0.4), _stat(0.1, 0.2)])
        assert trend.epsilons == (0.2, 0.1, 0.05)
        assert trend.monotone is True
        assert trend.scaling is True
        assert trend.scaling_spread == pytest.approx(1.0)

    def test_growing(self, log_capture):
        """Test that a statistic rising as eps falls fails both verdicts and warns."""
        trend = leray_hopf_trend([_stat(0.2, 0.1), _stat(0.1, 0.2)])
        assert trend.monotone is False
        assert trend.scaling is False
        assert trend.scaling_spread == pytest.approx(4.0)
        assert "Leray-Hopf trend off" in log_capture.text

    def test_flat_fails_scaling_only(self):
        """Test that a strictly falling but nearly flat statistic fails the scaling verdict."""
        trend = leray_hopf_trend([_stat(0.4, 1.0), _stat(0.1, 0.9)])
        assert trend.monotone is True
        assert trend.scaling is False

    def test_nothing_to_compare(self):
        """Test that zero statistics and single entries give no verdict."""
        zero = leray_hopf_trend([_stat(0.2, 0.0), _stat(0.1, 0.0)])
        assert zero.to_dict()["leray_hopf_monotone"] is None
        assert zero.to_dict()["leray_hopf_scaling"] is None
        assert zero.to_dict()["leray_hopf_uniform"] is None
        assert leray_hopf_trend([_stat(0.2, 0.3)]).monotone is None

    def test_cells(self):
        """Test the cell verdict and the spread when only some cells vanish."""
        cells = [_stat(0.2, 1.0, "omega_0"), _stat(0.2, 1.5, "omega_1")]
        assert leray_hopf_trend([], cells).uniform is True
        broken = leray_hopf_trend([], [_stat(0.2, 1.0, "omega_0"), _stat(0.2, 0.0, "omega_1")])
        assert broken.cell_spread == math.inf
        assert broken.uniform is False
