"""Tests for the sampled inequalities and the Saint-Venant ledger."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from outflux.estimates import (
    CellQuadrature,
    CellTrial,
    ClaimReport,
    EstimateLedger,
    HardyTrial,
    MeasuredConstants,
    Rectangle,
    admissibility,
    equality_sequence,
    fit_recursion_constants,
    growth_bound_check,
    hardy_check,
    hardy_ratio,
    l4_check,
    poincare_check,
    poincare_ratio,
    profile_saturated,
    q_sequence,
    rectangle_rayleigh,
    saint_venant_claim,
    uniformity_table,
)
from outflux.exceptions import PreconditionError
from outflux.geometry import OutletProfile, build_ladder


class TestHardy:
    """Test the Hardy inequality on rectangles."""

    def test_bottom_constant(self):
        """Test that the fitted constant stays below 4 and is reached by the flattest trial."""
        report = hardy_check(Rectangle(2.0, 1.0), "bottom", trials=20)
        assert report.constant < 4.0
        assert report.constant == pytest.approx(1.0 / 0.55**2, rel=0.05)
        assert report.stable
        assert len(report.ratios) == 20

    @pytest.mark.parametrize("subset", ["bottom", "all"])
    def test_dilation_invariant(self, subset):
        """Test that the fitted constant does not change when the rectangle is scaled."""
        report = hardy_check(Rectangle(1.5, 1.0), subset, trials=20)
        assert report.extra["dilation"] == pytest.approx(report.constant, rel=1e-8)

    def test_trial_scaling(self):
        """Test that the ratio is homogeneous of degree zero in the trial."""
        region = Rectangle(1.0, 1.0)
        trial = HardyTrial(0.8, amplitude=0.3, mode=2)
        assert hardy_ratio(region, trial.scaled(7.0), "all") == pytest.approx(
            hardy_ratio(region, trial, "all"), rel=1e-12
        )

    def test_needs_trials(self):
        """Test that fewer than 20 trials are rejected."""
        with pytest.raises(PreconditionError, match="at least 20"):
            hardy_check(Rectangle(1.0, 1.0), trials=5)


class TestCellInequalities:
    """Test the Poincare and L4 inequalities on ladder cells."""

    def test_first_mode_rayleigh(self, channel_ladder):
        """Test the product sine against the exact first Dirichlet eigenvalue."""
        report = poincare_check(channel_ladder, 1, trials=20)
        a, b = channel_ladder.cell(1)
        exact = rectangle_rayleigh(b - a, 2.0 * channel_ladder.g_at(1))
        assert report.extra["first_mode"] == pytest.approx(exact, rel=0.05)
        assert report.constant >= report.extra["first_mode"]
        assert report.region == "omega_1"

    def test_poincare_trial_scaling(self, paraboloid_ladder):
        """Test that scaling the trial leaves the ratio unchanged."""
        quad = CellQuadrature.build(paraboloid_ladder, 3)
        trial = CellTrial(2, 1, 0.3, vanish_x=False)
        g_ref = paraboloid_ladder.g_at(3)
        assert poincare_ratio(quad, trial.scaled(0.1), g_ref) == pytest.approx(
            poincare_ratio(quad, trial, g_ref), rel=1e-12
        )

    def test_l4_chain(self, paraboloid_ladder):
        """Test that the direct L4 ratio never exceeds the chained bound."""
        report = l4_check(paraboloid_ladder, 2, trials=20)
        assert report.extra["chain_ok"] == 1.0
        assert 0.0 < report.constant <= report.extra["chained_max"]

    def test_poincare_needs_trials(self, channel_ladder):
        """Test the minimum trial count."""
        with pytest.raises(PreconditionError):
            poincare_check(channel_ladder, 0, trials=19)

    def test_uniform_in_channel(self, channel_ladder):
        """Test that congruent channel cells give identical constants."""
        table = uniformity_table("poincare", channel_ladder, [0, 2, 4], trials=20)
        assert table.spread == pytest.approx(1.0, rel=1e-9)
        assert table.uniform
        assert set(table.to_dict()["per_k"]) == {"0", "2", "4"}

    def test_uniform_on_paraboloid(self, paraboloid_ladder):
        """Test bounded variation of the L4 constant across cells."""
        serial = uniformity_table("l4", paraboloid_ladder, [0, 3, 6], trials=20, workers=1)
        pooled = uniformity_table("l4", paraboloid_ladder, [0, 3, 6], trials=20, workers=3)
        assert serial.uniform
        assert serial.constants == pooled.constants


class TestQSequence:
    """Test Q_k and its admissibility."""

    def test_channel_values(self, channel_ladder):
        """Test Q_k = 2c (1 + k) in the channel where I_k = k."""
        q = q_sequence(1.0, 0.0, channel_ladder)
        assert q.c == pytest.approx(2.0)
        assert np.allclose(q.values, 4.0 * (1.0 + np.arange(7)), rtol=1e-8)
        assert np.allclose(q.increments, 4.0, rtol=1e-8)

    def test_force_enters_c(self, channel_ladder):
        """Test c = c_fit (|a|^2 + |a|^4 + |f|_*^2)."""
        q = q_sequence(0.0, 2.0, channel_ladder, c_fit=0.5)
        assert q.c == pytest.approx(2.0)

    def test_admissible_everywhere(self, channel_ladder):
        """Test small constants admit Q from k = 0."""
        q = q_sequence(1.0, 0.0, channel_ladder)
        report = admissibility(q, channel_ladder, 0.1, 0.01)
        assert all(report.holds)
        assert report.k0 == 0
        assert np.allclose(report.cell_ratios, 1.0 / (2.0 + np.arange(6)), rtol=1e-8)

    def test_admissible_from_k0(self, channel_ladder):
        """Test 2 (1 + k) >= 4.08 from k = 2 on."""
        q = q_sequence(1.0, 0.0, channel_ladder)
        report = admissibility(q, channel_ladder, 1.0, 0.01)
        assert report.holds[:2] == [False, False]
        assert report.k0 == 2
        assert report.to_dict()["k0"] == 2

    def test_inadmissible(self, channel_ladder, log_capture):
        """Test that failure at the end of the ladder leaves no k0."""
        q = q_sequence(1.0, 0.0, channel_ladder)
        report = admissibility(q, channel_ladder, 100.0, 0.0)
        assert report.k0 is None
        assert "too aggressive" in log_capture.text

    def test_k0_nondecreasing_in_c(self, channel_ladder):
        """Test that raising c_fit never lowers k0 when c_** > 0.

        In the channel the inequality at k reads k >= 0.01 * 2^(3/2) * sqrt(c),
        so k0 climbs from 1 and leaves the ladder for large c.
        """
        K = channel_ladder.K
        k0s = []
        for c_fit in np.geomspace(0.1, 1e5, 25):
            q = q_sequence(1.0, 0.0, channel_ladder, c_fit=float(c_fit))
            k0 = admissibility(q, channel_ladder, 0.5, 0.01).k0
            k0s.append(K if k0 is None else k0)
        assert all(a <= b for a, b in zip(k0s, k0s[1:]))
        assert k0s[0] == 1
        assert k0s[-1] == K

    @given(
        c_fit=st.floats(min_value=0.01, max_value=1e4),
        factor=st.floats(min_value=1.0, max_value=100.0),
    )
    def test_k0_order_pairs(self, c_fit, factor):
        """Test k0(c) <= k0(factor * c) for factor >= 1."""
        ladder = build_ladder(OutletProfile(kind="constant", scale=1.0), 2.0, 6)

        def k0(c):
            found = admissibility(q_sequence(1.0, 0.0, ladder, c_fit=c), ladder, 0.3, 0.05).k0
            return ladder.K if found is None else found

        assert k0(c_fit) <= k0(c_fit * factor)

    def test_k0_constant_without_c2star(self, channel_ladder):
        """Test that k0 does not move with c_fit when c_** = 0."""
        k0s = {
            admissibility(q_sequence(1.0, 0.0, channel_ladder, c_fit=float(c)), channel_ladder,
                          0.8, 0.0).k0
            for c in np.geomspace(0.01, 1e4, 13)
        }
        assert k0s == {1}


class TestSaintVenantClaim:
    """Test the backward induction."""

    def test_all_hold(self):
        """Test a sequence below Q everywhere."""
        report = saint_venant_claim([1.0, 2.0, 3.0], [5.0, 5.0, 5.0], 0.1, 0.0, [1.0] * 3)
        assert report.verdict is True
        assert report.first_violation is None

    def test_violation_index(self):
        """Test that the highest violating index is reported."""
        report = saint_venant_claim([6.0, 6.0, 6.0, 6.0], [5.0, 7.0, 5.0, 7.0], 0.1, 0.0,
                                    [1.0] * 4)
        assert report.verdict is False
        assert report.holds == [False, True, False, True]
        assert report.first_violation == 2
        assert report.chain_break == 2
        assert report.disagreements == []

    def test_decreasing_y(self):
        """Test that a decreasing y is a failed hypothesis, not a verdict."""
        report = saint_venant_claim([2.0, 1.0], [5.0, 5.0], 0.1, 0.0, [1.0, 1.0])
        assert report.verdict is None
        assert "nondecreasing" in report.hypothesis_failures[0]

    def test_top_exceeds(self):
        """Test that y_N > Q_N is a failed hypothesis."""
        report = saint_venant_claim([1.0, 6.0], [5.0, 5.0], 0.1, 0.0, [1.0, 1.0])
        assert report.verdict is None
        assert "exceeds" in report.to_dict()["hypothesis_failures"][0]

    def test_length_mismatch(self):
        """Test that sequences of different lengths are refused."""
        report = saint_venant_claim([1.0], [1.0, 2.0], 0.1, 0.0, [1.0])
        assert report.verdict is None

    def test_equality_sequence_admissible(self):
        """Test Q_k = 2^k with c_* = 1/4: equality in the recursion stays below Q."""
        n = 8
        Q = 2.0 ** np.arange(n)
        gR = np.ones(n)
        y = equality_sequence(Q, 0.25, 0.0, gR, Q[-1])
        expected = np.zeros(n)
        expected[-1] = Q[-1]
        for k in range(n - 2, -1, -1):
            expected[k] = (0.25 * expected[k + 1] + 0.5 * Q[k]) / 1.25
        assert np.allclose(y, expected, rtol=1e-12)
        report = saint_venant_claim(y, Q, 0.25, 0.0, gR)
        assert report.verdict is True
        assert all(report.implied)

    def test_equality_sequence_inadmissible(self):
        """Test Q_k = 2^k with c_* = 1: the step below the top is flagged."""
        n = 6
        Q = 2.0 ** np.arange(n)
        gR = np.ones(n)
        y = equality_sequence(Q, 1.0, 0.0, gR, Q[-1])
        assert y[-2] == pytest.approx(2.0 ** (n - 2) + 2.0 ** (n - 4))
        report = saint_venant_claim(y, Q, 1.0, 0.0, gR)
        assert report.verdict is False
        assert report.first_violation == n - 2
        assert report.holds == [bool(a <= b) for a, b in zip(y, Q)]

    def test_random_admissible_instances(self):
        """Test random instances meeting the recursion and admissibility against a direct check.

        Q is built forward with each step admissible and y is the equality
        sequence below Q_N, so the induction must reach k = 0.
        """
        for seed in range(200):
            rng = np.random.default_rng(seed)
            n = int(rng.integers(3, 12))
            gR = rng.uniform(0.5, 2.0, n)
            c_star = float(rng.uniform(0.05, 1.0))
            c_2star = float(rng.uniform(0.0, 1.0))
            Q = np.zeros(n)
            Q[0] = rng.uniform(0.1, 1.0)
            for k in range(n - 1):
                step = 0.25 * Q[k] / c_star
                if c_2star > 0.0:
                    step = min(step, (0.25 * Q[k] / (c_2star * gR[k])) ** (2.0 / 3.0))
                Q[k + 1] = Q[k] + step * rng.uniform(0.0, 1.0)
            y = equality_sequence(Q, c_star, c_2star, gR, float(rng.uniform(0.0, 1.0)) * Q[-1])
            report = saint_venant_claim(y, Q, c_star, c_2star, gR)
            assert all(report.admissible)
            assert all(report.recursion)
            assert report.verdict is True
            assert report.chain_break is None
            assert report.disagreements == []
            assert np.all(y <= Q * (1.0 + 1e-8))

    def test_random_instances_sound(self):
        """Test that every index the induction reaches also passes the direct comparison."""
        for seed in range(100):
            rng = np.random.default_rng(seed)
            n = int(rng.integers(3, 12))
            Q = np.cumsum(rng.uniform(0.1, 1.0, n))
            gR = rng.uniform(0.5, 2.0, n)
            c_star, c_2star = rng.uniform(0.0, 1.0, 2)
            y = np.sort(rng.uniform(0.0, Q[-1], n))
            report = saint_venant_claim(y, Q, c_star, c_2star, gR)
            assert report.verdict is not None
            assert report.holds == [bool(a <= b) for a, b in zip(y, Q)]
            assert report.disagreements == []
            if report.verdict:
                assert np.all(y <= Q * (1.0 + 1e-8))

    def test_chain_break_with_violation(self):
        """Test that an inadmissible step stops the induction where y then exceeds Q."""
        Q = np.array([1.0, 2.0, 3.0, 30.0, 31.0, 32.0])
        gR = np.ones(6)
        y = equality_sequence(Q, 0.25, 0.0, gR, Q[-1])
        report = saint_venant_claim(y, Q, 0.25, 0.0, gR)
        assert report.admissible == [True, True, False, True, True]
        assert report.implied == [False, False, False, True, True, True]
        assert report.chain_break == 2
        assert report.first_violation == 2
        assert report.verdict is False

    def test_verdict_follows_induction(self):
        """Test that y below Q with a broken chain is not certified."""
        Q = np.array([1.0, 2.0, 3.0, 30.0, 31.0, 32.0])
        y = np.array([0.1, 0.2, 0.3, 0.4, 0.5, 32.0])
        report = saint_venant_claim(y, Q, 0.25, 0.0, np.ones(6))
        assert all(report.holds)
        assert all(report.recursion)
        assert report.first_violation is None
        assert report.chain_break == 2
        assert report.verdict is False
        assert report.to_dict()["chain_break"] == 2

    def test_disagreements_reported(self):
        """Test that an index reached by the induction but failing directly sinks the verdict."""
        report = ClaimReport(holds=[False, True, True], implied=[True, True, True])
        assert report.disagreements == [0]
        assert report.verdict is False
        assert report.to_dict()["disagreements"] == [0]


class TestGrowthBound:
    """Test the fitted growth constant."""

    def test_two_profiles(self, channel_ladder):
        """Test c_hat per profile and their spread."""
        k = np.arange(4)
        report = growth_bound_check({"a": 2.0 * (1.0 + k), "b": 3.0 * (1.0 + k)}, channel_ladder)
        assert report.constants["a"] == pytest.approx(2.0, rel=1e-8)
        assert report.constants["b"] == pytest.approx(3.0, rel=1e-8)
        assert report.spread == pytest.approx(1.5, rel=1e-8)
        assert report.stable
        assert report.saturated == {"a": False, "b": False}

    def test_saturated(self):
        """Test decreasing increments with a small last step."""
        assert profile_saturated(np.array([1.0, 1.5, 1.6, 1.61]))
        assert not profile_saturated(np.array([1.0, 1.1, 1.5]))
        assert profile_saturated(np.zeros(3))


class TestRecursionConstants:
    """Test the chain from measured constants to c_* and c_**."""

    def test_values(self):
        """Test C_U = 2 and the denominator 0.65."""
        measured = MeasuredConstants(nu=1.0, bogovskii=1.0, poincare=0.25, l4=1.0, cutoff=1.0,
                                     leray_hopf=0.1, quadratic=0.04)
        constants = fit_recursion_constants(measured)
        assert constants.valid
        assert constants.denominator == pytest.approx(0.65)
        assert constants.c_star == pytest.approx(3.85 / 0.65)
        assert constants.c_2star == pytest.approx(6.0 / 0.65)

    def test_viscosity_too_small(self, log_capture):
        """Test that a Leray-Hopf statistic above nu invalidates the constants."""
        measured = MeasuredConstants(nu=1.0, bogovskii=1.0, poincare=0.25, l4=1.0, cutoff=1.0,
                                     leray_hopf=1.0, quadratic=0.04)
        constants = fit_recursion_constants(measured)
        assert not constants.valid
        assert math.isinf(constants.c_star)
        assert "denominator" in log_capture.text


class TestEstimateLedger:
    """Test the ledger container."""

    def test_to_dict(self):
        """Test the serialized ledger."""
        constants = fit_recursion_constants(
            MeasuredConstants(1.0, 1.0, 0.25, 1.0, 1.0, 0.1, 0.04)
        )
        ledger = EstimateLedger(np.array([0.0, 1.0]), np.array([2.0, 4.0]), 1.0, constants,
                                {"claim": True})
        data = ledger.to_dict()
        assert data["y"] == [0.0, 1.0]
        assert data["constants"]["valid"] is True
        assert data["verdicts"] == {"claim": True}

    def test_decreasing_y_rejected(self):
        """Test that a decreasing Dirichlet profile is refused."""
        constants = fit_recursion_constants(
            MeasuredConstants(1.0, 1.0, 0.25, 1.0, 1.0, 0.1, 0.04)
        )
        with pytest.raises(PreconditionError, match="nondecreasing"):
            EstimateLedger(np.array([2.0, 1.0]), np.array([2.0, 4.0]), 1.0, constants)
