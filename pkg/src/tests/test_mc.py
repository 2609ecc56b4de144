#!/usr/bin/env python3
# Tests for the Monte Carlo ensembles and their estimators
import math
from dataclasses import replace

import numpy as np
import pytest

from qsd_forge.errors import SimulationError
from qsd_forge.mc import (
    STREAM_BRIDGE_LEFT,
    STREAM_BRIDGE_RIGHT,
    CompactDensity,
    ConditionalHistogram,
    EmpiricalLaw,
    PointMass,
    SimConfig,
    _path_rng,
    estimate_a,
    estimate_akr,
    estimate_omega,
    estimate_omega_star,
    omega_bounds,
    restart_law,
    simulate_ensemble,
    wilson_interval,
)
from qsd_forge.model import UnitDiffusionModel


def within(value: float, expected: float, se: float, slack: float = 0.0) -> bool:
    return abs(value - expected) <= 4.0 * se + slack


@pytest.mark.unit
class TestInitialLaws:
    """Point masses, compact densities and empirical restarts."""

    def test_point_mass(self):
        rng = np.random.default_rng(1)
        assert np.all(PointMass(2.5).sample(rng, 4) == 2.5)

    def test_step_density_samples_inside_its_support(self):
        law = CompactDensity.normalized(np.array([0.0, 1.0, 2.0]), np.array([1.0, 1.0]), kind="step")
        draws = law.sample(np.random.default_rng(7), 20000)
        assert draws.min() >= 0.0 and draws.max() <= 2.0
        assert draws.mean() == pytest.approx(1.0, abs=0.03)

    def test_linear_density_cdf(self):
        law = CompactDensity(np.array([0.0, 1.0]), np.array([2.0, 0.0]))
        np.testing.assert_allclose(law.cdf(), [0.0, 1.0])

    @pytest.mark.parametrize(
        "grid, density, kind",
        [
            ([0.0, 1.0], [0.5, 0.5], "linear"),
            ([0.0, 1.0], [1.0], "linear"),
            ([1.0, 0.0], [1.0, 1.0], "linear"),
            ([0.0, 1.0], [-1.0, 3.0], "linear"),
            ([0.0, 1.0], [1.0], "smooth"),
        ],
    )
    def test_invalid_tables(self, grid, density, kind):
        with pytest.raises(SimulationError):
            CompactDensity(np.array(grid), np.array(density), kind)

    def test_empirical_law_needs_points(self):
        with pytest.raises(SimulationError):
            EmpiricalLaw(np.empty(0)).sample(np.random.default_rng(0), 3)


@pytest.mark.unit
class TestSimConfig:
    """Validation of the simulation configuration."""

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"dt": 0.0},
            {"t_max": 0.001},
            {"n_paths": 0},
            {"master_seed": -1},
            {"initial": PointMass(math.inf)},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        base = {"dt": 0.01, "t_max": 1.0, "n_paths": 10, "master_seed": 1}
        with pytest.raises(SimulationError):
            SimConfig(**{**base, **kwargs})

    def test_resolved_fills_bookkeeping(self):
        cfg = SimConfig(dt=0.01, t_max=1.0, n_paths=10, master_seed=1).resolved({"block_size": 64})
        assert cfg.block_size == 64
        assert cfg.record_interval == 0.01
        assert cfg.workers == 1
        assert cfg.n_steps == 100 and cfg.record_every == 1

    def test_only_zero_or_one_boundaries_simulate(self):
        model = UnitDiffusionModel.from_expressions(p0=0.5)
        with pytest.raises(SimulationError, match="p0"):
            simulate_ensemble(model, SimConfig(dt=0.01, t_max=0.1, n_paths=5, master_seed=1))


@pytest.mark.integration
class TestSimulateEnsemble:
    """Survival curves against closed forms."""

    def test_constant_killing_is_exponential(self, constant_killing):
        cfg = SimConfig(dt=0.01, t_max=2.0, n_paths=4000, master_seed=11)
        curve = simulate_ensemble(constant_killing, cfg).curve
        i = curve.index_of(2.0)
        assert within(curve.fraction[i], math.exp(-1.0), curve.standard_error[i])
        assert curve.alive[0] == 4000

    def test_absorbed_bm_survival(self, absorbed_bm):
        """P_1{τ > 1} = 2Φ(1) − 1 for Brownian motion absorbed at 0."""
        cfg = SimConfig(dt=1e-3, t_max=1.0, n_paths=20000, master_seed=3)
        curve = simulate_ensemble(absorbed_bm, cfg).curve
        expected = math.erf(1.0 / math.sqrt(2.0))
        assert within(curve.fraction[-1], expected, curve.standard_error[-1])

    def test_counts_do_not_depend_on_workers(self, absorbed_ou):
        cfg = SimConfig(dt=0.01, t_max=1.0, n_paths=600, master_seed=5, block_size=128)
        one = simulate_ensemble(absorbed_ou, replace(cfg, workers=1)).curve
        two = simulate_ensemble(absorbed_ou, replace(cfg, workers=2)).curve
        np.testing.assert_array_equal(one.death_times, two.death_times)
        np.testing.assert_array_equal(one.alive, two.alive)
        other = simulate_ensemble(absorbed_ou, replace(cfg, master_seed=6)).curve
        assert not np.array_equal(one.death_times, other.death_times)

    def test_paths_do_not_depend_on_block_size(self, absorbed_ou):
        cfg = SimConfig(dt=0.01, t_max=1.0, n_paths=600, master_seed=5, block_size=128)
        small = simulate_ensemble(absorbed_ou, cfg).curve
        large = simulate_ensemble(absorbed_ou, replace(cfg, block_size=256)).curve
        np.testing.assert_array_equal(small.death_times, large.death_times)
        np.testing.assert_array_equal(small.alive, large.alive)

    def test_larger_ensemble_extends_a_smaller_one(self, absorbed_ou):
        cfg = SimConfig(dt=0.01, t_max=1.0, n_paths=600, master_seed=5, block_size=128)
        full = simulate_ensemble(absorbed_ou, cfg).curve
        half = simulate_ensemble(absorbed_ou, replace(cfg, n_paths=300, block_size=100)).curve
        np.testing.assert_array_equal(half.death_times, full.death_times[:300])

    def test_paths_do_not_depend_on_draw_chunks(self, absorbed_ou, monkeypatch):
        cfg = SimConfig(dt=0.01, t_max=1.0, n_paths=200, master_seed=9)
        before = simulate_ensemble(absorbed_ou.shift_killing(0.3), cfg).curve
        monkeypatch.setattr("qsd_forge.mc.DRAW_CHUNK", 7)
        after = simulate_ensemble(absorbed_ou.shift_killing(0.3), cfg).curve
        np.testing.assert_array_equal(before.death_times, after.death_times)

    def test_bridge_tests_use_separate_uniforms(self):
        left = _path_rng(4, 0, STREAM_BRIDGE_LEFT).random(8)
        right = _path_rng(4, 0, STREAM_BRIDGE_RIGHT).random(8)
        assert not np.any(left == right)

    def test_interval_absorbed_at_both_ends(self, dirichlet_interval):
        """P_{π/2}{τ > 1} = Σ_k 4/(kπ)·sin(kπ/2)·e^{−k²/2} over odd k."""
        cfg = SimConfig(dt=1e-3, t_max=1.0, n_paths=10000, master_seed=17, initial=PointMass(math.pi / 2.0))
        curve = simulate_ensemble(dirichlet_interval, cfg).curve
        expected = sum(
            4.0 / (k * math.pi) * math.sin(k * math.pi / 2.0) * math.exp(-k * k / 2.0) for k in range(1, 40, 2)
        )
        assert within(curve.fraction[-1], expected, curve.standard_error[-1], slack=0.005)

    def test_halving_dt_keeps_the_survival_fraction(self, absorbed_bm):
        coarse_cfg = SimConfig(dt=0.01, t_max=1.0, n_paths=4000, master_seed=13)
        coarse = simulate_ensemble(absorbed_bm, coarse_cfg).curve
        fine = simulate_ensemble(absorbed_bm, replace(coarse_cfg, dt=0.005)).curve
        combined = math.hypot(coarse.standard_error[-1], fine.standard_error[-1])
        assert abs(coarse.fraction[-1] - fine.fraction[-1]) < 3.0 * combined

    def test_snapshots_give_conditional_histograms(self, absorbed_ou):
        cfg = SimConfig(dt=0.01, t_max=1.0, n_paths=2000, master_seed=8)
        result = simulate_ensemble(absorbed_ou, cfg, snapshot_times=(0.5, 1.0), config={"histogram_bins": 16})
        curve, histograms = result
        assert [h.t for h in histograms] == [0.5, 1.0]
        for histogram in histograms:
            assert histogram.probs.size == 16
            assert histogram.probs.sum() + histogram.overflow == pytest.approx(1.0)
            assert histogram.n_alive == curve.alive[curve.index_of(histogram.t)]
        assert result.survivors(1.0).points.size == histograms[-1].n_alive

    def test_snapshot_outside_the_horizon(self, absorbed_ou):
        with pytest.raises(SimulationError):
            simulate_ensemble(absorbed_ou, SimConfig(dt=0.01, t_max=1.0, n_paths=5, master_seed=1), (2.0,))

    def test_explosive_paths_are_censored(self):
        model = UnitDiffusionModel.from_expressions(drift="x^2", p0=1.0)
        result = simulate_ensemble(model, SimConfig(dt=0.01, t_max=3.0, n_paths=200, master_seed=2))
        assert result.curve.escaped > 0
        assert result.curve.alive[-1] == 200
        assert result.warnings


@pytest.mark.integration
class TestEstimators:
    """Killing rate, conditional survival and ω estimates."""

    @pytest.fixture(scope="class")
    def killing_curve(self):
        model = UnitDiffusionModel.from_expressions(drift="0", kappa="0.5", p0=1.0)
        return simulate_ensemble(model, SimConfig(dt=0.01, t_max=5.0, n_paths=4000, master_seed=21)).curve

    def test_killing_rate(self, killing_curve):
        estimate = estimate_akr(killing_curve, (1.0, 4.0), resamples=50, seed=4)
        assert within(estimate.value, 0.5, estimate.se, slack=0.01)
        assert estimate.ci_low <= estimate.ci_high

    def test_killing_rate_needs_record_points(self, killing_curve):
        with pytest.raises(SimulationError, match="fewer than 10"):
            estimate_akr(killing_curve, (1.0, 1.05))

    def test_conditional_survival(self, killing_curve):
        assert estimate_a(killing_curve, 1.0, 0.0).value == 1.0
        estimate = estimate_a(killing_curve, 1.0, 1.0)
        assert within(estimate.value, math.exp(-0.5), estimate.se)
        assert estimate.ci_low <= estimate.value <= estimate.ci_high

    def test_off_grid_time(self, killing_curve):
        with pytest.raises(SimulationError):
            estimate_a(killing_curve, 1.005, 1.0)

    def test_wilson_interval(self):
        assert wilson_interval(0, 0) == (0.0, 1.0)
        low, high = wilson_interval(5, 10)
        assert low == pytest.approx(1.0 - high)

    def test_omega_under_position_free_killing(self, constant_killing):
        """Common random numbers make every starting point die at the same step."""
        cfg = SimConfig(dt=0.01, t_max=2.0, n_paths=500, master_seed=9)
        table = estimate_omega(constant_killing, cfg, [0.5, 1.0, 3.0], [1.0, 2.0])
        np.testing.assert_array_equal(table.omega, 1.0)
        np.testing.assert_allclose(table.se, 0.0, atol=1e-6)
        assert len(table.rows()) == 6

    def test_omega_star_on_the_diagonal(self, constant_killing):
        cfg = SimConfig(dt=0.01, t_max=1.0, n_paths=10, master_seed=1)
        star = estimate_omega_star(constant_killing, cfg, 2.0, 2.0)
        assert star.omega == 1.0 and not star.infinite

    def test_omega_star_hitting_probability(self, constant_killing):
        """P_1{τ_2 < τ_∂} = cosh(1)/cosh(2) under constant killing 1/2."""
        cfg = SimConfig(dt=0.002, t_max=12.0, n_paths=4000, master_seed=13)
        star = estimate_omega_star(constant_killing, cfg, 2.0, 1.0)
        se = math.sqrt(star.hit_probability * (1 - star.hit_probability) / star.n_paths)
        assert within(star.hit_probability, math.cosh(1.0) / math.cosh(2.0), se, slack=0.01)
        assert star.ci_low <= star.omega <= star.ci_high
        assert star.undecided < 40

    def test_omega_bounds_hold_under_constant_killing(self, constant_killing):
        """ω_t ≡ 1 sits between P_x{τ_1 < τ_∂} and 1/P_1{τ_x < τ_∂}."""
        cfg = SimConfig(dt=0.01, t_max=10.0, n_paths=400, master_seed=21)
        checks = omega_bounds(constant_killing, cfg, [0.5, 2.0], [1.0])
        assert [check.status for check in checks] == ["pass", "pass"]
        for check in checks:
            assert check.omega == 1.0
            assert check.lower < 1.0 < check.upper
            assert check.width == pytest.approx(check.upper - check.lower)


@pytest.mark.unit
class TestHistograms:
    """Conditional histograms and the restart law built from them."""

    def test_mass_below(self):
        histogram = ConditionalHistogram(
            1.0, np.array([0.0, 1.0, 2.0]), np.array([0.25, 0.75]), 4, np.array([1, 3])
        )
        assert histogram.mass_below(1.5) == pytest.approx(0.625)
        assert histogram.mass_below(2.0) == pytest.approx(1.0)
        assert histogram.mass_below(0.0) == 0.0

    def test_empty_histogram(self):
        histogram = ConditionalHistogram(1.0, np.array([0.0, 1.0]), np.zeros(1), 0, np.zeros(1, dtype=int))
        assert math.isnan(histogram.mass_below(0.5))
        with pytest.raises(SimulationError):
            restart_law(histogram)

    @pytest.mark.integration
    def test_restart_reproduces_conditional_survival(self, absorbed_ou):
        """Restarting from the law at t = 1 matches P{τ > 2 | τ > 1}."""
        cfg = SimConfig(dt=0.005, t_max=2.0, n_paths=8000, master_seed=17)
        result = simulate_ensemble(absorbed_ou, cfg, snapshot_times=(1.0,))
        direct = estimate_a(result.curve, 1.0, 1.0)

        law = restart_law(result.histograms[0])
        restart_cfg = SimConfig(dt=0.005, t_max=1.0, n_paths=8000, master_seed=18, initial=law)
        restarted = simulate_ensemble(absorbed_ou, restart_cfg).curve
        se = math.hypot(direct.se, restarted.standard_error[-1])
        assert within(restarted.fraction[-1], direct.value, se, slack=0.01)
