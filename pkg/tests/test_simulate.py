"""Tests for the synthetic generator and the Monte Carlo harness."""

import numpy as np
import pytest

from medcurve import (
    Curve,
    CurvePopulation,
    SolverConfig,
    TimeGrid,
)
from medcurve.errors import GridMismatchError
from medcurve.simulate import (
    DesignPlan,
    SynthConfig,
    concat_weeks,
    loss_r_median,
    loss_r_variance,
    monte_carlo_compare,
    standard_design_suite,
    synth_population,
)
from medcurve.variance import VarianceFunction


def small_cfg(**overrides):
    base = dict(
        n_units=40,
        points_per_week=14,
        points_per_day=2,
        weeks=2,
        seed=11,
    )
    base.update(overrides)
    return SynthConfig(**base)


class TestSynthPopulation:
    def test_shapes_and_panel_roles(self):
        pop = synth_population(small_cfg())
        assert pop.aux.values.shape == (40, 14)
        assert pop.study.values.shape == (40, 14)
        assert len(pop.weeks) == 2
        assert pop.aux is pop.weeks[0]
        assert pop.study is pop.weeks[-1]
        assert pop.aux.grid.horizon == 1.0

    def test_same_config_same_values(self):
        a = synth_population(small_cfg())
        b = synth_population(small_cfg())
        assert np.array_equal(a.aux.values, b.aux.values)
        assert np.array_equal(a.study.values, b.study.values)
        assert np.array_equal(a.groups, b.groups)

    def test_different_seed_differs(self):
        a = synth_population(small_cfg())
        b = synth_population(small_cfg(seed=12))
        assert not np.array_equal(a.study.values, b.study.values)

    def test_weekend_dip_in_deterministic_profile(self):
        # All randomness off: every curve equals the base profile exactly.
        # With 2 points per day over 7 days, days 5 and 6 are the weekend,
        # so points 10..13 equal points 0..3 times (1 - 0.25) = 0.75.
        cfg = small_cfg(
            noise_sd=0.0,
            shape_sigma=0.0,
            scale_sigma=0.0,
            scale_groups=(1.0,),
            outlier_frac=0.0,
            weekend_contrast=0.25,
        )
        pop = synth_population(cfg)
        v = pop.aux.values
        assert np.allclose(v, v[0])
        assert np.allclose(v[0, 10:14], 0.75 * v[0, 0:4])

    def test_signal_persists_across_weeks_without_noise(self):
        cfg = small_cfg(noise_sd=0.0)
        pop = synth_population(cfg)
        assert np.array_equal(pop.aux.values, pop.study.values)

    def test_outliers_scale_whole_rows_in_both_weeks(self):
        # With shape and noise off, row k is scales[k] * base, times the
        # outlier magnitude for the flagged units. theta for 2 points/day
        # is (0.25, 0.75), so base on a weekday is 1 + 0.6*sin(pi*theta)^2.
        cfg = small_cfg(noise_sd=0.0, shape_sigma=0.0, outlier_frac=0.1, outlier_mag=5.0)
        pop = synth_population(cfg)
        theta = np.array([0.25, 0.75])
        daily = 1.0 + cfg.day_amplitude * np.sin(np.pi * theta) ** 2
        base = np.concatenate([daily] * 5 + [(1.0 - cfg.weekend_contrast) * daily] * 2)
        assert pop.outliers.size == 4
        for k in range(cfg.n_units):
            mag = 5.0 if k in pop.outliers else 1.0
            expect = mag * pop.scales[k] * base
            assert np.allclose(pop.aux.values[k], expect)
            assert np.allclose(pop.study.values[k], expect)

    def test_group_assignment_is_balanced(self):
        pop = synth_population(small_cfg(scale_groups=(0.5, 1.0, 2.0, 4.0)))
        counts = np.bincount(pop.groups, minlength=4)
        assert np.array_equal(counts, [10, 10, 10, 10])

    def test_config_validation(self):
        with pytest.raises(ValueError):
            small_cfg(points_per_day=3)  # 14 not divisible by 3
        with pytest.raises(ValueError):
            small_cfg(outlier_frac=0.5)
        with pytest.raises(ValueError):
            small_cfg(n_units=5)
        with pytest.raises(ValueError):
            small_cfg(scale_groups=())


class TestConcatWeeks:
    def test_two_weeks_join_end_to_end(self):
        grid = TimeGrid.uniform(4)
        a = CurvePopulation(np.arange(8.0).reshape(2, 4), grid)
        b = CurvePopulation(np.arange(8.0, 16.0).reshape(2, 4), grid)
        joined = concat_weeks(a, b)
        assert joined.grid.n_points == 8
        assert joined.grid.horizon == 2.0
        # quadrature weights stay 1/4 per point, so weekly norms add up
        assert np.allclose(joined.grid.weights, 0.25)
        assert np.array_equal(joined.values[0], np.r_[a.values[0], b.values[0]])

    def test_grid_mismatch_rejected(self):
        a = CurvePopulation(np.ones((2, 4)), TimeGrid.uniform(4))
        b = CurvePopulation(np.ones((2, 5)), TimeGrid.uniform(5))
        with pytest.raises(GridMismatchError):
            concat_weeks(a, b)


class TestLosses:
    def test_hand_computed_average(self):
        # |diff| = (1, 2, 3, 4) on 4 points: plain average (1+2+3+4)/4 = 2.5
        grid = TimeGrid.uniform(4)
        a = Curve(np.array([1.0, 2.0, 3.0, 4.0]), grid)
        b = Curve(np.zeros(4), grid)
        assert loss_r_median(a, b) == pytest.approx(2.5)

    def test_constant_shift_gives_shift_size(self):
        grid = TimeGrid.uniform(6)
        a = Curve(np.linspace(0, 1, 6), grid)
        b = a + 0.3
        assert loss_r_median(a, b) == pytest.approx(0.3)
        # on a uniform unit-horizon grid quadrature agrees with the average
        assert loss_r_median(a, b, quadrature=True) == pytest.approx(0.3)

    def test_variance_loss_same_rule(self):
        grid = TimeGrid.uniform(3)
        va = VarianceFunction(np.array([1.0, 4.0, 7.0]), grid, "estimated", "srswor")
        vb = VarianceFunction(np.array([0.0, 0.0, 1.0]), grid, "estimated", "srswor")
        assert loss_r_variance(va, vb) == pytest.approx((1.0 + 4.0 + 6.0) / 3.0)

    def test_mixed_argument_types_rejected(self):
        grid = TimeGrid.uniform(3)
        c = Curve(np.ones(3), grid)
        v = VarianceFunction(np.ones(3), grid, "estimated", "srswor")
        with pytest.raises(TypeError):
            loss_r_median(c, v)

    def test_grid_mismatch_rejected(self):
        a = Curve(np.ones(3), TimeGrid.uniform(3))
        b = Curve(np.ones(4), TimeGrid.uniform(4))
        with pytest.raises(GridMismatchError):
            loss_r_median(a, b)


class TestStandardSuite:
    def test_suite_structure(self):
        pop = synth_population(small_cfg(n_units=60))
        plans = standard_design_suite(pop.aux, n=16, n_strata=3, seed=5)
        names = [p.name for p in plans]
        assert names == [
            "SRSWOR",
            "SYS",
            "STRAT-u-PROP",
            "STRAT-u-OPTIM",
            "STRAT-x-PROP",
            "STRAT-x-OPTIM",
            "POST",
            "PPS",
        ]
        for p in plans:
            assert p.n == 16
            if p.kind == "stratified":
                assert p.alloc.sum() == 16
                assert p.strata.n_units == 60
            if p.kind == "systematic":
                assert p.order_key.shape == (60,)
            if p.kind == "ppswr":
                assert p.p.sum() == pytest.approx(1.0)
            if p.kind == "poststratified":
                assert p.groups.n_units == 60

    def test_suite_is_deterministic(self):
        pop = synth_population(small_cfg(n_units=60))
        a = standard_design_suite(pop.aux, n=16, n_strata=3, seed=5)
        b = standard_design_suite(pop.aux, n=16, n_strata=3, seed=5)
        for pa, pb in zip(a, b):
            if pa.kind == "stratified":
                assert np.array_equal(pa.strata.labels, pb.strata.labels)
                assert np.array_equal(pa.alloc, pb.alloc)


class TestMonteCarlo:
    def test_census_replicate_has_zero_loss(self):
        # A census SRSWOR draw feeds the solver the whole population with
        # unit weights, the same problem the truth fit solves, so with one
        # shared tolerance the two runs are bitwise identical.
        pop = synth_population(small_cfg(n_units=30, points_per_week=7, points_per_day=1))
        plan = DesignPlan(name="CENSUS", kind="srswor", n=30)
        report = monte_carlo_compare(
            pop.study,
            [plan],
            replicates=1,
            seed=3,
            solver_cfg=SolverConfig(tol=1e-10, max_iter=2000),
            truth_tol=1e-10,
        )
        assert report.outcome("CENSUS").losses[0] == 0.0
        assert report.outcome("CENSUS").estimate_failures == 0

    def test_report_deterministic_and_thread_invariant(self):
        pop = synth_population(small_cfg(n_units=50))
        plans = [
            DesignPlan(name="SRSWOR", kind="srswor", n=10),
            DesignPlan(name="PPS", kind="ppswr", n=10, p=np.full(50, 0.02)),
        ]
        r1 = monte_carlo_compare(pop.study, plans, replicates=6, seed=21)
        r2 = monte_carlo_compare(pop.study, plans, replicates=6, seed=21)
        r4 = monte_carlo_compare(pop.study, plans, replicates=6, seed=21, threads=4)
        for a, b in ((r1, r2), (r1, r4)):
            for oa, ob in zip(a.outcomes, b.outcomes):
                assert np.array_equal(oa.losses, ob.losses)

    def test_variance_losses_only_for_closed_form_designs(self):
        pop = synth_population(small_cfg(n_units=50))
        plans = [
            DesignPlan(name="SRSWOR", kind="srswor", n=12),
            DesignPlan(name="PPS", kind="ppswr", n=12, p=np.full(50, 0.02)),
        ]
        report = monte_carlo_compare(pop.study, plans, replicates=3, seed=9)
        assert report.outcome("SRSWOR").variance_losses is not None
        assert np.isfinite(report.outcome("SRSWOR").variance_losses).all()
        assert report.outcome("PPS").variance_losses is None

    def test_estimator_failures_recorded_not_raised(self):
        # Group labels deliberately cover a different frame size, so every
        # replicate's poststratified estimate raises and must be recorded.
        from medcurve.designs import StrataSpec

        pop = synth_population(small_cfg(n_units=50))
        bad_groups = StrataSpec(np.zeros(49, dtype=np.int64))
        plan = DesignPlan(name="BAD-POST", kind="poststratified", n=10, groups=bad_groups)
        report = monte_carlo_compare(pop.study, [plan], replicates=4, seed=2)
        out = report.outcome("BAD-POST")
        assert out.estimate_failures == 4
        assert np.isnan(out.losses).all()
        assert np.isnan(out.loss_summary()["mean"])

    def test_summary_is_json_ready(self):
        import json

        pop = synth_population(small_cfg(n_units=50))
        plans = [DesignPlan(name="SRSWOR", kind="srswor", n=10)]
        report = monte_carlo_compare(pop.study, plans, replicates=3, seed=8)
        text = json.dumps(report.summary())
        assert "SRSWOR" in text

    def test_stratified_on_planted_groups_beats_srswor(self):
        # Directional check on a population with four planted consumption
        # regimes: stratifying on k-means strata of the week-1 linearized
        # variables with proportional allocation should cut the mean loss
        # well below SRSWOR at the same sample size. Seed pinned.
        cfg = SynthConfig(
            n_units=400,
            points_per_week=12,
            points_per_day=12,
            weeks=2,
            seed=31,
        )
        pop = synth_population(cfg)
        plans = standard_design_suite(pop.aux, n=60, n_strata=4, seed=7)
        keep = [p for p in plans if p.name in ("SRSWOR", "STRAT-u-PROP")]
        report = monte_carlo_compare(pop.study, keep, replicates=40, seed=13)
        srswor = report.outcome("SRSWOR").loss_summary()["mean"]
        strat = report.outcome("STRAT-u-PROP").loss_summary()["mean"]
        assert strat < srswor
