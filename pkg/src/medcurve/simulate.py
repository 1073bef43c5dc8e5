"""Synthetic load-curve populations and the design-comparison harness.

The generator produces a two-week panel (week 1 as the known auxiliary
X_k, week 2 as the study variable Y_k) of positive daily-shaped curves:

    Y_k = scale_k * (base + shape_sigma * zeta_k * shape2) + noise

where base is a within-day sinusoidal profile with an optional weekend
dip, scale_k is a heavy-tailed unit level (lognormal around one of a few
planted regime multipliers), zeta_k is a persistent per-unit shape
coefficient (the same in both weeks, so week-1 structure predicts week
2), and the noise is fresh each week. A configurable fraction of units is
scaled up hard in both weeks to act as outliers.

The Monte Carlo harness replays a list of design plans against the study
week: per replicate it draws, estimates the median, and records the
integrated absolute loss against the full-population median; designs with
closed-form variance estimators also get a per-replicate loss between the
estimated and asymptotic variance functions. Seeds derive from the master
seed by design index then replicate index, so reports are reproducible
and independent of execution order or thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any

import numpy as np

from .curves import Curve, CurvePopulation, TimeGrid
from .designs import (
    SampleDraw,
    StrataSpec,
    as_seed,
    draw_ppswr,
    draw_srswor,
    draw_stratified,
    draw_systematic,
    pps_weights_from_curves,
)
from .errors import EstimationError, GridMismatchError, MedcurveError
from .estimators import ht_median, poststratified_median
from .linearize import linearized_variables
from .solver import MedianFit, SolverConfig, l1_median
from .stratify import kmeans_strata, optimal_allocation, proportional_allocation, quartile_strata
from .variance import VarianceFunction, variance_estimate, variance_function

__all__ = [
    "SynthConfig",
    "SynthPopulation",
    "synth_population",
    "concat_weeks",
    "loss_r_median",
    "loss_r_variance",
    "DesignPlan",
    "standard_design_suite",
    "DesignOutcome",
    "MonteCarloReport",
    "monte_carlo_compare",
]


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic population shape.

    points_per_week must be divisible by points_per_day; days beyond the
    fifth of each 7-day block count as weekend and get the contrast dip.
    scale_groups plants distinct consumption regimes (balanced across
    units); scale_sigma adds lognormal spread around each regime level.
    """

    n_units: int = 2000
    points_per_week: int = 48
    points_per_day: int = 48
    weeks: int = 2
    day_amplitude: float = 0.6
    weekend_contrast: float = 0.25
    scale_groups: tuple = (0.6, 1.0, 1.8, 3.2)
    scale_sigma: float = 0.4
    shape_sigma: float = 0.25
    noise_sd: float = 0.08
    outlier_frac: float = 0.02
    outlier_mag: float = 6.0
    seed: int = 0

    def __post_init__(self):
        if self.n_units < 10:
            raise ValueError("need at least 10 units")
        if self.points_per_week % self.points_per_day != 0:
            raise ValueError("points_per_week must be divisible by points_per_day")
        if self.weeks < 1:
            raise ValueError("need at least one week")
        if not 0.0 <= self.outlier_frac <= 0.2:
            raise ValueError("outlier fraction must lie in [0, 0.2]")
        if not 0.0 <= self.weekend_contrast < 1.0:
            raise ValueError("weekend contrast must lie in [0, 1)")
        if not self.scale_groups or any(g <= 0 for g in self.scale_groups):
            raise ValueError("scale_groups must be positive multipliers")
        if self.outlier_mag <= 0 or self.day_amplitude < 0:
            raise ValueError("magnitudes must be positive")


@dataclass(frozen=True, eq=False)
class SynthPopulation:
    """Generated panel: aux is week 1 (X), study is the last week (Y)."""

    aux: CurvePopulation
    study: CurvePopulation
    weeks: tuple
    scales: np.ndarray
    groups: np.ndarray
    outliers: np.ndarray
    config: SynthConfig


def _base_profile(cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    j = np.arange(cfg.points_per_week)
    day = j // cfg.points_per_day
    theta = ((j % cfg.points_per_day) + 0.5) / cfg.points_per_day
    daily = 1.0 + cfg.day_amplitude * np.sin(np.pi * theta) ** 2
    weekend = (day % 7) >= 5
    base = daily * np.where(weekend, 1.0 - cfg.weekend_contrast, 1.0)
    shape2 = np.sin(2.0 * np.pi * theta)
    return base, shape2


def synth_population(cfg: SynthConfig) -> SynthPopulation:
    """Generate the panel; fully determined by cfg (including its seed)."""
    rng = np.random.default_rng(as_seed(cfg.seed))
    n, d = cfg.n_units, cfg.points_per_week
    base, shape2 = _base_profile(cfg)

    groups = rng.permutation(np.resize(np.arange(len(cfg.scale_groups)), n))
    scales = np.asarray(cfg.scale_groups)[groups] * rng.lognormal(0.0, cfg.scale_sigma, size=n)
    zeta = rng.normal(size=n)
    n_out = int(np.floor(cfg.outlier_frac * n))
    outliers = np.sort(rng.choice(n, size=n_out, replace=False)) if n_out else np.array([], int)
    mag = np.ones(n)
    mag[outliers] = cfg.outlier_mag

    grid = TimeGrid.uniform(d)
    signal = scales[:, None] * (base[None, :] + cfg.shape_sigma * zeta[:, None] * shape2[None, :])
    weeks = []
    for _ in range(cfg.weeks):
        noise = cfg.noise_sd * scales[:, None] * rng.normal(size=(n, d))
        weeks.append(CurvePopulation(mag[:, None] * (signal + noise), grid))
    return SynthPopulation(
        aux=weeks[0],
        study=weeks[-1],
        weeks=tuple(weeks),
        scales=scales,
        groups=groups,
        outliers=outliers,
        config=cfg,
    )


def concat_weeks(*pops: CurvePopulation) -> CurvePopulation:
    """Join weekly populations end to end on one long uniform grid.

    Each input must live on the same uniform unit-horizon grid; the result
    spans [0, W] with unchanged quadrature weights, so norms over the long
    grid decompose into the weekly pieces.
    """
    if not pops:
        raise ValueError("need at least one population")
    d = pops[0].grid.n_points
    for pop in pops:
        if not pop.grid.matches(pops[0].grid):
            raise GridMismatchError("weekly populations must share one grid")
        if pop.n_units != pops[0].n_units:
            raise ValueError("weekly populations must cover the same units")
    w = len(pops)
    grid = TimeGrid.uniform(w * d, horizon=float(w) * pops[0].grid.horizon)
    values = np.hstack([pop.values for pop in pops])
    return CurvePopulation(values, grid, ids=pops[0].ids)


def _pointwise_abs(a, b) -> np.ndarray:
    if isinstance(a, Curve) and isinstance(b, Curve):
        if not a.grid.matches(b.grid):
            raise GridMismatchError("losses need a shared grid")
        return np.abs(a.values - b.values)
    if isinstance(a, VarianceFunction) and isinstance(b, VarianceFunction):
        if not a.grid.matches(b.grid):
            raise GridMismatchError("losses need a shared grid")
        return np.abs(a.values - b.values)
    raise TypeError("loss arguments must both be Curves or both VarianceFunctions")


def loss_r_median(estimate: Curve, truth: Curve, quadrature: bool = False) -> float:
    """Integrated absolute error, discretized as the plain average (1/D) sum.

    quadrature=True integrates with the grid weights instead; the two
    agree on uniform unit-horizon grids.
    """
    diff = _pointwise_abs(estimate, truth)
    if quadrature:
        return float(estimate.grid.integrate(diff))
    return float(diff.mean())


def loss_r_variance(
    estimate: VarianceFunction, truth: VarianceFunction, quadrature: bool = False
) -> float:
    diff = _pointwise_abs(estimate, truth)
    if quadrature:
        return float(estimate.grid.integrate(diff))
    return float(diff.mean())


@dataclass(frozen=True, eq=False)
class DesignPlan:
    """One design configured against the auxiliary week.

    kind selects the draw ("srswor", "systematic", "stratified", "ppswr")
    or the estimator variation ("poststratified": SRSWOR draw, group
    calibrated weights). Fields beyond (name, kind, n) apply per kind.
    """

    name: str
    kind: str
    n: int
    strata: StrataSpec | None = None
    alloc: np.ndarray | None = None
    order_key: np.ndarray | None = None
    p: np.ndarray | None = None
    groups: StrataSpec | None = None

    def draw(self, n_population: int, seed) -> SampleDraw:
        if self.kind in ("srswor", "poststratified"):
            return draw_srswor(n_population, self.n, seed)
        if self.kind == "systematic":
            return draw_systematic(self.order_key, self.n, seed)
        if self.kind == "stratified":
            return draw_stratified(self.strata, self.alloc, seed)
        if self.kind == "ppswr":
            return draw_ppswr(self.p, self.n, seed)
        raise ValueError(f"unknown plan kind {self.kind!r}")

    def estimate(
        self, draw: SampleDraw, pop: CurvePopulation, cfg: SolverConfig | None
    ) -> MedianFit:
        if self.kind == "poststratified":
            return poststratified_median(draw, pop, self.groups, cfg=cfg)
        return ht_median(draw, pop, cfg=cfg)

    def population_design(self, n_population: int) -> dict[str, Any] | None:
        """Design dict for the asymptotic variance, when a closed form exists."""
        if self.kind == "srswor":
            return {"type": "srswor", "N": n_population, "n": self.n}
        if self.kind == "stratified":
            return {
                "type": "stratified",
                "N": n_population,
                "n": self.n,
                "labels": self.strata.labels,
                "alloc": np.asarray(self.alloc),
                "sizes": self.strata.sizes,
            }
        return None


def standard_design_suite(
    aux: CurvePopulation,
    n: int,
    n_strata: int = 4,
    seed: int = 0,
    solver_cfg: SolverConfig | None = None,
) -> list[DesignPlan]:
    """The comparison lineup, configured from the auxiliary week.

    SRSWOR; systematic ordered by mean level; stratified on k-means strata
    of the week-1 linearized variables (proportional and optimal
    allocations); stratified on quartiles of the week-1 peak level
    (proportional and optimal); poststratified SRSWOR on the k-means
    groups; and PPS with draw probabilities proportional to mean level.
    """
    cfg = solver_cfg or SolverConfig(tol=1e-10)
    fit = l1_median(aux, cfg=cfg)
    u1 = linearized_variables(aux, fit.median)
    if u1.values.shape[0] != aux.n_units:
        raise EstimationError(
            "auxiliary-week linearized variables are missing for some units; "
            "cannot build the stratification"
        )
    u_pop = CurvePopulation(u1.values, aux.grid)
    u_strata = kmeans_strata(u_pop, n_strata, seed=as_seed(seed).spawn(1)[0])
    x_strata = quartile_strata(aux.values.max(axis=1), n_strata)

    plans = [
        DesignPlan(name="SRSWOR", kind="srswor", n=n),
        DesignPlan(
            name="SYS", kind="systematic", n=n, order_key=aux.values.mean(axis=1)
        ),
        DesignPlan(
            name="STRAT-u-PROP",
            kind="stratified",
            n=n,
            strata=u_strata,
            alloc=proportional_allocation(u_strata.sizes, n).counts,
        ),
        DesignPlan(
            name="STRAT-u-OPTIM",
            kind="stratified",
            n=n,
            strata=u_strata,
            alloc=optimal_allocation(u_strata, u1, n, rule="u-OPTIM").counts,
        ),
        DesignPlan(
            name="STRAT-x-PROP",
            kind="stratified",
            n=n,
            strata=x_strata,
            alloc=proportional_allocation(x_strata.sizes, n).counts,
        ),
        DesignPlan(
            name="STRAT-x-OPTIM",
            kind="stratified",
            n=n,
            strata=x_strata,
            alloc=optimal_allocation(x_strata, aux, n, rule="x-OPTIM").counts,
        ),
        DesignPlan(name="POST", kind="poststratified", n=n, groups=u_strata),
        DesignPlan(name="PPS", kind="ppswr", n=n, p=pps_weights_from_curves(aux)),
    ]
    return plans


@dataclass(frozen=True, eq=False)
class DesignOutcome:
    """Per-design Monte Carlo record; NaN marks a failed replicate."""

    name: str
    losses: np.ndarray
    variance_losses: np.ndarray | None
    estimate_failures: int
    variance_failures: int

    def loss_summary(self) -> dict[str, float]:
        ok = self.losses[~np.isnan(self.losses)]
        if ok.size == 0:
            return {"mean": float("nan"), "q1": float("nan"), "median": float("nan"), "q3": float("nan")}
        q1, med, q3 = np.percentile(ok, [25.0, 50.0, 75.0])
        return {"mean": float(ok.mean()), "q1": float(q1), "median": float(med), "q3": float(q3)}


@dataclass(frozen=True, eq=False)
class MonteCarloReport:
    outcomes: tuple
    replicates: int
    truth: Curve

    def outcome(self, name: str) -> DesignOutcome:
        for o in self.outcomes:
            if o.name == name:
                return o
        raise KeyError(name)

    def summary(self) -> dict[str, Any]:
        designs = []
        for o in self.outcomes:
            entry = {"name": o.name, "loss": o.loss_summary(), "estimate_failures": o.estimate_failures}
            if o.variance_losses is not None:
                ok = o.variance_losses[~np.isnan(o.variance_losses)]
                entry["variance_loss_mean"] = float(ok.mean()) if ok.size else float("nan")
                entry["variance_failures"] = o.variance_failures
            designs.append(entry)
        return {"replicates": self.replicates, "designs": designs}


def monte_carlo_compare(
    study: CurvePopulation,
    plans,
    replicates: int,
    seed,
    solver_cfg: SolverConfig | None = None,
    threads: int = 1,
    truth_tol: float = 1e-10,
) -> MonteCarloReport:
    """Replay each plan against the study population.

    Per replicate r of plan d the draw seed is the master seed spawned at
    (d, r), so results are identical for any thread count. Replicate
    failures (non-convergence, estimator errors) are recorded as NaN
    losses and counted, never raised.
    """
    if replicates < 1:
        raise ValueError("need at least one replicate")
    threads = 1 if threads is None else int(threads)
    if threads < 1:
        raise ValueError("thread count must be positive")
    plans = list(plans)
    cfg = solver_cfg or SolverConfig()
    truth_fit = l1_median(study, cfg=SolverConfig(tol=truth_tol, max_iter=2000, init=cfg.init))
    if not truth_fit.converged:
        raise MedcurveError("population median did not converge at the truth tolerance")
    truth = truth_fit.median

    var_truths: list[VarianceFunction | None] = []
    pop_u = None
    for plan in plans:
        design = plan.population_design(study.n_units)
        if design is None:
            var_truths.append(None)
            continue
        if pop_u is None:
            pop_u = linearized_variables(study, truth)
            if pop_u.values.shape[0] != study.n_units:
                raise EstimationError(
                    "some units coincide with the population median; "
                    "asymptotic variance truths are undefined"
                )
        var_truths.append(variance_function(pop_u, design))

    root = as_seed(seed)
    design_seqs = root.spawn(len(plans))
    rep_seeds = [ds.spawn(replicates) for ds in design_seqs]

    losses = np.full((len(plans), replicates), np.nan)
    var_losses = np.full((len(plans), replicates), np.nan)
    est_fail = np.zeros(len(plans), dtype=int)
    var_fail = np.zeros(len(plans), dtype=int)

    def run(d: int, r: int):
        plan = plans[d]
        try:
            draw = plan.draw(study.n_units, rep_seeds[d][r])
            fit = plan.estimate(draw, study, cfg)
            if not fit.converged:
                return d, r, np.nan, np.nan, True, False
            loss = loss_r_median(fit.median, truth)
        except MedcurveError:
            return d, r, np.nan, np.nan, True, False
        if var_truths[d] is None:
            return d, r, loss, np.nan, False, False
        try:
            sub = study.subset(draw.units)
            u_hat = linearized_variables(sub, fit.median, weights=draw.weights)
            if u_hat.values.shape[0] != draw.n_units:
                return d, r, loss, np.nan, False, True
            v_hat = variance_estimate(draw, u_hat)
            v_loss = loss_r_variance(v_hat, var_truths[d])
        except MedcurveError:
            return d, r, loss, np.nan, False, True
        return d, r, loss, v_loss, False, False

    tasks = [(d, r) for d in range(len(plans)) for r in range(replicates)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda dr: run(*dr), tasks))
    else:
        results = [run(d, r) for d, r in tasks]

    for d, r, loss, v_loss, e_failed, v_failed in results:
        losses[d, r] = loss
        var_losses[d, r] = v_loss
        if e_failed:
            est_fail[d] += 1
        if v_failed:
            var_fail[d] += 1

    outcomes = []
    for d, plan in enumerate(plans):
        outcomes.append(
            DesignOutcome(
                name=plan.name,
                losses=losses[d],
                variance_losses=var_losses[d] if var_truths[d] is not None else None,
                estimate_failures=int(est_fail[d]),
                variance_failures=int(var_fail[d]),
            )
        )
    return MonteCarloReport(outcomes=tuple(outcomes), replicates=replicates, truth=truth)
