"""Design-based median estimators.

The population median is the solution of an estimating equation, so the
design-based version replaces each population term by its sampled,
weighted counterpart: the weighted L1-median of the sampled curves with
weights 1/pi_k. Under equal-probability designs the weights are constant
and drop out of the equation, so the estimate is just the sample median;
under PPS the equation runs over the distinct drawn units. The
poststratified variant rescales the weights inside each population group
g so they add up to the known group size N_g.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curves import CurvePopulation
from .designs import SampleDraw, StrataSpec
from .errors import EstimationError
from .solver import MedianFit, SolverConfig, l1_median

__all__ = [
    "WeightedSample",
    "ht_weights",
    "poststratified_weights",
    "ht_median",
    "poststratified_median",
]


@dataclass(frozen=True, eq=False)
class WeightedSample:
    """Sampled units with estimation weights.

    provenance is "HT" (weights exactly 1/pi_k) or "poststratified"
    (weights N_g / (Nhat_g pi_k) with Nhat_g the HT estimate of the group
    size, so each group's weights sum to N_g).
    """

    units: np.ndarray
    weights: np.ndarray
    provenance: str
    design: dict

    def __post_init__(self):
        if self.provenance not in ("HT", "poststratified"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if np.any(self.weights <= 0) or np.any(~np.isfinite(self.weights)):
            raise ValueError("weights must be positive and finite")


def ht_weights(draw: SampleDraw) -> WeightedSample:
    return WeightedSample(
        units=draw.units, weights=draw.weights, provenance="HT", design=draw.design
    )


def poststratified_weights(draw: SampleDraw, groups: StrataSpec) -> WeightedSample:
    """Rescale 1/pi_k so each group's weights total its known size N_g.

    Every nonempty population group must catch at least one sampled unit;
    otherwise its size cannot be redistributed and the estimator is
    undefined, which the error reports with the standard remedy.
    """
    if groups.n_units != draw.design["N"]:
        raise EstimationError("group labels must cover the whole frame")
    labels = groups.labels[draw.units]
    d = draw.weights
    sizes = groups.sizes
    nhat = np.bincount(labels, weights=d, minlength=groups.n_strata)
    empty = np.flatnonzero(nhat == 0)
    if empty.size:
        raise EstimationError(
            f"group {int(empty[0])} has no sampled units; aggregate small "
            "groups before poststratifying"
        )
    w = d * (sizes[labels] / nhat[labels])
    return WeightedSample(
        units=draw.units, weights=w, provenance="poststratified", design=draw.design
    )


def _solve(pop: CurvePopulation, sample: WeightedSample, cfg: SolverConfig | None) -> MedianFit:
    sub = pop.subset(sample.units)
    return l1_median(sub, weights=sample.weights, cfg=cfg)


def ht_median(
    draw: SampleDraw, pop: CurvePopulation, cfg: SolverConfig | None = None
) -> MedianFit:
    """Weighted sample median with weights 1/pi_k (distinct units for PPS)."""
    if draw.design["N"] != pop.n_units:
        raise EstimationError(
            f"draw comes from a frame of {draw.design['N']} units "
            f"but the population has {pop.n_units}"
        )
    return _solve(pop, ht_weights(draw), cfg)


def poststratified_median(
    draw: SampleDraw,
    pop: CurvePopulation,
    groups: StrataSpec,
    cfg: SolverConfig | None = None,
) -> MedianFit:
    """Weighted sample median with group-calibrated weights."""
    if draw.design["N"] != pop.n_units:
        raise EstimationError(
            f"draw comes from a frame of {draw.design['N']} units "
            f"but the population has {pop.n_units}"
        )
    return _solve(pop, poststratified_weights(draw, groups), cfg)
