"""Weighted L1-median of a set of curves.

The median m minimizes sum_k w_k ||Y_k - y|| over curves y, with the grid
norm of `curves`. Equivalently it solves the estimating equation

    sum_k w_k (Y_k - y) / ||Y_k - y|| = 0,

and the fixed-point iteration here averages the curves with weights
w_k / ||Y_k - y||. The plain iteration breaks down when the iterate lands
on a data curve, so the update blends the weighted average with the
current point in that case: writing R for the estimating-equation value
over the non-coincident curves and eta for the weight sitting exactly on
the iterate, the next point is

    max(0, 1 - eta/||R||) * T + min(1, eta/||R||) * y,

which also yields the stopping rule: a data curve is the median exactly
when ||R|| <= eta there.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .curves import Curve, CurvePopulation, as_matrix

__all__ = ["SolverConfig", "MedianFit", "l1_median", "objective_value", "score"]


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for the median iteration.

    tol is relative: the fit counts as converged when the optimality gap
    (see MedianFit.residual_norm) falls below tol times the total weight.
    init is "pointwise-median", "mean", or an explicit starting Curve or
    value vector. anchor_eps decides, relative to the data spread, when an
    iterate is considered to coincide with a data curve.
    """

    tol: float = 1e-8
    max_iter: int = 500
    init: str | Curve | np.ndarray = "pointwise-median"
    anchor_eps: float = 1e-12

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.anchor_eps < 0:
            raise ValueError("anchor_eps must be non-negative")


@dataclass(frozen=True, eq=False)
class MedianFit:
    """Result of the median iteration.

    residual_norm is the optimality gap: the grid norm of the estimating
    equation over non-anchored curves, minus the anchored weight when the
    solution sits on a data curve (floored at zero). converged means the
    gap dropped below tol * total weight; a fit that ran out of iterations
    comes back with converged False and the last iterate, it never raises.
    maybe_non_unique flags populations whose curves are (numerically)
    collinear, the only geometry where the minimizer can fail to be unique.
    """

    median: Curve
    converged: bool
    iterations: int
    residual_norm: float
    anchored: bool = False
    anchor_index: int | None = None
    maybe_non_unique: bool = False
    objective_trace: tuple = field(default=(), repr=False)


def _prepare(curves, weights):
    values, grid = as_matrix(curves)
    n = values.shape[0]
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (n,):
            raise ValueError(f"expected {n} weights, got shape {w.shape}")
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("weights must be positive and finite")
    return values, grid, w


def _initial_point(values, grid, init) -> np.ndarray:
    if isinstance(init, str):
        pop = CurvePopulation(values, grid, ids=np.arange(values.shape[0]))
        if init == "pointwise-median":
            from .curves import pointwise_median

            return pointwise_median(pop).values.copy()
        if init == "mean":
            return values.mean(axis=0)
        raise ValueError(f"unknown init {init!r}")
    if isinstance(init, Curve):
        if not init.grid.matches(grid):
            raise ValueError("init curve is on a different grid")
        return init.values.copy()
    init = np.asarray(init, dtype=float)
    if init.shape != (grid.n_points,):
        raise ValueError("init vector length does not match the grid")
    return init.copy()


def _collinear(values: np.ndarray, grid) -> bool:
    """True when all curves lie on one line in the grid geometry."""
    if values.shape[0] <= 2 or values.shape[1] == 1:
        return True
    centered = (values - values.mean(axis=0)) * np.sqrt(grid.weights)
    s = np.linalg.svd(centered, compute_uv=False)
    return bool(s[1] <= 1e-8 * s[0]) if s[0] > 0 else True


def l1_median(curves, weights=None, cfg: SolverConfig | None = None) -> MedianFit:
    """Compute the weighted L1-median of curves on a shared grid."""
    cfg = cfg or SolverConfig()
    values, grid, w = _prepare(curves, weights)
    n = values.shape[0]
    total_w = w.sum()
    y = _initial_point(values, grid, cfg.init)

    spread = float(np.max(grid.norms(values - y))) if n else 0.0
    anchor_eps = cfg.anchor_eps * max(spread, 1.0)
    gap_tol = cfg.tol * total_w

    trace: list[float] = []
    gap = np.inf
    anchored = False
    anchor_index: int | None = None
    iterations = 0

    for it in range(cfg.max_iter + 1):
        diffs = values - y
        r = grid.norms(diffs)
        on_point = r <= anchor_eps
        free = ~on_point
        trace.append(float(w @ r))

        eta = float(w[on_point].sum())
        if not np.any(free):
            # every curve coincides with the iterate
            gap, anchored = 0.0, True
            anchor_index = int(np.argmax(on_point))
            break
        inv_r = w[free] / r[free]
        residual = inv_r @ diffs[free]
        rn = float(grid.norms(residual))

        anchored = eta > 0.0
        anchor_index = int(np.argmax(on_point)) if anchored else None
        gap = max(0.0, rn - eta)
        if gap <= gap_tol:
            break
        if it == cfg.max_iter:
            break
        iterations += 1

        t_point = (inv_r @ values[free]) / inv_r.sum()
        if anchored and rn > 0:
            beta = min(1.0, eta / rn)
            y = (1.0 - beta) * t_point + beta * y
        else:
            y = t_point

    converged = gap <= gap_tol
    return MedianFit(
        median=Curve(y, grid),
        converged=converged,
        iterations=iterations,
        residual_norm=gap,
        anchored=anchored and converged,
        anchor_index=anchor_index if (anchored and converged) else None,
        maybe_non_unique=_collinear(values, grid),
        objective_trace=tuple(trace),
    )


def objective_value(curves, y: Curve | np.ndarray, weights=None) -> float:
    """The criterion sum_k w_k ||Y_k - y|| at a candidate point."""
    values, grid, w = _prepare(curves, weights)
    point = y.values if isinstance(y, Curve) else np.asarray(y, dtype=float)
    return float(w @ grid.norms(values - point))


def score(curves, y: Curve | np.ndarray, weights=None, anchor_eps: float = 1e-12) -> Curve:
    """Estimating-equation value sum_k w_k (Y_k - y) / ||Y_k - y|| at y.

    Curves coinciding with y (within anchor_eps relative to the data
    spread) contribute nothing; a warning notes how many were skipped.
    """
    values, grid, w = _prepare(curves, weights)
    point = y.values if isinstance(y, Curve) else np.asarray(y, dtype=float)
    diffs = values - point
    r = grid.norms(diffs)
    spread = float(r.max()) if r.size else 0.0
    on_point = r <= anchor_eps * max(spread, 1.0)
    if np.any(on_point):
        warnings.warn(
            f"{int(on_point.sum())} curve(s) coincide with the evaluation point "
            "and are excluded from the score",
            stacklevel=2,
        )
    free = ~on_point
    if not np.any(free):
        return Curve(np.zeros(grid.n_points), grid)
    inv_r = w[free] / r[free]
    return Curve(inv_r @ diffs[free], grid)
