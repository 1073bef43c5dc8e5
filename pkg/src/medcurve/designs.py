"""Sampling designs over a finite frame of N units.

Units are addressed by position 0..N-1 throughout; mapping positions to
external unit ids is the caller's business. Every draw function is pure
given (arguments, seed): it builds its own generator and never touches
global RNG state. Seeds may be ints or numpy SeedSequence objects; all
derived streams come from SeedSequence spawning, so concurrent draws with
distinct seeds never share a stream.

Four designs are covered. SRSWOR picks a uniform n-subset. Systematic
sampling sorts the frame by an ordering variable and walks it with a
real-valued step N/n from a random real start, which keeps every
first-order inclusion probability exactly n/N even when N/n is not an
integer. Stratified sampling runs independent SRSWOR draws within strata.
PPS sampling draws n times with replacement with per-unit probability
p_k; estimation then uses the distinct units with inclusion probabilities
1 - (1 - p_k)^n, while the draw multiplicities stick around for the
with-replacement variance estimator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .curves import CurvePopulation
from .errors import DesignError

__all__ = [
    "StrataSpec",
    "SampleDraw",
    "as_seed",
    "draw_srswor",
    "draw_systematic",
    "draw_stratified",
    "draw_ppswr",
    "pps_weights_from_curves",
    "joint_inclusion",
    "pi_kl_matrix",
    "SRSWOR_APPROXIMATION",
    "HANSEN_HURWITZ",
]

# rule tags returned by joint_inclusion for designs without usable pairwise
# inclusion probabilities
SRSWOR_APPROXIMATION = "use-SRSWOR-approximation"
HANSEN_HURWITZ = "use-Hansen-Hurwitz"


def as_seed(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if seed is None:
        raise DesignError("a seed is required; draws must be reproducible")
    return np.random.SeedSequence(seed)


@dataclass(frozen=True, eq=False)
class StrataSpec:
    """Partition of the frame into H nonempty strata.

    labels holds a stratum index 0..H-1 per unit. from_labels accepts any
    label values and canonicalizes them in sorted-unique order.
    """

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.size == 0:
            raise DesignError("strata labels must be a nonempty vector")
        if not np.issubdtype(labels.dtype, np.integer):
            raise DesignError("strata labels must be integers; use from_labels to canonicalize")
        labels = labels.astype(np.int64, copy=True)
        h = int(labels.max()) + 1
        if labels.min() < 0:
            raise DesignError("strata labels must be non-negative")
        sizes = np.bincount(labels, minlength=h)
        if np.any(sizes == 0):
            raise DesignError("every stratum must contain at least one unit")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_labels(cls, raw) -> "StrataSpec":
        raw = np.asarray(raw)
        _, canonical = np.unique(raw, return_inverse=True)
        return cls(labels=canonical)

    @property
    def n_units(self) -> int:
        return self.labels.size

    @property
    def n_strata(self) -> int:
        return int(self.labels.max()) + 1

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_strata)

    def members(self, h: int) -> np.ndarray:
        return np.flatnonzero(self.labels == h)


@dataclass(frozen=True, eq=False)
class SampleDraw:
    """One realized sample.

    units: selected distinct frame positions, ascending. pi: first-order
    inclusion probability per selected unit. design: the parameters needed
    later (type, N, n, and per-design extras such as full strata labels or
    the p vector). multiplicities: PPS draw counts per distinct unit, None
    elsewhere.
    """

    units: np.ndarray
    pi: np.ndarray
    design: dict[str, Any]
    multiplicities: np.ndarray | None = None

    def __post_init__(self):
        units = np.asarray(self.units, dtype=np.int64)
        pi = np.asarray(self.pi, dtype=float)
        if units.ndim != 1 or units.size == 0:
            raise DesignError("a sample must contain at least one unit")
        if np.any(np.diff(units) <= 0):
            raise DesignError("sample units must be distinct and ascending")
        if pi.shape != units.shape:
            raise DesignError("pi must align with the selected units")
        if np.any(pi <= 0) or np.any(pi > 1 + 1e-12):
            raise DesignError("inclusion probabilities must lie in (0, 1]")
        units.setflags(write=False)
        pi.setflags(write=False)
        object.__setattr__(self, "units", units)
        object.__setattr__(self, "pi", np.minimum(pi, 1.0))
        if self.multiplicities is not None:
            mult = np.asarray(self.multiplicities, dtype=np.int64)
            if mult.shape != units.shape or np.any(mult < 1):
                raise DesignError("multiplicities must be positive and align with units")
            mult.setflags(write=False)
            object.__setattr__(self, "multiplicities", mult)

    @property
    def n_units(self) -> int:
        return self.units.size

    @property
    def weights(self) -> np.ndarray:
        return 1.0 / self.pi


def _check_sizes(n: int, limit: int, what: str = "population"):
    if not 1 <= n <= limit:
        raise DesignError(f"sample size {n} must lie in 1..{limit} ({what} size)")


def draw_srswor(n_population: int, n: int, seed) -> SampleDraw:
    """Uniform n-subset of 0..N-1; pi = n/N for every unit."""
    _check_sizes(n, n_population)
    rng = np.random.default_rng(as_seed(seed))
    units = np.sort(rng.choice(n_population, size=n, replace=False))
    pi = np.full(n, n / n_population)
    return SampleDraw(units, pi, {"type": "srswor", "N": n_population, "n": n})


def draw_systematic(order_key, n: int, seed) -> SampleDraw:
    """Systematic selection along the frame sorted by order_key.

    The step is the real number N/n and the start is uniform on [0, step);
    selected ranks are floor(start + j * step). Ties in order_key are
    broken by a seeded random permutation so a constant key degrades to
    random-start selection on a random ordering.
    """
    order_key = np.asarray(order_key, dtype=float)
    n_population = order_key.size
    _check_sizes(n, n_population)
    rng = np.random.default_rng(as_seed(seed))
    perm = rng.permutation(n_population)
    order = perm[np.argsort(order_key[perm], kind="stable")]
    step = n_population / n
    start = rng.uniform(0.0, step)
    ranks = np.floor(start + step * np.arange(n)).astype(np.int64)
    units = np.sort(order[ranks])
    pi = np.full(n, n / n_population)
    return SampleDraw(units, pi, {"type": "systematic", "N": n_population, "n": n})


def draw_stratified(strata: StrataSpec, alloc, seed) -> SampleDraw:
    """Independent SRSWOR of alloc[h] units within each stratum."""
    alloc = np.asarray(alloc, dtype=np.int64)
    sizes = strata.sizes
    if alloc.shape != (strata.n_strata,):
        raise DesignError(f"allocation must give one size per stratum ({strata.n_strata})")
    for h, (n_h, cap) in enumerate(zip(alloc, sizes)):
        if not 1 <= n_h <= cap:
            raise DesignError(f"allocation {n_h} for stratum {h} must lie in 1..{cap}")
    children = as_seed(seed).spawn(strata.n_strata)
    picked = []
    for h in range(strata.n_strata):
        members = strata.members(h)
        rng = np.random.default_rng(children[h])
        picked.append(members[rng.choice(members.size, size=int(alloc[h]), replace=False)])
    units = np.sort(np.concatenate(picked))
    labels = strata.labels[units]
    pi = alloc[labels] / sizes[labels]
    design = {
        "type": "stratified",
        "N": strata.n_units,
        "n": int(alloc.sum()),
        "labels": strata.labels,
        "alloc": alloc.copy(),
        "sizes": sizes,
    }
    return SampleDraw(units, pi, design)


def draw_ppswr(p, n: int, seed) -> SampleDraw:
    """n independent draws with per-unit probability p_k, with replacement.

    Records the distinct units with multiplicities; pi is the probability
    of entering the distinct set, 1 - (1 - p_k)^n.
    """
    p = np.asarray(p, dtype=float)
    n_population = p.size
    if n < 1:
        raise DesignError("need at least one draw")
    if np.any(~np.isfinite(p)) or np.any(p <= 0):
        raise DesignError("selection probabilities must be positive")
    if abs(p.sum() - 1.0) > 1e-10:
        raise DesignError(f"selection probabilities sum to {p.sum()!r}, expected 1")
    rng = np.random.default_rng(as_seed(seed))
    draws = rng.choice(n_population, size=n, replace=True, p=p / p.sum())
    units, mult = np.unique(draws, return_counts=True)
    pi = 1.0 - (1.0 - p[units]) ** n
    design = {"type": "ppswr", "N": n_population, "n": n, "p": p.copy()}
    return SampleDraw(units, pi, design, multiplicities=mult)


def pps_weights_from_curves(pop: CurvePopulation) -> np.ndarray:
    """Draw probabilities proportional to each unit's plain mean level."""
    means = pop.values.mean(axis=1)
    bad = np.flatnonzero(means <= 0)
    if bad.size:
        raise DesignError(
            f"unit {pop.ids[bad[0]]!r} has nonpositive mean level; "
            "size-proportional draw probabilities need positive means"
        )
    return means / means.sum()


def joint_inclusion(design: dict[str, Any], k: int, l: int) -> float | str:
    """Pairwise inclusion probability, or the rule tag when none is usable.

    Systematic samples give pi_kl = 0 for units that can never share a
    sample, so the tag points at the SRSWOR approximation; with-replacement
    PPS points at the Hansen-Hurwitz estimator.
    """
    dtype = design["type"]
    n_population, n = design["N"], design["n"]
    for unit in (k, l):
        if not 0 <= unit < n_population:
            raise DesignError(f"unit {unit} outside the frame 0..{n_population - 1}")
    if dtype == "srswor":
        if k == l:
            return n / n_population
        return n * (n - 1) / (n_population * (n_population - 1))
    if dtype == "stratified":
        labels, alloc, sizes = design["labels"], design["alloc"], design["sizes"]
        hk, hl = labels[k], labels[l]
        pik = alloc[hk] / sizes[hk]
        if k == l:
            return float(pik)
        if hk == hl:
            n_h, cap = alloc[hk], sizes[hk]
            return float(n_h * (n_h - 1) / (cap * (cap - 1)))
        return float(pik * alloc[hl] / sizes[hl])
    if dtype == "systematic":
        if k == l:
            return n / n_population
        return SRSWOR_APPROXIMATION
    if dtype == "ppswr":
        if k == l:
            return float(1.0 - (1.0 - design["p"][k]) ** n)
        return HANSEN_HURWITZ
    raise DesignError(f"unknown design type {dtype!r}")


def pi_kl_matrix(design: dict[str, Any]) -> np.ndarray:
    """Full N x N pairwise inclusion matrix (diagonal = pi_k).

    Only meaningful for designs with closed-form pairwise probabilities;
    intended for small enumeration-scale checks.
    """
    dtype = design["type"]
    if dtype not in ("srswor", "stratified"):
        raise DesignError(
            f"no closed-form pairwise probabilities for {dtype!r}; "
            f"joint_inclusion returns the applicable rule tag"
        )
    n_population = design["N"]
    out = np.empty((n_population, n_population))
    for k in range(n_population):
        for l in range(n_population):
            out[k, l] = joint_inclusion(design, k, l)
    return out
