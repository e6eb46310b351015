"""Region-weighted allocation of expert samples.

Each time region gets a difficulty ``gamma = (delta - L*Delta + eps)^-p`` and an
importance ``rho = gamma * A`` where ``A`` is its share of the episode.  The
weights minimizing ``sum_i rho_i / sqrt(w_i)`` on the probability simplex are
``w_i = rho_i^(2/3) / sum_j rho_j^(2/3)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SamplingDomainError",
    "RegionSpec",
    "SamplingPlan",
    "DEFAULT_INTERVALS",
    "DEFAULT_DELTAS",
    "difficulty",
    "importance",
    "optimal_weights",
    "bound_objective",
    "brute_force_weights",
    "build_regions",
    "allocate_counts",
    "make_plan",
    "allocate_samples",
    "region_index",
]

DEFAULT_INTERVALS = ((2.0, 3.0), (0.0, 2.0), (3.0, 5.0))
DEFAULT_DELTAS = (0.05, 0.15, 0.30)


class SamplingDomainError(ValueError):
    """A region's tolerance margin ``delta - L*Delta + eps`` is not positive."""


@dataclass(frozen=True)
class RegionSpec:
    interval: tuple
    delta: float
    A: float
    L_times_Delta: float = 0.0
    eps_num: float = 0.01
    p: float = 1.0

    def __post_init__(self):
        t0, t1 = (float(x) for x in self.interval)
        if not t1 > t0:
            raise ValueError(f"region interval must have t_end > t_start, got {self.interval}")
        object.__setattr__(self, "interval", (t0, t1))
        if not 0.0 < self.A <= 1.0:
            raise ValueError(f"A must lie in (0, 1], got {self.A}")
        if self.margin <= 0.0:
            raise SamplingDomainError(
                f"delta - L*Delta + eps must be > 0 (got {self.margin:g})")

    @property
    def margin(self) -> float:
        return self.delta - self.L_times_Delta + self.eps_num

    def contains(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return (t >= self.interval[0]) & (t < self.interval[1])


def difficulty(region: RegionSpec) -> float:
    m = region.delta - region.L_times_Delta + region.eps_num
    if m <= 0.0:
        raise SamplingDomainError(f"delta - L*Delta + eps must be > 0 (got {m:g})")
    return float(m ** (-region.p))


def importance(region: RegionSpec) -> float:
    return difficulty(region) * region.A


def _positive(rhos) -> np.ndarray:
    r = np.atleast_1d(np.asarray(rhos, dtype=float))
    if r.size == 0 or np.any(~np.isfinite(r)) or np.any(r <= 0):
        raise ValueError("importance coefficients must be finite and > 0")
    return r


def optimal_weights(rhos) -> np.ndarray:
    r = _positive(rhos)
    # scale first so large rho values cannot overflow the power
    c = (r / r.max()) ** (2.0 / 3.0)
    return c / c.sum()


def bound_objective(rhos, w) -> float:
    """``F(w) = sum_i rho_i w_i^(-1/2)``; infinite if any weight is zero."""
    r, w = np.asarray(rhos, float), np.asarray(w, float)
    if np.any(w <= 0):
        return float("inf")
    return float(np.sum(r / np.sqrt(w)))


def brute_force_weights(rhos, grid_step: float = 0.01) -> np.ndarray:
    """Exhaustive minimization of :func:`bound_objective` over a simplex grid."""
    r = _positive(rhos)
    k = r.size
    if not 0.0 < grid_step <= 0.1:
        raise ValueError("grid_step must lie in (0, 0.1]")
    if k > 4:
        raise ValueError("brute-force oracle supports at most 4 regions")
    if k == 1:
        return np.ones(1)
    m = int(round(1.0 / grid_step))
    best, best_w = np.inf, None
    for head in itertools.product(range(1, m), repeat=k - 1):
        last = m - sum(head)
        if last < 1:
            continue
        w = np.array(head + (last,), dtype=float) / m
        f = float(np.sum(r / np.sqrt(w)))
        if f < best:
            best, best_w = f, w
    return best_w


def build_regions(total_T: float, intervals=DEFAULT_INTERVALS, deltas=DEFAULT_DELTAS,
                  eps_num: float = 0.01, p: float = 1.0, L_times_Delta=0.0) -> list[RegionSpec]:
    """Regions from time intervals that must tile ``[0, total_T]`` exactly.

    Intervals may be listed in any order (priority order is preserved);
    ``L_times_Delta`` is a scalar or one value per region.
    """
    if total_T <= 0:
        raise ValueError("total_T must be > 0")
    intervals = [tuple(float(x) for x in iv) for iv in intervals]
    deltas = list(np.broadcast_to(np.asarray(deltas, float), (len(intervals),)))
    ld = list(np.broadcast_to(np.asarray(L_times_Delta, float), (len(intervals),)))
    tol = 1e-9 * total_T
    edges = sorted(intervals)
    if abs(edges[0][0]) > tol or abs(edges[-1][1] - total_T) > tol:
        raise ValueError(f"intervals must cover [0, {total_T}]")
    for (a0, a1), (b0, b1) in zip(edges, edges[1:]):
        if b0 < a1 - tol:
            raise ValueError(f"intervals {(a0, a1)} and {(b0, b1)} overlap")
        if b0 > a1 + tol:
            raise ValueError(f"gap between {a1} and {b0}")
    return [RegionSpec((a, b), float(d), (b - a) / total_T, float(l), eps_num, p)
            for (a, b), d, l in zip(intervals, deltas, ld)]


def allocate_counts(weights, budget: int) -> np.ndarray:
    """Largest-remainder rounding of ``weights * budget`` hitting ``budget`` exactly."""
    w = np.asarray(weights, dtype=float)
    if budget < 0:
        raise ValueError("budget must be >= 0")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be non-negative and sum to 1")
    raw = w * budget
    counts = np.floor(raw + 1e-9).astype(int)
    short = budget - counts.sum()
    if short > 0:
        # stable ordering so ties go to the earlier (higher priority) region
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


@dataclass
class SamplingPlan:
    regions: list
    gamma: np.ndarray
    rho: np.ndarray
    weights: np.ndarray
    budget: int
    counts: np.ndarray
    strategy: str = "optimal"


def make_plan(regions, budget: int, strategy: str = "optimal") -> SamplingPlan:
    """``optimal`` applies the closed-form weights; ``uniform`` samples uniformly in time."""
    gamma = np.array([difficulty(r) for r in regions])
    A = np.array([r.A for r in regions])
    rho = gamma * A
    if strategy == "optimal":
        w = optimal_weights(rho)
    elif strategy == "uniform":
        w = A / A.sum()
    else:
        raise ValueError("strategy must be 'optimal' or 'uniform'")
    return SamplingPlan(list(regions), gamma, rho, w, int(budget),
                        allocate_counts(w, int(budget)), strategy)


def allocate_samples(region_of, plan: SamplingPlan, seed: int = 0) -> np.ndarray:
    """Draw pool indices per region without replacement.

    ``region_of`` holds the region index of every pool entry.  Returns the
    chosen pool indices, grouped by region in plan order.
    """
    region_of = np.asarray(region_of)
    rng = np.random.default_rng(seed)
    chosen = []
    for i, n in enumerate(plan.counts):
        idx = np.flatnonzero(region_of == i)
        if idx.size < n:
            raise ValueError(f"region {i} has {idx.size} pool states, {n} requested")
        chosen.append(rng.choice(idx, size=n, replace=False))
    return np.concatenate(chosen) if chosen else np.zeros(0, dtype=int)


def region_index(regions, t) -> np.ndarray:
    """Region of each time stamp; the closing end of the episode belongs to the last interval."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.full(t.shape, -1, dtype=int)
    for i, r in enumerate(regions):
        out[r.contains(t)] = i
    end = max(r.interval[1] for r in regions)
    last = max(range(len(regions)), key=lambda i: regions[i].interval[1])
    out[np.isclose(t, end)] = last
    return out
