"""
Gaussian kernel density at a query point p.

Points farther than 6b from p contribute at most e^-18 each, so elimination
settles them early and charges them only for the rounds they took part in.
"""

import math
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from geobudget.elimination import EliminationResultNI, pie_ni
from geobudget.mechanisms import make_triple_point, make_triple_scalar, weighted_prefix_mean
from geobudget.protocol import Allocation, AnalystSession, baseline_round, resolve_allocation, round_schedule

KDE_MODES = ("bm_point", "bm_dist", "pm_point", "pm_dist")
CUTOFF_BANDWIDTHS = 6.0
TAIL_MASS = math.exp(-CUTOFF_BANDWIDTHS ** 2 / 2.0)


@dataclass
class KdeResult:
    estimate: float
    spent: Dict[int, float]
    allocated: Dict[int, float]
    path: str
    elimination: Optional[EliminationResultNI] = None


def gaussian_kernel(distance, b: float):
    return np.exp(-np.square(distance) / (2.0 * b * b))


def kde_truth(points: np.ndarray, p, b: float) -> float:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.size == 0:
        return 0.0
    distances = np.linalg.norm(points - np.asarray(p, dtype=float), axis=1)
    return float(np.mean(gaussian_kernel(distances, b)))


def kde_estimate(session: AnalystSession, p, b: float, mode: str, allocation: Allocation, rounds: int = 4,
                 split: str = "even", beta0: float = 0.025, component: int = 1) -> KdeResult:
    if not b > 0:
        raise ValueError(f"Bandwidth must be positive, got {b}")
    if mode not in KDE_MODES:
        raise ValueError(f"Unknown KDE mode: {mode}")
    p = np.asarray(p, dtype=float).reshape(-1)
    d = p.shape[0]
    n = len(session.agents)
    allocations = resolve_allocation(session, allocation)
    if n == 0 or not allocations:
        return KdeResult(0.0, {}, allocations, "baseline" if mode.startswith("bm") else "early_exit")

    def len_p(x):
        return float(np.linalg.norm(np.asarray(x, dtype=float) - p))

    if mode == "bm_point":
        outputs = baseline_round(session, allocations, out_dim=d, component=component)
        total = sum(float(gaussian_kernel(len_p(y), b)) for y in outputs.values() if y is not None)
        return KdeResult(total / n, _spent(outputs, allocations), allocations, "baseline")
    if mode == "bm_dist":
        outputs = baseline_round(session, allocations, query=len_p, component=component)
        total = sum(float(gaussian_kernel(y, b)) for y in outputs.values() if y is not None)
        return KdeResult(total / n, _spent(outputs, allocations), allocations, "baseline")

    triple = make_triple_point(len_p, d) if mode == "pm_point" else make_triple_scalar(len_p)
    result = pie_ni(session, allocations.keys(), rounds, beta0, round_schedule(allocations, rounds, split), len_p,
                    triple, nu_low=-math.inf, nu_high=CUTOFF_BANDWIDTHS * b, component=component)
    if result.early_exit:
        return KdeResult(0.0, result.spent, allocations, "early_exit", result)
    survivor_sum = 0.0
    for i in sorted(result.G):
        series = result.transcripts[i]
        if len(series) == 0:
            continue
        mean = weighted_prefix_mean(series)
        distance = len_p(mean) if mode == "pm_point" else float(mean)
        survivor_sum += float(gaussian_kernel(distance, b))
    survivor_sum /= n
    bias = len(result.S0) * TAIL_MASS / n
    estimate = survivor_sum if bias > survivor_sum else survivor_sum + bias
    return KdeResult(estimate, result.spent, allocations, "postprocess", result)


def _spent(outputs, allocations) -> Dict[int, float]:
    return {i: (allocations[i] if y is not None else 0.0) for i, y in outputs.items()}
