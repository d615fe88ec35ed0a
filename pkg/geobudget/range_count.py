"""
Range counting over privatized locations.

Baselines privatize once with the whole allocation and count; the
privacy-saving modes run non-interactive elimination on the signed distance to
the range boundary, so users far from the boundary are settled early.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from geobudget.elimination import EliminationResultNI, pie_ni
from geobudget.geometry import Rectangle, proj_gamma, user_threshold
from geobudget.mechanisms import make_triple_point, make_triple_scalar, weighted_prefix_mean
from geobudget.protocol import (
    Allocation,
    AnalystSession,
    baseline_round,
    budget_schedule_next,
    resolve_allocation,
    round_schedule,
)

logger = logging.getLogger(__name__)

RANGE_MODES = ("bm_point", "bm_dist", "pm_point", "pm_dist")


@dataclass
class RangeCountResult:
    estimate: float
    spent: Dict[int, float]
    allocated: Dict[int, float]
    path: str
    elimination: Optional[EliminationResultNI] = None


def range_count_truth(points: np.ndarray, rect: Rectangle) -> int:
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(points) == 0:
        return 0
    return int(np.count_nonzero(proj_gamma(rect, points) < 0))


def range_count(session: AnalystSession, rect: Rectangle, mode: str, allocation: Allocation, rounds: int = 4,
                split: str = "even", beta0: float = 0.025, shift: bool = True,
                component: int = 1) -> RangeCountResult:
    """Estimate how many users' component lies inside rect."""
    if mode not in RANGE_MODES:
        raise ValueError(f"Unknown range counting mode: {mode}")
    allocations = resolve_allocation(session, allocation)
    if not allocations:
        return RangeCountResult(0.0, {}, {}, "baseline" if mode.startswith("bm") else "early_exit")

    def phi(x):
        return proj_gamma(rect, x)

    def threshold(rho: float) -> float:
        return user_threshold(rho, rect.length, rect.width, shift)

    if mode == "bm_point":
        outputs = baseline_round(session, allocations, out_dim=2, component=component)
        count = sum(1 for y in outputs.values() if y is not None and phi(y) < 0)
        return RangeCountResult(float(count), _spent(outputs, allocations), allocations, "baseline")
    if mode == "bm_dist":
        outputs = baseline_round(session, allocations, query=phi, component=component)
        count = sum(1 for i, y in outputs.items() if y is not None and y < threshold(allocations[i]))
        return RangeCountResult(float(count), _spent(outputs, allocations), allocations, "baseline")

    triple = make_triple_point(phi, 2) if mode == "pm_point" else make_triple_scalar(phi)
    result = pie_ni(session, allocations.keys(), rounds, beta0, round_schedule(allocations, rounds, split), phi,
                    triple, nu_low=0.0, nu_high=0.0, component=component)
    count = len(result.S1)
    if result.early_exit:
        return RangeCountResult(float(count), result.spent, allocations, "early_exit", result)
    for i in sorted(result.G):
        series = result.transcripts[i]
        if len(series) == 0:
            continue
        mean = weighted_prefix_mean(series)
        if mode == "pm_point":
            count += int(phi(np.asarray(mean, dtype=float)) < 0)
        else:
            count += int(mean < threshold(series.cumulative(len(series))))
    return RangeCountResult(float(count), result.spent, allocations, "postprocess", result)


def multi_range_count(session: AnalystSession, queries: Sequence[Tuple[int, Rectangle]], budget: float, mode: str,
                      rounds: int = 4, split: str = "even", beta0: float = 0.025, shift: bool = True,
                      start: float = 0.75) -> List[RangeCountResult]:
    """Answer m range queries in order, each on its own component, recycling earlier savings."""
    m = len(queries)
    results = []
    for l, (component, rect) in enumerate(queries, start=1):
        allocation = {
            i: budget_schedule_next(l, m, budget, session.remaining_budget(i), start)
            for i in session.user_ids
        }
        results.append(range_count(session, rect, mode, allocation, rounds, split, beta0, shift, component))
        logger.debug(f"Query {l}/{m} ({mode}): estimate={results[-1].estimate}")
    return results


def _spent(outputs, allocations) -> Dict[int, float]:
    return {i: (allocations[i] if y is not None else 0.0) for i, y in outputs.items()}
