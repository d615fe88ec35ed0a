"""
k nearest neighbours of a query point among privatized user locations.
"""

import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from geobudget.elimination import EliminationResultK, pie_k
from geobudget.mechanisms import make_triple_point, make_triple_scalar, weighted_prefix_mean
from geobudget.protocol import Allocation, AnalystSession, baseline_round, resolve_allocation, round_schedule

KNN_MODES = ("bm_point", "bm_dist", "pm_point", "pm_dist")


@dataclass
class KnnResult:
    indices: Tuple[int, ...]
    spent: Dict[int, float]
    allocated: Dict[int, float]
    path: str
    elimination: Optional[EliminationResultK] = None


def knn_truth(points: np.ndarray, p, k: int) -> Tuple[int, ...]:
    """Ids of the k points nearest to p, ties to the lower id."""
    distances = np.linalg.norm(np.atleast_2d(np.asarray(points, dtype=float)) - np.asarray(p, dtype=float), axis=1)
    order = np.lexsort((np.arange(len(distances)), distances))
    return tuple(int(i) for i in order[:k])


def total_distance(points: np.ndarray, p, indices: Sequence[int]) -> float:
    """Dist(J, p): sum of the distances from p to the points in J."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return float(np.linalg.norm(points[list(indices)] - np.asarray(p, dtype=float), axis=1).sum())


def _k_smallest(scores: Dict[int, float], k: int) -> Tuple[int, ...]:
    return tuple(sorted(scores, key=lambda i: (scores[i], i))[:k])


def knn_query(session: AnalystSession, p, k: int, mode: str, allocation: Allocation, rounds: int = 4,
              split: str = "even", beta0: float = 0.025, component: int = 1) -> KnnResult:
    """Return k user ids; users that never answered rank last."""
    if mode not in KNN_MODES:
        raise ValueError(f"Unknown kNN mode: {mode}")
    n = len(session.agents)
    if not 1 <= k < n:
        raise ValueError(f"kNN needs 1 <= k < n, got k={k}, n={n}")
    p = np.asarray(p, dtype=float).reshape(-1)
    d = p.shape[0]
    allocations = resolve_allocation(session, allocation)

    def len_p(x):
        return float(np.linalg.norm(np.asarray(x, dtype=float) - p))

    scores = {i: math.inf for i in session.user_ids}
    if mode in ("bm_point", "bm_dist"):
        query = None if mode == "bm_point" else len_p
        outputs = baseline_round(session, allocations, query=query, out_dim=d if query is None else 1,
                                 component=component)
        for i, y in outputs.items():
            if y is not None:
                scores[i] = len_p(y) if mode == "bm_point" else float(y)
        spent = {i: (allocations[i] if y is not None else 0.0) for i, y in outputs.items()}
        return KnnResult(_k_smallest(scores, k), spent, allocations, "baseline")

    triple = make_triple_point(len_p, d) if mode == "pm_point" else make_triple_scalar(len_p)
    result = pie_k(session, allocations.keys(), k, rounds, beta0, round_schedule(allocations, rounds, split), len_p,
                   triple, component=component)
    if len(result.G) == k:
        return KnnResult(tuple(sorted(result.G)), result.spent, allocations, "early_exit", result)
    survivors = {i: math.inf for i in result.G}
    for i in result.G:
        series = result.transcripts[i]
        if len(series) > 0:
            mean = weighted_prefix_mean(series)
            survivors[i] = len_p(mean) if mode == "pm_point" else float(mean)
    if len(survivors) < k:
        # only possible when users were left out of the allocation
        for i in sorted(scores):
            if len(survivors) >= k:
                break
            survivors.setdefault(i, math.inf)
    return KnnResult(_k_smallest(survivors, k), result.spent, allocations, "postprocess", result)
