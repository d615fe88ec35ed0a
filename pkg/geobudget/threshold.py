"""
Central-model threshold query: is the number of qualifying records below qN?

The curator is a single user whose data is the whole record multiset under the
Hamming metric; the count of qualifying records is 1-Lipschitz there, so the
scalar triple applies unchanged.
"""

import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Sequence

import numpy as np

from geobudget.elimination import EliminationResultNI, pie_ni
from geobudget.mechanisms import make_triple_scalar, weighted_prefix_mean
from geobudget.metrics import MetricDescriptor
from geobudget.protocol import AnalystSession, baseline_round, split_budget

logger = logging.getLogger(__name__)

CURATOR = 0
THRESHOLD_MODES = ("bm", "pm")


@dataclass
class ThresholdResult:
    answer: bool
    spent: Dict[int, float]
    allocated: Dict[int, float]
    path: str
    elimination: Optional[EliminationResultNI] = None


def qualifying_count(records: Sequence[Any], qualifies: Optional[Callable[[Any], bool]] = None) -> int:
    qualifies = qualifies or bool
    return sum(1 for record in records if qualifies(record))


def curator_session(records: Sequence[Any], budget: float, rng: Optional[np.random.Generator] = None,
                    filter_kind: str = "cgp") -> AnalystSession:
    return AnalystSession.from_points([tuple(records)], budget, MetricDescriptor.hamming(), filter_kind, rng)


def threshold_query(records: Sequence[Any], q: float, rho: float, mode: str = "pm", rounds: int = 4,
                    split: str = "even", beta0: float = 0.025, budget: Optional[float] = None,
                    rng: Optional[np.random.Generator] = None,
                    qualifies: Optional[Callable[[Any], bool]] = None) -> ThresholdResult:
    """Answer 1{|H(x)| < qN} with a rho allocation out of the curator's budget."""
    if not 0 < q < 1:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    if len(records) == 0:
        raise ValueError("Threshold queries need a nonempty dataset")
    if mode not in THRESHOLD_MODES:
        raise ValueError(f"Unknown threshold mode: {mode}")
    cutoff = q * len(records)
    session = curator_session(records, rho if budget is None else budget, rng)
    allocated = {CURATOR: float(rho)}

    def count(x):
        return float(qualifying_count(x, qualifies))

    if mode == "bm":
        outputs = baseline_round(session, allocated, query=count)
        noisy = outputs[CURATOR]
        if noisy is None:
            raise RuntimeError("Curator budget cannot cover the allocation")
        return ThresholdResult(bool(noisy < cutoff), {CURATOR: float(rho)}, allocated, "baseline")

    triple = make_triple_scalar(count, MetricDescriptor.hamming())
    result = pie_ni(session, [CURATOR], rounds, beta0, split_budget(rho, rounds, split), count, triple,
                    nu_low=cutoff, nu_high=cutoff)
    if CURATOR in result.S1:
        return ThresholdResult(True, result.spent, allocated, "early_exit", result)
    if CURATOR in result.S0:
        return ThresholdResult(False, result.spent, allocated, "early_exit", result)
    series = result.transcripts[CURATOR]
    if len(series) == 0:
        raise RuntimeError("Curator budget cannot cover the allocation")
    answer = bool(weighted_prefix_mean(series) < cutoff)
    return ThresholdResult(answer, result.spent, allocated, "postprocess", result)
