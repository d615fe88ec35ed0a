"""
Private iterative elimination.

Both templates privatize each surviving user once per round with that user's
next round parameter, maintain a confidence interval [phi_bar - h_bar, phi_bar + h_bar]
from the user's full output prefix, and drop users as soon as their interval
decides the question. Dropped users keep the rest of their allocation.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

from geobudget.accountant import Flag
from geobudget.mechanisms import NULL_MECHANISM, NoisyEstimateSeries, ValidTriple, make_triple_scalar
from geobudget.protocol import AnalystSession, QueryDirective, ScheduleError

logger = logging.getLogger(__name__)

RoundParams = Union[Sequence[float], Mapping[int, Sequence[float]]]


@dataclass
class EliminationResultNI:
    """S1: decided below nu_low; S0: decided above nu_high; G: undecided (including halted users)."""
    S0: FrozenSet[int]
    S1: FrozenSet[int]
    G: FrozenSet[int]
    transcripts: Dict[int, NoisyEstimateSeries]
    spent: Dict[int, float]
    rounds: int
    survivor_counts: List[int] = field(default_factory=list)
    halted: FrozenSet[int] = frozenset()
    intervals: Dict[int, Tuple[float, float]] = field(default_factory=dict)
    max_rounds: int = 0

    @property
    def early_exit(self) -> bool:
        """Every user was decided and the loop stopped before round max_rounds."""
        return not self.G and self.rounds < self.max_rounds


@dataclass
class EliminationResultK:
    G: FrozenSet[int]
    transcripts: Dict[int, NoisyEstimateSeries]
    spent: Dict[int, float]
    rounds: int
    survivor_counts: List[int] = field(default_factory=list)
    halted: FrozenSet[int] = frozenset()
    selected: Tuple[int, ...] = ()
    intervals: Dict[int, Tuple[float, float]] = field(default_factory=dict)


def _params_for(round_params: RoundParams, user_id: int) -> Sequence[float]:
    if isinstance(round_params, Mapping):
        return round_params[user_id]
    return round_params


def _check_params(round_params: RoundParams, users: Iterable[int], c: int) -> None:
    for user_id in users:
        params = _params_for(round_params, user_id)
        if len(params) < c:
            raise ScheduleError(f"User {user_id} has {len(params)} round parameters for {c} rounds")
        if any(not r > 0 for r in params[:c]):
            raise ScheduleError(f"User {user_id} has a nonpositive round parameter")


def _privatize_round(session: AnalystSession, triple: ValidTriple, component: int, survivors: Set[int],
                     round_params: RoundParams, j: int):
    per_user = {i: triple.mechanism_spec(_params_for(round_params, i)[j - 1]) for i in survivors}
    directive = QueryDirective(NULL_MECHANISM, component, survivors, per_user)
    return session.analyst_round(directive), per_user


def _update_interval(series: NoisyEstimateSeries, triple: ValidTriple, beta: float) -> Tuple[float, float]:
    return triple.estimate(series), triple.width(series.params, beta)


def pie_ni(session: AnalystSession, G0: Iterable[int], c: int, beta0: float, round_params: RoundParams,
           phi: Callable[[Any], float], triple: Optional[ValidTriple] = None,
           nu_low: float = -math.inf, nu_high: float = math.inf, component: int = 1) -> EliminationResultNI:
    """Non-interactive elimination: route users below nu_low to S1, above nu_high to S0."""
    if c < 1:
        raise ScheduleError(f"Number of rounds must be >= 1, got {c}")
    if nu_low > nu_high:
        raise ValueError(f"nu_low ({nu_low}) must not exceed nu_high ({nu_high})")
    if not 0 < beta0 < 1:
        raise ValueError(f"beta0 must lie in (0, 1), got {beta0}")
    triple = triple if triple is not None else make_triple_scalar(phi)
    survivors = set(G0)
    _check_params(round_params, survivors, c)
    transcripts = {i: NoisyEstimateSeries() for i in survivors}
    S0: Set[int] = set()
    S1: Set[int] = set()
    halted: Set[int] = set()
    intervals: Dict[int, Tuple[float, float]] = {}
    survivor_counts: List[int] = []
    j = 0
    while j < c and survivors:
        j += 1
        beta = beta0 / (c * len(survivors))
        results, per_user = _privatize_round(session, triple, component, survivors, round_params, j)
        next_survivors = set()
        for i in sorted(survivors):
            result = results[i]
            if result.flag is Flag.HALT:
                halted.add(i)
                continue
            transcripts[i].append(result.output, per_user[i].privacy_param)
            estimate, width = _update_interval(transcripts[i], triple, beta)
            intervals[i] = (estimate, width)
            if estimate < -width + nu_low:
                S1.add(i)
            elif estimate > width + nu_high:
                S0.add(i)
            else:
                next_survivors.add(i)
        survivors = next_survivors
        survivor_counts.append(len(survivors))
        logger.debug(f"PIE-NI round {j}: |S0|={len(S0)} |S1|={len(S1)} |G|={len(survivors)} halted={len(halted)}")
    if halted:
        logger.warning(f"{len(halted)} users exhausted their budget during elimination")
    return EliminationResultNI(
        S0=frozenset(S0),
        S1=frozenset(S1),
        G=frozenset(survivors | halted),
        transcripts=transcripts,
        spent={i: math.fsum(series.params) for i, series in transcripts.items()},
        rounds=j,
        survivor_counts=survivor_counts,
        halted=frozenset(halted),
        intervals=intervals,
        max_rounds=c,
    )


def pie_k(session: AnalystSession, G0: Iterable[int], k: int, c: int, beta0: float, round_params: RoundParams,
          phi: Callable[[Any], float], triple: Optional[ValidTriple] = None,
          component: int = 1) -> EliminationResultK:
    """Interactive elimination keeping every user that may still be among the k smallest phi values."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if c < 1:
        raise ScheduleError(f"Number of rounds must be >= 1, got {c}")
    if not 0 < beta0 < 1:
        raise ValueError(f"beta0 must lie in (0, 1), got {beta0}")
    triple = triple if triple is not None else make_triple_scalar(phi)
    survivors = set(G0)
    transcripts = {i: NoisyEstimateSeries() for i in survivors}
    if len(survivors) > k:
        _check_params(round_params, survivors, c)
    halted: Set[int] = set()
    intervals: Dict[int, Tuple[float, float]] = {}
    survivor_counts: List[int] = []
    selected: Tuple[int, ...] = ()
    j = 0
    while j < c and len(survivors) > k:
        j += 1
        beta = beta0 / (c * len(survivors))
        results, per_user = _privatize_round(session, triple, component, survivors, round_params, j)
        active = []
        for i in sorted(survivors):
            result = results[i]
            if result.flag is Flag.HALT:
                halted.add(i)
                continue
            transcripts[i].append(result.output, per_user[i].privacy_param)
            intervals[i] = _update_interval(transcripts[i], triple, beta)
            active.append(i)
        if len(active) <= k:
            survivors = set(active)
            survivor_counts.append(len(survivors))
            break
        ranked = sorted(active, key=lambda i: (intervals[i][0] + intervals[i][1], i))
        selected = tuple(ranked[:k])
        t_estimate, t_width = intervals[selected[-1]]
        t_low, t_high = t_estimate - t_width, t_estimate + t_width
        survivors = set(selected) | {
            i for i in active
            if intervals[i][0] - intervals[i][1] <= t_high and intervals[i][0] + intervals[i][1] >= t_low
        }
        survivor_counts.append(len(survivors))
        logger.debug(f"PIE-k round {j}: |G|={len(survivors)} halted={len(halted)}")
    if halted:
        logger.warning(f"{len(halted)} users exhausted their budget during elimination")
    return EliminationResultK(
        G=frozenset(survivors | halted),
        transcripts=transcripts,
        spent={i: math.fsum(series.params) for i, series in transcripts.items()},
        rounds=j,
        survivor_counts=survivor_counts,
        halted=frozenset(halted),
        selected=selected,
        intervals=intervals,
    )
