"""
The analyst / local-view interaction.

Every user runs a local view: on receiving a mechanism it asks its own privacy
filter whether the worst-case cost still fits, and either answers with a noisy
output (CONT) or stops for good (HALT). The analyst mirrors each user's budget
from the public mechanism declarations alone and never sees raw data.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from geobudget.accountant import (
    FilterSpec,
    FilterState,
    Flag,
    filter_check,
    filter_cost,
    worst_case_cost,
)
from geobudget.mechanisms import NULL_MECHANISM, MechanismSpec, Value, run_mechanism
from geobudget.metrics import ComponentSpec, DataTuple, MetricDescriptor
from geobudget.utils import make_rng, output_digest, spawn_rngs, write_jsonl

logger = logging.getLogger(__name__)


class UnregisteredComponentError(KeyError):
    """A query addressed a data component that was never registered."""


class ScheduleError(ValueError):
    """Invalid budget schedule or split request."""


@dataclass
class UserAgent:
    """One user's local view: its data, its filter and its own coin tosses."""
    user_id: int
    data: DataTuple
    filter_spec: FilterSpec
    state: FilterState = field(default_factory=FilterState)
    rng: Optional[np.random.Generator] = None

    @property
    def budget(self) -> float:
        return self.filter_spec.budget

    @property
    def halted(self) -> bool:
        return self.state.halted

    @property
    def spent(self) -> float:
        return self.state.total

    @property
    def remaining(self) -> float:
        return max(0.0, self.budget - self.spent)


@dataclass(frozen=True)
class QueryDirective:
    """A mechanism sent to the targets G_t on one component; per_user overrides the mechanism for some ids."""
    mechanism: MechanismSpec
    component: int = 1
    targets: Optional[Iterable[int]] = None
    per_user: Optional[Mapping[int, MechanismSpec]] = None

    def __post_init__(self):
        if self.targets is not None:
            object.__setattr__(self, "targets", frozenset(self.targets))

    def mechanism_for(self, user_id: int) -> MechanismSpec:
        if self.per_user is not None and user_id in self.per_user:
            return self.per_user[user_id]
        return self.mechanism


class RoundResult(NamedTuple):
    flag: Flag
    output: Optional[Value]
    cost: float


def local_receive(agent: UserAgent, mech: MechanismSpec, rng: Optional[np.random.Generator] = None,
                  component: int = 1, **search) -> Tuple[Flag, Optional[Value]]:
    """Answer one mechanism from the user's side.

    A halted user answers (HALT, None) forever. A zero-cost mechanism leaves the ledger
    untouched. Otherwise the filter decides; on HALT nothing is charged and the user
    never runs a mechanism again.
    """
    if agent.halted:
        return Flag.HALT, None
    cost = filter_cost(agent.filter_spec, mech)
    if cost == 0:
        return Flag.CONT, None
    if component not in agent.data:
        raise UnregisteredComponentError(f"User {agent.user_id} has no component {component}")
    if filter_check(agent.filter_spec, agent.state, cost, **search) is Flag.HALT:
        agent.state.halt()
        logger.debug(f"User {agent.user_id} halted at spent={agent.spent:.6g} on request cost={cost:.6g}")
        return Flag.HALT, None
    agent.state.record(cost)
    rng = rng if rng is not None else agent.rng
    if rng is None:
        raise RuntimeError(f"User {agent.user_id} has no random generator")
    return Flag.CONT, run_mechanism(mech, agent.data[component], rng)


def account_component_query(directive: QueryDirective, lam: float = math.inf,
                            filter_spec: Optional[FilterSpec] = None) -> float:
    """Cost of a component-level query against the single per-user budget.

    Under the product metric a mechanism reading only component l costs exactly what it
    costs on that component's own metric.
    """
    if filter_spec is None:
        return worst_case_cost(directive.mechanism, lam)
    return filter_cost(filter_spec, directive.mechanism, lam)


def budget_schedule_next(l: int, m: int, B: float, B_i: float, start: float = 0.75) -> float:
    """Per-user allocation for query l of m that releases a growing share of earlier savings.

    gamma_l ramps linearly from start (l = 1) to 1 (l = m); the allocation is
    gamma_l * (B_i - ((m - (l - 1)) / m) * B) + B / m, clamped to [0, B_i].
    """
    if m < 1 or not 1 <= l <= m:
        raise ScheduleError(f"Query index must satisfy 1 <= l <= m, got l={l}, m={m}")
    if not 0 <= start <= 1:
        raise ScheduleError(f"Starting proportion must lie in [0, 1], got {start}")
    gamma = 1.0 if m == 1 else ((l - 1) / (m - 1)) * (1.0 - start) + start
    planned_remaining = ((m - (l - 1)) / m) * B
    r = gamma * (B_i - planned_remaining) + B / m
    return float(min(max(r, 0.0), max(B_i, 0.0)))


def split_budget(rho: float, c: int, scheme: str = "even") -> List[float]:
    """Split rho into c per-round parameters that sum to at most rho, with the last absorbing rounding."""
    if c < 1:
        raise ScheduleError(f"Number of rounds must be >= 1, got {c}")
    if not rho > 0:
        raise ScheduleError(f"rho must be positive, got {rho}")
    if scheme == "even":
        weights = np.full(c, 1.0 / c)
    elif scheme == "doubling":
        weights = 2.0 ** np.arange(c) / (2.0 ** c - 1.0)
    else:
        raise ScheduleError(f"Unknown split scheme: {scheme}")
    parts = [float(rho * w) for w in weights[:-1]]
    last = rho - math.fsum(parts)
    while last > 0 and math.fsum(parts + [last]) > rho:
        last = float(np.nextafter(last, 0.0))
    return parts + [float(last)]


class AnalystSession:
    """The analyst side of one interaction over a fixed set of users."""

    def __init__(self, agents: Sequence[UserAgent], components: Sequence[ComponentSpec] = (),
                 rng: Optional[np.random.Generator] = None, search: Optional[Dict[str, Any]] = None):
        self.agents: Dict[int, UserAgent] = {}
        for agent in agents:
            if agent.user_id in self.agents:
                raise ValueError(f"Duplicate user id {agent.user_id}")
            self.agents[agent.user_id] = agent
        self.rng = rng if rng is not None else make_rng(0)
        missing = [agent for agent in self.agents.values() if agent.rng is None]
        for agent, child in zip(missing, spawn_rngs(self.rng, len(missing))):
            agent.rng = child
        self.components: Dict[int, ComponentSpec] = {}
        for spec in components:
            self.register_component(spec)
        self.search = dict(search or {})
        self.round = 0
        self.ended = False
        self._history: List[Dict[int, RoundResult]] = []
        self._charges: Dict[int, List[float]] = {i: [] for i in self.agents}
        self._records: List[Dict[str, Any]] = []

    @classmethod
    def from_points(cls, points: Sequence[Any], budgets: Union[float, Sequence[float]],
                    metric: MetricDescriptor, filter_kind: str = "cgp", rng: Optional[np.random.Generator] = None,
                    component: int = 1, delta: Optional[float] = None, lam: float = math.inf,
                    search: Optional[Dict[str, Any]] = None) -> "AnalystSession":
        """Session over users 0..n-1 holding one point each on a single component."""
        spec = ComponentSpec(component, metric)
        n = len(points)
        budget_list = [float(budgets)] * n if np.isscalar(budgets) else [float(b) for b in budgets]
        if len(budget_list) != n:
            raise ValueError(f"Got {len(budget_list)} budgets for {n} users")
        agents = [
            UserAgent(i, DataTuple.build([spec], {component: point}), FilterSpec(filter_kind, b, delta, lam))
            for i, (point, b) in enumerate(zip(points, budget_list))
        ]
        return cls(agents, [spec], rng, search)

    @property
    def user_ids(self) -> List[int]:
        return sorted(self.agents)

    @property
    def history(self) -> List[Dict[int, RoundResult]]:
        return list(self._history)

    def register_component(self, spec: ComponentSpec) -> None:
        existing = self.components.get(spec.index)
        if existing is not None and existing.metric != spec.metric:
            raise ValueError(f"Component {spec.index} is already registered with {existing.metric}")
        self.components[spec.index] = spec

    def add_component_data(self, spec: ComponentSpec, points: Mapping[int, Any]) -> None:
        """Register a new component and hand each user its point on it."""
        self.register_component(spec)
        for user_id, point in points.items():
            agent = self.agents[user_id]
            agent.data = agent.data.with_component(spec.index, spec.metric.conform(point))

    def remaining_budget(self, user_id: int) -> float:
        """The analyst's mirror of B_i, computed from accepted worst-case charges only."""
        agent = self.agents[user_id]
        return max(0.0, agent.budget - math.fsum(self._charges[user_id]))

    def spent(self, user_id: int) -> float:
        return math.fsum(self._charges[user_id])

    def analyst_round(self, directive: QueryDirective) -> Dict[int, RoundResult]:
        """Send a directive to its targets; everyone else implicitly receives the null mechanism."""
        if self.ended:
            raise RuntimeError("Session has ended")
        if directive.component not in self.components:
            raise UnregisteredComponentError(f"Component {directive.component} is not registered")
        self.round += 1
        targets = set(self.agents) if directive.targets is None else set(directive.targets)
        unknown = targets - set(self.agents)
        if unknown:
            raise KeyError(f"Unknown target users: {sorted(unknown)}")
        results: Dict[int, RoundResult] = {}
        for user_id in self.user_ids:
            agent = self.agents[user_id]
            if user_id not in targets:
                flag, _ = local_receive(agent, NULL_MECHANISM)
                results[user_id] = RoundResult(flag, None, 0.0)
                continue
            mech = directive.mechanism_for(user_id)
            flag, output = local_receive(agent, mech, component=directive.component, **self.search)
            cost = 0.0
            if flag is Flag.CONT:
                cost = filter_cost(agent.filter_spec, mech)
                if cost > 0:
                    self._charges[user_id].append(cost)
            results[user_id] = RoundResult(flag, output, cost)
            self._records.append({
                "round": self.round,
                "user": user_id,
                "flag": flag.value,
                "cost": cost,
                "output_digest": output_digest(output),
            })
        self._history.append(results)
        return results

    def end_session(self) -> Dict[str, Any]:
        """Stop querying; returns the per-user spend summary."""
        self.ended = True
        summary = {
            "rounds": self.round,
            "spent": {i: self.spent(i) for i in self.user_ids},
            "remaining": {i: self.remaining_budget(i) for i in self.user_ids},
            "halted": sorted(i for i, agent in self.agents.items() if agent.halted),
        }
        logger.debug(f"Session ended after {self.round} rounds; {len(summary['halted'])} users halted")
        return summary

    def transcript(self) -> List[Dict[str, Any]]:
        return list(self._records)

    def write_transcript(self, path: Path) -> None:
        write_jsonl(self._records, Path(path))


Allocation = Union[float, Mapping[int, float]]


def resolve_allocation(session: AnalystSession, allocation: Allocation) -> Dict[int, float]:
    """Per-user rho_i for this query; users with a zero allocation are left out."""
    if isinstance(allocation, Mapping):
        resolved = {int(i): float(r) for i, r in allocation.items()}
        unknown = set(resolved) - set(session.agents)
        if unknown:
            raise KeyError(f"Allocation names unknown users: {sorted(unknown)}")
    else:
        resolved = {i: float(allocation) for i in session.user_ids}
    if any(r < 0 for r in resolved.values()):
        raise ScheduleError("Allocations must be nonnegative")
    return {i: r for i, r in sorted(resolved.items()) if r > 0}


def round_schedule(allocations: Mapping[int, float], c: int, scheme: str = "even") -> Dict[int, List[float]]:
    return {i: split_budget(rho, c, scheme) for i, rho in allocations.items()}


def baseline_round(session: AnalystSession, allocations: Mapping[int, float], query=None, out_dim: int = 1,
                   component: int = 1) -> Dict[int, Optional[Value]]:
    """Privatize query(x_i) once per user with its whole allocation; halted users yield None."""
    per_user = {
        i: MechanismSpec.gaussian(rho, lipschitz=1.0, out_dim=out_dim, query=query)
        for i, rho in allocations.items()
    }
    results = session.analyst_round(QueryDirective(NULL_MECHANISM, component, per_user.keys(), per_user))
    return {i: results[i].output for i in per_user}
