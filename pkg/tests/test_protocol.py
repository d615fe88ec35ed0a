import json
import math

import numpy as np
import pytest

from geobudget.accountant import FilterSpec, Flag
from geobudget.mechanisms import NULL_MECHANISM, MechanismSpec
from geobudget.metrics import ComponentSpec, DataTuple, MetricDescriptor
from geobudget.protocol import (
    AnalystSession,
    QueryDirective,
    ScheduleError,
    UnregisteredComponentError,
    UserAgent,
    account_component_query,
    budget_schedule_next,
    local_receive,
    resolve_allocation,
    split_budget,
)
from geobudget.utils import make_rng

LINE = MetricDescriptor.euclidean(1)


def make_agent(user_id=0, budget=1.0, value=0.0):
    spec = ComponentSpec(1, LINE)
    return UserAgent(user_id, DataTuple.build([spec], {1: [value]}), FilterSpec("cgp", budget), rng=make_rng(user_id))


def make_session(n=3, budget=1.0, seed=0):
    return AnalystSession.from_points([[float(i)] for i in range(n)], budget, LINE, rng=make_rng(seed))


def test_null_mechanism_leaves_ledger_untouched():
    agent = make_agent()
    assert local_receive(agent, NULL_MECHANISM) == (Flag.CONT, None)
    assert agent.state.consumed == []


def test_local_view_halts_permanently():
    agent = make_agent()
    flag, output = local_receive(agent, MechanismSpec.gaussian(0.4))
    assert flag is Flag.CONT and output is not None
    assert agent.state.consumed == [0.4]
    assert local_receive(agent, MechanismSpec.gaussian(0.7)) == (Flag.HALT, None)
    assert agent.state.consumed == [0.4]
    assert local_receive(agent, MechanismSpec.gaussian(0.01)) == (Flag.HALT, None)
    assert local_receive(agent, NULL_MECHANISM) == (Flag.HALT, None)
    assert agent.halted


def test_unregistered_component_is_an_error_not_a_halt():
    agent = make_agent()
    with pytest.raises(UnregisteredComponentError):
        local_receive(agent, MechanismSpec.gaussian(0.1), component=2)
    assert not agent.halted
    session = make_session()
    with pytest.raises(UnregisteredComponentError):
        session.analyst_round(QueryDirective(MechanismSpec.gaussian(0.1), component=5))


def test_empty_target_round():
    session = make_session()
    results = session.analyst_round(QueryDirective(MechanismSpec.gaussian(0.5), targets=[]))
    assert all(r.output is None and r.flag is Flag.CONT for r in results.values())
    assert all(session.remaining_budget(i) == 1.0 for i in session.user_ids)
    assert len(session.history) == 1


def test_insufficient_budget_only_affects_that_user():
    session = AnalystSession.from_points([[0.0], [1.0], [2.0]], [1.0, 0.1, 1.0], LINE, rng=make_rng(3))
    results = session.analyst_round(QueryDirective(MechanismSpec.gaussian(0.5)))
    assert results[1].flag is Flag.HALT and results[1].output is None
    assert results[0].flag is Flag.CONT and results[2].flag is Flag.CONT
    assert session.remaining_budget(1) == pytest.approx(0.1)


def test_analyst_mirror_matches_agents():
    session = make_session(n=5, budget=2.0, seed=8)
    rng = make_rng(80)
    for _ in range(30):
        targets = [i for i in session.user_ids if rng.uniform() < 0.6]
        session.analyst_round(QueryDirective(MechanismSpec.gaussian(float(rng.uniform(0.05, 0.5))), targets=targets))
    for i, agent in session.agents.items():
        assert session.remaining_budget(i) == pytest.approx(agent.remaining, abs=1e-12)
        assert session.spent(i) == pytest.approx(agent.spent, abs=1e-12)


def test_non_targets_receive_null():
    session = make_session()
    results = session.analyst_round(QueryDirective(MechanismSpec.gaussian(0.3), targets=[1]))
    assert results[0].output is None and results[2].output is None
    assert results[1].output is not None
    assert session.spent(0) == 0.0 and session.spent(1) == pytest.approx(0.3)


def test_per_user_mechanisms():
    session = make_session()
    per_user = {0: MechanismSpec.gaussian(0.1), 2: MechanismSpec.gaussian(0.4)}
    session.analyst_round(QueryDirective(NULL_MECHANISM, targets=per_user.keys(), per_user=per_user))
    assert session.spent(0) == pytest.approx(0.1)
    assert session.spent(1) == 0.0
    assert session.spent(2) == pytest.approx(0.4)


def test_component_accounting():
    directive = QueryDirective(MechanismSpec.gaussian(0.2), component=1)
    assert account_component_query(directive) == pytest.approx(0.2)
    assert account_component_query(QueryDirective(NULL_MECHANISM, component=3)) == 0.0

    session = make_session(n=2)
    session.add_component_data(ComponentSpec(2, MetricDescriptor.hamming()), {0: (1, 0, 1), 1: (0, 0, 0)})
    for component in (1, 2, 1, 2):
        query = None if component == 1 else (lambda x: float(sum(x)))
        session.analyst_round(QueryDirective(MechanismSpec.gaussian(0.1, query=query), component=component))
    assert session.spent(0) == pytest.approx(0.4)
    assert session.spent(1) == pytest.approx(0.4)


def test_budget_schedule_examples():
    assert budget_schedule_next(1, 4, 1.0, 1.0) == pytest.approx(0.25)
    assert budget_schedule_next(2, 4, 1.0, 0.9) == pytest.approx(0.375, abs=1e-9)
    # gamma = 1 at the last query releases everything left
    assert budget_schedule_next(4, 4, 1.0, 0.5) == pytest.approx(0.5)
    assert budget_schedule_next(1, 1, 1.0, 0.7) == pytest.approx(0.7)
    with pytest.raises(ScheduleError):
        budget_schedule_next(5, 4, 1.0, 1.0)


def test_budget_schedule_clamps():
    assert budget_schedule_next(3, 4, 1.0, 0.0) == 0.0
    assert budget_schedule_next(2, 4, 1.0, 0.1) >= 0.0


def test_schedule_without_savings_telescopes():
    B, m = 2.0, 8
    remaining, total = B, 0.0
    for l in range(1, m + 1):
        r = budget_schedule_next(l, m, B, remaining)
        assert r == pytest.approx(B / m)
        remaining -= r
        total += r
    assert total <= B + 1e-12


def test_schedule_never_overspends_with_savings():
    rng = make_rng(31)
    for _ in range(500):
        B, m = float(rng.uniform(0.5, 3.0)), int(rng.integers(1, 20))
        remaining, consumed = B, 0.0
        for l in range(1, m + 1):
            r = budget_schedule_next(l, m, B, remaining)
            assert 0.0 <= r <= remaining + 1e-12
            used = r * float(rng.uniform(0.0, 1.0))
            remaining -= used
            consumed += used
        assert consumed <= B + 1e-9


def test_split_budget():
    assert split_budget(1.0, 4, "even") == pytest.approx([0.25] * 4)
    assert split_budget(1.0, 3, "doubling") == pytest.approx([1 / 7, 2 / 7, 4 / 7])
    assert split_budget(0.3, 1, "even") == [0.3]
    assert split_budget(0.3, 1, "doubling") == [0.3]
    with pytest.raises(ScheduleError):
        split_budget(1.0, 0)
    with pytest.raises(ScheduleError):
        split_budget(1.0, 2, "halving")


@pytest.mark.parametrize("rho,c,scheme", [(0.1, 3, "even"), (0.7, 10, "doubling"), (1e-3, 64, "even")])
def test_split_budget_sums_within_rho(rho, c, scheme):
    parts = split_budget(rho, c, scheme)
    assert len(parts) == c and all(p > 0 for p in parts)
    assert math.fsum(parts) <= rho
    assert math.fsum(parts) == pytest.approx(rho, rel=1e-12)


def test_fuzzed_adaptive_analyst_respects_every_budget():
    rng = make_rng(2024)
    for episode in range(300):
        n = 20
        budgets = rng.uniform(0.2, 2.0, size=n)
        session = AnalystSession.from_points([[float(x)] for x in rng.normal(size=n)], budgets, LINE,
                                             rng=make_rng(episode))
        halted_at = {}
        for t in range(int(rng.integers(1, 15))):
            kind = rng.integers(0, 3)
            if kind == 0:
                mech = NULL_MECHANISM
            elif kind == 1:
                mech = MechanismSpec.gaussian(float(rng.uniform(0.01, 1.0)))
            else:
                mech = MechanismSpec.laplace(float(rng.uniform(0.1, 1.5)))
            targets = [i for i in session.user_ids if rng.uniform() < 0.7]
            for i, result in session.analyst_round(QueryDirective(mech, targets=targets)).items():
                if i in halted_at:
                    assert result.flag is Flag.HALT and result.output is None
                elif result.flag is Flag.HALT:
                    halted_at[i] = t
        for i, agent in session.agents.items():
            assert math.fsum(agent.state.consumed) <= agent.budget
            assert session.remaining_budget(i) == pytest.approx(agent.remaining, abs=1e-12)


def test_transcript_records(tmp_path):
    session = make_session()
    session.analyst_round(QueryDirective(MechanismSpec.gaussian(0.3), targets=[0, 2]))
    session.analyst_round(QueryDirective(MechanismSpec.gaussian(0.9), targets=[0]))
    path = tmp_path / "transcript.jsonl"
    session.write_transcript(path)
    records = [json.loads(line) for line in path.read_text().splitlines()]
    assert [(r["round"], r["user"], r["flag"]) for r in records] == [(1, 0, "CONT"), (1, 2, "CONT"), (2, 0, "HALT")]
    assert records[2]["cost"] == 0.0 and records[2]["output_digest"] is None
    assert len(records[0]["output_digest"]) == 16


def test_end_session_stops_queries():
    session = make_session()
    session.analyst_round(QueryDirective(MechanismSpec.gaussian(0.3)))
    summary = session.end_session()
    assert summary["rounds"] == 1
    assert summary["remaining"][0] == pytest.approx(0.7)
    with pytest.raises(RuntimeError):
        session.analyst_round(QueryDirective(NULL_MECHANISM))


def test_resolve_allocation_drops_zero_allocations():
    session = make_session()
    assert resolve_allocation(session, {0: 0.5, 1: 0.0}) == {0: 0.5}
    assert resolve_allocation(session, 0.2) == {0: 0.2, 1: 0.2, 2: 0.2}
    with pytest.raises(KeyError):
        resolve_allocation(session, {7: 0.1})
