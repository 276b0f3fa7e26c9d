import math
import random

import pytest

from negolab.domain import generate_split_the_pie
from negolab.protocol import (
    ACCEPT,
    PROPOSE,
    Accept,
    DelayModel,
    NegotiationAction,
    NegotiationHistory,
    Outcome,
    Propose,
    SessionConfig,
    load_history,
    observed_view,
    outcome_of,
    run_session,
    sample_delay,
    save_history,
    validate_history,
)
from negolab.strategies import MicroAgent


def act(agent, kind, offer, t):
    return NegotiationAction(agent, kind, offer, t)


def history(*pairs):
    return NegotiationHistory(
        tuple(a for a, _ in pairs), tuple(d for _, d in pairs)
    )


@pytest.fixture
def pie():
    return generate_split_the_pie(11)


@pytest.fixture
def config():
    return SessionConfig(deadline=100.0, max_rounds=50, seed=1)


class TestValidateHistory:
    def test_accept_of_last_proposal_is_ok(self, pie, config):
        h = history(
            (act(1, PROPOSE, (9,), 0.1), 0.01),
            (act(2, PROPOSE, (2,), 0.2), 0.01),
            (act(1, PROPOSE, (8,), 0.3), 0.01),
            (act(2, ACCEPT, (8,), 0.4), 0.01),
        )
        assert validate_history(h, config, pie.offer_space).ok

    def test_accept_of_stale_offer_violates_rule_3(self, pie, config):
        h = history(
            (act(1, PROPOSE, (9,), 0.1), 0.01),
            (act(2, PROPOSE, (2,), 0.2), 0.01),
            (act(1, PROPOSE, (8,), 0.3), 0.01),
            (act(2, ACCEPT, (9,), 0.4), 0.01),  # two rounds stale
        )
        report = validate_history(h, config, pie.offer_space)
        assert not report.ok and report.rule == "3"

    def test_consecutive_same_agent_violates_rule_1a(self, pie, config):
        h = history(
            (act(1, PROPOSE, (9,), 0.1), 0.01),
            (act(1, PROPOSE, (8,), 0.2), 0.01),
        )
        report = validate_history(h, config, pie.offer_space)
        assert not report.ok and report.rule == "1a"

    def test_action_before_arrival_violates_rule_1b(self, pie, config):
        h = history(
            (act(1, PROPOSE, (9,), 0.1), 0.5),
            (act(2, PROPOSE, (2,), 0.3), 0.01),  # 0.1 + 0.5 > 0.3
        )
        report = validate_history(h, config, pie.offer_space)
        assert not report.ok and report.rule == "1b"

    def test_action_after_acceptance_violates_rule_2(self, pie, config):
        h = history(
            (act(1, PROPOSE, (9,), 0.1), 0.01),
            (act(2, ACCEPT, (9,), 0.2), 0.01),
            (act(1, PROPOSE, (8,), 0.3), 0.01),
        )
        report = validate_history(h, config, pie.offer_space)
        assert not report.ok and report.rule == "2"

    def test_deadline_violates_rule_4(self, pie):
        cfg = SessionConfig(deadline=0.25, max_rounds=50, seed=1)
        h = history(
            (act(1, PROPOSE, (9,), 0.1), 0.01),
            (act(2, PROPOSE, (2,), 0.3), 0.01),
        )
        report = validate_history(h, cfg, pie.offer_space)
        assert not report.ok and report.rule == "4"

    def test_round_cap_violates_rule_5(self, pie):
        cfg = SessionConfig(deadline=100.0, max_rounds=1, seed=1)
        h = history(
            (act(1, PROPOSE, (9,), 0.1), 0.01),
            (act(2, PROPOSE, (2,), 0.2), 0.01),
        )
        report = validate_history(h, cfg, pie.offer_space)
        assert not report.ok and report.rule == "5"


class TestObservedView:
    def test_empty(self, config):
        h = NegotiationHistory((), ())
        assert len(observed_view(h, 1)) == 0

    def test_opponent_times_shifted(self):
        h = history((act(1, PROPOSE, (3,), 1.0), 0.2))
        view = observed_view(h, 2)
        assert view[0].time == 1.2
        assert view[0].agent == 1

    def test_own_times_unchanged(self):
        h = history(
            (act(1, PROPOSE, (3,), 1.0), 0.2),
            (act(2, PROPOSE, (4,), 1.5), 0.3),
        )
        view = observed_view(h, 1)
        assert view[0].time == 1.0  # own action
        assert view[1].time == 1.8  # opponent action arrives later

    def test_preserves_count_and_order(self, pie):
        cfg = SessionConfig(deadline=math.inf, max_rounds=40, seed=4)
        h, _ = run_session(pie, MicroAgent(), MicroAgent(), cfg)
        for viewer in (1, 2):
            view = observed_view(h, viewer)
            assert len(view) == len(h)
            times = [a.time for a in view]
            assert times == sorted(times)
            for raw, seen in zip(h.actions, view):
                if raw.agent == viewer:
                    assert seen.time == raw.time


class TestSampleDelay:
    def test_constant(self):
        rng = random.Random(0)
        model = DelayModel("constant", 0.01)
        assert all(sample_delay(model, rng) == 0.01 for _ in range(100))

    def test_uniform_range(self):
        rng = random.Random(0)
        model = DelayModel("uniform", 0.002, 0.05)
        draws = [sample_delay(model, rng) for _ in range(10_000)]
        assert all(0.002 <= d <= 0.05 for d in draws)

    def test_deterministic(self):
        model = DelayModel("uniform", 0.001, 0.01)
        a = [sample_delay(model, random.Random(42)) for _ in range(10)]
        b = [sample_delay(model, random.Random(42)) for _ in range(10)]
        assert a == b


class ScriptAgent:
    """Plays back a fixed list of decisions."""

    def __init__(self, *decisions):
        self._decisions = iter(decisions)

    def decide(self, ctx):
        return next(self._decisions)


class TestRunSession:
    def test_immediate_agreement(self, pie):
        cfg = SessionConfig(
            deadline=10.0, max_rounds=10,
            delay_model=DelayModel("constant", 0.005), seed=0,
        )
        h, outcome = run_session(
            pie, ScriptAgent(Propose((7,))), ScriptAgent(Accept()), cfg
        )
        assert outcome.status == "agreement"
        assert outcome.accepted_offer == (7,)
        # both payoffs from the same accepted offer, discounted at send time
        t = h.actions[-1].time
        assert outcome.payoffs == (0.7 * 1.0 ** t, 0.3 * 1.0 ** t)
        assert validate_history(h, cfg, pie.offer_space).ok

    def test_acceptance_arriving_after_deadline_fails(self, pie):
        # accept sent at t=0.07 <= T=0.1 but arrives at 0.12
        cfg = SessionConfig(
            deadline=0.1, max_rounds=10,
            delay_model=DelayModel("constant", 0.05), think_time=0.01, seed=0,
        )
        h, outcome = run_session(
            pie, ScriptAgent(Propose((7,))), ScriptAgent(Accept()), cfg
        )
        assert h.actions[-1].kind == ACCEPT
        assert h.actions[-1].time + h.delays[-1] >= cfg.deadline
        assert outcome.status == "failure"
        assert outcome.payoffs == pie.reservation_values
        assert validate_history(h, cfg, pie.offer_space).ok

    def test_round_cap_of_one(self, pie):
        cfg = SessionConfig(deadline=10.0, max_rounds=1, seed=0)
        h, outcome = run_session(
            pie, ScriptAgent(Propose((7,))), ScriptAgent(Accept()), cfg
        )
        assert len(h) == 1
        assert outcome.status == "failure"

    def test_invalid_offer_is_a_violation(self, pie):
        cfg = SessionConfig(deadline=10.0, max_rounds=10, seed=0)
        h, outcome = run_session(
            pie, ScriptAgent(Propose((99,))), ScriptAgent(Accept()), cfg
        )
        assert outcome.status == "failure"
        assert outcome.violation_by == 1
        assert outcome.payoffs == pie.reservation_values
        assert len(h) == 0

    def test_accept_with_nothing_pending_is_a_violation(self, pie):
        cfg = SessionConfig(deadline=10.0, max_rounds=10, seed=0)
        _, outcome = run_session(pie, ScriptAgent(Accept()), ScriptAgent(Accept()), cfg)
        assert outcome.violation_by == 1

    def test_deadline_stops_before_overdue_action(self, pie):
        # think time alone exceeds the deadline: no action is recorded
        cfg = SessionConfig(deadline=0.005, max_rounds=10, think_time=0.01, seed=0)
        h, outcome = run_session(
            pie, ScriptAgent(Propose((7,))), ScriptAgent(Accept()), cfg
        )
        assert len(h) == 0
        assert outcome.status == "failure"

    def test_reproducible_for_fixed_seed(self, pie):
        cfg = SessionConfig(deadline=math.inf, max_rounds=60, seed=123)
        h1, o1 = run_session(pie, MicroAgent(), MicroAgent(), cfg)
        h2, o2 = run_session(pie, MicroAgent(), MicroAgent(), cfg)
        assert h1 == h2
        assert o1 == o2

    def test_starting_agent_two(self, pie):
        cfg = SessionConfig(deadline=math.inf, max_rounds=60, seed=5, starting_agent=2)
        h, _ = run_session(pie, MicroAgent(), MicroAgent(), cfg)
        assert h.actions[0].agent == 2

    def test_time_strictly_increases(self, pie):
        cfg = SessionConfig(deadline=math.inf, max_rounds=60, seed=7)
        h, _ = run_session(pie, MicroAgent(), MicroAgent(), cfg)
        for j in range(len(h) - 1):
            assert h.actions[j].time + h.delays[j] < h.actions[j + 1].time


class TestOutcomeOf:
    def test_failure_pays_reservations(self, pie):
        dom = generate_split_the_pie(11)
        cfg = SessionConfig(deadline=0.5, max_rounds=2, seed=0)
        h = history(
            (act(1, PROPOSE, (9,), 0.1), 0.01),
            (act(2, PROPOSE, (2,), 0.2), 0.01),
        )
        outcome = outcome_of(h, dom, cfg)
        assert outcome.status == "failure"
        assert outcome.payoffs == dom.reservation_values

    def test_agreement_undiscounted(self, pie, config):
        h = history(
            (act(1, PROPOSE, (9,), 0.1), 0.01),
            (act(2, ACCEPT, (9,), 0.2), 0.01),
        )
        outcome = outcome_of(h, pie, config)
        assert outcome.status == "agreement"
        assert outcome.payoffs == (0.9, 0.1)
        assert outcome.agreement_time == 0.2

    def test_agreement_discounted_at_send_time(self):
        base = generate_split_the_pie(11)
        dom = type(base)(
            base.offer_space, base.utilities, discount_factors=(0.9, 0.9)
        )
        cfg = SessionConfig(deadline=100.0, max_rounds=50, seed=1)
        h = history(
            (act(1, PROPOSE, (8,), 1.0), 0.01),
            (act(2, ACCEPT, (8,), 2.0), 0.01),
        )
        outcome = outcome_of(h, dom, cfg)
        assert outcome.payoffs[0] == pytest.approx(0.8 * 0.9 ** 2.0, abs=1e-15)
        assert outcome.payoffs[1] == pytest.approx(0.2 * 0.9 ** 2.0, abs=1e-15)

    def test_non_terminal_raises(self, pie, config):
        h = history((act(1, PROPOSE, (9,), 0.1), 0.01))
        with pytest.raises(ValueError):
            outcome_of(h, pie, config)


class TestHistoryFiles:
    def test_round_trip_and_replay(self, pie, tmp_path):
        cfg = SessionConfig(deadline=math.inf, max_rounds=60, seed=21)
        h, _ = run_session(pie, MicroAgent(), MicroAgent(), cfg)
        path = tmp_path / "h.csv"
        save_history(h, str(path))
        loaded = load_history(str(path))
        assert loaded == h
        assert validate_history(loaded, cfg, pie.offer_space).ok

    def test_csv_field_layout(self, pie, tmp_path):
        h = history((act(1, PROPOSE, (9,), 0.125), 0.25))
        path = tmp_path / "h.csv"
        save_history(h, str(path))
        lines = path.read_text().splitlines()
        assert lines[0] == "agent,kind,offer_key,t,epsilon"
        assert lines[1] == "1,propose,9,0.125,0.25"
