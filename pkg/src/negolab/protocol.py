"""Alternating offers protocol: actions, histories, legality rules, the
session loop, and outcome scoring.

Time is simulated. An agent "thinks" for a fixed span before its action is
stamped, and every message is followed by a seeded random transit delay, so
sessions are deterministic for a fixed seed and deterministic strategies.
"""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .domain import (
    InvalidOfferError,
    NegotiationDomain,
    Offer,
    OfferSpace,
    offer_key,
    parse_offer_key,
)

PROPOSE = "propose"
ACCEPT = "accept"


@dataclass(frozen=True)
class NegotiationAction:
    agent: int  # 1 | 2
    kind: str  # PROPOSE | ACCEPT
    offer: Offer
    time: float

    def __post_init__(self) -> None:
        if self.agent not in (1, 2):
            raise ValueError("agent must be 1 or 2")
        if self.kind not in (PROPOSE, ACCEPT):
            raise ValueError(f"unknown action kind {self.kind!r}")
        if self.time < 0:
            raise ValueError("action time must be nonnegative")


@dataclass(frozen=True)
class NegotiationHistory:
    """Actions with, after each one, the transit delay of its message."""

    actions: tuple[NegotiationAction, ...]
    delays: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.actions) != len(self.delays):
            raise ValueError("need exactly one delay per action")
        if any(d <= 0 for d in self.delays):
            raise ValueError("delays must be positive")

    def __len__(self) -> int:
        return len(self.actions)


class ObservedHistory:
    """One agent's projection of the history: own actions keep their send
    time, opponent actions carry their arrival time."""

    def __init__(self, actions: Iterable[NegotiationAction] = ()):
        self._actions: list[NegotiationAction] = list(actions)

    def append(self, action: NegotiationAction) -> None:
        self._actions.append(action)

    def __len__(self) -> int:
        return len(self._actions)

    def __getitem__(self, idx):
        return self._actions[idx]

    def __iter__(self):
        return iter(self._actions)

    def actions(self) -> tuple[NegotiationAction, ...]:
        return tuple(self._actions)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ObservedHistory) and self._actions == list(other)

    def __repr__(self) -> str:
        return f"ObservedHistory({len(self._actions)} actions)"


@dataclass(frozen=True)
class DelayModel:
    """Message transit time distribution: constant(value) or uniform(low, high)."""

    kind: str = "uniform"
    low: float = 0.001
    high: float = 0.01

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "uniform"):
            raise ValueError(f"unknown delay model {self.kind!r}")
        if self.low <= 0 or (self.kind == "uniform" and self.high < self.low):
            raise ValueError("delay bounds must be positive and ordered")


def sample_delay(delay_model: DelayModel, rng: random.Random) -> float:
    if delay_model.kind == "constant":
        return delay_model.low
    return rng.uniform(delay_model.low, delay_model.high)


@dataclass(frozen=True)
class SessionConfig:
    deadline: float = math.inf
    max_rounds: float = math.inf  # maximum number of actions in the history
    delay_model: DelayModel = field(default_factory=DelayModel)
    starting_agent: int = 1
    seed: int = 0
    think_time: float = 0.01

    def __post_init__(self) -> None:
        if self.deadline <= 0:
            raise ValueError("deadline must be positive")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")
        if self.starting_agent not in (1, 2):
            raise ValueError("starting_agent must be 1 or 2")
        if self.think_time <= 0:
            raise ValueError("think_time must be positive to keep time strictly increasing")


@dataclass(frozen=True)
class Outcome:
    status: str  # "agreement" | "failure"
    payoffs: tuple[float, float]
    accepted_offer: Offer | None = None
    agreement_time: float | None = None
    violation_by: int | None = None


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    rule: str | None = None  # "1a", "1b", "2", "3", "4", "5"
    action_index: int | None = None
    message: str = ""

    def __bool__(self) -> bool:
        return self.ok


def validate_history(
    history: NegotiationHistory, config: SessionConfig, space: OfferSpace
) -> ValidationResult:
    """Check the protocol rules and report the first violation.

    1a agents alternate; 1b each action strictly follows the arrival of the
    previous one; 2 an acceptance can only be the last action; 3 the accepted
    offer equals the directly preceding proposal; 4 no action after the
    deadline; 5 at most max_rounds actions.
    """
    actions = history.actions
    for j, action in enumerate(actions):
        space.check(action.offer)
        if j + 1 > config.max_rounds:
            return ValidationResult(False, "5", j, "too many actions")
        if action.time > config.deadline:
            return ValidationResult(False, "4", j, f"action at t={action.time} after deadline")
        if j > 0:
            prev = actions[j - 1]
            if action.agent == prev.agent:
                return ValidationResult(False, "1a", j, "same agent acted twice")
            if not prev.time + history.delays[j - 1] < action.time:
                return ValidationResult(
                    False, "1b", j, "action before previous message arrived"
                )
            if prev.kind == ACCEPT:
                return ValidationResult(False, "2", j, "action after an acceptance")
            if action.kind == ACCEPT and action.offer != prev.offer:
                return ValidationResult(
                    False, "3", j, "accepted offer differs from last proposal"
                )
        elif action.kind == ACCEPT:
            return ValidationResult(False, "3", j, "acceptance without a proposal")
    return ValidationResult(True)


def observed_view(history: NegotiationHistory, viewer: int) -> ObservedHistory:
    """The history as seen by ``viewer``: opponent timestamps are shifted by
    their transit delays, order is preserved."""
    if viewer not in (1, 2):
        raise ValueError("viewer must be 1 or 2")
    out = ObservedHistory()
    for action, delay in zip(history.actions, history.delays):
        if action.agent == viewer:
            out.append(action)
        else:
            out.append(replace(action, time=action.time + delay))
    return out


def outcome_of(
    history: NegotiationHistory, domain: NegotiationDomain, config: SessionConfig
) -> Outcome:
    """Score a terminal history: an acceptance arriving before the deadline
    pays the discounted utilities at its send time, anything else pays the
    reservation values."""
    r = domain.reservation_values
    if len(history) == 0:
        if config.think_time <= config.deadline and config.max_rounds >= 1:
            raise ValueError("empty history is not terminal under this config")
        return Outcome("failure", r)
    last = history.actions[-1]
    arrival = last.time + history.delays[-1]
    if last.kind == ACCEPT:
        if arrival < config.deadline:
            payoffs = (
                discount(domain, 1, last.offer, last.time),
                discount(domain, 2, last.offer, last.time),
            )
            return Outcome("agreement", payoffs, last.offer, last.time)
        return Outcome("failure", r)
    terminal = len(history) >= config.max_rounds or arrival + config.think_time > config.deadline
    if not terminal:
        raise ValueError("history is not terminal: another action is still possible")
    return Outcome("failure", r)


def discount(domain: NegotiationDomain, agent: int, offer: Offer, time: float) -> float:
    return domain.utility(agent).value(offer) * domain.discount_factor(agent) ** time


# ---------------------------------------------------------------------------
# Session loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Accept:
    """Accept the opponent's last proposal."""


@dataclass(frozen=True)
class Propose:
    offer: Offer


Decision = Accept | Propose


@dataclass
class StrategyContext:
    """Everything a strategy may consult on its turn. ``opponent_model`` is
    filled in by the strategy itself; the engine leaves it unset."""

    offer_space: OfferSpace
    own_utility_values: np.ndarray  # utilities in canonical offer order
    own_reservation: float
    deadline: float
    now: float
    observed_history: ObservedHistory
    last_received: Offer | None
    proposed_indices: frozenset
    received_indices: frozenset
    rng: random.Random
    opponent_model: object | None = None

    def own_utility(self, offer: Offer) -> float:
        return float(self.own_utility_values[self.offer_space.index_of(offer)])


def run_session(
    domain: NegotiationDomain,
    strategy_1,
    strategy_2,
    config: SessionConfig,
) -> tuple[NegotiationHistory, Outcome]:
    """Drive one alternating-offers session between two strategy instances.

    Strategies expose ``decide(ctx) -> Accept | Propose``. A strategy that
    proposes an offer outside the space, or accepts with nothing on the
    table, loses by protocol violation: the session fails and the outcome is
    flagged with the violator.
    """
    rng = random.Random(config.seed)
    space = domain.offer_space
    strategies = {1: strategy_1, 2: strategy_2}
    views = {1: ObservedHistory(), 2: ObservedHistory()}
    proposed: dict[int, set[int]] = {1: set(), 2: set()}
    last_proposal: dict[int, Offer | None] = {1: None, 2: None}

    actions: list[NegotiationAction] = []
    delays: list[float] = []
    clock = 0.0
    agent = config.starting_agent
    violation_by: int | None = None

    while True:
        if len(actions) >= config.max_rounds:
            break
        act_time = clock + config.think_time
        if act_time > config.deadline:
            break
        other = 3 - agent
        ctx = StrategyContext(
            offer_space=space,
            own_utility_values=domain.utility_array(agent),
            own_reservation=domain.reservation_value(agent),
            deadline=config.deadline,
            now=act_time,
            observed_history=views[agent],
            last_received=last_proposal[other],
            proposed_indices=frozenset(proposed[agent]),
            received_indices=frozenset(proposed[other]),
            rng=rng,
        )
        decision = strategies[agent].decide(ctx)

        if isinstance(decision, Accept):
            if last_proposal[other] is None:
                violation_by = agent
                break
            action = NegotiationAction(agent, ACCEPT, last_proposal[other], act_time)
        elif isinstance(decision, Propose):
            offer = tuple(decision.offer)
            if not space.contains(offer):
                violation_by = agent
                break
            action = NegotiationAction(agent, PROPOSE, offer, act_time)
        else:
            raise TypeError(f"strategy returned {decision!r}, expected Accept or Propose")

        delay = sample_delay(config.delay_model, rng)
        actions.append(action)
        delays.append(delay)
        views[agent].append(action)
        views[other].append(replace(action, time=act_time + delay))
        if action.kind == PROPOSE:
            proposed[agent].add(space.index_of(action.offer))
            last_proposal[agent] = action.offer
            arrival = act_time + delay
            if arrival >= config.deadline:
                break
            clock = arrival
            agent = other
        else:
            break

    history = NegotiationHistory(tuple(actions), tuple(delays))
    if violation_by is not None:
        outcome = Outcome("failure", domain.reservation_values, violation_by=violation_by)
    else:
        outcome = outcome_of(history, domain, config)
    return history, outcome


# ---------------------------------------------------------------------------
# History log files (CSV, replayable)
# ---------------------------------------------------------------------------

HISTORY_FIELDS = ("agent", "kind", "offer_key", "t", "epsilon")


def save_history(history: NegotiationHistory, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_FIELDS)
        for action, delay in zip(history.actions, history.delays):
            writer.writerow(
                [action.agent, action.kind, offer_key(action.offer),
                 repr(action.time), repr(delay)]
            )


def load_history(path: str) -> NegotiationHistory:
    actions: list[NegotiationAction] = []
    delays: list[float] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            actions.append(
                NegotiationAction(
                    int(row["agent"]), row["kind"],
                    parse_offer_key(row["offer_key"]), float(row["t"]),
                )
            )
            delays.append(float(row["epsilon"]))
    return NegotiationHistory(tuple(actions), tuple(delays))
