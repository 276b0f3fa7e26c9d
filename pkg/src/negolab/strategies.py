"""Bidding strategies, acceptance rules and the reproposing overlay.

Agents follow the bid/model/accept decomposition: on each turn they update
an opponent model, pick the next offer, then decide whether the opponent's
last proposal beats it. Strategy instances are stateful and must not be
shared across sessions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .domain import Offer
from .models import GpConcessionPredictor, OpponentUtilityModel
from .protocol import PROPOSE, Accept, Decision, Propose, StrategyContext


class StrategyConfigError(ValueError):
    """Strategy configured without a required ingredient."""


# Tolerance for concession-balance comparisons. Aggregated concessions are
# differences of utilities, so exact float comparison flips strict
# inequalities at grid ties (1 - 0.18 > 0.82 holds in binary); snapping
# within this margin restores the exact-arithmetic behavior.
CONCESSION_EPS = 1e-12


# ---------------------------------------------------------------------------
# Aspiration functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AspirationFunction:
    """Time-decreasing own-utility demand: starts at ``alpha``, reaches
    ``target`` at ``target_time`` (the deadline if unset) and stays there."""

    alpha: float
    target: float
    gamma: float
    deadline: float
    target_time: float | None = None

    def __post_init__(self) -> None:
        if not self.alpha > self.target:
            raise StrategyConfigError("aspiration start must exceed the target")
        if self.gamma <= 0:
            raise StrategyConfigError("concession parameter must be positive")
        if self.deadline <= 0 or not math.isfinite(self.deadline):
            raise StrategyConfigError("aspiration needs a finite positive deadline")
        if self.target_time is not None and not 0 < self.target_time <= self.deadline:
            raise StrategyConfigError("target time must lie in (0, deadline]")


def aspiration_value(f: AspirationFunction, t: float) -> float:
    """asp(t); exact alpha at t=0, exact target from the target time on.
    gamma=1 uses the closed-form linear limit."""
    if t < 0 or t > f.deadline:
        raise ValueError(f"t={t} outside [0, {f.deadline}]")
    horizon = f.target_time if f.target_time is not None else f.deadline
    if t >= horizon:
        return f.target
    if t == 0:
        return f.alpha
    x = 1.0 - t / horizon
    if f.gamma == 1.0:
        return (f.alpha - f.target) * x + f.target
    return (f.alpha - f.target) * (1.0 - f.gamma ** x) / (1.0 - f.gamma) + f.target


# ---------------------------------------------------------------------------
# Acceptance rules
# ---------------------------------------------------------------------------

ACCEPTANCE_KINDS = ("ac_next", "ac_asp", "ac_low")


@dataclass(frozen=True)
class AcceptanceRule:
    """ac_next compares against the upcoming proposal, ac_asp against the
    aspiration level, ac_low against the cheapest offer already proposed.
    ``a`` and ``b`` give the parametrized variants a*u+b."""

    kind: str = "ac_next"
    a: float = 1.0
    b: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ACCEPTANCE_KINDS:
            raise StrategyConfigError(f"unknown acceptance rule {self.kind!r}")


def decide_accept(
    rule: AcceptanceRule,
    u_received: float,
    u_next: float,
    asp_now: float | None = None,
    min_proposed_utility: float | None = None,
) -> bool:
    """Apply an acceptance rule. ac_low is strict, the others are not,
    matching their defining inequalities."""
    scaled = rule.a * u_received + rule.b
    if rule.kind == "ac_next":
        return scaled >= u_next
    if rule.kind == "ac_asp":
        if asp_now is None:
            raise StrategyConfigError("ac_asp needs the current aspiration level")
        return scaled >= asp_now
    threshold = u_next if min_proposed_utility is None else min(min_proposed_utility, u_next)
    return scaled > threshold


# ---------------------------------------------------------------------------
# Bid selection primitives
# ---------------------------------------------------------------------------

def _proposed_mask(ctx: StrategyContext) -> np.ndarray:
    mask = np.zeros(ctx.offer_space.size, dtype=bool)
    if ctx.proposed_indices:
        mask[np.fromiter(ctx.proposed_indices, dtype=np.intp)] = True
    return mask


def _fallback_repeat(ctx: StrategyContext) -> Offer:
    """Own-utility-maximal offer among those already proposed; the global
    maximum if nothing was proposed yet."""
    u1 = ctx.own_utility_values
    if ctx.proposed_indices:
        best = min(ctx.proposed_indices, key=lambda i: (-u1[i], i))
    else:
        best = int(np.argmax(u1))
    return ctx.offer_space.offers()[best]


def select_bid_timebased(ctx: StrategyContext, asp_level: float, mode: str) -> Offer:
    """Best not-yet-proposed offer with own utility at or above the
    aspiration level: highest estimated opponent utility (``max_opponent``)
    or lowest own utility (``min_own``). Falls back to repeating the best
    prior proposal when every candidate has been used."""
    if mode not in ("max_opponent", "min_own"):
        raise StrategyConfigError(f"unknown time-based mode {mode!r}")
    u1 = ctx.own_utility_values
    candidates = (u1 >= asp_level) & ~_proposed_mask(ctx)
    if not candidates.any():
        return _fallback_repeat(ctx)
    if mode == "max_opponent":
        if ctx.opponent_model is None:
            raise StrategyConfigError("max_opponent bidding needs an opponent model")
        score = ctx.opponent_model.utility_values()
        pick = int(np.argmax(np.where(candidates, score, -np.inf)))
    else:
        pick = int(np.argmin(np.where(candidates, u1, np.inf)))
    return ctx.offer_space.offers()[pick]


def adaptive_target(estimated_optimal: float, safety: float, minimum_target: float) -> float:
    return max(estimated_optimal + safety, minimum_target)


def estimate_optimal_offer(
    ctx: StrategyContext,
    opponent_utility_values: np.ndarray,
    opponent_target: float,
) -> tuple[Offer, bool]:
    """Own-utility argmax among offers the opponent is estimated to still
    accept. Returns (offer, fallback): when no offer reaches the estimated
    opponent target the opponent's estimated best offer is returned and the
    fallback flag is set."""
    u2 = np.asarray(opponent_utility_values)
    mask = u2 >= opponent_target
    offers = ctx.offer_space.offers()
    if not mask.any():
        return offers[int(np.argmax(u2))], True
    pick = int(np.argmax(np.where(mask, ctx.own_utility_values, -np.inf)))
    return offers[pick], False


# ---------------------------------------------------------------------------
# Tit-for-tat
# ---------------------------------------------------------------------------

CONCESSION_BASES = ("own_utility", "opponent_estimate", "count", "relative")


@dataclass(frozen=True)
class ConcessionMeasure:
    basis: str
    ideal_offer: Offer | None = None  # required for the relative basis

    def __post_init__(self) -> None:
        if self.basis not in CONCESSION_BASES:
            raise StrategyConfigError(f"unknown concession basis {self.basis!r}")
        if self.basis == "relative" and self.ideal_offer is None:
            raise StrategyConfigError("relative concessions need an ideal offer")


@dataclass(frozen=True)
class TftConfig:
    measure_self: ConcessionMeasure = ConcessionMeasure("own_utility")
    measure_opponent: ConcessionMeasure = ConcessionMeasure("own_utility")
    e_min: float = 0.0
    e_max: float | None = None
    selector: str = "own_max"

    def __post_init__(self) -> None:
        if self.e_min < 0:
            raise StrategyConfigError("e_min must be nonnegative")
        if self.e_max is not None and not self.e_max > self.e_min:
            raise StrategyConfigError("e_max must exceed e_min")
        if self.selector not in ("own_max", "opponent_max"):
            raise StrategyConfigError(f"unknown selector {self.selector!r}")
        if self.selector == "opponent_max" and self.e_max is None:
            raise StrategyConfigError("opponent_max selection needs e_max")


def _opponent_values(ctx: StrategyContext) -> np.ndarray:
    if ctx.opponent_model is None:
        raise StrategyConfigError("opponent-estimate concessions need an opponent model")
    return np.asarray(ctx.opponent_model.utility_values())


def _relative_denominator(ctx: StrategyContext, measure: ConcessionMeasure, side: str) -> float:
    u1 = ctx.own_utility_values
    ideal = ctx.own_utility(measure.ideal_offer)
    denom = (float(u1.max()) - ideal) if side == "self" else (ideal - float(u1.min()))
    if denom == 0:
        raise StrategyConfigError("relative concession denominator is degenerate")
    return denom


def _measure_self(ctx: StrategyContext, measure: ConcessionMeasure, indices) -> float:
    """Concession our own proposals represent; 0 for an empty set."""
    if not indices:
        return 0.0
    u1 = ctx.own_utility_values
    if measure.basis == "own_utility":
        return float(u1.max()) - min(float(u1[i]) for i in indices)
    if measure.basis == "opponent_estimate":
        u2 = _opponent_values(ctx)
        return max(float(u2[i]) for i in indices) - float(u2.min())
    if measure.basis == "count":
        return float(len(indices))
    return (float(u1.max()) - min(float(u1[i]) for i in indices)) / _relative_denominator(
        ctx, measure, "self"
    )


def _measure_opponent(ctx: StrategyContext, measure: ConcessionMeasure, indices) -> float:
    """Concession the opponent's proposals represent; 0 for an empty set."""
    if not indices:
        return 0.0
    u1 = ctx.own_utility_values
    if measure.basis == "own_utility":
        return max(float(u1[i]) for i in indices) - float(u1.min())
    if measure.basis == "opponent_estimate":
        u2 = _opponent_values(ctx)
        return float(u2.max()) - min(float(u2[i]) for i in indices)
    if measure.basis == "count":
        return float(len(indices))
    return (max(float(u1[i]) for i in indices) - float(u1.min())) / _relative_denominator(
        ctx, measure, "opponent"
    )


def tft_concession_gain(
    ctx: StrategyContext,
    cfg: TftConfig,
    pro_t: Sequence[Offer],
    rec_t: Sequence[Offer],
    candidate: Offer,
) -> float:
    """Concession balance if ``candidate`` were proposed now: our concession
    over past proposals plus the candidate, minus the opponent's concession
    over everything received."""
    space = ctx.offer_space
    pro = {space.index_of(o) for o in pro_t} | {space.index_of(candidate)}
    rec = {space.index_of(o) for o in rec_t}
    return _measure_self(ctx, cfg.measure_self, pro) - _measure_opponent(
        ctx, cfg.measure_opponent, rec
    )


def _gain_over_bound(
    ctx: StrategyContext, cfg: TftConfig, bound: float, strict: bool
) -> np.ndarray:
    """Per-offer test of "our concession after proposing this is above
    ``bound``" (strictly or not). The concession after proposing offer w is
    max(standing concession, w's own contribution).

    Comparisons are phrased on the utility scale (u against max - bound)
    instead of comparing differences of differences, which flips strict
    comparisons at exact grid ties.
    """
    u1 = ctx.own_utility_values
    basis = cfg.measure_self.basis

    def above(values, threshold):
        if strict:
            return values > threshold + CONCESSION_EPS
        return values >= threshold - CONCESSION_EPS

    def below(values, threshold):
        if strict:
            return values < threshold - CONCESSION_EPS
        return values <= threshold + CONCESSION_EPS

    if basis == "own_utility":
        threshold = float(u1.max()) - bound
        standing = bool(ctx.proposed_indices) and bool(
            below(min(float(u1[i]) for i in ctx.proposed_indices), threshold)
        )
        per_offer = below(u1, threshold)
    elif basis == "opponent_estimate":
        u2 = _opponent_values(ctx)
        threshold = float(u2.min()) + bound
        standing = bool(ctx.proposed_indices) and bool(
            above(max(float(u2[i]) for i in ctx.proposed_indices), threshold)
        )
        per_offer = above(u2, threshold)
    elif basis == "count":
        m = len(ctx.proposed_indices)
        standing = bool(above(m, bound))
        per_offer = above(np.where(_proposed_mask(ctx), float(m), m + 1.0), bound)
    else:
        denom = _relative_denominator(ctx, cfg.measure_self, "self")
        threshold = float(u1.max()) - bound * denom
        standing = bool(ctx.proposed_indices) and bool(
            below(min(float(u1[i]) for i in ctx.proposed_indices), threshold)
        )
        per_offer = below(u1, threshold)
    return per_offer | standing


def tft_select_bid(ctx: StrategyContext, cfg: TftConfig) -> Offer:
    """Pick the offer that keeps our concession just ahead of the
    opponent's; deadlocked candidate sets fall back to repeating the best
    prior proposal."""
    u1 = ctx.own_utility_values
    e2 = _measure_opponent(ctx, cfg.measure_opponent, ctx.received_indices)

    mask = _gain_over_bound(ctx, cfg, e2 + cfg.e_min, strict=True)
    mask &= u1 > ctx.own_reservation
    if cfg.selector == "opponent_max":
        mask &= ~_gain_over_bound(ctx, cfg, e2 + cfg.e_max, strict=False)
        if mask.any():
            score = _opponent_values(ctx)
            pick = int(np.argmax(np.where(mask, score, -np.inf)))
            return ctx.offer_space.offers()[pick]
        return _fallback_repeat(ctx)
    if mask.any():
        pick = int(np.argmax(np.where(mask, u1, -np.inf)))
        return ctx.offer_space.offers()[pick]
    return _fallback_repeat(ctx)


# ---------------------------------------------------------------------------
# MiCRO
# ---------------------------------------------------------------------------

@dataclass
class MicroState:
    """Offers sorted by decreasing own utility plus the unique-proposal
    bookkeeping MiCRO keys its concessions on."""

    sorted_indices: np.ndarray
    proposed_unique: frozenset = frozenset()
    received_unique: frozenset = frozenset()
    violated_reservation: bool = False

    @classmethod
    def for_context(cls, ctx: StrategyContext) -> "MicroState":
        order = np.argsort(-ctx.own_utility_values, kind="stable")
        return cls(sorted_indices=order)


def micro_decide(state: MicroState, ctx: StrategyContext) -> Decision:
    """Concede the next offer on the sorted list only when the opponent has
    revealed at least as many unique offers as we have; otherwise repeat a
    random earlier proposal. Accept anything at least as good as the
    cheapest offer we are (or were) willing to put on the table."""
    state.proposed_unique = ctx.proposed_indices
    state.received_unique = ctx.received_indices
    m, n = len(ctx.proposed_indices), len(ctx.received_indices)
    u1 = ctx.own_utility_values
    order = state.sorted_indices
    total = len(order)

    ready = m <= n and m < total and float(u1[order[m]]) > ctx.own_reservation
    if ready:
        next_index = int(order[m])
    elif m > 0:
        next_index = int(order[ctx.rng.randrange(m)])
    else:
        # nothing proposable above the reservation value; flag and offer the maximum
        state.violated_reservation = True
        next_index = int(order[0])

    if ctx.last_received is not None:
        if ready:
            threshold = float(u1[next_index])
        elif m > 0:
            threshold = float(u1[order[m - 1]])
        else:
            threshold = float(u1[order[0]])
        received_value = float(u1[ctx.offer_space.index_of(ctx.last_received)])
        if received_value >= threshold:
            return Accept()
    return Propose(ctx.offer_space.offers()[next_index])


# ---------------------------------------------------------------------------
# Reproposing and the random baseline
# ---------------------------------------------------------------------------

def repropose_filter(ctx: StrategyContext, chosen: Offer) -> Offer:
    """Swap the chosen offer for the best offer the opponent proposed but we
    never did, whenever that is at least as good for us."""
    pending = ctx.received_indices - ctx.proposed_indices
    if not pending:
        return chosen
    u1 = ctx.own_utility_values
    best = min(pending, key=lambda i: (-u1[i], i))
    if float(u1[best]) >= ctx.own_utility(chosen):
        return ctx.offer_space.offers()[best]
    return chosen


def random_strategy(ctx: StrategyContext, accept_threshold: float) -> Decision:
    """Accept anything at or above the threshold, otherwise propose a
    uniformly random offer that beats the reservation value."""
    u1 = ctx.own_utility_values
    if ctx.last_received is not None:
        if float(u1[ctx.offer_space.index_of(ctx.last_received)]) >= accept_threshold:
            return Accept()
    viable = np.flatnonzero(u1 > ctx.own_reservation)
    if len(viable) == 0:
        return Propose(ctx.offer_space.offers()[int(np.argmax(u1))])
    pick = int(viable[ctx.rng.randrange(len(viable))])
    return Propose(ctx.offer_space.offers()[pick])


# ---------------------------------------------------------------------------
# Agents
# ---------------------------------------------------------------------------

class Agent:
    """Session-scoped strategy instance."""

    def decide(self, ctx: StrategyContext) -> Decision:
        raise NotImplementedError


class TimeBasedBidder:
    def __init__(self, aspiration: AspirationFunction, mode: str = "min_own"):
        self.aspiration = aspiration
        self.mode = mode

    def select(self, ctx: StrategyContext) -> tuple[Offer, float]:
        asp = aspiration_value(self.aspiration, min(ctx.now, self.aspiration.deadline))
        return select_bid_timebased(ctx, asp, self.mode), asp


class AdaptiveBidder:
    """Aspiration bidding toward a moving target: the best own utility the
    opponent's predicted final concession level still allows, plus a safety
    margin that shrinks over the session, floored at ``beta_min``."""

    def __init__(
        self,
        side: int,
        alpha: float,
        beta_min: float,
        gamma: float,
        deadline: float,
        target_time: float | None = None,
        safety: float = 0.1,
        mode: str = "max_opponent",
        predictor: GpConcessionPredictor | None = None,
    ):
        if not math.isfinite(deadline):
            raise StrategyConfigError("adaptive bidding needs a finite deadline")
        self.side = side
        self.alpha = alpha
        self.beta_min = beta_min
        self.gamma = gamma
        self.deadline = deadline
        self.target_time = target_time if target_time is not None else 0.95 * deadline
        self.safety = safety
        self.mode = mode
        self.predictor = predictor or GpConcessionPredictor(deadline)
        self._received: list[tuple[float, int]] = []
        self._seen = 0

    def _collect_received(self, ctx: StrategyContext) -> None:
        history = ctx.observed_history
        while self._seen < len(history):
            action = history[self._seen]
            self._seen += 1
            if action.kind == PROPOSE and action.agent != self.side:
                self._received.append((action.time, ctx.offer_space.index_of(action.offer)))

    def select(self, ctx: StrategyContext) -> tuple[Offer, float]:
        self._collect_received(ctx)
        opponent_values = _opponent_values(ctx)
        if len(self._received) >= 2:
            self.predictor.set_observations(
                [(t, float(opponent_values[i])) for t, i in self._received]
            )
            opponent_target, _ = self.predictor.predict(self.deadline)
        else:
            opponent_target = float(opponent_values.max())
        optimal, _ = estimate_optimal_offer(ctx, opponent_values, opponent_target)
        margin = self.safety * max(0.0, 1.0 - ctx.now / self.deadline)
        target = adaptive_target(ctx.own_utility(optimal), margin, self.beta_min)
        target = max(target, ctx.own_reservation)
        if target >= self.alpha:
            asp = self.alpha
        else:
            f = AspirationFunction(self.alpha, target, self.gamma, self.deadline, self.target_time)
            asp = aspiration_value(f, min(ctx.now, self.deadline))
        return select_bid_timebased(ctx, asp, self.mode), asp


class TftBidder:
    def __init__(self, cfg: TftConfig):
        self.cfg = cfg

    def select(self, ctx: StrategyContext) -> tuple[Offer, None]:
        return tft_select_bid(ctx, self.cfg), None


class BoaAgent(Agent):
    """Bidding strategy + opponent model + acceptance rule, with optional
    reproposing applied between bidding and acceptance."""

    def __init__(
        self,
        side: int,
        bidder,
        acceptance: AcceptanceRule,
        model: OpponentUtilityModel | None = None,
        repropose: bool = False,
    ):
        self.side = side
        self.bidder = bidder
        self.acceptance = acceptance
        self.model = model
        self.repropose = repropose
        self._seen = 0
        self._min_proposed: float | None = None

    def _update_model(self, ctx: StrategyContext) -> None:
        history = ctx.observed_history
        while self._seen < len(history):
            action = history[self._seen]
            self._seen += 1
            if action.agent != self.side and action.kind == PROPOSE and self.model is not None:
                self.model.observe(action.offer, action.time)

    def decide(self, ctx: StrategyContext) -> Decision:
        self._update_model(ctx)
        ctx.opponent_model = self.model
        offer, asp_now = self.bidder.select(ctx)
        if self.repropose:
            offer = repropose_filter(ctx, offer)
        if ctx.last_received is not None:
            u_next = ctx.own_utility(offer)
            u_received = ctx.own_utility(ctx.last_received)
            if decide_accept(self.acceptance, u_received, u_next, asp_now, self._min_proposed):
                return Accept()
        u_offer = ctx.own_utility(offer)
        if self._min_proposed is None or u_offer < self._min_proposed:
            self._min_proposed = u_offer
        return Propose(offer)


class MicroAgent(Agent):
    def __init__(self):
        self.state: MicroState | None = None

    def decide(self, ctx: StrategyContext) -> Decision:
        if self.state is None:
            self.state = MicroState.for_context(ctx)
        return micro_decide(self.state, ctx)


class RandomAgent(Agent):
    def __init__(self, accept_threshold: float = 1.01):
        self.accept_threshold = accept_threshold

    def decide(self, ctx: StrategyContext) -> Decision:
        return random_strategy(ctx, self.accept_threshold)


class ReproposeAgent(Agent):
    """Apply the reproposing override to any agent's proposals."""

    def __init__(self, inner: Agent):
        self.inner = inner

    def decide(self, ctx: StrategyContext) -> Decision:
        decision = self.inner.decide(ctx)
        if isinstance(decision, Propose):
            return Propose(repropose_filter(ctx, decision.offer))
        return decision
