"""Finite game analysis: best responses and pure Nash equilibria of
normal-form games, expected utility of mixed profiles, symmetric-equilibrium
selection, backward induction over turn-taking game trees, and an empirical
replay of the negotiation equilibrium construction.

Everything operates on immutable games and is safe for concurrent use.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .domain import (
    NegotiationDomain,
    Offer,
    individually_rational,
    pareto_set,
)
from .protocol import DelayModel, SessionConfig, run_session
from .strategies import AcceptanceRule, AspirationFunction, BoaAgent, TimeBasedBidder

PROFILE_TOL = 1e-9


class NormalFormGame:
    """Two-player game as a pair of payoff matrices; rows are player 1's
    actions, columns player 2's."""

    def __init__(
        self,
        action_labels: Sequence[Sequence[str]],
        payoffs_1: Sequence[Sequence[float]],
        payoffs_2: Sequence[Sequence[float]],
    ):
        if len(action_labels) != 2:
            raise ValueError("two players expected")
        self.action_labels: tuple[tuple[str, ...], tuple[str, ...]] = (
            tuple(action_labels[0]),
            tuple(action_labels[1]),
        )
        self.payoffs_1 = np.asarray(payoffs_1, dtype=float)
        self.payoffs_2 = np.asarray(payoffs_2, dtype=float)
        shape = (len(self.action_labels[0]), len(self.action_labels[1]))
        if self.payoffs_1.shape != shape or self.payoffs_2.shape != shape:
            raise ValueError(
                f"payoff matrices must have shape {shape}, got "
                f"{self.payoffs_1.shape} and {self.payoffs_2.shape}"
            )

    @classmethod
    def from_pairs(cls, action_labels, payoff_pairs) -> "NormalFormGame":
        pairs = np.asarray(payoff_pairs, dtype=float)
        return cls(action_labels, pairs[:, :, 0], pairs[:, :, 1])

    def payoffs(self, player: int) -> np.ndarray:
        if player == 1:
            return self.payoffs_1
        if player == 2:
            return self.payoffs_2
        raise ValueError("player must be 1 or 2")

    def num_actions(self, player: int) -> int:
        return len(self.action_labels[player - 1])

    def is_symmetric(self) -> bool:
        """u_1(a, b) == u_2(b, a) with identical action sets."""
        if self.action_labels[0] != self.action_labels[1]:
            return False
        return bool(np.array_equal(self.payoffs_1, self.payoffs_2.T))


@dataclass(frozen=True)
class MixedProfile:
    """One probability vector over actions per player."""

    probs_1: tuple[float, ...]
    probs_2: tuple[float, ...]

    def __post_init__(self) -> None:
        for probs in (self.probs_1, self.probs_2):
            if any(p < -PROFILE_TOL for p in probs):
                raise ValueError("probabilities must be nonnegative")
            if abs(sum(probs) - 1.0) > PROFILE_TOL:
                raise ValueError("probabilities must sum to 1")

    @classmethod
    def pure(cls, game: NormalFormGame, action_1: int, action_2: int) -> "MixedProfile":
        p1 = [0.0] * game.num_actions(1)
        p2 = [0.0] * game.num_actions(2)
        p1[action_1] = 1.0
        p2[action_2] = 1.0
        return cls(tuple(p1), tuple(p2))


def best_responses(
    game: NormalFormGame, responder: int, opponent_action_index: int
) -> set[int]:
    """Indices of the responder's maximal-payoff actions against a fixed
    opponent action."""
    if responder == 1:
        column = game.payoffs_1[:, opponent_action_index]
    else:
        column = game.payoffs_2[opponent_action_index, :]
    best = column.max()
    return {int(i) for i in np.flatnonzero(column == best)}


def pure_nash_equilibria(game: NormalFormGame) -> set[tuple[int, int]]:
    """All action pairs that are mutual best responses."""
    br2 = [best_responses(game, 2, i) for i in range(game.num_actions(1))]
    out = set()
    for j in range(game.num_actions(2)):
        for i in best_responses(game, 1, j):
            if j in br2[i]:
                out.add((i, j))
    return out


def expected_utility(game: NormalFormGame, profile: MixedProfile, player: int) -> float:
    p1 = np.asarray(profile.probs_1)
    p2 = np.asarray(profile.probs_2)
    return float(p1 @ game.payoffs(player) @ p2)


def is_nash_equilibrium(
    game: NormalFormGame, profile: MixedProfile, tolerance: float = 0.0
) -> bool:
    """No pure unilateral deviation improves either player by more than the
    tolerance; pure deviations suffice because expected utility is bilinear."""
    p1 = np.asarray(profile.probs_1)
    p2 = np.asarray(profile.probs_2)
    value_1 = float(p1 @ game.payoffs_1 @ p2)
    value_2 = float(p1 @ game.payoffs_2 @ p2)
    best_dev_1 = float((game.payoffs_1 @ p2).max())
    best_dev_2 = float((p1 @ game.payoffs_2).max())
    return best_dev_1 <= value_1 + tolerance and best_dev_2 <= value_2 + tolerance


@dataclass(frozen=True)
class SymmetricSelection:
    profile: MixedProfile | None
    value: float | None
    multiple_optima: bool
    candidates: int

    @property
    def found(self) -> bool:
        return self.profile is not None


def select_symmetric_equilibrium(
    game: NormalFormGame, equilibria: Sequence[MixedProfile]
) -> SymmetricSelection:
    """Among externally supplied equilibria, keep those with identical
    strategies for both players and return the one with maximal payoff.

    Ties are flagged and broken toward the first candidate in input order.
    An empty symmetric subset yields an empty (flagged) selection.
    """
    if not game.is_symmetric():
        raise ValueError("symmetric selection requires a symmetric game")
    symmetric = [
        profile
        for profile in equilibria
        if len(profile.probs_1) == len(profile.probs_2)
        and all(
            abs(a - b) <= PROFILE_TOL for a, b in zip(profile.probs_1, profile.probs_2)
        )
    ]
    if not symmetric:
        return SymmetricSelection(None, None, False, 0)
    values = [expected_utility(game, profile, 1) for profile in symmetric]
    best = max(values)
    winners = [p for p, v in zip(symmetric, values) if v == best]
    return SymmetricSelection(winners[0], best, len(winners) > 1, len(symmetric))


# ---------------------------------------------------------------------------
# Turn-taking games
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GameNode:
    """Internal node (player to move plus ordered children) or leaf
    (payoff pair)."""

    player: int | None = None
    children: tuple[tuple[str, "GameNode"], ...] = ()
    payoffs: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.is_leaf:
            if self.payoffs is None or len(self.payoffs) != 2:
                raise ValueError("leaf nodes carry exactly two payoffs")
        else:
            if self.player not in (1, 2):
                raise ValueError("internal nodes need an active player 1 or 2")
            if not self.children:
                raise ValueError("internal nodes need at least one child")
            labels = [label for label, _ in self.children]
            if len(set(labels)) != len(labels):
                raise ValueError("duplicate action labels at a node")

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @classmethod
    def leaf(cls, payoff_1: float, payoff_2: float) -> "GameNode":
        return cls(payoffs=(float(payoff_1), float(payoff_2)))

    @classmethod
    def decision(cls, player: int, children: Sequence[tuple[str, "GameNode"]]) -> "GameNode":
        return cls(player=player, children=tuple(children))


@dataclass(frozen=True)
class TurnTakingGame:
    root: GameNode

    def decision_nodes(self, player: int) -> list[tuple[tuple[str, ...], GameNode]]:
        """(history, node) pairs where ``player`` moves, in preorder."""
        out: list[tuple[tuple[str, ...], GameNode]] = []

        def walk(node: GameNode, history: tuple[str, ...]) -> None:
            if node.is_leaf:
                return
            if node.player == player:
                out.append((history, node))
            for label, child in node.children:
                walk(child, history + (label,))

        walk(self.root, ())
        return out


PureStrategy = dict[tuple[str, ...], str]


@dataclass(frozen=True)
class PureStrategyProfile:
    """One action choice per decision node per player, keyed by the node's
    history."""

    choices_1: tuple[tuple[tuple[str, ...], str], ...]
    choices_2: tuple[tuple[tuple[str, ...], str], ...]

    def choice(self, player: int, history: tuple[str, ...]) -> str:
        table = dict(self.choices_1 if player == 1 else self.choices_2)
        return table[history]

    def as_dicts(self) -> tuple[PureStrategy, PureStrategy]:
        return dict(self.choices_1), dict(self.choices_2)


def play_out(game: TurnTakingGame, profile: PureStrategyProfile) -> tuple[float, float]:
    """Terminal payoffs when both players follow the profile."""
    strategies = profile.as_dicts()
    node, history = game.root, ()
    while not node.is_leaf:
        label = strategies[node.player - 1][history]
        node = dict(node.children)[label]
        history = history + (label,)
    return node.payoffs


@dataclass(frozen=True)
class BackwardInductionResult:
    profile: PureStrategyProfile
    payoffs: tuple[float, float]
    tie_nodes: int  # decision nodes where several children were optimal


def backward_induction(game: TurnTakingGame) -> BackwardInductionResult:
    """Leaf-to-root induction; at every decision node the active player
    takes the child maximizing their continuation payoff (ties go to the
    first child and are counted)."""
    choices: dict[int, list[tuple[tuple[str, ...], str]]] = {1: [], 2: []}
    ties = 0

    def solve(node: GameNode, history: tuple[str, ...]) -> tuple[float, float]:
        nonlocal ties
        if node.is_leaf:
            return node.payoffs
        continuations = [
            (label, solve(child, history + (label,))) for label, child in node.children
        ]
        own = node.player - 1
        best_value = max(value[own] for _, value in continuations)
        winners = [entry for entry in continuations if entry[1][own] == best_value]
        if len(winners) > 1:
            ties += 1
        label, value = winners[0]
        choices[node.player].append((history, label))
        return value

    payoffs = solve(game.root, ())
    profile = PureStrategyProfile(tuple(sorted(choices[1])), tuple(sorted(choices[2])))
    return BackwardInductionResult(profile, payoffs, ties)


MAX_INDUCED_STRATEGIES = 10_000


def induced_normal_form(game: TurnTakingGame) -> NormalFormGame:
    """Normal form whose actions are the players' pure strategies; the
    payoff of a strategy pair is obtained by playing it out."""
    node_lists = {p: game.decision_nodes(p) for p in (1, 2)}
    strategy_sets: dict[int, list[PureStrategy]] = {}
    labels: dict[int, list[str]] = {}
    for player, nodes in node_lists.items():
        option_lists = [[label for label, _ in node.children] for _, node in nodes]
        count = math.prod(len(opts) for opts in option_lists) if option_lists else 1
        if count > MAX_INDUCED_STRATEGIES:
            raise ValueError(
                f"player {player} has {count} pure strategies; the induced normal "
                f"form is capped at {MAX_INDUCED_STRATEGIES}"
            )
        strategies: list[PureStrategy] = []
        names: list[str] = []
        for combo in itertools.product(*option_lists):
            strategies.append({nodes[k][0]: combo[k] for k in range(len(nodes))})
            names.append("".join(combo) if combo else "-")
        strategy_sets[player] = strategies
        labels[player] = names

    payoffs_1 = np.zeros((len(strategy_sets[1]), len(strategy_sets[2])))
    payoffs_2 = np.zeros_like(payoffs_1)
    for i, s1 in enumerate(strategy_sets[1]):
        for j, s2 in enumerate(strategy_sets[2]):
            profile = PureStrategyProfile(tuple(sorted(s1.items())), tuple(sorted(s2.items())))
            p1, p2 = play_out(game, profile)
            payoffs_1[i, j] = p1
            payoffs_2[i, j] = p2
    return NormalFormGame((labels[1], labels[2]), payoffs_1, payoffs_2)


# ---------------------------------------------------------------------------
# Empirical check of the negotiation equilibrium construction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Deviation:
    side: int
    target: float | None = None
    gamma: float | None = None


@dataclass(frozen=True)
class DeviationOutcome:
    deviation: Deviation
    payoff: float
    baseline: float
    improvement: float

    @property
    def improving(self) -> bool:
        return self.improvement > 1e-9


@dataclass(frozen=True)
class NegotiationNeReport:
    ok: bool
    reason: str
    target_vector: tuple[float, float] | None = None
    agreement_vector: tuple[float, float] | None = None
    deviations: tuple[DeviationOutcome, ...] = ()

    @property
    def improving_deviations(self) -> tuple[DeviationOutcome, ...]:
        return tuple(d for d in self.deviations if d.improving)


def _paired_strategy(side: int, domain: NegotiationDomain, target: float,
                     deadline: float, gamma: float = 1.0) -> BoaAgent:
    alpha = float(domain.utility_array(side).max())
    if target >= alpha:
        # an aspiration pinned at the maximum: never concede below alpha
        target = math.nextafter(alpha, -math.inf)
    aspiration = AspirationFunction(alpha, target, gamma, deadline, 0.1 * deadline)
    return BoaAgent(side, TimeBasedBidder(aspiration, "min_own"), AcceptanceRule("ac_asp"))


def negotiation_ne_check(
    domain: NegotiationDomain,
    target_offer: Offer,
    deviation_grid: Sequence[Deviation],
    config: SessionConfig | None = None,
) -> NegotiationNeReport:
    """Replay the equilibrium construction: paired time-based strategies
    with targets equal to the two utilities of a Pareto-optimal,
    individually rational offer must agree on that utility vector, and no
    deviation in the grid may improve the deviator by more than 1e-9.

    The check is empirical: it exercises the finite deviation grid, not all
    strategies.
    """
    target_offer = domain.offer_space.check(target_offer)
    if target_offer not in set(pareto_set(domain)):
        return NegotiationNeReport(False, "target offer is not Pareto-optimal")
    if not individually_rational(domain, target_offer):
        return NegotiationNeReport(False, "target offer is not individually rational")

    size = domain.offer_space.size
    if config is None:
        rounds = 2 * size + 2
        per_turn = 0.01 + 0.002
        config = SessionConfig(
            deadline=rounds * per_turn * 2.5,
            max_rounds=rounds,
            delay_model=DelayModel("uniform", 0.001, 0.002),
            seed=0,
        )
    if config.max_rounds < 2 * size + 2:
        return NegotiationNeReport(
            False, f"config allows {config.max_rounds} rounds; need >= {2 * size + 2}"
        )

    targets = domain.utility_vector(target_offer)

    def payoff_of(side: int, strat_1, strat_2) -> tuple[float, tuple[float, float], str]:
        _, outcome = run_session(domain, strat_1, strat_2, config)
        vector = (
            domain.utility_vector(outcome.accepted_offer)
            if outcome.accepted_offer is not None
            else None
        )
        return outcome.payoffs[side - 1], vector, outcome.status

    _, base_outcome = run_session(
        domain,
        _paired_strategy(1, domain, targets[0], config.deadline),
        _paired_strategy(2, domain, targets[1], config.deadline),
        config,
    )
    base_status = base_outcome.status
    base_vector = (
        domain.utility_vector(base_outcome.accepted_offer)
        if base_outcome.accepted_offer is not None
        else None
    )
    if base_status != "agreement" or base_vector is None:
        return NegotiationNeReport(False, "paired strategies failed to agree", targets)
    if abs(base_vector[0] - targets[0]) > 1e-12 or abs(base_vector[1] - targets[1]) > 1e-12:
        return NegotiationNeReport(
            False,
            f"agreement vector {base_vector} differs from target {targets}",
            targets,
            base_vector,
        )

    outcomes = []
    for deviation in deviation_grid:
        side = deviation.side
        target = deviation.target if deviation.target is not None else targets[side - 1]
        gamma = deviation.gamma if deviation.gamma is not None else 1.0
        deviant = _paired_strategy(side, domain, target, config.deadline, gamma)
        if side == 1:
            payoff, _, _ = payoff_of(1, deviant, _paired_strategy(2, domain, targets[1], config.deadline))
        else:
            payoff, _, _ = payoff_of(2, _paired_strategy(1, domain, targets[0], config.deadline), deviant)
        baseline = base_outcome.payoffs[side - 1]
        outcomes.append(DeviationOutcome(deviation, payoff, baseline, payoff - baseline))

    ok = not any(o.improving for o in outcomes)
    reason = "no improving deviation" if ok else "a deviation improved its payoff"
    return NegotiationNeReport(ok, reason, targets, base_vector, tuple(outcomes))


def default_deviation_grid(domain: NegotiationDomain, points: int = 20) -> list[Deviation]:
    """Alternating-side grid of alternative targets and concession speeds."""
    grid: list[Deviation] = []
    lo, hi = 0.05, 0.98
    num_targets = points - 4 if points > 4 else points
    for k in range(num_targets):
        side = 1 + k % 2
        target = lo + (hi - lo) * k / max(num_targets - 1, 1)
        grid.append(Deviation(side=side, target=target))
    for k in range(points - num_targets):
        side = 1 + k % 2
        grid.append(Deviation(side=side, gamma=(0.2, 5.0, 0.05, 1.5)[k % 4]))
    return grid[:points]


# ---------------------------------------------------------------------------
# Game files (JSON)
# ---------------------------------------------------------------------------

def game_to_dict(game: NormalFormGame | TurnTakingGame) -> dict:
    if isinstance(game, NormalFormGame):
        pairs = [
            [
                [game.payoffs_1[i, j], game.payoffs_2[i, j]]
                for j in range(game.num_actions(2))
            ]
            for i in range(game.num_actions(1))
        ]
        return {
            "kind": "normal_form",
            "actions": [list(game.action_labels[0]), list(game.action_labels[1])],
            "payoffs": pairs,
        }

    def node_dict(node: GameNode) -> dict:
        if node.is_leaf:
            return {"payoffs": list(node.payoffs)}
        return {
            "player": node.player,
            "children": {label: node_dict(child) for label, child in node.children},
        }

    return {"kind": "turn_taking", "root": node_dict(game.root)}


def game_from_dict(data: dict) -> NormalFormGame | TurnTakingGame:
    kind = data.get("kind")
    if kind == "normal_form":
        return NormalFormGame.from_pairs(data["actions"], data["payoffs"])
    if kind == "turn_taking":

        def parse(node: dict) -> GameNode:
            if "payoffs" in node:
                return GameNode.leaf(*node["payoffs"])
            children = [(label, parse(child)) for label, child in node["children"].items()]
            return GameNode.decision(int(node["player"]), children)

        return TurnTakingGame(parse(data["root"]))
    raise ValueError(f"unknown game kind {kind!r}")


def save_game(game: NormalFormGame | TurnTakingGame, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(game_to_dict(game), fh, indent=2)
        fh.write("\n")


def load_game(path: str) -> NormalFormGame | TurnTakingGame:
    with open(path, "r", encoding="utf-8") as fh:
        return game_from_dict(json.load(fh))
