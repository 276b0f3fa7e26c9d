"""Shared fixtures: textbook example domains and a context builder for
exercising strategy operations without the session engine."""

from __future__ import annotations

import random

import numpy as np
import pytest

from negolab.domain import (
    Issue,
    LinearUtility,
    NegotiationDomain,
    OfferSpace,
    TabularUtility,
    dominates,
)
from negolab.protocol import ObservedHistory, StrategyContext

# Utility vectors of the nine-offer utility-diagram example; reservation
# values (0.15, 0.21) put six of them strictly above both reservation lines.
DIAGRAM_VECTORS = [
    (0.1, 1.0),
    (0.1, 0.6),
    (0.22, 0.75),
    (0.35, 0.5),
    (0.4, 0.2),
    (0.5, 0.7),
    (0.62, 0.4),
    (0.9, 0.1),
    (1.0, 0.05),
]


@pytest.fixture
def diagram_domain() -> NegotiationDomain:
    issue = Issue("offer", tuple(f"o{i}" for i in range(len(DIAGRAM_VECTORS))))
    space = OfferSpace([issue])
    u1 = TabularUtility({(i,): v[0] for i, v in enumerate(DIAGRAM_VECTORS)})
    u2 = TabularUtility({(i,): v[1] for i, v in enumerate(DIAGRAM_VECTORS)})
    return NegotiationDomain(space, (u1, u2), reservation_values=(0.15, 0.21))


@pytest.fixture
def restaurant_domain() -> NegotiationDomain:
    """Single-issue dinner choice: u(CHI)=1, u(ITA)=4, u(MEX)=5 for agent 1."""
    issue = Issue("restaurant", ("CHI", "ITA", "MEX"))
    space = OfferSpace([issue])
    u1 = TabularUtility({(0,): 1.0, (1,): 4.0, (2,): 5.0})
    u2 = TabularUtility({(0,): 5.0, (1,): 2.0, (2,): 1.0})
    return NegotiationDomain(space, (u1, u2), reservation_values=(3.0, 0.0))


@pytest.fixture
def four_issue_utility() -> LinearUtility:
    """Weights (0.3, 0.5, 0.1, 0.1) over four 3-option issues."""
    return LinearUtility(
        weights=[0.3, 0.5, 0.1, 0.1],
        evaluations=[
            [0.0, 0.4, 1.0],
            [0.3, 0.7, 0.9],
            [0.3, 0.0, 0.0],
            [1.0, 1.0, 0.2],
        ],
    )


@pytest.fixture
def four_issue_domain(four_issue_utility) -> NegotiationDomain:
    issues = [Issue(f"i{j}", ("a", "b", "c")) for j in range(4)]
    space = OfferSpace(issues)
    mirrored = LinearUtility(
        weights=[0.1, 0.1, 0.5, 0.3],
        evaluations=[
            [1.0, 0.6, 0.0],
            [0.9, 0.3, 0.1],
            [0.0, 0.5, 1.0],
            [0.2, 0.0, 1.0],
        ],
    )
    return NegotiationDomain(space, (four_issue_utility, mirrored))


def pareto_brute_force(domain: NegotiationDomain) -> list:
    """Quadratic pairwise-domination filter; the independent oracle."""
    offers = domain.offer_space.offers()
    return [
        a for a in offers if not any(dominates(domain, b, a) for b in offers if b != a)
    ]


def pareto_brute_force_fast(domain: NegotiationDomain) -> list:
    """Vectorized O(n^2) domination matrix; oracle for larger spaces."""
    u1 = domain.utility_array(1)
    u2 = domain.utility_array(2)
    weak = (u1[:, None] >= u1[None, :]) & (u2[:, None] >= u2[None, :])
    strict = (u1[:, None] > u1[None, :]) | (u2[:, None] > u2[None, :])
    dominated = (weak & strict).any(axis=0)
    offers = domain.offer_space.offers()
    return [o for o, d in zip(offers, dominated) if not d]


class FixedModel:
    """Opponent model stub returning preset utility values."""

    def __init__(self, space, values):
        self.space = space
        self._values = np.asarray(values, dtype=float)

    def observe(self, offer, time):
        pass

    def utility_values(self):
        return self._values

    def expected_utility(self, offer):
        return float(self._values[self.space.index_of(offer)])


def make_ctx(
    domain: NegotiationDomain,
    side: int = 1,
    now: float = 0.0,
    deadline: float = 10.0,
    proposed=(),
    received=(),
    last_received=None,
    model=None,
    seed: int = 0,
    history: ObservedHistory | None = None,
) -> StrategyContext:
    space = domain.offer_space
    return StrategyContext(
        offer_space=space,
        own_utility_values=domain.utility_array(side),
        own_reservation=domain.reservation_value(side),
        deadline=deadline,
        now=now,
        observed_history=history if history is not None else ObservedHistory(),
        last_received=last_received,
        proposed_indices=frozenset(space.index_of(o) for o in proposed),
        received_indices=frozenset(space.index_of(o) for o in received),
        rng=random.Random(seed),
        opponent_model=model,
    )
