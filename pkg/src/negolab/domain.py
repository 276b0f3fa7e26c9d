"""Multi-issue offer spaces, utility functions and domain-level analytics.

Offers are canonical tuples of 0-based option indices, one per issue.
Option labels live only on the issues, so offers stay cheap to hash and
compare. All values here are immutable after construction and safe to
share across concurrent sessions.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

Offer = tuple[int, ...]

WEIGHT_TOL = 1e-9
NORMALIZED_TOL = 1e-9


class InvalidOfferError(ValueError):
    """Raised when an offer does not fit the offer space."""


class DegenerateUtilityError(ValueError):
    """Raised when an operation requires a non-constant utility."""


@dataclass(frozen=True)
class Issue:
    """One dimension of the offer space.

    ``ordered`` records whether the option order carries meaning (e.g. time
    slots); some opponent models only make sense on ordered issues.
    """

    name: str
    options: tuple[str, ...]
    ordered: bool = False

    def __post_init__(self) -> None:
        if len(self.options) < 1:
            raise ValueError(f"issue {self.name!r} needs at least one option")
        if len(set(self.options)) != len(self.options):
            raise ValueError(f"issue {self.name!r} has duplicate option labels")

    @property
    def size(self) -> int:
        return len(self.options)


class OfferSpace:
    """Cartesian product of issues. Enumeration order is lexicographic in
    the index tuples and is the canonical tie-breaking order everywhere."""

    def __init__(self, issues: Sequence[Issue]):
        if not issues:
            raise ValueError("offer space needs at least one issue")
        self.issues: tuple[Issue, ...] = tuple(issues)
        self._offers: tuple[Offer, ...] | None = None
        self._index: dict[Offer, int] | None = None
        self._option_columns: np.ndarray | None = None

    @property
    def size(self) -> int:
        return math.prod(issue.size for issue in self.issues)

    def offers(self) -> tuple[Offer, ...]:
        """All offers in canonical (lexicographic) order."""
        if self._offers is None:
            ranges = [range(issue.size) for issue in self.issues]
            self._offers = tuple(itertools.product(*ranges))
        return self._offers

    def index_of(self, offer: Offer) -> int:
        if self._index is None:
            self._index = {o: i for i, o in enumerate(self.offers())}
        try:
            return self._index[tuple(offer)]
        except KeyError:
            raise InvalidOfferError(f"offer {offer!r} not in space") from None

    def option_columns(self) -> np.ndarray:
        """(num_offers, num_issues) int array: option index per offer per issue."""
        if self._option_columns is None:
            cols = np.array(self.offers(), dtype=np.intp).reshape(self.size, len(self.issues))
            cols.setflags(write=False)
            self._option_columns = cols
        return self._option_columns

    def contains(self, offer: Offer) -> bool:
        if len(offer) != len(self.issues):
            return False
        return all(
            isinstance(x, int) and 0 <= x < issue.size
            for x, issue in zip(offer, self.issues)
        )

    def check(self, offer: Offer) -> Offer:
        offer = tuple(offer)
        if not self.contains(offer):
            raise InvalidOfferError(
                f"offer {offer!r} invalid for space with sizes "
                f"{[i.size for i in self.issues]}"
            )
        return offer

    def labels(self, offer: Offer) -> tuple[str, ...]:
        return tuple(issue.options[x] for issue, x in zip(self.issues, offer))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, OfferSpace) and self.issues == other.issues

    def __hash__(self) -> int:
        return hash(self.issues)

    def __repr__(self) -> str:
        return f"OfferSpace({[i.size for i in self.issues]})"


class LinearUtility:
    """Weighted sum of per-issue evaluations: u(offer) = sum_j w_j * v_j(x_j).

    ``normalized`` asserts the textbook normal form: weights sum to one,
    every evaluation lies in [0, 1], and every issue with at least two
    options hits both 0 and 1. Hypothesis utilities used by opponent models
    do not satisfy this and are constructed with ``normalized=False``.
    """

    def __init__(
        self,
        weights: Sequence[float],
        evaluations: Sequence[Sequence[float]],
        normalized: bool = False,
    ):
        self.weights: tuple[float, ...] = tuple(float(w) for w in weights)
        self.evaluations: tuple[tuple[float, ...], ...] = tuple(
            tuple(float(v) for v in row) for row in evaluations
        )
        self.normalized = bool(normalized)
        if len(self.weights) != len(self.evaluations):
            raise ValueError("one weight and one evaluation row per issue")
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be nonnegative")
        if self.normalized:
            self._check_normalized()

    def _check_normalized(self) -> None:
        total = sum(self.weights)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"normalized weights must sum to 1, got {total!r}")
        for j, row in enumerate(self.evaluations):
            if any(v < -NORMALIZED_TOL or v > 1.0 + NORMALIZED_TOL for v in row):
                raise ValueError(f"issue {j}: evaluations outside [0, 1]")
            if len(row) >= 2 and (min(row) != 0.0 or max(row) != 1.0):
                raise ValueError(
                    f"issue {j}: normalized evaluations must attain 0 and 1"
                )

    def value(self, offer: Offer) -> float:
        total = 0.0
        for w, row, x in zip(self.weights, self.evaluations, offer):
            total += w * row[x]
        return total

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, LinearUtility)
            and self.weights == other.weights
            and self.evaluations == other.evaluations
        )

    def __repr__(self) -> str:
        return f"LinearUtility(weights={self.weights})"


class TabularUtility:
    """Explicit offer -> value table; generic carrier for single-issue and
    non-linear utilities."""

    def __init__(self, values: Mapping[Offer, float]):
        self.values: dict[Offer, float] = {
            tuple(k): float(v) for k, v in values.items()
        }

    def value(self, offer: Offer) -> float:
        try:
            return self.values[tuple(offer)]
        except KeyError:
            raise InvalidOfferError(f"no tabulated value for offer {offer!r}") from None

    def check_complete(self, space: OfferSpace) -> None:
        missing = [o for o in space.offers() if o not in self.values]
        if missing:
            raise ValueError(f"table misses {len(missing)} offers, e.g. {missing[0]}")

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TabularUtility) and self.values == other.values

    def __repr__(self) -> str:
        return f"TabularUtility({len(self.values)} offers)"


Utility = Union[LinearUtility, TabularUtility]


class NegotiationDomain:
    """Offer space plus, per agent, a utility function, a reservation value
    and a discount factor. Agents are addressed as 1 and 2."""

    def __init__(
        self,
        offer_space: OfferSpace,
        utilities: Sequence[Utility],
        reservation_values: Sequence[float] = (0.0, 0.0),
        discount_factors: Sequence[float] = (1.0, 1.0),
    ):
        if len(utilities) != 2 or len(reservation_values) != 2 or len(discount_factors) != 2:
            raise ValueError("exactly two agents are supported")
        for d in discount_factors:
            if not 0.0 < d <= 1.0:
                raise ValueError(f"discount factor {d!r} outside (0, 1]")
        for u in utilities:
            if isinstance(u, TabularUtility):
                u.check_complete(offer_space)
        self.offer_space = offer_space
        self.utilities: tuple[Utility, Utility] = (utilities[0], utilities[1])
        self.reservation_values: tuple[float, float] = (
            float(reservation_values[0]),
            float(reservation_values[1]),
        )
        self.discount_factors: tuple[float, float] = (
            float(discount_factors[0]),
            float(discount_factors[1]),
        )
        self._value_arrays: dict[int, np.ndarray] = {}

    def utility(self, agent: int) -> Utility:
        return self.utilities[_agent_slot(agent)]

    def reservation_value(self, agent: int) -> float:
        return self.reservation_values[_agent_slot(agent)]

    def discount_factor(self, agent: int) -> float:
        return self.discount_factors[_agent_slot(agent)]

    def utility_array(self, agent: int) -> np.ndarray:
        """Utilities of every offer in canonical order (cached)."""
        slot = _agent_slot(agent)
        if slot not in self._value_arrays:
            u = self.utilities[slot]
            arr = np.array([u.value(o) for o in self.offer_space.offers()])
            arr.setflags(write=False)
            self._value_arrays[slot] = arr
        return self._value_arrays[slot]

    def utility_vector(self, offer: Offer) -> tuple[float, float]:
        offer = self.offer_space.check(offer)
        return (self.utilities[0].value(offer), self.utilities[1].value(offer))


def _agent_slot(agent: int) -> int:
    if agent not in (1, 2):
        raise ValueError(f"agent must be 1 or 2, got {agent!r}")
    return agent - 1


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def evaluate_utility(domain: NegotiationDomain, agent: int, offer: Offer) -> float:
    """Utility of ``offer`` for ``agent``; weighted sum for linear utilities,
    table lookup otherwise."""
    offer = domain.offer_space.check(offer)
    return domain.utility(agent).value(offer)


def offer_space_size(space: OfferSpace) -> int:
    return space.size


def discounted_utility(
    domain: NegotiationDomain, agent: int, offer: Offer, time: float
) -> float:
    """u_i(offer) * delta_i ** time."""
    if time < 0:
        raise ValueError("time must be nonnegative")
    return evaluate_utility(domain, agent, offer) * domain.discount_factor(agent) ** time


def normalize_utility(utility: Utility, space: OfferSpace) -> TabularUtility:
    """Affinely rescale a utility so its minimum over the space is exactly 0
    and its maximum exactly 1.

    The result is tabulated over the (finite) space, which keeps the
    endpoint values exact and makes a second application the identity.
    """
    offers = space.offers()
    values = [utility.value(o) for o in offers]
    lo, hi = min(values), max(values)
    if hi == lo:
        raise DegenerateUtilityError("constant utility cannot be normalized")
    span = hi - lo
    return TabularUtility({o: (v - lo) / span for o, v in zip(offers, values)})


def dominates(domain: NegotiationDomain, offer_a: Offer, offer_b: Offer) -> bool:
    """True iff ``offer_a`` is weakly better for both agents and strictly
    better for at least one."""
    ua = domain.utility_vector(offer_a)
    ub = domain.utility_vector(offer_b)
    return ua[0] >= ub[0] and ua[1] >= ub[1] and (ua[0] > ub[0] or ua[1] > ub[1])


def pareto_set(domain: NegotiationDomain) -> list[Offer]:
    """All offers not dominated by any other offer, in canonical order.

    Offers sharing an identical utility vector do not dominate each other,
    so every offer mapping to a maximal vector is included.
    """
    offers = domain.offer_space.offers()
    u1 = domain.utility_array(1)
    u2 = domain.utility_array(2)
    vectors = sorted(set(zip(u1.tolist(), u2.tolist())), key=lambda v: (-v[0], -v[1]))
    maximal: set[tuple[float, float]] = set()
    best_u2 = -math.inf
    i = 0
    while i < len(vectors):
        x = vectors[i][0]
        j = i
        while j < len(vectors) and vectors[j][0] == x:
            j += 1
        top = vectors[i]  # max u2 within the equal-u1 group
        if top[1] > best_u2:
            maximal.add(top)
            best_u2 = top[1]
        i = j
    return [o for o, a, b in zip(offers, u1.tolist(), u2.tolist()) if (a, b) in maximal]


def individually_rational(domain: NegotiationDomain, offer: Offer) -> bool:
    """Strictly better than the reservation value for both agents."""
    ua, ub = domain.utility_vector(offer)
    r1, r2 = domain.reservation_values
    return ua > r1 and ub > r2


OPPOSITION_MEASURES = ("euclidean", "min_utility", "kalai_euclidean")


def opposition(domain: NegotiationDomain, measure: str = "euclidean") -> float:
    """Distance of the domain's attainable utility vectors from the utopian
    vector (1, 1); requires normalized utilities.

    euclidean        min over offers of sqrt((1-u1)^2 + (1-u2)^2)
    min_utility      min over offers of 1 - min(u1, u2)
    kalai_euclidean  Euclidean distance at the Pareto-optimal offer with
                     minimal |u1 - u2| (ties: higher u1+u2, then canonical
                     offer order)
    """
    if measure not in OPPOSITION_MEASURES:
        raise ValueError(f"unknown opposition measure {measure!r}")
    u1 = domain.utility_array(1)
    u2 = domain.utility_array(2)
    for arr in (u1, u2):
        if abs(arr.min()) > 1e-9 or abs(arr.max() - 1.0) > 1e-9:
            raise ValueError("opposition requires utilities normalized to [0, 1]")
    if measure == "euclidean":
        return float(np.sqrt((1.0 - u1) ** 2 + (1.0 - u2) ** 2).min())
    if measure == "min_utility":
        return float((1.0 - np.minimum(u1, u2)).min())
    space = domain.offer_space
    best: tuple[float, float, int] | None = None  # (|u1-u2|, -(u1+u2), index)
    for offer in pareto_set(domain):
        idx = space.index_of(offer)
        key = (abs(float(u1[idx] - u2[idx])), -float(u1[idx] + u2[idx]), idx)
        if best is None or key < best:
            best = key
    assert best is not None  # finite domains always have a Pareto offer
    idx = best[2]
    return float(math.sqrt((1.0 - u1[idx]) ** 2 + (1.0 - u2[idx]) ** 2))


def generate_split_the_pie(num_offers: int) -> NegotiationDomain:
    """Single-issue domain whose utility vectors are (k/(n-1), 1-k/(n-1))."""
    if num_offers < 2:
        raise ValueError("split-the-pie needs at least 2 offers")
    n = num_offers
    issue = Issue("share", tuple(f"{k}/{n - 1}" for k in range(n)), ordered=True)
    space = OfferSpace([issue])
    u1 = LinearUtility([1.0], [[k / (n - 1) for k in range(n)]], normalized=True)
    u2 = LinearUtility([1.0], [[(n - 1 - k) / (n - 1) for k in range(n)]], normalized=True)
    return NegotiationDomain(space, (u1, u2))


def generate_random_linear_domain(
    num_issues: int,
    options_per_issue: int | Sequence[int],
    seed: int,
    opposition_hint: float = 0.5,
    reservation_values: Sequence[float] = (0.0, 0.0),
    discount_factors: Sequence[float] = (1.0, 1.0),
) -> NegotiationDomain:
    """Seeded random domain with two normalized linear utilities.

    ``opposition_hint`` in [0, 1] biases the correlation of the agents'
    evaluations: 0 copies agent 1's preferences (aligned), 1 mirrors them
    (anti-aligned). Issues with a single option carry no preference
    information and receive weight 0.
    """
    if not 0.0 <= opposition_hint <= 1.0:
        raise ValueError("opposition_hint must lie in [0, 1]")
    if isinstance(options_per_issue, int):
        sizes = [options_per_issue] * num_issues
    else:
        sizes = list(options_per_issue)
    if num_issues < 1 or len(sizes) != num_issues or any(k < 1 for k in sizes):
        raise ValueError("need at least one issue and one option per issue")
    if all(k == 1 for k in sizes):
        raise ValueError("domain with a single offer has no preference structure")

    rng = np.random.default_rng(seed)
    issues = [
        Issue(f"issue{j}", tuple(f"opt{j}.{l}" for l in range(k)), ordered=False)
        for j, k in enumerate(sizes)
    ]
    space = OfferSpace(issues)

    def random_evals(k: int) -> list[float]:
        if k == 1:
            return [0.0]
        vals = rng.random(k)
        return _rescale_unit(vals).tolist()

    def random_weights() -> list[float]:
        raw = rng.random(num_issues) + 0.05
        raw = np.where(np.array(sizes) > 1, raw, 0.0)
        return (raw / raw.sum()).tolist()

    w1 = random_weights()
    v1 = [random_evals(k) for k in sizes]
    h = float(opposition_hint)
    if h == 0.0:
        w2, v2 = list(w1), [list(row) for row in v1]
    else:
        w2 = random_weights()
        v2 = []
        for k, row in zip(sizes, v1):
            if k == 1:
                v2.append([0.0])
                continue
            base = np.asarray(row)
            blended = (1.0 - h) * base + h * (1.0 - base)
            blended = blended + 0.05 * rng.random(k)
            v2.append(_rescale_unit(blended).tolist())
    u1 = LinearUtility(w1, v1, normalized=True)
    u2 = LinearUtility(w2, v2, normalized=True)
    return NegotiationDomain(space, (u1, u2), reservation_values, discount_factors)


def _rescale_unit(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:  # rare with random draws; spread deterministically instead
        return np.linspace(0.0, 1.0, len(values))
    out = (values - lo) / (hi - lo)
    # pin the endpoints so the normalized-invariant holds exactly
    out[np.argmin(values)] = 0.0
    out[np.argmax(values)] = 1.0
    return out


# ---------------------------------------------------------------------------
# Domain files (UTF-8 JSON, bit-exact round trip)
# ---------------------------------------------------------------------------

def offer_key(offer: Offer) -> str:
    return "/".join(str(x) for x in offer)


def parse_offer_key(key: str) -> Offer:
    return tuple(int(part) for part in key.split("/"))


def domain_to_dict(domain: NegotiationDomain) -> dict:
    agents = []
    for slot in range(2):
        utility = domain.utilities[slot]
        entry: dict = {
            "reservation_value": domain.reservation_values[slot],
            "discount_factor": domain.discount_factors[slot],
        }
        if isinstance(utility, LinearUtility):
            entry["weights"] = list(utility.weights)
            entry["evaluations"] = [list(row) for row in utility.evaluations]
        else:
            entry["table"] = {offer_key(o): v for o, v in sorted(utility.values.items())}
        agents.append(entry)
    return {
        "issues": [
            {"name": i.name, "options": list(i.options), "ordered": i.ordered}
            for i in domain.offer_space.issues
        ],
        "agents": agents,
    }


def domain_from_dict(data: dict) -> NegotiationDomain:
    issues = [
        Issue(item["name"], tuple(item["options"]), bool(item.get("ordered", False)))
        for item in data["issues"]
    ]
    space = OfferSpace(issues)
    utilities: list[Utility] = []
    reservations: list[float] = []
    discounts: list[float] = []
    for entry in data["agents"]:
        if "table" in entry:
            utilities.append(
                TabularUtility({parse_offer_key(k): v for k, v in entry["table"].items()})
            )
        else:
            weights = entry["weights"]
            evaluations = entry["evaluations"]
            try:
                utilities.append(LinearUtility(weights, evaluations, normalized=True))
            except ValueError:
                utilities.append(LinearUtility(weights, evaluations, normalized=False))
        reservations.append(float(entry["reservation_value"]))
        discounts.append(float(entry["discount_factor"]))
    return NegotiationDomain(space, utilities, reservations, discounts)


def save_domain(domain: NegotiationDomain, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(domain_to_dict(domain), fh, indent=2)
        fh.write("\n")


def load_domain(path: str) -> NegotiationDomain:
    with open(path, "r", encoding="utf-8") as fh:
        return domain_from_dict(json.load(fh))
