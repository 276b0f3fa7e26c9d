import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from negolab.domain import (
    DegenerateUtilityError,
    InvalidOfferError,
    Issue,
    LinearUtility,
    NegotiationDomain,
    OfferSpace,
    TabularUtility,
    discounted_utility,
    domain_from_dict,
    domain_to_dict,
    dominates,
    evaluate_utility,
    generate_random_linear_domain,
    generate_split_the_pie,
    individually_rational,
    load_domain,
    normalize_utility,
    offer_space_size,
    opposition,
    pareto_set,
    save_domain,
)

from conftest import DIAGRAM_VECTORS, pareto_brute_force, pareto_brute_force_fast


class TestEvaluateUtility:
    def test_four_issue_weighted_sum(self, four_issue_domain):
        # options (3,3,1,1) one-based -> 0.3*1.0 + 0.5*0.9 + 0.1*0.3 + 0.1*1.0
        value = evaluate_utility(four_issue_domain, 1, (2, 2, 0, 0))
        assert value == pytest.approx(0.88, abs=1e-12)

    def test_degenerate_weights_reduce_to_one_issue(self):
        issues = [Issue("a", ("x", "y", "z")), Issue("b", ("p", "q"))]
        space = OfferSpace(issues)
        u = LinearUtility([1.0, 0.0], [[0.0, 0.5, 1.0], [0.0, 1.0]], normalized=True)
        dom = NegotiationDomain(space, (u, u))
        for x in range(3):
            for y in range(2):
                assert evaluate_utility(dom, 1, (x, y)) == [0.0, 0.5, 1.0][x]

    def test_tabular_lookup(self, restaurant_domain):
        assert evaluate_utility(restaurant_domain, 1, (0,)) == 1.0
        assert evaluate_utility(restaurant_domain, 1, (1,)) == 4.0
        assert evaluate_utility(restaurant_domain, 1, (2,)) == 5.0

    def test_invalid_offer(self, restaurant_domain):
        with pytest.raises(InvalidOfferError):
            evaluate_utility(restaurant_domain, 1, (3,))
        with pytest.raises(InvalidOfferError):
            evaluate_utility(restaurant_domain, 1, (0, 0))


class TestOfferSpaceSize:
    def test_cinema_domain(self):
        space = OfferSpace([
            Issue("movie", ("godfather", "casablanca", "lebowski")),
            Issue("cinema", ("rialto", "paradiso")),
            Issue("slot", tuple(f"s{i}" for i in range(6))),
        ])
        assert offer_space_size(space) == 36

    def test_single_offer(self):
        assert offer_space_size(OfferSpace([Issue("only", ("x",))])) == 1

    def test_thousand(self):
        space = OfferSpace([Issue(f"i{j}", tuple(map(str, range(10)))) for j in range(3)])
        assert offer_space_size(space) == 1000


class TestNormalizeUtility:
    def test_restaurant_values(self, restaurant_domain):
        normalized = normalize_utility(
            restaurant_domain.utility(1), restaurant_domain.offer_space
        )
        assert normalized.value((0,)) == 0.0
        assert normalized.value((1,)) == 0.75
        assert normalized.value((2,)) == 1.0

    def test_idempotent(self, restaurant_domain):
        space = restaurant_domain.offer_space
        once = normalize_utility(restaurant_domain.utility(1), space)
        twice = normalize_utility(once, space)
        assert all(once.value(o) == twice.value(o) for o in space.offers())

    def test_affine_invariance(self, restaurant_domain):
        space = restaurant_domain.offer_space
        base = restaurant_domain.utility(1)
        shifted = TabularUtility({o: 2.5 * base.value(o) - 7.0 for o in space.offers()})
        a = normalize_utility(base, space)
        b = normalize_utility(shifted, space)
        assert all(a.value(o) == pytest.approx(b.value(o), abs=1e-12) for o in space.offers())

    def test_constant_utility_rejected(self):
        space = OfferSpace([Issue("a", ("x", "y"))])
        flat = TabularUtility({(0,): 3.0, (1,): 3.0})
        with pytest.raises(DegenerateUtilityError):
            normalize_utility(flat, space)


class TestDiscountedUtility:
    def test_no_discount(self, restaurant_domain):
        assert discounted_utility(restaurant_domain, 1, (2,), 17.3) == 5.0

    def test_time_zero(self):
        dom = generate_split_the_pie(11)
        assert discounted_utility(dom, 1, (7,), 0.0) == evaluate_utility(dom, 1, (7,))

    def test_halving(self):
        issue = Issue("a", ("x", "y"))
        u = TabularUtility({(0,): 0.8, (1,): 0.1})
        dom = NegotiationDomain(
            OfferSpace([issue]), (u, u), discount_factors=(0.5, 0.5)
        )
        assert discounted_utility(dom, 1, (0,), 2.0) == pytest.approx(0.2, abs=1e-15)


class TestDominates:
    def test_diagram_example(self, diagram_domain):
        better = (DIAGRAM_VECTORS.index((0.5, 0.7)),)
        worse = (DIAGRAM_VECTORS.index((0.35, 0.5)),)
        assert dominates(diagram_domain, better, worse)
        assert not dominates(diagram_domain, worse, better)

    def test_irreflexive(self, diagram_domain):
        for offer in diagram_domain.offer_space.offers():
            assert not dominates(diagram_domain, offer, offer)

    def test_incomparable(self, diagram_domain):
        a = (DIAGRAM_VECTORS.index((0.9, 0.1)),)
        b = (DIAGRAM_VECTORS.index((0.1, 1.0)),)
        assert not dominates(diagram_domain, a, b)
        assert not dominates(diagram_domain, b, a)


class TestParetoSet:
    def test_diagram_frontier(self, diagram_domain):
        expected_vectors = {
            (0.1, 1.0), (0.22, 0.75), (0.5, 0.7), (0.62, 0.4), (0.9, 0.1), (1.0, 0.05),
        }
        result = {
            diagram_domain.utility_vector(o) for o in pareto_set(diagram_domain)
        }
        assert result == expected_vectors

    def test_split_the_pie_all_optimal(self):
        dom = generate_split_the_pie(11)
        assert len(pareto_set(dom)) == 11

    def test_matches_brute_force_small(self, diagram_domain):
        assert pareto_set(diagram_domain) == pareto_brute_force(diagram_domain)

    def test_matches_brute_force_500_offer_domain(self):
        dom = generate_random_linear_domain(3, (10, 10, 5), seed=13, opposition_hint=0.8)
        assert dom.offer_space.size == 500
        assert pareto_set(dom) == pareto_brute_force_fast(dom)

    def test_duplicate_vectors_all_kept(self):
        space = OfferSpace([Issue("a", ("w", "x", "y", "z"))])
        u1 = TabularUtility({(0,): 1.0, (1,): 1.0, (2,): 0.2, (3,): 0.5})
        u2 = TabularUtility({(0,): 0.5, (1,): 0.5, (2,): 0.9, (3,): 0.1})
        dom = NegotiationDomain(space, (u1, u2))
        assert pareto_set(dom) == [(0,), (1,), (2,)]


class TestIndividuallyRational:
    def test_diagram_example(self, diagram_domain):
        good = (DIAGRAM_VECTORS.index((0.5, 0.7)),)
        assert individually_rational(diagram_domain, good)

    def test_equality_is_not_rational(self):
        dom = generate_split_the_pie(11)
        dom = NegotiationDomain(
            dom.offer_space, dom.utilities, reservation_values=(0.5, 0.0)
        )
        assert not individually_rational(dom, (5,))  # u_1 == 0.5 == r_1
        assert individually_rational(dom, (6,))

    def test_unbounded_reservations(self, diagram_domain):
        dom = NegotiationDomain(
            diagram_domain.offer_space,
            diagram_domain.utilities,
            reservation_values=(-1e18, -1e18),
        )
        assert all(
            individually_rational(dom, o) for o in dom.offer_space.offers()
        )


class TestOpposition:
    def test_split_the_pie_euclidean(self):
        dom = generate_split_the_pie(11)
        # brute-force over the 11 vectors: minimum at (0.5, 0.5)
        expected = min(
            math.sqrt((1 - k / 10) ** 2 + (1 - (10 - k) / 10) ** 2) for k in range(11)
        )
        assert expected == pytest.approx(0.7071067811865476, abs=1e-15)
        assert opposition(dom, "euclidean") == pytest.approx(expected, abs=1e-15)

    def test_split_the_pie_min_utility(self):
        dom = generate_split_the_pie(11)
        assert opposition(dom, "min_utility") == pytest.approx(0.5, abs=1e-15)

    def test_utopian_point_zeroes_all_measures(self):
        space = OfferSpace([Issue("a", ("x", "y"))])
        u1 = TabularUtility({(0,): 1.0, (1,): 0.0})
        u2 = TabularUtility({(0,): 1.0, (1,): 0.0})
        dom = NegotiationDomain(space, (u1, u2))
        for measure in ("euclidean", "min_utility", "kalai_euclidean"):
            assert opposition(dom, measure) == 0.0

    def test_requires_normalized(self, restaurant_domain):
        with pytest.raises(ValueError):
            opposition(restaurant_domain, "euclidean")

    def test_kalai_tie_breaks_on_welfare(self):
        # two balanced Pareto offers; the (0.8, 0.8) one has higher welfare
        space = OfferSpace([Issue("a", ("w", "x", "y", "z"))])
        u1 = TabularUtility({(0,): 0.0, (1,): 0.5, (2,): 0.8, (3,): 1.0})
        u2 = TabularUtility({(0,): 1.0, (1,): 0.5, (2,): 0.8, (3,): 0.0})
        dom = NegotiationDomain(space, (u1, u2))
        expected = math.sqrt(2 * 0.2 ** 2)
        assert opposition(dom, "kalai_euclidean") == pytest.approx(expected, abs=1e-12)

    def test_unknown_measure(self):
        with pytest.raises(ValueError):
            opposition(generate_split_the_pie(3), "manhattan")


class TestGenerators:
    def test_split_the_pie_vectors(self):
        dom = generate_split_the_pie(11)
        vectors = [dom.utility_vector(o) for o in dom.offer_space.offers()]
        assert vectors[0] == (0.0, 1.0)
        assert vectors[1] == (0.1, 0.9)
        assert vectors[-1] == (1.0, 0.0)

    def test_split_the_pie_two_offers(self):
        dom = generate_split_the_pie(2)
        vectors = [dom.utility_vector(o) for o in dom.offer_space.offers()]
        assert vectors == [(0.0, 1.0), (1.0, 0.0)]

    def test_split_the_pie_sums_to_one(self):
        dom = generate_split_the_pie(101)
        u1 = dom.utility_array(1)
        u2 = dom.utility_array(2)
        assert np.all(np.abs(u1 + u2 - 1.0) <= 1e-12)

    def test_random_domain_deterministic(self):
        a = generate_random_linear_domain(3, 4, seed=11, opposition_hint=0.3)
        b = generate_random_linear_domain(3, 4, seed=11, opposition_hint=0.3)
        assert domain_to_dict(a) == domain_to_dict(b)

    def test_random_domain_aligned_argmax(self):
        dom = generate_random_linear_domain(1, 6, seed=5, opposition_hint=0.0)
        u1 = dom.utility_array(1)
        u2 = dom.utility_array(2)
        assert int(np.argmax(u1)) == int(np.argmax(u2))

    def test_random_domain_normalized_invariants(self):
        for seed in range(5):
            dom = generate_random_linear_domain(3, (2, 5, 3), seed=seed)
            for agent in (1, 2):
                utility = dom.utility(agent)
                assert utility.normalized
                assert sum(utility.weights) == pytest.approx(1.0, abs=1e-9)
                for row in utility.evaluations:
                    assert min(row) == 0.0 and max(row) == 1.0

    def test_single_option_issue_gets_zero_weight(self):
        dom = generate_random_linear_domain(2, (1, 4), seed=2)
        assert dom.utility(1).weights[0] == 0.0

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            generate_split_the_pie(1)
        with pytest.raises(ValueError):
            generate_random_linear_domain(1, 1, seed=0)
        with pytest.raises(ValueError):
            generate_random_linear_domain(2, 3, seed=0, opposition_hint=1.5)


class TestDomainFiles:
    def test_round_trip_linear(self, tmp_path):
        dom = generate_random_linear_domain(3, 4, seed=7, opposition_hint=0.6)
        path = tmp_path / "d.json"
        save_domain(dom, str(path))
        loaded = load_domain(str(path))
        assert domain_to_dict(loaded) == domain_to_dict(dom)
        assert np.array_equal(loaded.utility_array(1), dom.utility_array(1))
        assert np.array_equal(loaded.utility_array(2), dom.utility_array(2))

    def test_round_trip_tabular(self, restaurant_domain, tmp_path):
        path = tmp_path / "r.json"
        save_domain(restaurant_domain, str(path))
        loaded = load_domain(str(path))
        assert domain_to_dict(loaded) == domain_to_dict(restaurant_domain)
        assert loaded.reservation_values == restaurant_domain.reservation_values

    def test_save_is_byte_stable(self, tmp_path):
        dom = generate_random_linear_domain(2, 3, seed=1)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_domain(dom, str(p1))
        save_domain(dom, str(p2))
        assert p1.read_bytes() == p2.read_bytes()

    def test_offer_keys_in_table(self, restaurant_domain, tmp_path):
        path = tmp_path / "r.json"
        save_domain(restaurant_domain, str(path))
        data = json.loads(path.read_text())
        assert set(data["agents"][0]["table"]) == {"0", "1", "2"}


class TestTypeInvariants:
    def test_issue_needs_options(self):
        with pytest.raises(ValueError):
            Issue("empty", ())
        with pytest.raises(ValueError):
            Issue("dup", ("a", "a"))

    def test_linear_utility_validation(self):
        with pytest.raises(ValueError):
            LinearUtility([0.5, 0.6], [[0, 1], [0, 1]], normalized=True)
        with pytest.raises(ValueError):
            LinearUtility([-0.1, 1.1], [[0, 1], [0, 1]])
        with pytest.raises(ValueError):
            LinearUtility([0.5, 0.5], [[0.2, 1.0], [0.0, 1.0]], normalized=True)

    def test_tabular_completeness(self):
        space = OfferSpace([Issue("a", ("x", "y"))])
        with pytest.raises(ValueError):
            NegotiationDomain(
                space,
                (TabularUtility({(0,): 1.0}), TabularUtility({(0,): 1.0, (1,): 0.0})),
            )

    def test_discount_factor_range(self):
        space = OfferSpace([Issue("a", ("x", "y"))])
        u = TabularUtility({(0,): 1.0, (1,): 0.0})
        with pytest.raises(ValueError):
            NegotiationDomain(space, (u, u), discount_factors=(0.0, 1.0))
        with pytest.raises(ValueError):
            NegotiationDomain(space, (u, u), discount_factors=(1.0, 1.2))


@st.composite
def small_domains(draw):
    num_issues = draw(st.integers(1, 3))
    sizes = [draw(st.integers(1, 5)) for _ in range(num_issues)]
    if all(s == 1 for s in sizes):
        sizes[0] = draw(st.integers(2, 5))
    seed = draw(st.integers(0, 10_000))
    hint = draw(st.floats(0.0, 1.0))
    return generate_random_linear_domain(num_issues, sizes, seed=seed, opposition_hint=hint)


@settings(max_examples=40, deadline=None)
@given(small_domains())
def test_pareto_matches_brute_force(dom):
    assert pareto_set(dom) == pareto_brute_force_fast(dom)


@settings(max_examples=40, deadline=None)
@given(small_domains())
def test_pareto_members_not_dominated(dom):
    optimal = pareto_set(dom)
    offers = dom.offer_space.offers()
    for good in optimal:
        assert not any(dominates(dom, other, good) for other in offers)


@settings(max_examples=25, deadline=None)
@given(small_domains())
def test_dominates_asymmetric(dom):
    offers = dom.offer_space.offers()
    for a in offers[:10]:
        for b in offers[:10]:
            if dominates(dom, a, b):
                assert not dominates(dom, b, a)


@settings(max_examples=25, deadline=None)
@given(small_domains(), st.integers(1, 2))
def test_normalize_bounds_and_idempotence(dom, agent):
    space = dom.offer_space
    normalized = normalize_utility(dom.utility(agent), space)
    values = [normalized.value(o) for o in space.offers()]
    assert min(values) == 0.0
    assert max(values) == 1.0
    again = normalize_utility(normalized, space)
    assert all(again.value(o) == normalized.value(o) for o in space.offers())


@settings(max_examples=25, deadline=None)
@given(small_domains())
def test_opposition_ranges(dom):
    euclid = opposition(dom, "euclidean")
    kalai = opposition(dom, "kalai_euclidean")
    minu = opposition(dom, "min_utility")
    assert 0.0 <= euclid <= math.sqrt(2) + 1e-12
    assert 0.0 <= kalai <= math.sqrt(2) + 1e-12
    assert 0.0 <= minu <= 1.0 + 1e-12
    assert euclid <= kalai + 1e-12
