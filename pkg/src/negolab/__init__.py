"""Bilateral automated negotiation under the alternating offers protocol:
domains, the session engine, the strategy catalog, opponent models,
game-theoretic analysis, and a seeded tournament runner."""

__version__ = "0.1.0"

from .domain import (
    Issue,
    LinearUtility,
    NegotiationDomain,
    Offer,
    OfferSpace,
    TabularUtility,
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
from .protocol import (
    Accept,
    DelayModel,
    NegotiationAction,
    NegotiationHistory,
    ObservedHistory,
    Outcome,
    Propose,
    SessionConfig,
    StrategyContext,
    observed_view,
    outcome_of,
    run_session,
    sample_delay,
    validate_history,
)
from .specs import ConfigError, strategy_factory
from .tournament import TournamentConfig, compute_metrics, emit, run_tournament

__all__ = [
    "Accept",
    "ConfigError",
    "DelayModel",
    "Issue",
    "LinearUtility",
    "NegotiationAction",
    "NegotiationDomain",
    "NegotiationHistory",
    "ObservedHistory",
    "Offer",
    "OfferSpace",
    "Outcome",
    "Propose",
    "SessionConfig",
    "StrategyContext",
    "TabularUtility",
    "TournamentConfig",
    "compute_metrics",
    "dominates",
    "emit",
    "evaluate_utility",
    "generate_random_linear_domain",
    "generate_split_the_pie",
    "individually_rational",
    "load_domain",
    "normalize_utility",
    "observed_view",
    "offer_space_size",
    "opposition",
    "outcome_of",
    "pareto_set",
    "run_session",
    "run_tournament",
    "sample_delay",
    "save_domain",
    "strategy_factory",
    "validate_history",
]
