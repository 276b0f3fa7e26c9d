"""Seeded round-robin tournaments with deterministic per-session seeds,
aggregate metrics, and CSV/JSONL emission.

Sessions are independent given their derived seeds, so a runner may execute
them in any order (or concurrently); records are always reported in the
canonical order sorted by derived seed.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .domain import (
    NegotiationDomain,
    generate_random_linear_domain,
    generate_split_the_pie,
    load_domain,
    offer_key,
    opposition,
    parse_offer_key,
    pareto_set,
)
from .protocol import DelayModel, SessionConfig, run_session
from .specs import ConfigError, SpecCall, StrategyFactory, parse_spec, strategy_factory


# ---------------------------------------------------------------------------
# Seed derivation: splitmix64 over the (domain, pairing, session, order) key
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> int:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(base_seed: int, *parts: int) -> int:
    """Mix the base seed with index parts through repeated splitmix64."""
    state = base_seed & _MASK64
    for part in parts:
        state = splitmix64(state ^ ((part + 1) & _MASK64))
    return state


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def resolve_domain(spec: str) -> tuple[str, NegotiationDomain]:
    """A domain entry is either a JSON file path or a generator spec:
    ``split_the_pie(n)`` / ``random_linear(issues=, options=, seed=,
    opposition=)``."""
    text = spec.strip()
    if text.endswith(".json") or os.path.sep in text or os.path.exists(text):
        try:
            return os.path.basename(text), load_domain(text)
        except FileNotFoundError as exc:
            raise ConfigError(f"domain file not found: {text}") from exc
    try:
        call, repropose = parse_spec(text)
    except ConfigError as exc:
        raise ConfigError(f"bad domain spec {text!r}: {exc}") from exc
    if repropose:
        raise ConfigError(f"bad domain spec {text!r}")
    if call.name == "split_the_pie":
        size = int(call.get("n", call.get("offers", 11)))
        return text, generate_split_the_pie(size)
    if call.name == "random_linear":
        return text, generate_random_linear_domain(
            int(call.get("issues", 3)),
            int(call.get("options", 4)),
            seed=int(call.get("seed", 0)),
            opposition_hint=float(call.get("opposition", 0.5)),
        )
    raise ConfigError(f"unknown domain generator {call.name!r}")


@dataclass(frozen=True)
class TournamentConfig:
    domains: tuple[str, ...]
    strategies: tuple[str, ...]
    sessions_per_pairing: int = 1
    deadline: float = math.inf
    max_rounds: float = math.inf
    delay_model: DelayModel = field(default_factory=DelayModel)
    think_time: float = 0.01
    base_seed: int = 0
    side_swap: bool = True

    def __post_init__(self) -> None:
        if not self.domains:
            raise ConfigError("tournament needs at least one domain")
        if not self.strategies:
            raise ConfigError("tournament needs at least one strategy")
        if self.sessions_per_pairing < 1:
            raise ConfigError("sessions_per_pairing must be at least 1")

    @classmethod
    def from_dict(cls, data: dict) -> "TournamentConfig":
        delay = data.get("delay", {})
        if isinstance(delay, dict) and delay:
            delay_model = DelayModel(
                delay.get("kind", "uniform"),
                float(delay.get("low", 0.001)),
                float(delay.get("high", 0.01)),
            )
        else:
            delay_model = DelayModel()
        known = {
            "domains", "strategies", "sessions_per_pairing", "deadline",
            "max_rounds", "delay", "think_time", "base_seed", "side_swap",
        }
        for key in data:
            if key not in known:
                raise ConfigError(f"unknown tournament config key {key!r}")
        return cls(
            domains=tuple(data["domains"]),
            strategies=tuple(data["strategies"]),
            sessions_per_pairing=int(data.get("sessions_per_pairing", 1)),
            deadline=float(data.get("deadline", math.inf)),
            max_rounds=float(data.get("max_rounds", math.inf)),
            delay_model=delay_model,
            think_time=float(data.get("think_time", 0.01)),
            base_seed=int(data.get("base_seed", 0)),
            side_swap=bool(data.get("side_swap", True)),
        )


def load_tournament_config(path: str) -> TournamentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    return TournamentConfig.from_dict(data)


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MatchRecord:
    domain_id: str
    strategy_a: str  # side 1
    strategy_b: str  # side 2
    seed: int
    status: str
    payoff_a: float
    payoff_b: float
    agreement_u_a: float | None
    agreement_u_b: float | None
    agreement_time: float | None
    rounds: int
    pareto_optimal: bool | None
    violation_by: int | None = None
    accepted_offer: str | None = None


def run_tournament(config: TournamentConfig) -> list[MatchRecord]:
    """Round-robin over all unordered strategy pairs (self-play included),
    each order when side_swap is on, sessions_per_pairing sessions each."""
    factories = [strategy_factory(spec) for spec in config.strategies]
    domains = [resolve_domain(spec) for spec in config.domains]
    pareto_cache = {
        domain_id: {offer_key(o) for o in pareto_set(dom)} for domain_id, dom in domains
    }

    tasks = []
    pairings = list(itertools.combinations_with_replacement(range(len(factories)), 2))
    for d_idx, (domain_id, dom) in enumerate(domains):
        for p_idx, (i, j) in enumerate(pairings):
            orders = [(i, j)] + ([(j, i)] if config.side_swap else [])
            for s_idx in range(config.sessions_per_pairing):
                for o_idx, (a, b) in enumerate(orders):
                    seed = derive_seed(config.base_seed, d_idx, p_idx, s_idx, o_idx)
                    tasks.append((seed, d_idx, p_idx, s_idx, o_idx, domain_id, dom, a, b))

    tasks.sort(key=lambda t: t[:5])
    records = []
    for seed, _, _, _, _, domain_id, dom, a, b in tasks:
        session_config = SessionConfig(
            deadline=config.deadline,
            max_rounds=config.max_rounds,
            delay_model=config.delay_model,
            starting_agent=1,
            seed=seed,
            think_time=config.think_time,
        )
        agent_1 = factories[a].build(dom, 1, session_config)
        agent_2 = factories[b].build(dom, 2, session_config)
        history, outcome = run_session(dom, agent_1, agent_2, session_config)
        if outcome.accepted_offer is not None:
            u_a, u_b = dom.utility_vector(outcome.accepted_offer)
            key = offer_key(outcome.accepted_offer)
            pareto = key in pareto_cache[domain_id]
        else:
            u_a = u_b = None
            key = None
            pareto = None
        records.append(
            MatchRecord(
                domain_id=domain_id,
                strategy_a=factories[a].spec,
                strategy_b=factories[b].spec,
                seed=seed,
                status=outcome.status,
                payoff_a=outcome.payoffs[0],
                payoff_b=outcome.payoffs[1],
                agreement_u_a=u_a,
                agreement_u_b=u_b,
                agreement_time=outcome.agreement_time,
                rounds=len(history),
                pareto_optimal=pareto,
                violation_by=outcome.violation_by,
                accepted_offer=key,
            )
        )
    return records


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StrategyMetrics:
    sessions: int
    mean_payoff: float
    stddev_payoff: float
    agreement_rate: float
    mean_agreement_time: float | None


@dataclass(frozen=True)
class MetricsSummary:
    per_strategy: dict[str, StrategyMetrics]
    per_pairing: dict[tuple[str, str], StrategyMetrics]
    per_domain_opposition: dict[str, dict[str, float | None]]


def _aggregate(payoffs: list[float], agreements: list[float | None]) -> StrategyMetrics:
    values = np.asarray(payoffs)
    times = [t for t in agreements if t is not None]
    return StrategyMetrics(
        sessions=len(payoffs),
        mean_payoff=float(values.mean()),
        stddev_payoff=float(values.std()),
        agreement_rate=len(times) / len(payoffs),
        mean_agreement_time=float(np.mean(times)) if times else None,
    )


def compute_metrics(
    records: Sequence[MatchRecord],
    domains: Sequence[tuple[str, NegotiationDomain]] = (),
) -> MetricsSummary:
    if not records:
        raise ValueError("no records to aggregate")
    by_strategy: dict[str, tuple[list[float], list[float | None]]] = {}
    by_pairing: dict[tuple[str, str], tuple[list[float], list[float | None]]] = {}
    for record in records:
        for spec, payoff in ((record.strategy_a, record.payoff_a),
                             (record.strategy_b, record.payoff_b)):
            payoffs, times = by_strategy.setdefault(spec, ([], []))
            payoffs.append(payoff)
            times.append(record.agreement_time)
        key = tuple(sorted((record.strategy_a, record.strategy_b)))
        payoffs, times = by_pairing.setdefault(key, ([], []))
        payoffs.append(record.payoff_a)
        payoffs.append(record.payoff_b)
        times.append(record.agreement_time)
        times.append(record.agreement_time)
    per_domain: dict[str, dict[str, float | None]] = {}
    for domain_id, dom in domains:
        measures: dict[str, float | None] = {}
        for measure in ("euclidean", "min_utility", "kalai_euclidean"):
            try:
                measures[measure] = opposition(dom, measure)
            except ValueError:
                measures[measure] = None
        per_domain[domain_id] = measures
    return MetricsSummary(
        per_strategy={k: _aggregate(*v) for k, v in by_strategy.items()},
        per_pairing={k: _aggregate(*v) for k, v in by_pairing.items()},
        per_domain_opposition=per_domain,
    )


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

CSV_COLUMNS = (
    "domain", "strategy_a", "strategy_b", "seed", "status",
    "payoff_a", "payoff_b", "u_a", "u_b", "time", "rounds", "pareto",
)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def records_to_csv(records: Sequence[MatchRecord]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow([
            r.domain_id, r.strategy_a, r.strategy_b, r.seed, r.status,
            _fmt(r.payoff_a), _fmt(r.payoff_b), _fmt(r.agreement_u_a),
            _fmt(r.agreement_u_b), _fmt(r.agreement_time), r.rounds,
            _fmt(r.pareto_optimal),
        ])
    return buffer.getvalue()


def record_to_dict(record: MatchRecord) -> dict:
    return {
        "domain": record.domain_id,
        "strategy_a": record.strategy_a,
        "strategy_b": record.strategy_b,
        "seed": record.seed,
        "status": record.status,
        "payoff_a": record.payoff_a,
        "payoff_b": record.payoff_b,
        "u_a": record.agreement_u_a,
        "u_b": record.agreement_u_b,
        "time": record.agreement_time,
        "rounds": record.rounds,
        "pareto": record.pareto_optimal,
        "violation_by": record.violation_by,
        "accepted_offer": record.accepted_offer,
    }


def record_from_dict(data: dict) -> MatchRecord:
    return MatchRecord(
        domain_id=data["domain"],
        strategy_a=data["strategy_a"],
        strategy_b=data["strategy_b"],
        seed=data["seed"],
        status=data["status"],
        payoff_a=data["payoff_a"],
        payoff_b=data["payoff_b"],
        agreement_u_a=data["u_a"],
        agreement_u_b=data["u_b"],
        agreement_time=data["time"],
        rounds=data["rounds"],
        pareto_optimal=data["pareto"],
        violation_by=data.get("violation_by"),
        accepted_offer=data.get("accepted_offer"),
    )


def summary_to_dict(summary: MetricsSummary) -> dict:
    return {
        "per_strategy": {
            spec: vars(metrics) for spec, metrics in summary.per_strategy.items()
        },
        "per_pairing": {
            " | ".join(key): vars(metrics) for key, metrics in summary.per_pairing.items()
        },
        "per_domain_opposition": summary.per_domain_opposition,
    }


def emit(
    records: Sequence[MatchRecord],
    summary: MetricsSummary | None,
    format: str,
    path: str,
) -> None:
    """Write records to ``path`` (csv or jsonl; byte-stable for fixed
    inputs). When a summary is given it is written next to the records as
    ``<path>.summary.json``."""
    if format == "csv":
        payload = records_to_csv(records)
    elif format == "jsonl":
        payload = "".join(
            json.dumps(record_to_dict(r), sort_keys=True) + "\n" for r in records
        )
    else:
        raise ConfigError(f"unknown output format {format!r}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(payload)
    if summary is not None:
        with open(path + ".summary.json", "w", encoding="utf-8") as fh:
            json.dump(summary_to_dict(summary), fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_records_jsonl(path: str) -> list[MatchRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(record_from_dict(json.loads(line)))
    return records
