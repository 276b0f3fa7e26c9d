"""Strategy and model spec strings for the CLI and tournament configs.

Grammar: ``name(key=value, ...)`` where a value is a number, a bare word,
or a nested call; the whole spec may be prefixed with ``repropose:``.
Examples::

    micro()
    random(threshold=0.9)
    timebased(beta=0.5, gamma=0.2, mode=min_own, accept=ac_asp)
    tft(measure_self=own, measure_opp=own, emin=0, selector=own_max)
    adaptive(beta_min=0.5, model=scalable_bayes(c=1, sigma=0.15))
    repropose:timebased(beta=0.4, mode=max_opponent, model=frequency)
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from .domain import NegotiationDomain, parse_offer_key
from .models import (
    BayesUtilityModel,
    DummyModel,
    FrequencyModel,
    GpConcessionPredictor,
    OpponentUtilityModel,
    ScalableBayesModel,
)
from .protocol import SessionConfig
from .strategies import (
    AcceptanceRule,
    Agent,
    AspirationFunction,
    AdaptiveBidder,
    BoaAgent,
    ConcessionMeasure,
    MicroAgent,
    RandomAgent,
    ReproposeAgent,
    StrategyConfigError,
    TftBidder,
    TftConfig,
    TimeBasedBidder,
)


class ConfigError(ValueError):
    """A spec string or tournament config could not be interpreted."""


# ---------------------------------------------------------------------------
# Spec grammar
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpecCall:
    name: str
    args: dict

    def get(self, key, default=None):
        return self.args.get(key, default)


_TOKEN = re.compile(r"\s*([A-Za-z_][A-Za-z0-9_.-]*|[-+]?[0-9.]+(?:[eE][-+]?[0-9]+)?|[(),=:/])")


def _tokenize(text: str) -> list[str]:
    tokens, pos = [], 0
    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if not match:
            raise ConfigError(f"cannot parse spec near {text[pos:pos + 12]!r}")
        tokens.append(match.group(1))
        pos = match.end()
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, expected: str | None = None) -> str:
        if self.pos >= len(self.tokens):
            raise ConfigError(f"unexpected end of spec {self.text!r}")
        token = self.tokens[self.pos]
        if expected is not None and token != expected:
            raise ConfigError(f"expected {expected!r} but found {token!r} in {self.text!r}")
        self.pos += 1
        return token

    def parse_call(self) -> SpecCall:
        name = self.take()
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name):
            raise ConfigError(f"invalid name {name!r} in {self.text!r}")
        args: dict = {}
        if self.peek() == "(":
            self.take("(")
            while self.peek() != ")":
                key = self.take()
                self.take("=")
                args[key] = self.parse_value()
                if self.peek() == ",":
                    self.take(",")
                elif self.peek() != ")":
                    raise ConfigError(f"expected ',' or ')' in {self.text!r}")
            self.take(")")
        return SpecCall(name, args)

    def parse_value(self):
        token = self.peek()
        if token is None:
            raise ConfigError(f"missing value in {self.text!r}")
        if re.fullmatch(r"[-+]?[0-9.]+(?:[eE][-+]?[0-9]+)?", token):
            self.take()
            value = token
            # offer keys like 1/2/0 are slash-joined integers
            while self.peek() == "/":
                self.take("/")
                value += "/" + self.take()
            if "/" in value:
                return value
            return float(value) if any(c in value for c in ".eE") else int(value)
        call = self.parse_call()
        return call if call.args or _is_known_call(call.name) else call.name


_KNOWN_CALLS = {"bayes", "scalable_bayes", "frequency", "dummy", "gp"}


def _is_known_call(name: str) -> bool:
    return name in _KNOWN_CALLS


def parse_spec(text: str) -> tuple[SpecCall, bool]:
    """Parse a strategy spec; returns (call, repropose_flag)."""
    text = text.strip()
    repropose = False
    if text.startswith("repropose:"):
        repropose = True
        text = text[len("repropose:"):]
    parser = _Parser(text)
    call = parser.parse_call()
    if parser.peek() is not None:
        raise ConfigError(f"trailing tokens after spec: {parser.tokens[parser.pos:]!r}")
    return call, repropose


# ---------------------------------------------------------------------------
# Model construction
# ---------------------------------------------------------------------------

def _as_call(value, default_name: str | None = None) -> SpecCall:
    if isinstance(value, SpecCall):
        return value
    if isinstance(value, str):
        return SpecCall(value, {})
    if value is None and default_name is not None:
        return SpecCall(default_name, {})
    raise ConfigError(f"expected a model spec, got {value!r}")


def build_model(
    spec, domain: NegotiationDomain, side: int, config: SessionConfig
) -> OpponentUtilityModel:
    call = _as_call(spec)
    space = domain.offer_space
    opponent = 3 - side
    if call.name == "bayes":
        return BayesUtilityModel(
            space,
            config.deadline,
            concession_speed=float(call.get("c", 1.0)),
            sigma=float(call.get("sigma", 0.15)),
        )
    if call.name == "scalable_bayes":
        return ScalableBayesModel(
            space,
            config.deadline,
            concession_speed=float(call.get("c", 1.0)),
            sigma=float(call.get("sigma", 0.15)),
        )
    if call.name == "frequency":
        return FrequencyModel(space)
    if call.name == "dummy":
        return DummyModel(
            space,
            domain.utility_array(opponent),
            noise=float(call.get("noise", 0.05)),
            seed=config.seed * 2 + side,
        )
    if call.name == "gp":
        raise ConfigError(
            "gp predicts the opponent's concession, not a utility function; "
            "pass it to adaptive(gp=...) instead"
        )
    raise ConfigError(f"unknown opponent model {call.name!r}")


def _build_gp(spec, config: SessionConfig) -> GpConcessionPredictor:
    call = _as_call(spec, "gp")
    if call.name != "gp":
        raise ConfigError(f"expected gp(...), got {call.name!r}")
    kwargs = {}
    if "lengthscale" in call.args:
        kwargs["length_scale"] = float(call.args["lengthscale"])
    if "window" in call.args:
        kwargs["window_size"] = float(call.args["window"])
    if "variance" in call.args:
        kwargs["variance"] = float(call.args["variance"])
    if "noise" in call.args:
        kwargs["noise"] = float(call.args["noise"])
    return GpConcessionPredictor(config.deadline, **kwargs)


def _acceptance(value) -> AcceptanceRule:
    call = _as_call(value, "ac_asp")
    name = call.name
    if name.endswith("_param"):
        name = name[: -len("_param")]
    try:
        return AcceptanceRule(name, float(call.get("a", 1.0)), float(call.get("b", 0.0)))
    except StrategyConfigError as exc:
        raise ConfigError(str(exc)) from exc


_MEASURE_NAMES = {
    "own": "own_utility",
    "own_utility": "own_utility",
    "opponent": "opponent_estimate",
    "opponent_estimate": "opponent_estimate",
    "count": "count",
    "relative": "relative",
}


def _measure(value, ideal) -> ConcessionMeasure:
    name = value.name if isinstance(value, SpecCall) else str(value)
    if name not in _MEASURE_NAMES:
        raise ConfigError(f"unknown concession measure {name!r}")
    basis = _MEASURE_NAMES[name]
    offer = parse_offer_key(ideal) if isinstance(ideal, str) else ideal
    try:
        return ConcessionMeasure(basis, offer)
    except StrategyConfigError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Strategy factories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StrategyFactory:
    """Builds a fresh, session-scoped agent from a parsed spec."""

    spec: str
    call: SpecCall
    repropose: bool

    def build(self, domain: NegotiationDomain, side: int, config: SessionConfig) -> Agent:
        try:
            agent = self._build(domain, side, config)
        except StrategyConfigError as exc:
            raise ConfigError(f"{self.spec}: {exc}") from exc
        if self.repropose and not isinstance(agent, BoaAgent):
            return ReproposeAgent(agent)
        return agent

    def _build(self, domain: NegotiationDomain, side: int, config: SessionConfig) -> Agent:
        call = self.call
        name = call.name
        u_max = float(domain.utility_array(side).max())
        reservation = domain.reservation_value(side)

        if name == "micro":
            return MicroAgent()
        if name == "random":
            return RandomAgent(float(call.get("threshold", 0.9)))

        if name == "timebased":
            if not math.isfinite(config.deadline):
                raise ConfigError("timebased needs a finite session deadline")
            alpha = float(call.get("alpha", u_max))
            beta = float(call.get("beta", reservation + 0.1 * (u_max - reservation)))
            beta = max(beta, reservation)
            gamma = float(call.get("gamma", 0.2))
            target_time = float(call.get("tprime", 0.95 * config.deadline))
            mode = str(call.get("mode", "min_own"))
            aspiration = AspirationFunction(alpha, beta, gamma, config.deadline, target_time)
            model = None
            if mode == "max_opponent" or "model" in call.args:
                model = build_model(call.get("model", "frequency"), domain, side, config)
            return BoaAgent(
                side,
                TimeBasedBidder(aspiration, mode),
                _acceptance(call.get("accept", "ac_asp")),
                model=model,
                repropose=self.repropose,
            )

        if name == "adaptive":
            if not math.isfinite(config.deadline):
                raise ConfigError("adaptive needs a finite session deadline")
            alpha = float(call.get("alpha", u_max))
            beta_min = max(float(call.get("beta_min", 0.5)), reservation)
            gamma = float(call.get("gamma", 0.2))
            bidder = AdaptiveBidder(
                side,
                alpha,
                beta_min,
                gamma,
                config.deadline,
                target_time=float(call.get("tprime", 0.95 * config.deadline)),
                safety=float(call.get("safety", 0.1)),
                mode=str(call.get("mode", "max_opponent")),
                predictor=_build_gp(call.get("gp"), config),
            )
            model = build_model(call.get("model", "scalable_bayes"), domain, side, config)
            return BoaAgent(
                side, bidder, _acceptance(call.get("accept", "ac_asp")),
                model=model, repropose=self.repropose,
            )

        if name == "tft":
            ideal = call.get("ideal")
            cfg = TftConfig(
                measure_self=_measure(call.get("measure_self", "own"), ideal),
                measure_opponent=_measure(call.get("measure_opp", "own"), ideal),
                e_min=float(call.get("emin", 0.0)),
                e_max=float(call.args["emax"]) if "emax" in call.args else None,
                selector=str(call.get("selector", "own_max")),
            )
            needs_model = (
                cfg.selector == "opponent_max"
                or cfg.measure_self.basis == "opponent_estimate"
                or cfg.measure_opponent.basis == "opponent_estimate"
                or "model" in call.args
            )
            model = (
                build_model(call.get("model", "frequency"), domain, side, config)
                if needs_model
                else None
            )
            return BoaAgent(
                side, TftBidder(cfg), _acceptance(call.get("accept", "ac_next")),
                model=model, repropose=self.repropose,
            )

        raise ConfigError(f"unknown strategy {name!r}")


def strategy_factory(spec: str) -> StrategyFactory:
    """Parse a spec string into a reusable factory; raises ConfigError
    naming the offending token."""
    try:
        call, repropose = parse_spec(spec)
    except ConfigError:
        raise
    except Exception as exc:  # tokenizer edge cases
        raise ConfigError(f"cannot parse strategy spec {spec!r}: {exc}") from exc
    if call.name not in ("micro", "random", "timebased", "adaptive", "tft"):
        raise ConfigError(f"unknown strategy {call.name!r} in {spec!r}")
    return StrategyFactory(spec.strip(), call, repropose)
