"""Command-line front end: domain generation, single sessions with
transcripts, tournaments, domain analysis, and game solving."""

from __future__ import annotations

import argparse
import json
import math
import sys

from . import __version__
from .domain import (
    evaluate_utility,
    offer_key,
    opposition,
    pareto_set,
    save_domain,
)
from .games import (
    NormalFormGame,
    TurnTakingGame,
    backward_induction,
    induced_normal_form,
    load_game,
    pure_nash_equilibria,
)
from .protocol import ACCEPT, DelayModel, SessionConfig, run_session, save_history
from .specs import ConfigError, strategy_factory
from .tournament import (
    compute_metrics,
    emit,
    load_tournament_config,
    resolve_domain,
    run_tournament,
)


def _parse_delay(text: str) -> DelayModel:
    parts = text.split(":")
    if parts[0] == "constant" and len(parts) == 2:
        return DelayModel("constant", float(parts[1]))
    if parts[0] == "uniform" and len(parts) == 3:
        return DelayModel("uniform", float(parts[1]), float(parts[2]))
    raise ConfigError(f"delay must be constant:<v> or uniform:<lo>:<hi>, got {text!r}")


def cmd_gen_domain(args: argparse.Namespace) -> int:
    from .domain import generate_random_linear_domain, generate_split_the_pie

    if args.kind == "split-the-pie":
        dom = generate_split_the_pie(args.offers)
    else:
        dom = generate_random_linear_domain(
            args.issues, args.options, seed=args.seed, opposition_hint=args.opposition,
            reservation_values=(args.reservation, args.reservation),
        )
    save_domain(dom, args.out)
    print(f"wrote {args.out}: {dom.offer_space.size} offers")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    domain_id, dom = resolve_domain(args.domain)
    config = SessionConfig(
        deadline=args.deadline,
        max_rounds=args.max_rounds if args.max_rounds is not None else math.inf,
        delay_model=_parse_delay(args.delay),
        seed=args.seed,
        think_time=args.think_time,
    )
    agent_1 = strategy_factory(args.strategy1).build(dom, 1, config)
    agent_2 = strategy_factory(args.strategy2).build(dom, 2, config)
    history, outcome = run_session(dom, agent_1, agent_2, config)

    print(f"domain {domain_id} ({dom.offer_space.size} offers), seed {args.seed}")
    for action, delay in zip(history.actions, history.delays):
        u1 = evaluate_utility(dom, 1, action.offer)
        u2 = evaluate_utility(dom, 2, action.offer)
        labels = ", ".join(dom.offer_space.labels(action.offer))
        print(
            f"  t={action.time:9.4f}  agent {action.agent} {action.kind:8s} "
            f"[{offer_key(action.offer)}] ({labels})  u=({u1:.4f}, {u2:.4f})  "
            f"eps={delay:.4f}"
        )
    print(f"outcome: {outcome.status}", end="")
    if outcome.status == "agreement":
        print(f" on [{offer_key(outcome.accepted_offer)}] at t={outcome.agreement_time:.4f}")
    else:
        print(" (protocol violation by agent "
              f"{outcome.violation_by})" if outcome.violation_by else "")
    print(f"payoffs: {outcome.payoffs[0]!r}, {outcome.payoffs[1]!r}")
    if args.log:
        save_history(history, args.log)
        print(f"history log written to {args.log}")
    return 0


def cmd_tournament(args: argparse.Namespace) -> int:
    config = load_tournament_config(args.config)
    records = run_tournament(config)
    domains = [resolve_domain(spec) for spec in config.domains]
    summary = compute_metrics(records, domains) if records else None
    emit(records, summary if args.summary else None, args.format, args.out)
    print(f"wrote {len(records)} records to {args.out}")
    if summary is not None:
        print(f"{'strategy':50s} {'mean':>9s} {'std':>8s} {'agree':>6s}")
        for spec, m in sorted(summary.per_strategy.items()):
            print(f"{spec:50s} {m.mean_payoff:9.4f} {m.stddev_payoff:8.4f} "
                  f"{m.agreement_rate:6.2%}")
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    domain_id, dom = resolve_domain(args.domain)
    offers = pareto_set(dom)
    print(f"domain {domain_id}: {dom.offer_space.size} offers, "
          f"{len(offers)} Pareto-optimal")
    for offer in offers:
        u1 = evaluate_utility(dom, 1, offer)
        u2 = evaluate_utility(dom, 2, offer)
        print(f"  [{offer_key(offer)}]  u=({u1!r}, {u2!r})")
    print("opposition:")
    for measure in ("euclidean", "min_utility", "kalai_euclidean"):
        try:
            print(f"  {measure:16s} {opposition(dom, measure)!r}")
        except ValueError as exc:
            print(f"  {measure:16s} n/a ({exc})")
    return 0


def cmd_nash(args: argparse.Namespace) -> int:
    game = load_game(args.game)
    if isinstance(game, TurnTakingGame):
        result = backward_induction(game)
        print("subgame-perfect equilibrium (backward induction):")
        choices_1, choices_2 = result.profile.as_dicts()
        for player, choices in ((1, choices_1), (2, choices_2)):
            for history, label in sorted(choices.items()):
                shown = "/".join(history) if history else "(root)"
                print(f"  player {player} at {shown}: {label}")
        print(f"  payoffs: {result.payoffs}")
        if result.tie_nodes:
            print(f"  note: {result.tie_nodes} tie node(s); first-child rule applied")
        game = induced_normal_form(game)
        print("induced normal form:")
    equilibria = sorted(pure_nash_equilibria(game))
    print(f"pure Nash equilibria ({len(equilibria)}):")
    for i, j in equilibria:
        label_1 = game.action_labels[0][i]
        label_2 = game.action_labels[1][j]
        print(f"  ({label_1}, {label_2})  payoffs "
              f"({float(game.payoffs_1[i, j])!r}, {float(game.payoffs_2[i, j])!r})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="negolab",
        description="Bilateral automated negotiation: protocol engine, "
        "strategy catalog and analysis tools.",
    )
    parser.add_argument("--version", action="version", version=f"negolab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-domain", help="generate a negotiation domain file")
    gen.add_argument("--kind", choices=["split-the-pie", "random"], required=True)
    gen.add_argument("--offers", type=int, default=11, help="split-the-pie size")
    gen.add_argument("--issues", type=int, default=3)
    gen.add_argument("--options", type=int, default=4)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--opposition", type=float, default=0.5)
    gen.add_argument("--reservation", type=float, default=0.0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen_domain)

    run = sub.add_parser("run", help="run a single session and print the transcript")
    run.add_argument("--domain", required=True, help="domain file or generator spec")
    run.add_argument("--strategy1", required=True)
    run.add_argument("--strategy2", required=True)
    run.add_argument("--deadline", type=float, default=60.0)
    run.add_argument("--max-rounds", type=int, default=None)
    run.add_argument("--delay", default="uniform:0.001:0.01")
    run.add_argument("--think-time", type=float, default=0.01)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--log", help="write the history CSV here")
    run.set_defaults(func=cmd_run)

    tour = sub.add_parser("tournament", help="run a tournament from a JSON config")
    tour.add_argument("--config", required=True)
    tour.add_argument("--out", required=True)
    tour.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    tour.add_argument("--summary", action="store_true",
                      help="also write <out>.summary.json")
    tour.set_defaults(func=cmd_tournament)

    analyze = sub.add_parser("analyze", help="Pareto set and opposition of a domain")
    analyze.add_argument("--domain", required=True)
    analyze.set_defaults(func=cmd_analyze)

    nash = sub.add_parser("nash", help="equilibria of a game file")
    nash.add_argument("--game", required=True)
    nash.set_defaults(func=cmd_nash)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
