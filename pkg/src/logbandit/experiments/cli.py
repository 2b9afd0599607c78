"""Command-line interface.

Subcommands:
  simulate   run a config of Monte-Carlo replications, write traces/aggregates
  replay     rejection-sampling replay of a logged corpus against an oracle
  gen-data   generate a logged-data CSV (or replay corpus) from an environment
  bounds     evaluate closed-form regret bounds from an inputs JSON
  example1   reproduce the two-type ad-placement revenue table
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from ..core import spawn_generators
from ..environments import (export_logged_csv, export_replay_csv, gen_replay_corpus,
                            ingest_replay_csv, run_replay, split_replay_corpus)
from ..framework import empirical_context_pool
from .bounds import (bound_biased, bound_linucb, bound_ucb_em, bound_ucb_ipsw,
                     bound_ucb_psm, forest_constants)
from .example1 import STRATEGIES, run_example1
from .runner import (ExperimentConfig, build_environment, build_evaluator,
                     build_oracle, run_experiment)

__all__ = ["main"]


def _cmd_simulate(args) -> int:
    with open(args.config) as fh:
        cfg = json.load(fh)
    if args.output_dir:
        cfg["output_dir"] = args.output_dir
    if args.workers:
        cfg["workers"] = args.workers
    summary = run_experiment(ExperimentConfig.from_dict(cfg))
    json.dump(summary, sys.stdout, indent=2)
    print()
    return 0


def _cmd_replay(args) -> int:
    rng_stream = spawn_generators(args.seed, 5)
    corpus = ingest_replay_csv(args.corpus, bias_injection=args.bias_injection,
                               rng=rng_stream[0])
    env_like = type("CorpusShape", (), {"n_actions": corpus.n_actions,
                                        "context_dim": corpus.context_dim})()
    oracle = build_oracle(json.loads(args.oracle), env_like, rng_stream[1])
    if args.logged_fraction > 0:
        dataset, corpus = split_replay_corpus(corpus, args.logged_fraction,
                                              rng_stream[2])
        if args.evaluator:
            # Warm start: sweep actions, querying at logged contexts, until
            # the evaluator is exhausted (the batch-mode offline phase).
            ctxgen = empirical_context_pool(dataset, rng_stream[3])
            evaluator = build_evaluator(json.loads(args.evaluator), env_like,
                                        dataset, oracle, rng_stream[4])
            for a in range(corpus.n_actions):
                while True:
                    x = ctxgen()
                    y = evaluator.get_outcome(x, a)
                    if y is None:
                        break
                    oracle.update(x, a, y)
    events, consumed = run_replay(corpus, oracle, max_events=args.max_events or None)
    rewards = np.array([e[2] for e in events])
    summary = {
        "rows_consumed": consumed,
        "events_accepted": len(events),
        "acceptance_rate": len(events) / consumed if consumed else 0.0,
        "mean_reward": float(rewards.mean()) if len(rewards) else None,
        "cumulative_reward": float(rewards.sum()),
    }
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("event,reward,cumulative_reward\n")
            cum = 0.0
            for i, r in enumerate(rewards, start=1):
                cum += r
                fh.write(f"{i},{r!r},{cum!r}\n")
    json.dump(summary, sys.stdout, indent=2)
    print()
    return 0


def _cmd_gen_data(args) -> int:
    with open(args.env) as fh:
        env_spec = json.load(fh)
    env = build_environment(env_spec)
    rng = spawn_generators(args.seed, 1)[0]
    if args.format == "logged":
        dataset = env.gen_logged_data(args.n, rng)
        export_logged_csv(dataset, args.out)
    else:
        corpus = gen_replay_corpus(env, args.n, rng)
        export_replay_csv(corpus, args.out)
    print(f"wrote {args.n} rows to {args.out}")
    return 0


_BOUND_KINDS = {
    "ucb-em": lambda s: bound_ucb_em(s["T"], s["gaps"], s["optimal"],
                                     s["cell_probs"], s["cell_counts"]),
    "ucb-psm": lambda s: bound_ucb_psm(s["T"], s["gaps"], s["optimal"],
                                       s["stratum_probs"], s["stratum_counts"]),
    "ucb-ipsw": lambda s: bound_ucb_ipsw(s["T"], s["gaps"], s["optimal"], s["ess"]),
    "biased": lambda s: bound_biased(s["T"], s["gaps"], s["optimal"],
                                     s["emitted_counts"], s["biases"]).value,
    "linucb": lambda s: bound_linucb(s["T"], s["dim"], s["L"],
                                     s.get("mode", "problem-dependent"),
                                     delta_min=s.get("delta_min"),
                                     lambda_min=s.get("lambda_min", 0.0),
                                     n_offline=s.get("n_offline", 0),
                                     delta=s.get("delta", 0.05),
                                     x_min=s.get("x_min", 1.0)),
    "forest-constants": lambda s: forest_constants(s["alpha"], s["d"],
                                                   s["pi_prime"],
                                                   s.get("omega", 0.0)),
}


def _cmd_bounds(args) -> int:
    with open(args.inputs) as fh:
        spec = json.load(fh)
    items = spec if isinstance(spec, list) else [spec]
    out = []
    for item in items:
        kind = item.pop("kind")
        if kind not in _BOUND_KINDS:
            raise SystemExit(f"unknown bound kind {kind!r}; "
                             f"choose from {sorted(_BOUND_KINDS)}")
        out.append({"kind": kind, "value": _BOUND_KINDS[kind](item)})
    json.dump(out if isinstance(spec, list) else out[0], sys.stdout, indent=2)
    print()
    return 0


def _cmd_example1(args) -> int:
    rng = spawn_generators(args.seed, 1)[0]
    rows = []
    for strategy in STRATEGIES:
        episodes = args.episodes
        if strategy == "ucb-em" and args.ucb_episodes:
            episodes = args.ucb_episodes
        result = run_example1(strategy, rng, episodes=episodes, users=args.users,
                              ucb_beta=args.ucb_beta)
        rows.append({"strategy": result.strategy,
                     "episodes": result.episodes,
                     "expected_revenue": round(result.mean_revenue, 2),
                     "se": round(result.se_revenue, 3),
                     "expected_regret": round(900.0 - result.mean_revenue, 2)})
    json.dump({"optimal_revenue": 900.0, "strategies": rows}, sys.stdout, indent=2)
    print()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="logbandit",
                                     description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a simulation config")
    p.add_argument("config", help="path to a JSON experiment config")
    p.add_argument("--output-dir", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("replay", help="replay a logged corpus against an oracle")
    p.add_argument("corpus", help="replay CSV path")
    p.add_argument("--oracle", required=True, help='oracle spec JSON, e.g. {"kind":"ucb"}')
    p.add_argument("--evaluator", default=None, help="evaluator spec JSON for warm start")
    p.add_argument("--logged-fraction", type=float, default=0.0,
                   help="fraction of rows split off as logged data")
    p.add_argument("--bias-injection", action="store_true",
                   help="thin rows to inject selection bias before replaying")
    p.add_argument("--max-events", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="reward-curve CSV path")
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("gen-data", help="generate logged or replay CSV data")
    p.add_argument("env", help="path to an environment spec JSON")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("logged", "replay"), default="logged")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("bounds", help="evaluate closed-form regret bounds")
    p.add_argument("inputs", help="JSON file: one bound spec or a list of them")
    p.set_defaults(func=_cmd_bounds)

    p = sub.add_parser("example1", help="reproduce the ad-placement revenue table")
    p.add_argument("--episodes", type=int, default=100_000)
    p.add_argument("--ucb-episodes", type=int, default=0,
                   help="override episode count for the ucb-em strategy")
    p.add_argument("--users", type=int, default=10_000)
    p.add_argument("--ucb-beta", type=float, default=0.15)
    p.add_argument("--seed", type=int, default=20240501)
    p.set_defaults(func=_cmd_example1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
