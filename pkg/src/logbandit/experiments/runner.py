"""Experiment orchestration: configs, replications, and output files.

A config fully determines an experiment: environment, oracle, evaluator,
logged-data generation, horizon, replication count, and the root seed.
Replications are independent (own data, own components, own RNG streams
derived from the root seed) and can run in a process pool; results are
deterministic regardless of scheduling.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ..core import LoggedDataset
from ..environments import DiscreteContextEnv, SyntheticEnv, mask_columns
from ..evaluators import (ExactMatching, HistoricalAverage, IPSWeighting,
                          LinearRegressionEvaluator, MatchingOnForest,
                          NullEvaluator, PropensityScoreMatching, default_pivots,
                          stratify)
from ..forest import ForestParams, epsilon_schedule, train_forest
from ..framework import (RoundEntry, RunTrace, TrueContextSampler, VirtualPlay,
                         _virtual_cap, empirical_context_pool, run, run_batch)
from ..oracles import (ABTest, UCB, BlockOneHotFeatures, EpsilonForest, LinUCB,
                       ThompsonBernoulli, ThompsonGaussian)
from .bounds import bound_biased, bound_linucb, bound_ucb_em, bound_ucb_ipsw, bound_ucb_psm
from .metrics import aggregate, emitted_counts, evaluator_bias

__all__ = ["ExperimentConfig", "RepResult", "run_replication", "run_experiment",
           "build_environment", "linear_delta_min"]

MODES = ("interleaved", "batch", "only_online", "only_offline")


def _check_keys(spec: dict, allowed: set[str], where: str) -> None:
    unknown = set(spec) - allowed
    if unknown:
        raise ValueError(f"unknown keys {sorted(unknown)} in {where}; "
                         f"allowed: {sorted(allowed)}")


@dataclass
class ExperimentConfig:
    seed: int
    T: int
    replications: int
    environment: dict
    oracle: dict
    evaluator: dict = field(default_factory=lambda: {"kind": "null"})
    logged: dict = field(default_factory=lambda: {"n": 0})
    context_generator: str = "true"
    mode: str = "interleaved"
    contextual: bool = False
    workers: int = 1
    output_dir: Optional[str] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.context_generator not in ("true", "empirical"):
            raise ValueError("context_generator must be 'true' or 'empirical'")
        if self.replications < 1 or self.T < 1:
            raise ValueError("replications and T must be >= 1")

    @classmethod
    def from_dict(cls, cfg: dict) -> "ExperimentConfig":
        _check_keys(cfg, set(cls.__dataclass_fields__), "config")
        return cls(**cfg)

    def to_dict(self) -> dict:
        return asdict(self)


# -- component builders -------------------------------------------------------


def build_environment(spec: dict):
    kind = spec.get("kind")
    if kind == "synthetic":
        _check_keys(spec, {"kind", "n_actions", "context_dim", "reward_family",
                           "rho", "theta_seed", "noise_half_width",
                           "literal_inner_exp", "theta_scale", "bias"},
                    "environment")
        n_actions = spec.get("n_actions", 3)
        d = spec.get("context_dim")
        rng = np.random.default_rng(spec.get("theta_seed", 20240501))
        dd = d if d is not None else 2 * n_actions
        theta = rng.uniform(-1.0, 1.0, size=(n_actions, dd))
        theta *= spec.get("theta_scale", 1.0)
        bias = np.asarray(spec["bias"], dtype=np.float64) if "bias" in spec else None
        return SyntheticEnv(theta, bias=bias,
                            reward_family=spec.get("reward_family", "linear"),
                            rho=spec.get("rho", -1.0),
                            noise_half_width=spec.get("noise_half_width", 0.1),
                            literal_inner_exp=spec.get("literal_inner_exp", True))
    if kind == "discrete":
        _check_keys(spec, {"kind", "atoms", "probs", "means", "propensities"},
                    "environment")
        prop = spec.get("propensities")
        return DiscreteContextEnv(np.asarray(spec["atoms"], dtype=np.float64),
                                  spec["probs"],
                                  np.asarray(spec["means"], dtype=np.float64),
                                  None if prop is None else np.asarray(prop))
    raise ValueError(f"unknown environment kind {kind!r}")


def _epsilon_from_spec(spec: dict, env):
    kind = spec.get("kind", "power")
    if kind == "theorem":
        _check_keys(spec, {"kind", "alpha", "pi_prime"}, "oracle.epsilon")
        alpha = spec.get("alpha", 0.2)
        pi_prime = spec.get("pi_prime", 1.0)
        d = env.context_dim
        return lambda t: epsilon_schedule(t, alpha, d, pi_prime)
    if kind == "power":
        _check_keys(spec, {"kind", "coeff", "exponent"}, "oracle.epsilon")
        coeff = spec.get("coeff", 1.0)
        exponent = spec.get("exponent", 1.0 / 3.0)
        return lambda t: min(1.0, coeff * float(t) ** (-exponent))
    if kind == "constant":
        _check_keys(spec, {"kind", "value"}, "oracle.epsilon")
        value = float(spec["value"])
        return lambda t: value
    raise ValueError(f"unknown epsilon schedule kind {kind!r}")


def _forest_params(spec: dict, env) -> ForestParams:
    return ForestParams(
        n_actions=env.n_actions,
        n_trees=spec.get("n_trees", 100),
        alpha=spec.get("alpha", 0.2),
        min_action_count=spec.get("min_action_count", 5),
        subsample_exponent=spec.get("subsample_exponent"),
        honest=spec.get("honest", True),
        mtry=spec.get("mtry"),
        pi_prime=spec.get("pi_prime", 1.0),
        reward_range=tuple(env.reward_range),
    )


def build_oracle(spec: dict, env, rng: np.random.Generator,
                 retrain_seed: Optional[np.random.SeedSequence] = None):
    kind = spec.get("kind")
    K = env.n_actions
    if kind == "ab":
        _check_keys(spec, {"kind"}, "oracle")
        return ABTest(K, rng)
    if kind == "ucb":
        _check_keys(spec, {"kind", "beta"}, "oracle")
        return UCB(K, beta=spec.get("beta", 1.0))
    if kind == "ts_gauss":
        _check_keys(spec, {"kind", "beta"}, "oracle")
        return ThompsonGaussian(K, rng, beta=spec.get("beta", 1.0))
    if kind == "ts_bern":
        _check_keys(spec, {"kind"}, "oracle")
        return ThompsonBernoulli(K, rng)
    if kind == "linucb":
        _check_keys(spec, {"kind", "beta"}, "oracle")
        fmap = BlockOneHotFeatures(env.context_dim, K)
        return LinUCB(K, fmap, beta=spec.get("beta"))
    if kind == "forest":
        _check_keys(spec, {"kind", "epsilon", "retrain_every", "n_trees", "alpha",
                           "min_action_count", "subsample_exponent", "honest",
                           "mtry", "pi_prime"}, "oracle")
        eps = _epsilon_from_spec(spec.get("epsilon", {"kind": "power"}), env)
        return EpsilonForest(K, rng, eps, params=_forest_params(spec, env),
                             retrain_every=spec.get("retrain_every", 50),
                             retrain_seed=retrain_seed or np.random.SeedSequence(0))
    raise ValueError(f"unknown oracle kind {kind!r}")


def build_logged_data(logged_spec: dict, env, rng: np.random.Generator) -> Optional[LoggedDataset]:
    _check_keys(logged_spec, {"n", "means_override", "mask_columns"}, "logged")
    n = logged_spec.get("n", 0)
    if n == 0:
        return None
    gen_env = env
    if "means_override" in logged_spec:
        if not isinstance(env, DiscreteContextEnv):
            raise ValueError("means_override requires a discrete environment")
        gen_env = DiscreteContextEnv(env.atoms, env.probs,
                                     np.asarray(logged_spec["means_override"]),
                                     env.propensities)
    dataset = gen_env.gen_logged_data(n, rng)
    if "mask_columns" in logged_spec:
        dataset = mask_columns(dataset, logged_spec["mask_columns"])
    return dataset


def build_evaluator(spec: dict, env, dataset: Optional[LoggedDataset], oracle,
                    rng: np.random.Generator):
    kind = spec.get("kind", "null")
    if kind == "null" or dataset is None:
        _check_keys(spec, {"kind"}, "evaluator")
        return NullEvaluator()
    if kind == "em":
        _check_keys(spec, {"kind"}, "evaluator")
        return ExactMatching(dataset, rng)
    if kind == "psm":
        _check_keys(spec, {"kind", "propensity", "pivot_spacing"}, "evaluator")
        source = spec.get("propensity", "true")
        prop = getattr(env, "propensity", None) if source == "true" else None
        if source == "true" and prop is None:
            raise ValueError("environment exposes no true propensity model; "
                             'use "propensity": "frequency"')
        pivots = default_pivots(env.n_actions, spec.get("pivot_spacing", 0.1))
        return PropensityScoreMatching(dataset, rng, propensity=prop, pivots=pivots)
    if kind == "ipsw":
        _check_keys(spec, {"kind"}, "evaluator")
        return IPSWeighting(dataset)
    if kind == "lr":
        _check_keys(spec, {"kind"}, "evaluator")
        if not isinstance(oracle, LinUCB):
            raise ValueError("the ridge evaluator pairs with a linucb oracle")
        return LinearRegressionEvaluator(dataset, oracle.feature_map, oracle)
    if kind == "mof":
        _check_keys(spec, {"kind", "n_trees", "alpha", "min_action_count",
                           "subsample_exponent", "honest", "mtry", "pi_prime"},
                    "evaluator")
        X = np.array([rec.context for rec in dataset.records()])
        actions = np.array([rec.action for rec in dataset.records()])
        y = np.array([rec.outcome for rec in dataset.records()])
        ids = np.array([rec.id for rec in dataset.records()])
        forest = train_forest(X, actions, y, _forest_params(spec, env), rng,
                              record_ids=ids)
        return MatchingOnForest(forest, dataset, rng)
    if kind == "hist":
        _check_keys(spec, {"kind"}, "evaluator")
        return HistoricalAverage(dataset, rng)
    raise ValueError(f"unknown evaluator kind {kind!r}")


# -- per-replication execution ------------------------------------------------


@dataclass
class RepResult:
    rep: int
    final_regret: float
    regret_curve: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    virtual_per_round: np.ndarray
    instant_regret: np.ndarray
    n_virtual: int
    emitted: np.ndarray
    biases: np.ndarray
    bound: Optional[float]
    runtime_s: float


def linear_delta_min(env: SyntheticEnv) -> Optional[float]:
    """Uniform dominance gap of a linear-reward environment.

    Smallest over contexts of best-minus-second-best expected reward; defined
    (positive) only when a single action dominates the whole context cube.
    """
    if env.reward_family != "linear":
        return None
    best = int(np.argmax(env.bias))
    worst_gap = math.inf
    for a in range(env.n_actions):
        if a == best:
            continue
        gap = (env.bias[best] - env.bias[a]
               - np.abs(env.theta[best] - env.theta[a]).sum())
        worst_gap = min(worst_gap, gap)
    return worst_gap if worst_gap > 0 else None


def _gaps(env) -> tuple[np.ndarray, int]:
    means = np.array([env.marginal_mean(a) for a in range(env.n_actions)])
    optimal = int(np.argmax(means))
    return means[optimal] - means, optimal


def _psm_strata(env: DiscreteContextEnv, evaluator: PropensityScoreMatching,
                cell_counts: np.ndarray):
    """Group atoms by their propensity stratum; returns (probs, counts)."""
    strata: dict[tuple, int] = {}
    probs = []
    counts = []
    for c in range(env.n_atoms):
        key = evaluator.stratum(env.propensities[c][:env.n_actions - 1])
        if key not in strata:
            strata[key] = len(probs)
            probs.append(0.0)
            counts.append(np.zeros(env.n_actions))
        probs[strata[key]] += env.probs[c]
        counts[strata[key]] += cell_counts[c]
    return np.array(probs), np.vstack(counts)


def _compute_bound(config, env, evaluator, dataset_counts, trace, phi_dim, L,
                   lambda_min) -> Optional[float]:
    """Evaluate the theorem bound matching the configured evaluator, when its
    preconditions hold on this environment."""
    kind = config.evaluator.get("kind", "null")
    if tuple(env.reward_range) != (0.0, 1.0) and kind != "lr":
        return None
    try:
        gaps, optimal = _gaps(env)
        if kind == "em" and isinstance(env, DiscreteContextEnv):
            return bound_ucb_em(config.T, gaps, optimal, env.probs, dataset_counts)
        if kind == "psm" and isinstance(env, DiscreteContextEnv):
            probs, counts = _psm_strata(env, evaluator, dataset_counts)
            return bound_ucb_psm(config.T, gaps, optimal, probs, counts)
        if kind == "ipsw":
            if "means_override" in config.logged:
                biases = np.nan_to_num(evaluator_bias(trace, env), nan=0.0)
                emitted = emitted_counts(trace, env.n_actions)
                return bound_biased(config.T, gaps, optimal, emitted, biases).value
            return bound_ucb_ipsw(config.T, gaps, optimal, evaluator.initial_budgets)
        if kind == "lr":
            delta_min = linear_delta_min(env)
            if delta_min is None:
                return None
            return bound_linucb(config.T, phi_dim, L, "problem-dependent",
                                delta_min=delta_min, lambda_min=lambda_min)
    except ValueError:
        return None
    return None


def _only_offline_policy(config, env, evaluator, ctxgen, oracle):
    """Decide once from the evaluator alone; returns (policy, virtual_tuples)."""
    K = env.n_actions
    virtual = []
    if config.evaluator.get("kind") == "lr":
        theta = evaluator.theta_hat
        fmap = evaluator.feature_map

        def policy(x):
            scores = [float(fmap(x, a) @ theta) for a in range(K)]
            return int(np.argmax(scores))
        return policy, virtual
    if config.evaluator.get("kind") == "mof":
        forest = evaluator.forest

        def policy(x):
            return int(np.argmax(forest.predict_all(x)))
        return policy, virtual
    sums = np.zeros(K)
    counts = np.zeros(K)
    cap = _virtual_cap(evaluator, K, None)
    for a in range(K):
        while True:
            x = ctxgen()
            y = evaluator.get_outcome(x, a)
            if y is None:
                break
            sums[a] += y
            counts[a] += 1
            virtual.append((x, a, y))
            if counts[a] > cap:
                raise RuntimeError("runaway evaluator in offline-only sweep")
    means = np.where(counts > 0, sums / np.maximum(counts, 1), -np.inf)
    fixed = int(np.argmax(means)) if np.isfinite(means).any() else 0

    def policy(x):
        return fixed
    return policy, virtual


def run_replication(config: ExperimentConfig, rep: int) -> RepResult:
    """One independent replication; deterministic given (config.seed, rep)."""
    t_start = time.perf_counter()
    rep_seq = np.random.SeedSequence(config.seed, spawn_key=(rep,))
    (log_ss, oracle_ss, eval_ss, ctx_ss, env_ss, retrain_ss) = rep_seq.spawn(6)
    log_rng, oracle_rng, eval_rng, ctx_rng, env_rng = (
        np.random.Generator(np.random.PCG64(s))
        for s in (log_ss, oracle_ss, eval_ss, ctx_ss, env_ss))

    env = build_environment(config.environment)
    mode = config.mode
    dataset = None
    if mode != "only_online":
        dataset = build_logged_data(config.logged, env, log_rng)
    dataset_counts = (env.logged_cell_counts(dataset)
                      if isinstance(env, DiscreteContextEnv) and dataset is not None
                      else None)

    oracle = build_oracle(config.oracle, env, oracle_rng, retrain_seed=retrain_ss)
    ev_spec = config.evaluator if mode != "only_online" else {"kind": "null"}
    evaluator = build_evaluator(ev_spec, env, dataset, oracle, eval_rng)

    if config.context_generator == "empirical" and dataset is not None:
        ctxgen = empirical_context_pool(dataset, ctx_rng)
    elif config.context_generator == "empirical":
        raise ValueError("empirical context generator requires logged data")
    else:
        ctxgen = TrueContextSampler(env, ctx_rng)

    if mode == "only_offline":
        policy, virtual = _only_offline_policy(config, env, evaluator, ctxgen, oracle)
        trace = RunTrace(contextual=config.contextual)
        for (x, a, y) in virtual:
            trace.virtual.append(VirtualPlay(0, x, a, y, None))
        cum = 0.0
        for t in range(1, config.T + 1):
            x_t = env.sample_context(env_rng)
            a_t = policy(x_t)
            y_t = env.sample_reward(x_t, a_t, env_rng)
            if config.contextual:
                means = [env.conditional_mean(x_t, a) for a in range(env.n_actions)]
            else:
                means = [env.marginal_mean(a) for a in range(env.n_actions)]
            r_t = max(means) - means[a_t]
            cum += r_t
            trace.rounds.append(RoundEntry(t, x_t, a_t, y_t, 0, r_t, cum))
    elif mode == "batch":
        trace = run_batch(oracle, evaluator, ctxgen, env, config.T, env_rng,
                          contextual=config.contextual)
    else:
        trace = run(oracle, evaluator, ctxgen, env, config.T, env_rng,
                    contextual=config.contextual)

    phi_dim = getattr(getattr(oracle, "feature_map", None), "dim", 0)
    L = 0.0
    lam = 0.0
    if config.evaluator.get("kind") == "lr" and mode in ("interleaved", "batch"):
        fmap = oracle.feature_map
        norms = [float(np.dot(e.context, e.context)) for e in trace.rounds]
        L = math.sqrt((max(norms) if norms else 0.0) + 1.0)
        if trace.virtual:
            V_N = np.zeros((phi_dim, phi_dim))
            for v in trace.virtual:
                phi = fmap(v.context, v.action)
                V_N += np.outer(phi, phi)
            lam = float(np.linalg.eigvalsh(V_N)[0])

    bound = None
    if mode in ("interleaved", "batch") and getattr(env, "has_true_means", False):
        bound = _compute_bound(config, env, evaluator, dataset_counts, trace,
                               phi_dim, L, lam)

    biases = (evaluator_bias(trace, env)
              if getattr(env, "has_true_means", False)
              else np.full(env.n_actions, np.nan))
    return RepResult(
        rep=rep,
        final_regret=trace.final_regret(),
        regret_curve=trace.regret_curve(),
        actions=np.array([e.action for e in trace.rounds], dtype=np.int16),
        rewards=np.array([e.reward for e in trace.rounds]),
        virtual_per_round=np.array([e.virtual_plays for e in trace.rounds],
                                   dtype=np.int32),
        instant_regret=np.array([e.instant_regret for e in trace.rounds]),
        n_virtual=trace.n_virtual,
        emitted=emitted_counts(trace, env.n_actions),
        biases=biases,
        bound=bound,
        runtime_s=time.perf_counter() - t_start,
    )


def _worker(args) -> RepResult:
    cfg_dict, rep = args
    return run_replication(ExperimentConfig.from_dict(cfg_dict), rep)


def run_experiment(config: ExperimentConfig) -> dict:
    """Run all replications, write outputs, and return the summary dict.

    Outputs (when ``output_dir`` is set): ``traces.csv`` with one row per
    (replication, round), ``aggregate.csv`` with per-round mean and 20th/80th
    nearest-rank percentiles of cumulative regret, and ``summary.json``.
    """
    reps = list(range(config.replications))
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_worker, [(config.to_dict(), r) for r in reps],
                                    chunksize=max(1, len(reps) // (4 * config.workers))))
    else:
        results = [run_replication(config, r) for r in reps]
    results.sort(key=lambda r: r.rep)

    curves = [r.regret_curve for r in results]
    agg = aggregate(curves)
    finals = np.array([r.final_regret for r in results])
    bounds = [r.bound for r in results if r.bound is not None]
    biases = np.vstack([r.biases for r in results])
    valid = ~np.isnan(biases)
    mean_bias = np.where(valid.any(axis=0),
                         np.where(valid, biases, 0.0).sum(axis=0) / np.maximum(valid.sum(axis=0), 1),
                         np.nan)
    summary = {
        "config": config.to_dict(),
        "replications": len(results),
        "mean_final_regret": float(finals.mean()),
        "se_final_regret": float(finals.std(ddof=1) / math.sqrt(len(finals)))
        if len(finals) > 1 else None,
        "p20_final_regret": float(np.sort(finals)[max(0, math.ceil(0.2 * len(finals)) - 1)]),
        "p80_final_regret": float(np.sort(finals)[max(0, math.ceil(0.8 * len(finals)) - 1)]),
        "mean_virtual_plays": float(np.mean([r.n_virtual for r in results])),
        "mean_emitted_per_action": np.vstack([r.emitted for r in results]).mean(axis=0).tolist(),
        "mean_bias_per_action": [None if np.isnan(b) else float(b) for b in mean_bias],
        "mean_bound": float(np.mean(bounds)) if bounds else None,
    }

    if config.output_dir:
        os.makedirs(config.output_dir, exist_ok=True)
        _write_traces_csv(os.path.join(config.output_dir, "traces.csv"), results)
        _write_aggregate_csv(os.path.join(config.output_dir, "aggregate.csv"), agg)
        with open(os.path.join(config.output_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")
    return summary


def _write_traces_csv(path: str, results: list[RepResult]) -> None:
    with open(path, "w") as fh:
        fh.write("rep,t,action,reward,virtual_plays,instant_regret,cumulative_regret\n")
        for r in results:
            for t in range(len(r.regret_curve)):
                fh.write(f"{r.rep},{t + 1},{r.actions[t]},{float(r.rewards[t])!r},"
                         f"{r.virtual_per_round[t]},{float(r.instant_regret[t])!r},"
                         f"{float(r.regret_curve[t])!r}\n")


def _write_aggregate_csv(path: str, agg) -> None:
    with open(path, "w") as fh:
        fh.write("t,mean,p20,p80\n")
        for t in range(len(agg.mean)):
            fh.write(f"{t + 1},{float(agg.mean[t])!r},{float(agg.p20[t])!r},"
                     f"{float(agg.p80[t])!r}\n")
