"""Data-generating environments, CSV ingestion, and the replay protocol.

Environments expose a stateless distribution interface: ``sample_context``
and ``sample_reward`` take the caller's generator, and ground-truth
conditional/marginal means are available for regret accounting.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.stats import qmc

from .core import Context, DataError, LoggedDataset, LoggedRecord, as_context

__all__ = [
    "SyntheticEnv",
    "DiscreteContextEnv",
    "Example1Env",
    "ReplayCorpus",
    "ReplayCursor",
    "run_replay",
    "gen_replay_corpus",
    "split_replay_corpus",
    "export_logged_csv",
    "ingest_logged_csv",
    "export_replay_csv",
    "ingest_replay_csv",
    "mask_columns",
]

REWARD_FAMILIES = ("linear", "sigmoid", "binary", "indicator")


class SyntheticEnv:
    """Uniform contexts on [-1,1]^d with configurable reward families.

    Rewards: linear x.theta_a + b_a (plus mean-zero uniform noise), sigmoid
    1/(1+exp(-x.theta_a + b_a)), binary Bernoulli with the sigmoid mean, or
    indicator mean(1{x_j >= theta_aj}) + 0.5*1{a=1}. Logging propensities are
    a softmax over s_a = exp(rho * x.theta_a * (E[y|a] - E[y|(a+1) mod K]));
    ``literal_inner_exp=False`` drops the inner exponential for sensitivity
    checks.
    """

    def __init__(self, theta: np.ndarray, bias: np.ndarray | None = None,
                 reward_family: str = "linear", rho: float = -1.0,
                 noise_half_width: float = 0.1, literal_inner_exp: bool = True):
        self.theta = np.asarray(theta, dtype=np.float64)
        if self.theta.ndim != 2:
            raise ValueError("theta must be (n_actions, d)")
        self.n_actions, self.context_dim = self.theta.shape
        if bias is None:
            bias = 0.5 * np.arange(self.n_actions)
        self.bias = np.asarray(bias, dtype=np.float64)
        if reward_family not in REWARD_FAMILIES:
            raise ValueError(f"unknown reward family {reward_family!r}")
        self.reward_family = reward_family
        self.rho = float(rho)
        self.noise_half_width = float(noise_half_width)
        self.literal_inner_exp = bool(literal_inner_exp)
        self.has_true_means = True
        self._marginals: dict[int, float] = {}
        self.marginal_se: dict[int, float] = {}

    @classmethod
    def default(cls, n_actions: int = 3, context_dim: int | None = None,
                theta_seed: int = 20240501, **kwargs) -> "SyntheticEnv":
        """Defaults: K=3, d=2K, theta coordinates uniform on [-1,1]."""
        d = context_dim if context_dim is not None else 2 * n_actions
        rng = np.random.default_rng(theta_seed)
        theta = rng.uniform(-1.0, 1.0, size=(n_actions, d))
        return cls(theta, **kwargs)

    # -- reward model -------------------------------------------------------

    def conditional_mean(self, context: Context, action: int) -> float:
        a = int(action)
        z = float(context @ self.theta[a])
        if self.reward_family == "linear":
            return z + self.bias[a]
        if self.reward_family in ("sigmoid", "binary"):
            return 1.0 / (1.0 + math.exp(-z + self.bias[a]))
        frac = float(np.mean(context >= self.theta[a]))
        return frac + (0.5 if a == 1 else 0.0)

    def sample_context(self, rng: np.random.Generator) -> Context:
        return rng.uniform(-1.0, 1.0, size=self.context_dim)

    def sample_reward(self, context: Context, action: int, rng: np.random.Generator) -> float:
        mean = self.conditional_mean(context, action)
        if self.reward_family == "linear":
            if self.noise_half_width > 0.0:
                return mean + rng.uniform(-self.noise_half_width, self.noise_half_width)
            return mean
        if self.reward_family == "binary":
            return 1.0 if rng.random() < mean else 0.0
        return mean

    @property
    def reward_range(self) -> tuple[float, float]:
        if self.reward_family in ("sigmoid", "binary"):
            return (0.0, 1.0)
        if self.reward_family == "indicator":
            return (0.0, 1.5)
        span = np.abs(self.theta).sum(axis=1)
        lo = float((self.bias - span).min() - self.noise_half_width)
        hi = float((self.bias + span).max() + self.noise_half_width)
        return (lo, hi)

    def marginal_mean(self, action: int) -> float:
        """E[y|a] over the uniform context cube.

        Analytic for the linear and indicator families; quasi-Monte-Carlo
        (2^13 scrambled Sobol points, standard error recorded in
        ``marginal_se``) for sigmoid and binary.
        """
        a = int(action)
        if a in self._marginals:
            return self._marginals[a]
        if self.reward_family == "linear":
            value = float(self.bias[a])
        elif self.reward_family == "indicator":
            value = float(np.mean((1.0 - self.theta[a]) / 2.0)) + (0.5 if a == 1 else 0.0)
        else:
            value, se = self.sigmoid_marginal_qmc(a)
            self.marginal_se[a] = se
        self._marginals[a] = value
        return value

    def sigmoid_marginal_qmc(self, action: int, seed: int = 777,
                             log2_samples: int = 13) -> tuple[float, float]:
        """Scrambled-Sobol estimate of the sigmoid-family E[y|a] and its
        block-wise standard error."""
        a = int(action)
        sampler = qmc.Sobol(d=self.context_dim, scramble=True, seed=seed)
        u = sampler.random_base2(log2_samples)
        X = 2.0 * u - 1.0
        z = X @ self.theta[a]
        vals = 1.0 / (1.0 + np.exp(-z + self.bias[a]))
        blocks = vals.reshape(8, -1).mean(axis=1)
        return float(vals.mean()), float(blocks.std(ddof=1) / math.sqrt(len(blocks)))

    # -- logging model ------------------------------------------------------

    def propensity(self, context: Context) -> np.ndarray:
        """Softmax logging distribution over actions at one context."""
        K = self.n_actions
        deltas = np.array([self.marginal_mean(a) - self.marginal_mean((a + 1) % K)
                           for a in range(K)])
        z = self.rho * (self.theta @ np.asarray(context)) * deltas
        s = np.exp(np.clip(z, -700.0, 700.0)) if self.literal_inner_exp else z
        s = s - s.max()  # overflow-safe softmax, exact up to the shared shift
        e = np.exp(s)
        return e / e.sum()

    def gen_logged_data(self, n: int, rng: np.random.Generator) -> LoggedDataset:
        """n records: context, softmax-logged action, sampled outcome, and the
        full propensity bookkeeping."""
        records = []
        for i in range(n):
            x = self.sample_context(rng)
            p = self.propensity(x)
            a = int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))
            a = min(a, self.n_actions - 1)
            y = self.sample_reward(x, a, rng)
            records.append(LoggedRecord(i, a, x, y, propensity_chosen=float(p[a]),
                                        propensity_vector=p[:-1].copy()))
        return LoggedDataset(records, self.n_actions, self.context_dim,
                             reward_range=self.reward_range)


class DiscreteContextEnv:
    """Finitely many context atoms with per-(atom, action) Bernoulli rewards.

    The structure matched by the exact-matching analysis: C categories with
    known probabilities and known conditional means, so both regret and the
    bound calculators have exact ground truth.
    """

    def __init__(self, atoms: np.ndarray, probs: Sequence[float], means: np.ndarray,
                 propensities: np.ndarray | None = None):
        self.atoms = np.asarray(atoms, dtype=np.float64)
        if self.atoms.ndim != 2:
            raise ValueError("atoms must be (C, d)")
        self.probs = np.asarray(probs, dtype=np.float64)
        if abs(self.probs.sum() - 1.0) > 1e-9 or np.any(self.probs < 0):
            raise ValueError("atom probabilities must form a distribution")
        self.means = np.asarray(means, dtype=np.float64)
        if np.any(self.means < 0.0) or np.any(self.means > 1.0):
            raise ValueError("Bernoulli means must lie in [0,1]")
        self.n_atoms, self.context_dim = self.atoms.shape
        self.n_actions = self.means.shape[1]
        if propensities is None:
            propensities = np.full((self.n_atoms, self.n_actions), 1.0 / self.n_actions)
        self.propensities = np.asarray(propensities, dtype=np.float64)
        if np.any(np.abs(self.propensities.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("each atom's propensities must sum to 1")
        self.has_true_means = True
        self.reward_range = (0.0, 1.0)
        self._keys = {self.atoms[c].tobytes(): c for c in range(self.n_atoms)}

    def atom_index(self, context: Context) -> int:
        key = np.ascontiguousarray(context, dtype=np.float64).tobytes()
        if key not in self._keys:
            raise DataError("context is not one of the declared atoms")
        return self._keys[key]

    def sample_context(self, rng: np.random.Generator) -> Context:
        c = int(np.searchsorted(np.cumsum(self.probs), rng.random(), side="right"))
        return self.atoms[min(c, self.n_atoms - 1)].copy()

    def conditional_mean(self, context: Context, action: int) -> float:
        return float(self.means[self.atom_index(context), int(action)])

    def marginal_mean(self, action: int) -> float:
        return float(self.probs @ self.means[:, int(action)])

    def propensity(self, context: Context) -> np.ndarray:
        return self.propensities[self.atom_index(context)].copy()

    def sample_reward(self, context: Context, action: int, rng: np.random.Generator) -> float:
        return 1.0 if rng.random() < self.conditional_mean(context, action) else 0.0

    def gen_logged_data(self, n: int, rng: np.random.Generator) -> LoggedDataset:
        records = []
        for i in range(n):
            x = self.sample_context(rng)
            p = self.propensity(x)
            a = int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))
            a = min(a, self.n_actions - 1)
            y = self.sample_reward(x, a, rng)
            records.append(LoggedRecord(i, a, x, y, propensity_chosen=float(p[a]),
                                        propensity_vector=p[:-1].copy()))
        return LoggedDataset(records, self.n_actions, self.context_dim)

    def logged_cell_counts(self, dataset: LoggedDataset) -> np.ndarray:
        """N(atom, action) occupancy of a logged dataset."""
        counts = np.zeros((self.n_atoms, self.n_actions), dtype=np.int64)
        for rec in dataset.records():
            counts[self.atom_index(rec.context), rec.action] += 1
        return counts


class Example1Env:
    """Two user types, two ad placements, and the canonical 400-row log.

    True click rates (action x type) and the logged design are fixed:
    action 0 ("below video") is inferior for both types, action 1 ("below
    image") optimal. Types are equiprobable; each click is worth $1.
    """

    RATES = np.array([[0.11, 0.01], [0.14, 0.04]])
    DESIGN = np.array([[150, 50], [50, 150]], dtype=np.int64)
    # Realized click rates of the canonical log (used for the worked example).
    LOGGED_RATES = np.array([[0.10, 0.02], [0.12, 0.04]])

    def __init__(self):
        self.n_actions = 2
        self.context_dim = 1
        self.atoms = np.array([[1.0], [0.0]])  # type 0 = likes videos
        self.has_true_means = True
        self.reward_range = (0.0, 1.0)

    def pooled_rate(self, action: int) -> float:
        return float(self.RATES[action].mean())

    def conditional_mean(self, context: Context, action: int) -> float:
        u_type = 0 if context[0] == 1.0 else 1
        return float(self.RATES[int(action), u_type])

    def marginal_mean(self, action: int) -> float:
        return self.pooled_rate(action)

    def sample_context(self, rng: np.random.Generator) -> Context:
        return self.atoms[1 if rng.random() < 0.5 else 0].copy()

    def sample_reward(self, context: Context, action: int, rng: np.random.Generator) -> float:
        return 1.0 if rng.random() < self.conditional_mean(context, action) else 0.0

    def sample_log_clicks(self, rng: np.random.Generator, n_episodes: int = 1) -> np.ndarray:
        """Binomial click counts per cell (a0t0, a0t1, a1t0, a1t1)."""
        design = self.DESIGN.reshape(-1)
        rates = self.RATES.reshape(-1)
        return rng.binomial(design, rates, size=(n_episodes, 4)).astype(np.int64)

    def expected_log_clicks(self) -> np.ndarray:
        """The canonical realized log: clicks implied by the logged rates."""
        return np.rint(self.LOGGED_RATES.reshape(-1) * self.DESIGN.reshape(-1)).astype(np.int64)

    def make_logged_dataset(self, clicks: np.ndarray) -> LoggedDataset:
        """Materialize one log realization as 400 records."""
        clicks = np.asarray(clicks, dtype=np.int64).reshape(2, 2)
        records = []
        rid = 0
        for a in range(2):
            for t in range(2):
                n_cell = int(self.DESIGN[a, t])
                ones = int(clicks[a, t])
                for j in range(n_cell):
                    records.append(LoggedRecord(rid, a, self.atoms[t].copy(),
                                                1.0 if j < ones else 0.0))
                    rid += 1
        return LoggedDataset(records, 2, 1)


@dataclass(frozen=True)
class ReplayRow:
    candidates: tuple[int, ...]
    chosen: int
    reward: float
    context: Context

    def __post_init__(self):
        if self.chosen not in self.candidates:
            raise DataError(f"chosen action {self.chosen} not in candidate set")
        if self.reward not in (0.0, 1.0):
            raise DataError("replay rewards must be binary")


class ReplayCorpus:
    """Sequential logged events with per-row candidate sets.

    The logging policy is assumed uniform over each row's candidates, which
    is what makes rejection-sampling replay unbiased.
    """

    def __init__(self, rows: Sequence[ReplayRow], n_actions: int, context_dim: int):
        self.rows = list(rows)
        self.n_actions = int(n_actions)
        self.context_dim = int(context_dim)

    def __len__(self) -> int:
        return len(self.rows)


class ReplayCursor:
    """Single pass over a corpus applying the rejection-sampling protocol."""

    def __init__(self, corpus: ReplayCorpus):
        self.corpus = corpus
        self.position = 0

    @property
    def exhausted(self) -> bool:
        return self.position >= len(self.corpus.rows)

    def step(self, oracle) -> Optional[tuple[Context, int, float]]:
        """Advance one row. Returns the accepted (context, action, reward)
        when the oracle's restricted choice matches the logged action, else
        None (row skipped, no oracle update happens). Raises StopIteration on
        an exhausted corpus."""
        if self.exhausted:
            raise StopIteration("replay corpus exhausted")
        row = self.corpus.rows[self.position]
        self.position += 1
        choice = oracle.play(row.context, candidates=row.candidates)
        if choice == row.chosen:
            return (row.context, choice, row.reward)
        return None


def run_replay(corpus: ReplayCorpus, oracle, max_events: Optional[int] = None):
    """Replay a corpus against an oracle; returns (events, rows_consumed).

    Accepted events update the oracle; skipped rows leave it untouched.
    """
    cursor = ReplayCursor(corpus)
    events = []
    while not cursor.exhausted:
        result = cursor.step(oracle)
        if result is not None:
            context, action, reward = result
            oracle.update(context, action, reward)
            events.append(result)
            if max_events is not None and len(events) >= max_events:
                break
    return events, cursor.position


def gen_replay_corpus(env, n_rows: int, rng: np.random.Generator,
                      candidates: Sequence[int] | None = None) -> ReplayCorpus:
    """Uniform-logging corpus drawn from an environment with binary rewards."""
    cands = tuple(range(env.n_actions)) if candidates is None else tuple(candidates)
    rows = []
    for _ in range(n_rows):
        x = env.sample_context(rng)
        chosen = cands[int(rng.random() * len(cands))]
        y = env.sample_reward(x, chosen, rng)
        rows.append(ReplayRow(cands, chosen, float(y), x))
    return ReplayCorpus(rows, env.n_actions, env.context_dim)


def split_replay_corpus(corpus: ReplayCorpus, logged_fraction: float,
                        rng: np.random.Generator) -> tuple[LoggedDataset, ReplayCorpus]:
    """Shuffle once, take a prefix as a uniform-propensity logged dataset.

    The remainder stays a replay corpus for the online phase.
    """
    order = rng.permutation(len(corpus.rows))
    n_logged = int(logged_fraction * len(corpus.rows))
    records = []
    for rid, idx in enumerate(order[:n_logged]):
        row = corpus.rows[idx]
        p = 1.0 / len(row.candidates)
        vec = np.full(corpus.n_actions - 1, p)
        records.append(LoggedRecord(rid, row.chosen, row.context, row.reward,
                                    propensity_chosen=p, propensity_vector=vec))
    dataset = LoggedDataset(records, corpus.n_actions, corpus.context_dim)
    rest = ReplayCorpus([corpus.rows[i] for i in order[n_logged:]],
                        corpus.n_actions, corpus.context_dim)
    return dataset, rest


# -- CSV formats ------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def export_logged_csv(dataset: LoggedDataset, path) -> None:
    """Write `action,reward,p_chosen,p_0..p_{K-2},x_0..x_{d-1}` rows.

    Floats are written with repr so a round trip is bit-exact.
    """
    K, d = dataset.n_actions, dataset.context_dim
    header = (["action", "reward", "p_chosen"]
              + [f"p_{i}" for i in range(K - 1)]
              + [f"x_{i}" for i in range(d)])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for rec in dataset.records():
            row = [str(rec.action), _fmt(rec.outcome)]
            row.append(_fmt(rec.propensity_chosen) if rec.propensity_chosen is not None else "")
            if rec.propensity_vector is not None:
                row.extend(_fmt(v) for v in rec.propensity_vector)
            else:
                row.extend("" for _ in range(K - 1))
            row.extend(_fmt(v) for v in rec.context)
            writer.writerow(row)


def ingest_logged_csv(path, n_actions: Optional[int] = None,
                      reward_range: tuple[float, float] = (0.0, 1.0),
                      mask: Sequence[str] | None = None) -> LoggedDataset:
    """Parse a logged-data CSV; malformed rows are reported with line numbers.

    ``mask`` names context columns (e.g. ``["x_2"]``) to drop before storage,
    which is how unobserved confounders are simulated on ingested data.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        try:
            p_cols = [i for i, h in enumerate(header) if h.startswith("p_") and h != "p_chosen"]
            x_cols = [i for i, h in enumerate(header) if h.startswith("x_")]
            a_col = header.index("action")
            y_col = header.index("reward")
            pc_col = header.index("p_chosen")
        except ValueError as exc:
            raise DataError(f"{path}: malformed header: {exc}") from exc
        if mask:
            drop = set(mask)
            unknown = drop - {header[i] for i in x_cols}
            if unknown:
                raise DataError(f"{path}: mask names unknown columns {sorted(unknown)}")
            x_cols = [i for i in x_cols if header[i] not in drop]
        K = n_actions if n_actions is not None else (len(p_cols) + 1 if p_cols else None)
        records = []
        max_action = -1
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}:{line_no}: expected {len(header)} fields, "
                                f"got {len(row)}")
            try:
                action = int(row[a_col])
                reward = float(row[y_col])
                p_chosen = float(row[pc_col]) if row[pc_col] else None
                if p_cols and all(row[i] for i in p_cols):
                    vec = np.array([float(row[i]) for i in p_cols])
                else:
                    vec = None
                context = as_context([float(row[i]) for i in x_cols])
            except (ValueError, DataError) as exc:
                raise DataError(f"{path}:{line_no}: {exc}") from exc
            if not reward_range[0] <= reward <= reward_range[1]:
                raise DataError(f"{path}:{line_no}: reward {reward} outside declared "
                                f"range {reward_range}")
            max_action = max(max_action, action)
            records.append((line_no, action, reward, p_chosen, vec, context))
    if K is None:
        K = max_action + 1
    out = []
    for rid, (line_no, action, reward, p_chosen, vec, context) in enumerate(records):
        if action >= K:
            raise DataError(f"{path}:{line_no}: action {action} outside [0,{K})")
        if vec is not None and len(vec) != K - 1:
            raise DataError(f"{path}:{line_no}: propensity vector length {len(vec)} "
                            f"!= K-1 = {K - 1}")
        out.append(LoggedRecord(rid, action, context, reward,
                                propensity_chosen=p_chosen, propensity_vector=vec))
    if not out:
        raise DataError(f"{path}: no data rows")
    d = len(out[0].context)
    return LoggedDataset(out, K, d, reward_range=reward_range)


def export_replay_csv(corpus: ReplayCorpus, path) -> None:
    """Write `candidates,chosen,reward,x_0..x_{d-1}` rows ('|' separators)."""
    header = ["candidates", "chosen", "reward"] + [f"x_{i}" for i in range(corpus.context_dim)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in corpus.rows:
            writer.writerow(["|".join(str(c) for c in row.candidates), str(row.chosen),
                             _fmt(row.reward)] + [_fmt(v) for v in row.context])


def ingest_replay_csv(path, bias_injection: bool = False,
                      rng: np.random.Generator | None = None,
                      delete_prob: float = 0.9, top_k: int = 3,
                      mask: Sequence[str] | None = None) -> ReplayCorpus:
    """Parse a replay CSV, optionally thinning rows to inject selection bias.

    With ``bias_injection`` a row is deleted with probability ``delete_prob``
    when its chosen arm's corpus-wide mean reward ranks in the top ``top_k``
    and the reward is 1, or when it ranks outside the top ``top_k`` and the
    reward is 0.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        if header[:3] != ["candidates", "chosen", "reward"]:
            raise DataError(f"{path}: malformed header {header[:3]}")
        x_cols = [i for i, h in enumerate(header) if h.startswith("x_")]
        if mask:
            drop = set(mask)
            unknown = drop - {header[i] for i in x_cols}
            if unknown:
                raise DataError(f"{path}: mask names unknown columns {sorted(unknown)}")
            x_cols = [i for i in x_cols if header[i] not in drop]
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}:{line_no}: expected {len(header)} fields, "
                                f"got {len(row)}")
            try:
                cands = tuple(int(c) for c in row[0].split("|"))
                chosen = int(row[1])
                reward = float(row[2])
                context = as_context([float(row[i]) for i in x_cols])
                rows.append(ReplayRow(cands, chosen, reward, context))
            except (ValueError, DataError) as exc:
                raise DataError(f"{path}:{line_no}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: no data rows")
    n_actions = max(max(r.candidates) for r in rows) + 1
    if bias_injection:
        if rng is None:
            raise ValueError("bias_injection requires an rng")
        rows = _inject_selection_bias(rows, n_actions, rng, delete_prob, top_k)
    return ReplayCorpus(rows, n_actions, len(rows[0].context))


def _inject_selection_bias(rows, n_actions, rng, delete_prob, top_k):
    sums = np.zeros(n_actions)
    counts = np.zeros(n_actions)
    for row in rows:
        sums[row.chosen] += row.reward
        counts[row.chosen] += 1
    means = np.divide(sums, counts, out=np.full(n_actions, -np.inf), where=counts > 0)
    top = set(np.argsort(-means, kind="stable")[:top_k].tolist())
    kept = []
    for row in rows:
        hit = (row.chosen in top and row.reward == 1.0) or \
              (row.chosen not in top and row.reward == 0.0)
        if hit and rng.random() < delete_prob:
            continue
        kept.append(row)
    return kept


def mask_columns(dataset: LoggedDataset, columns: Sequence[int]) -> LoggedDataset:
    """New dataset with the given context coordinates removed.

    Simulates unobserved confounders on already-generated data. Propensity
    fields are kept verbatim: they describe the original logging process.
    """
    keep = [i for i in range(dataset.context_dim) if i not in set(columns)]
    if not keep:
        raise ValueError("cannot mask every context column")
    records = [LoggedRecord(rec.id, rec.action, rec.context[keep], rec.outcome,
                            propensity_chosen=rec.propensity_chosen,
                            propensity_vector=rec.propensity_vector)
               for rec in dataset.records()]
    return LoggedDataset(records, dataset.n_actions, len(keep),
                         reward_range=dataset.reward_range)
