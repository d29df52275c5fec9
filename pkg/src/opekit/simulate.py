"""Synthetic contextual-bandit worlds with a known ground-truth oracle.

An environment fixes a context distribution (discrete categories encoded
as one-hot features, or diagonal-Gaussian vectors), a true mean-reward
function (a table for discrete contexts, a logistic-of-linear map for
Gaussian ones), and a reward noise family. Knowing the truth gives an
on-policy value oracle to benchmark estimators against.

All randomness flows from explicit seeds; identical inputs reproduce
byte-identical logs.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .core import PolicySpec, RecordBatch, action_probabilities, greedy_actions, KIND_EPSILON_GREEDY
from .errors import InputError, UnsupportedModeError
from .reward_model import KIND_TABULAR_MEAN, RewardModel, feature_buckets

NOISE_BERNOULLI = "bernoulli"
NOISE_GAUSSIAN = "gaussian"

VALUE_EXACT = "exact"
VALUE_MONTE_CARLO = "monte-carlo"

# spawn-key domains for deriving independent generators from one seed
_DOMAIN_LOG = 0
_DOMAIN_ON_POLICY = 1
_DOMAIN_ORACLE = 2


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    out = np.array(values, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def split_seed(seed: int, *key: int) -> np.random.SeedSequence:
    """Child seed for an independent generator, derived by explicit splitting."""
    return np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))


@dataclass(frozen=True, eq=False)
class DiscreteContexts:
    """Categorical contexts presented as one-hot feature vectors."""

    probabilities: np.ndarray

    def __post_init__(self):
        p = _frozen_array(np.atleast_1d(self.probabilities))
        if p.ndim != 1 or len(p) < 1:
            raise InputError("context probabilities must be a non-empty vector")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise InputError("context probabilities must be non-negative and sum to 1")
        object.__setattr__(self, "probabilities", p)

    @property
    def count(self) -> int:
        return len(self.probabilities)

    @property
    def feature_dim(self) -> int:
        return self.count


@dataclass(frozen=True, eq=False)
class GaussianContexts:
    """Independent Gaussian features with per-dimension mean and scale."""

    dim: int
    mean: np.ndarray | None = None
    scale: np.ndarray | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise InputError("context dimension must be positive")
        mean = np.zeros(self.dim) if self.mean is None else np.asarray(self.mean, dtype=np.float64)
        scale = np.ones(self.dim) if self.scale is None else np.asarray(self.scale, dtype=np.float64)
        if mean.shape != (self.dim,) or scale.shape != (self.dim,):
            raise InputError("mean and scale must match the context dimension")
        if np.any(scale < 0):
            raise InputError("scales must be non-negative")
        object.__setattr__(self, "mean", _frozen_array(mean))
        object.__setattr__(self, "scale", _frozen_array(scale))

    @property
    def feature_dim(self) -> int:
        return self.dim


@dataclass(frozen=True, eq=False)
class TabularMeanReward:
    """True mean reward per (context, action) cell."""

    table: np.ndarray  # (C, K)

    def __post_init__(self):
        t = _frozen_array(np.atleast_2d(self.table))
        object.__setattr__(self, "table", t)

    def means(self, features: np.ndarray, actions: np.ndarray) -> np.ndarray:
        idx = np.argmax(features, axis=1)
        return self.table[idx, actions]

    def means_all(self, features: np.ndarray) -> np.ndarray:
        return self.table[np.argmax(features, axis=1)]


@dataclass(frozen=True, eq=False)
class LogisticMeanReward:
    """Mean reward sigmoid(weights[a] . x + bias[a]); always in (0, 1)."""

    weights: np.ndarray  # (K, d)
    bias: np.ndarray | None = None

    def __post_init__(self):
        w = _frozen_array(np.atleast_2d(self.weights))
        b = np.zeros(w.shape[0]) if self.bias is None else np.asarray(self.bias, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", _frozen_array(b))

    def _scores(self, features: np.ndarray) -> np.ndarray:
        return features @ self.weights.T + self.bias

    def means_all(self, features: np.ndarray) -> np.ndarray:
        s = self._scores(features)
        out = np.empty_like(s)
        np.exp(-np.abs(s), out=out)
        return np.where(s >= 0, 1.0 / (1.0 + out), out / (1.0 + out))

    def means(self, features: np.ndarray, actions: np.ndarray) -> np.ndarray:
        return self.means_all(features)[np.arange(len(actions)), actions]


@dataclass(frozen=True, eq=False)
class BanditEnvironment:
    """Synthetic world: context law, true mean rewards, reward noise, seed."""

    action_count: int
    contexts: DiscreteContexts | GaussianContexts
    mean_reward: TabularMeanReward | LogisticMeanReward
    reward_noise: str = NOISE_BERNOULLI
    noise_sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.action_count < 1:
            raise InputError("action_count must be positive")
        if self.reward_noise not in (NOISE_BERNOULLI, NOISE_GAUSSIAN):
            raise InputError(f"unknown reward noise {self.reward_noise!r}")
        if isinstance(self.contexts, DiscreteContexts):
            if not isinstance(self.mean_reward, TabularMeanReward):
                raise InputError("discrete contexts require a tabular mean-reward function")
            if self.mean_reward.table.shape != (self.contexts.count, self.action_count):
                raise InputError("mean-reward table shape must be (contexts, actions)")
        else:
            if not isinstance(self.mean_reward, LogisticMeanReward):
                raise InputError("gaussian contexts require a logistic mean-reward function")
            if self.mean_reward.weights.shape != (self.action_count, self.contexts.dim):
                raise InputError("mean-reward weights shape must be (actions, context dim)")
        if self.reward_noise == NOISE_BERNOULLI and isinstance(self.mean_reward, TabularMeanReward):
            t = self.mean_reward.table
            if np.any(t < 0) or np.any(t > 1):
                raise InputError("Bernoulli mean rewards must lie in [0, 1]")
        if self.reward_noise == NOISE_GAUSSIAN and self.noise_sigma < 0:
            raise InputError("noise_sigma must be non-negative")

    @property
    def feature_dim(self) -> int:
        return self.contexts.feature_dim

    def to_dict(self) -> dict:
        doc = {"action_count": self.action_count, "reward_noise": self.reward_noise, "seed": self.seed}
        if self.reward_noise == NOISE_GAUSSIAN:
            doc["noise_sigma"] = self.noise_sigma
        if isinstance(self.contexts, DiscreteContexts):
            doc["contexts"] = {"kind": "discrete", "probabilities": self.contexts.probabilities.tolist()}
            doc["mean_reward"] = {"kind": "tabular", "table": self.mean_reward.table.tolist()}
        else:
            doc["contexts"] = {
                "kind": "gaussian",
                "dim": self.contexts.dim,
                "mean": self.contexts.mean.tolist(),
                "scale": self.contexts.scale.tolist(),
            }
            doc["mean_reward"] = {
                "kind": "logistic",
                "weights": self.mean_reward.weights.tolist(),
                "bias": self.mean_reward.bias.tolist(),
            }
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "BanditEnvironment":
        ctx = doc["contexts"]
        if ctx["kind"] == "discrete":
            contexts = DiscreteContexts(probabilities=np.array(ctx["probabilities"]))
            reward = TabularMeanReward(table=np.array(doc["mean_reward"]["table"]))
        elif ctx["kind"] == "gaussian":
            contexts = GaussianContexts(
                dim=ctx["dim"],
                mean=np.array(ctx["mean"]) if "mean" in ctx else None,
                scale=np.array(ctx["scale"]) if "scale" in ctx else None,
            )
            mr = doc["mean_reward"]
            reward = LogisticMeanReward(
                weights=np.array(mr["weights"]),
                bias=np.array(mr["bias"]) if "bias" in mr else None,
            )
        else:
            raise InputError(f"unknown context kind {ctx['kind']!r}")
        return cls(
            action_count=doc["action_count"],
            contexts=contexts,
            mean_reward=reward,
            reward_noise=doc.get("reward_noise", NOISE_BERNOULLI),
            noise_sigma=doc.get("noise_sigma", 0.1),
            seed=doc.get("seed", 0),
        )

    def __eq__(self, other):
        if not isinstance(other, BanditEnvironment):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def _sample_features(env: BanditEnvironment, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """(features, context_ids); the id of a Gaussian draw is its row number."""
    if isinstance(env.contexts, DiscreteContexts):
        idx = rng.choice(env.contexts.count, size=n, p=env.contexts.probabilities)
        return np.eye(env.contexts.count)[idx], idx.astype(np.int64)
    X = env.contexts.mean + rng.standard_normal((n, env.contexts.dim)) * env.contexts.scale
    return X, np.arange(n, dtype=np.int64)


def _sample_actions(
    policy: PolicySpec, features: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(actions, propensities, explored) under the logging policy.

    Epsilon-greedy uses its mechanism directly (coin, then uniform draw) so
    the explored flag is real; other kinds sample by inverse CDF and leave
    the flag unset (-1).
    """
    n = len(features)
    probs = action_probabilities(policy, features)
    if policy.kind == KIND_EPSILON_GREEDY:
        greedy = greedy_actions(policy, features)
        explore = rng.random(n) < policy.epsilon
        uniform = rng.integers(0, policy.action_count, size=n)
        actions = np.where(explore, uniform, greedy)
        explored = explore.astype(np.int8)
    else:
        u = rng.random((n, 1))
        actions = np.minimum((np.cumsum(probs, axis=1) < u).sum(axis=1), policy.action_count - 1)
        explored = np.full(n, -1, dtype=np.int8)
    return actions.astype(np.int64), probs[np.arange(n), actions], explored


def _sample_rewards(
    env: BanditEnvironment, features: np.ndarray, actions: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    means = env.mean_reward.means(features, actions)
    if env.reward_noise == NOISE_BERNOULLI:
        return (rng.random(len(means)) < means).astype(np.float64)
    return means + env.noise_sigma * rng.standard_normal(len(means))


def generate_log(env: BanditEnvironment, logging_policy: PolicySpec, n: int, seed) -> RecordBatch:
    """Draw n i.i.d. logged interactions under the logging policy.

    Each record carries the true logging propensity of the action taken
    and, for epsilon-greedy policies, the exploration flag. Identical
    (env, policy, n, seed) inputs reproduce the log byte for byte.
    """
    if n < 0:
        raise InputError("n must be non-negative")
    if logging_policy.action_count != env.action_count:
        raise InputError("logging policy and environment disagree on the action count")
    rng = np.random.default_rng(seed)
    features, context_ids = _sample_features(env, n, rng)
    if n == 0:
        return RecordBatch(
            features=np.empty((0, env.feature_dim)),
            actions=np.empty(0, dtype=np.int64),
            rewards=np.empty(0),
            context_ids=context_ids,
        )
    actions, propensities, explored = _sample_actions(logging_policy, features, rng)
    rewards = _sample_rewards(env, features, actions, rng)
    return RecordBatch(
        features=features,
        actions=actions,
        rewards=rewards,
        logging_propensities=propensities,
        explored=explored,
        context_ids=context_ids,
    )


@dataclass(frozen=True)
class PolicyValue:
    """A policy's true expected reward, with the uncertainty of the method."""

    value: float
    standard_error: float
    method: str


def true_policy_value(
    env: BanditEnvironment,
    policy: PolicySpec,
    mode: str = VALUE_EXACT,
    *,
    n_mc: int = 100_000,
    seed: int | None = None,
) -> PolicyValue:
    """Ground-truth value of a policy in the environment.

    Exact mode enumerates sum_x P(x) sum_a pi(a|x) rbar(x, a) and is only
    available for discrete contexts. Monte-Carlo mode runs the policy
    on-policy for ``n_mc`` draws and reports the sample mean and its
    standard error.
    """
    if policy.action_count != env.action_count:
        raise InputError("policy and environment disagree on the action count")
    if mode == VALUE_EXACT:
        if not isinstance(env.contexts, DiscreteContexts):
            raise UnsupportedModeError("exact policy values require discrete contexts; use monte-carlo")
        eye = np.eye(env.contexts.count)
        probs = action_probabilities(policy, eye)
        value = float(env.contexts.probabilities @ (probs * env.mean_reward.table).sum(axis=1))
        return PolicyValue(value=value, standard_error=0.0, method=VALUE_EXACT)
    if mode == VALUE_MONTE_CARLO:
        if n_mc < 2:
            raise InputError("monte-carlo mode needs at least 2 draws")
        mc_seed = split_seed(env.seed, _DOMAIN_ORACLE, n_mc) if seed is None else seed
        log = generate_log(env, policy, n_mc, mc_seed)
        mean = float(log.rewards.mean())
        se = float(log.rewards.std(ddof=1) / np.sqrt(n_mc))
        return PolicyValue(value=mean, standard_error=se, method=VALUE_MONTE_CARLO)
    raise UnsupportedModeError(f"unknown value mode {mode!r}")


def oracle_reward_model(env: BanditEnvironment, bucket_count: int | None = None) -> RewardModel:
    """Tabular reward model holding the environment's true cell means.

    Only defined for discrete environments. The bucket count grows until
    every context hashes to its own bucket, so predictions are exact.
    """
    if not isinstance(env.contexts, DiscreteContexts):
        raise UnsupportedModeError("oracle reward models require discrete contexts")
    c = env.contexts.count
    buckets = bucket_count or max(64, 4 * c)
    eye = np.eye(c)
    for _ in range(32):
        assignment = feature_buckets(eye, buckets)
        if len(set(assignment.tolist())) == c:
            break
        buckets *= 2
    else:
        raise InputError("could not find a collision-free bucket count")
    global_mean = float(env.contexts.probabilities @ env.mean_reward.table.mean(axis=1))
    cells = np.full((buckets, env.action_count), global_mean)
    cells[assignment] = env.mean_reward.table
    return RewardModel(
        kind=KIND_TABULAR_MEAN,
        action_count=env.action_count,
        bucket_count=buckets,
        cell_means=cells,
        global_mean=global_mean,
    )
