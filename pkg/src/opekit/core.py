"""Domain types shared by every module, plus policy evaluation primitives.

Actions are dense integer ids in [0, K); the dataset header declares K and
the feature dimension. All types here are immutable after construction and
safe to share across parallel workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Iterator, Sequence

import numpy as np

from .errors import InputError

# Distributions must sum to one within this tolerance.
PROBABILITY_ATOL = 1e-9

KIND_TABULAR = "tabular"
KIND_EPSILON_GREEDY = "epsilon-greedy-over-scorer"
KIND_SOFTMAX = "softmax-over-scorer"
KIND_DETERMINISTIC = "deterministic"
POLICY_KINDS = (KIND_TABULAR, KIND_EPSILON_GREEDY, KIND_SOFTMAX, KIND_DETERMINISTIC)

ESTIMATOR_DM = "DM"
ESTIMATOR_IPS = "IPS"
ESTIMATOR_SNIPS = "SNIPS"
ESTIMATOR_DR = "DR"
ESTIMATOR_BLEND = "BLEND"
ESTIMATOR_NAMES = (ESTIMATOR_DM, ESTIMATOR_IPS, ESTIMATOR_SNIPS, ESTIMATOR_DR, ESTIMATOR_BLEND)

# Columns of an EstimateReport CSV row, in order.
REPORT_CSV_COLUMNS = (
    "estimator",
    "point_estimate",
    "standard_error",
    "n",
    "effective_sample_size",
    "clip_fraction",
    "skipped_records",
)


def _readonly(array: np.ndarray) -> np.ndarray:
    out = np.array(array, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class LoggedInteraction:
    """One record of bandit feedback: context, action taken, observed reward.

    ``logging_propensity`` is the probability the logging policy assigned to
    the logged action; it may be absent and recovered later. ``explored``
    marks records that came from exploration traffic.
    """

    context_id: int | str
    features: tuple[float, ...]
    action: int
    reward: float
    logging_propensity: float | None = None
    explored: bool | None = None

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(float(v) for v in self.features))
        object.__setattr__(self, "action", int(self.action))
        object.__setattr__(self, "reward", float(self.reward))
        if self.action < 0:
            raise InputError(f"action must be a non-negative id, got {self.action}")
        if not math.isfinite(self.reward):
            raise InputError("reward must be finite")
        p = self.logging_propensity
        if p is not None:
            p = float(p)
            object.__setattr__(self, "logging_propensity", p)
            if not (0.0 < p <= 1.0):
                raise InputError(f"logging_propensity must lie in (0, 1], got {p}")

    def to_dict(self) -> dict:
        doc = {
            "context_id": self.context_id,
            "features": list(self.features),
            "action": self.action,
            "reward": self.reward,
        }
        if self.logging_propensity is not None:
            doc["logging_propensity"] = self.logging_propensity
        if self.explored is not None:
            doc["explored"] = bool(self.explored)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "LoggedInteraction":
        return cls(
            context_id=doc["context_id"],
            features=tuple(doc["features"]),
            action=doc["action"],
            reward=doc["reward"],
            logging_propensity=doc.get("logging_propensity"),
            explored=doc.get("explored"),
        )


class RecordBatch(Sequence):
    """Columnar block of logged interactions; the unit of streaming work.

    Behaves as a sequence of :class:`LoggedInteraction` while holding the
    columns as numpy arrays. ``logging_propensities`` uses NaN for missing
    values; ``explored`` uses int8 with -1 for missing.
    """

    __slots__ = ("features", "actions", "rewards", "logging_propensities", "explored", "context_ids")

    def __init__(
        self,
        features: np.ndarray,
        actions: np.ndarray,
        rewards: np.ndarray,
        logging_propensities: np.ndarray | None = None,
        explored: np.ndarray | None = None,
        context_ids: np.ndarray | list | None = None,
    ):
        self.features = np.asarray(features, dtype=np.float64)
        if self.features.ndim != 2:
            raise InputError("features must be a 2-d array of shape (n, d)")
        n = self.features.shape[0]
        self.actions = np.asarray(actions, dtype=np.int64)
        self.rewards = np.asarray(rewards, dtype=np.float64)
        if logging_propensities is None:
            logging_propensities = np.full(n, np.nan)
        self.logging_propensities = np.asarray(logging_propensities, dtype=np.float64)
        if explored is None:
            explored = np.full(n, -1, dtype=np.int8)
        self.explored = np.asarray(explored, dtype=np.int8)
        self.context_ids = context_ids
        for name in ("actions", "rewards", "logging_propensities", "explored"):
            if len(getattr(self, name)) != n:
                raise InputError(f"column {name!r} has length {len(getattr(self, name))}, expected {n}")
        if self.context_ids is not None and len(self.context_ids) != n:
            raise InputError("context_ids length does not match the batch")

    def __len__(self) -> int:
        return self.features.shape[0]

    def __getitem__(self, i: int) -> LoggedInteraction:
        if isinstance(i, slice):
            raise InputError("RecordBatch does not support slicing")
        p = self.logging_propensities[i]
        e = self.explored[i]
        cid = self.context_ids[i] if self.context_ids is not None else int(i)
        if isinstance(cid, np.generic):
            cid = cid.item()
        return LoggedInteraction(
            context_id=cid,
            features=tuple(self.features[i]),
            action=int(self.actions[i]),
            reward=float(self.rewards[i]),
            logging_propensity=None if np.isnan(p) else float(p),
            explored=None if e < 0 else bool(e),
        )

    def __iter__(self) -> Iterator[LoggedInteraction]:
        for i in range(len(self)):
            yield self[i]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @classmethod
    def from_records(cls, records: Sequence[LoggedInteraction]) -> "RecordBatch":
        records = list(records)
        if not records:
            raise InputError("cannot build a batch from zero records")
        d = len(records[0].features)
        feats = np.array([r.features for r in records], dtype=np.float64).reshape(len(records), d)
        props = np.array(
            [np.nan if r.logging_propensity is None else r.logging_propensity for r in records]
        )
        expl = np.array([-1 if r.explored is None else int(r.explored) for r in records], dtype=np.int8)
        return cls(
            features=feats,
            actions=np.array([r.action for r in records], dtype=np.int64),
            rewards=np.array([r.reward for r in records], dtype=np.float64),
            logging_propensities=props,
            explored=expl,
            context_ids=[r.context_id for r in records],
        )

    def validate(self, action_count: int, feature_dim: int | None = None) -> None:
        """Check the dataset invariants: action < K, matching feature width."""
        if feature_dim is not None and self.feature_dim != feature_dim:
            raise InputError(f"feature dimension {self.feature_dim} != declared {feature_dim}")
        if len(self) and (self.actions.min() < 0 or self.actions.max() >= action_count):
            bad = int(np.argmax((self.actions < 0) | (self.actions >= action_count)))
            raise InputError(f"record {bad}: action {self.actions[bad]} outside [0, {action_count})")


@dataclass(frozen=True, eq=False)
class LinearScorer:
    """Per-action linear scores: score(a) = weights[a] . x + bias[a]."""

    weights: np.ndarray  # (K, d)
    bias: np.ndarray | None = None  # (K,)

    def __post_init__(self):
        w = _readonly(np.atleast_2d(self.weights))
        object.__setattr__(self, "weights", w)
        b = np.zeros(w.shape[0]) if self.bias is None else np.asarray(self.bias, dtype=np.float64)
        if b.shape != (w.shape[0],):
            raise InputError(f"bias shape {b.shape} does not match {w.shape[0]} actions")
        object.__setattr__(self, "bias", _readonly(b))

    @property
    def action_count(self) -> int:
        return self.weights.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1]

    def scores(self, features: np.ndarray) -> np.ndarray:
        """Score matrix (n, K) for a feature matrix (n, d)."""
        X = np.asarray(features, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.feature_dim:
            raise InputError(f"features of width {X.shape[-1]} do not match scorer width {self.feature_dim}")
        return X @ self.weights.T + self.bias

    def __eq__(self, other):
        if not isinstance(other, LinearScorer):
            return NotImplemented
        return np.array_equal(self.weights, other.weights) and np.array_equal(self.bias, other.bias)

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "bias": self.bias.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "LinearScorer":
        return cls(weights=np.array(doc["weights"]), bias=np.array(doc["bias"]))


def greedy_action(scorer: LinearScorer, features) -> int:
    """Argmax action under the scorer; ties break to the lowest action index."""
    X = np.asarray(features, dtype=np.float64).reshape(1, -1)
    return int(np.argmax(scorer.scores(X)[0]))


@dataclass(frozen=True, eq=False)
class PolicySpec:
    """A stochastic policy over K actions.

    Kinds: ``tabular`` (row-stochastic table over one-hot contexts),
    ``epsilon-greedy-over-scorer``, ``softmax-over-scorer``, and
    ``deterministic`` (a degenerate distribution, either a constant action
    or the scorer's greedy choice).
    """

    kind: str
    action_count: int
    scorer: LinearScorer | None = None
    epsilon: float | None = None
    temperature: float | None = None
    table: np.ndarray | None = None
    action: int | None = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise InputError(f"unknown policy kind {self.kind!r}")
        if self.action_count < 1:
            raise InputError("action_count must be at least 1")
        k = self.action_count
        if self.kind == KIND_TABULAR:
            if self.table is None:
                raise InputError("tabular policy requires a probability table")
            table = np.atleast_2d(np.asarray(self.table, dtype=np.float64))
            if table.shape[1] != k:
                raise InputError(f"table has {table.shape[1]} columns, expected {k}")
            if np.any(table < 0):
                raise InputError("action probabilities must be non-negative")
            sums = table.sum(axis=1)
            if np.any(np.abs(sums - 1.0) > PROBABILITY_ATOL):
                raise InputError("each table row must sum to 1 within 1e-9")
            object.__setattr__(self, "table", _readonly(table))
        elif self.kind == KIND_EPSILON_GREEDY:
            self._require_scorer()
            if self.epsilon is None or not (0.0 <= self.epsilon <= 1.0):
                raise InputError("epsilon-greedy policy requires epsilon in [0, 1]")
        elif self.kind == KIND_SOFTMAX:
            self._require_scorer()
            if self.temperature is None or self.temperature <= 0.0:
                raise InputError("softmax policy requires a positive temperature")
        else:  # deterministic
            if (self.scorer is None) == (self.action is None):
                raise InputError("deterministic policy requires exactly one of action or scorer")
            if self.action is not None and not (0 <= self.action < k):
                raise InputError(f"deterministic action {self.action} outside [0, {k})")
            if self.scorer is not None and self.scorer.action_count != k:
                raise InputError("scorer action count does not match the policy")

    def _require_scorer(self):
        if self.scorer is None:
            raise InputError(f"{self.kind} policy requires a scorer")
        if self.scorer.action_count != self.action_count:
            raise InputError("scorer action count does not match the policy")

    def __eq__(self, other):
        if not isinstance(other, PolicySpec):
            return NotImplemented
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
                if not (isinstance(a, np.ndarray) and isinstance(b, np.ndarray) and np.array_equal(a, b)):
                    return False
            elif a != b:
                return False
        return True

    # -- constructors ----------------------------------------------------

    @classmethod
    def tabular(cls, table) -> "PolicySpec":
        table = np.atleast_2d(np.asarray(table, dtype=np.float64))
        return cls(kind=KIND_TABULAR, action_count=table.shape[1], table=table)

    @classmethod
    def epsilon_greedy(cls, scorer: LinearScorer, epsilon: float) -> "PolicySpec":
        return cls(kind=KIND_EPSILON_GREEDY, action_count=scorer.action_count, scorer=scorer, epsilon=float(epsilon))

    @classmethod
    def softmax(cls, scorer: LinearScorer, temperature: float = 1.0) -> "PolicySpec":
        return cls(kind=KIND_SOFTMAX, action_count=scorer.action_count, scorer=scorer, temperature=float(temperature))

    @classmethod
    def deterministic(cls, action_count: int, action: int | None = None, scorer: LinearScorer | None = None) -> "PolicySpec":
        return cls(kind=KIND_DETERMINISTIC, action_count=action_count, action=action, scorer=scorer)

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        doc = {"kind": self.kind, "action_count": self.action_count}
        if self.scorer is not None:
            doc["scorer"] = self.scorer.to_dict()
        if self.epsilon is not None:
            doc["epsilon"] = self.epsilon
        if self.temperature is not None:
            doc["temperature"] = self.temperature
        if self.table is not None:
            doc["table"] = self.table.tolist()
        if self.action is not None:
            doc["action"] = self.action
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "PolicySpec":
        scorer = LinearScorer.from_dict(doc["scorer"]) if "scorer" in doc else None
        table = np.array(doc["table"]) if "table" in doc else None
        return cls(
            kind=doc["kind"],
            action_count=doc["action_count"],
            scorer=scorer,
            epsilon=doc.get("epsilon"),
            temperature=doc.get("temperature"),
            table=table,
            action=doc.get("action"),
        )


def _one_hot_context_indices(table: np.ndarray, X: np.ndarray) -> np.ndarray:
    if X.shape[1] != table.shape[0]:
        raise InputError(f"feature width {X.shape[1]} does not match the {table.shape[0]}-context table")
    idx = np.argmax(X, axis=1)
    ok = (X[np.arange(len(X)), idx] == 1.0) & (np.count_nonzero(X, axis=1) == 1)
    if not np.all(ok):
        bad = int(np.argmin(ok))
        raise InputError(f"row {bad}: tabular policies require one-hot context features")
    return idx


def greedy_actions(policy: PolicySpec, features: np.ndarray) -> np.ndarray:
    """Deterministic base choice of a policy for each feature row.

    For scorer-backed kinds this is the scorer argmax; for tabular kinds the
    table-row argmax; for constant deterministic policies the fixed action.
    Ties break to the lowest action index.
    """
    X = np.asarray(features, dtype=np.float64)
    if policy.scorer is not None:
        return np.argmax(policy.scorer.scores(X), axis=1)
    if policy.kind == KIND_TABULAR:
        idx = _one_hot_context_indices(policy.table, X)
        return np.argmax(policy.table[idx], axis=1)
    return np.full(len(X), policy.action, dtype=np.int64)


def action_probabilities(policy: PolicySpec, features: np.ndarray) -> np.ndarray:
    """Probability matrix (n, K): row i holds pi(a | x_i) for every action."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise InputError("features must be a 2-d array of shape (n, d)")
    n, k = len(X), policy.action_count
    if policy.kind == KIND_TABULAR:
        idx = _one_hot_context_indices(policy.table, X)
        return policy.table[idx].copy()
    if policy.kind == KIND_SOFTMAX:
        s = policy.scorer.scores(X) / policy.temperature
        s -= s.max(axis=1, keepdims=True)
        e = np.exp(s)
        return e / e.sum(axis=1, keepdims=True)
    greedy = greedy_actions(policy, X)
    probs = np.zeros((n, k))
    if policy.kind == KIND_EPSILON_GREEDY:
        u = policy.epsilon / k
        probs[:] = u
        probs[np.arange(n), greedy] = 1.0 - (k - 1) * u
    else:
        probs[np.arange(n), greedy] = 1.0
    return probs


def policy_action_probability(policy: PolicySpec, features, action: int) -> float:
    """pi(action | features) for a single context."""
    if not (0 <= action < policy.action_count):
        raise InputError(f"action {action} outside [0, {policy.action_count})")
    X = np.asarray(features, dtype=np.float64).reshape(1, -1)
    return float(action_probabilities(policy, X)[0, int(action)])


@dataclass(frozen=True)
class EstimateReport:
    """Point estimate of a target policy's value, with diagnostics.

    ``effective_sample_size`` is (sum w)^2 / (sum w^2), the number of
    equivalent unweighted samples behind the weighted estimate.
    """

    estimator_name: str
    point_estimate: float
    standard_error: float
    n: int
    effective_sample_size: float
    clip_fraction: float = 0.0
    skipped_records: int = 0

    def __post_init__(self):
        if self.estimator_name not in ESTIMATOR_NAMES:
            raise InputError(f"unknown estimator name {self.estimator_name!r}")
        if self.n < 0 or self.skipped_records < 0:
            raise InputError("counts must be non-negative")
        if not (self.standard_error >= 0.0):
            raise InputError("standard_error must be >= 0")
        if self.n >= 2 and not math.isfinite(self.standard_error):
            raise InputError("standard_error must be finite for n >= 2")
        if not (0.0 <= self.clip_fraction <= 1.0):
            raise InputError("clip_fraction must lie in [0, 1]")
        if self.effective_sample_size > self.n + 1e-9:
            raise InputError("effective_sample_size cannot exceed n")

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator_name,
            "point_estimate": self.point_estimate,
            "standard_error": self.standard_error,
            "n": self.n,
            "effective_sample_size": self.effective_sample_size,
            "clip_fraction": self.clip_fraction,
            "skipped_records": self.skipped_records,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EstimateReport":
        return cls(
            estimator_name=doc["estimator"],
            point_estimate=doc["point_estimate"],
            standard_error=doc["standard_error"],
            n=doc["n"],
            effective_sample_size=doc["effective_sample_size"],
            clip_fraction=doc.get("clip_fraction", 0.0),
            skipped_records=doc.get("skipped_records", 0),
        )

    def to_csv_row(self) -> list:
        doc = self.to_dict()
        return [doc[c] for c in REPORT_CSV_COLUMNS]
