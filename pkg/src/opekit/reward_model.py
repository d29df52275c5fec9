"""Pluggable regression of reward on (context, action) for DM and DR.

Two deterministic learner families sit behind one interface: a tabular
mean over hashed context buckets, and ridge regression on the feature map
phi(x, a) = features outer one-hot(action) plus an unpenalized intercept.
Fitting accumulates sufficient statistics batch by batch, so models can be
fitted from a stream and cross-fitted in a single pass.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .core import PolicySpec, RecordBatch, action_probabilities
from .errors import InputError
from .stream import iter_batches

KIND_TABULAR_MEAN = "tabular-mean"
KIND_RIDGE_LINEAR = "ridge-linear"
MODEL_KINDS = (KIND_TABULAR_MEAN, KIND_RIDGE_LINEAR)

DEFAULT_BUCKET_COUNT = 64
MODEL_SCHEMA_VERSION = 1

# seed chosen so one-hot context sets up to 12 contexts stay collision-free
# at the default 64 buckets
_HASH_SEED = np.uint64(0x963FFEB75556208F)
_GOLDEN = 0x9E3779B97F4A7C15
_MIX_1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX_2 = np.uint64(0x94D049BB133111EB)
_WORD_MASK = 0xFFFFFFFFFFFFFFFF


def _mix64(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer: full avalanche, so every input bit reaches the
    # low bits the bucket modulo keeps
    z = (z ^ (z >> np.uint64(30))) * _MIX_1
    z = (z ^ (z >> np.uint64(27))) * _MIX_2
    return z ^ (z >> np.uint64(31))


def feature_buckets(features: np.ndarray, bucket_count: int) -> np.ndarray:
    """Stable hash of each feature row into [0, bucket_count).

    Mixes the float64 bit patterns column by column, so equal feature
    vectors land in the same bucket on every run and platform (-0.0 is
    normalized to +0.0).
    """
    X = np.ascontiguousarray(features, dtype=np.float64) + 0.0
    words = X.view(np.uint64)
    acc = np.full(len(X), _HASH_SEED, dtype=np.uint64)
    for j in range(words.shape[1]):
        salt = np.uint64((_GOLDEN * (j + 1)) & _WORD_MASK)
        acc = _mix64(acc ^ (words[:, j] + salt))
    return (acc % np.uint64(bucket_count)).astype(np.int64)


@dataclass(frozen=True, eq=False)
class RewardModel:
    """Fitted map (features, action) -> predicted reward."""

    kind: str
    action_count: int
    # tabular-mean parameters
    bucket_count: int | None = None
    cell_means: np.ndarray | None = None  # (buckets, K)
    global_mean: float | None = None
    # ridge-linear parameters
    feature_dim: int | None = None
    coefficients: np.ndarray | None = None  # (d*K + 1,), last entry is the intercept
    ridge_lambda: float | None = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise InputError(f"unknown reward model kind {self.kind!r}")
        if self.kind == KIND_TABULAR_MEAN:
            if self.cell_means is None or self.bucket_count is None:
                raise InputError("tabular-mean model requires cell_means and bucket_count")
            object.__setattr__(self, "cell_means", np.asarray(self.cell_means, dtype=np.float64))
        else:
            if self.coefficients is None or self.feature_dim is None:
                raise InputError("ridge-linear model requires coefficients and feature_dim")
            coef = np.asarray(self.coefficients, dtype=np.float64)
            if coef.shape != (self.feature_dim * self.action_count + 1,):
                raise InputError("coefficient vector does not match feature_dim * K + 1")
            object.__setattr__(self, "coefficients", coef)

    def _check_features(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise InputError("features must be a 2-d array of shape (n, d)")
        if self.kind == KIND_RIDGE_LINEAR and X.shape[1] != self.feature_dim:
            raise InputError(f"feature width {X.shape[1]} does not match fitted width {self.feature_dim}")
        return X

    def predict_all_actions(self, features: np.ndarray, indices: np.ndarray | None = None) -> np.ndarray:
        """Prediction matrix (n, K) across every action."""
        X = self._check_features(features)
        if self.kind == KIND_TABULAR_MEAN:
            buckets = feature_buckets(X, self.bucket_count)
            return self.cell_means[buckets].copy()
        W = self.coefficients[:-1].reshape(self.action_count, self.feature_dim)
        return X @ W.T + self.coefficients[-1]

    def predict_batch(
        self, features: np.ndarray, actions: np.ndarray, indices: np.ndarray | None = None
    ) -> np.ndarray:
        actions = np.asarray(actions, dtype=np.int64)
        if len(actions) and (actions.min() < 0 or actions.max() >= self.action_count):
            raise InputError(f"action outside [0, {self.action_count})")
        preds = self.predict_all_actions(features, indices)
        return preds[np.arange(len(actions)), actions]

    def to_dict(self) -> dict:
        doc = {
            "schema_version": MODEL_SCHEMA_VERSION,
            "kind": self.kind,
            "action_count": self.action_count,
        }
        if self.kind == KIND_TABULAR_MEAN:
            doc.update(
                bucket_count=self.bucket_count,
                cell_means=self.cell_means.tolist(),
                global_mean=self.global_mean,
            )
        else:
            doc.update(
                feature_dim=self.feature_dim,
                coefficients=self.coefficients.tolist(),
                ridge_lambda=self.ridge_lambda,
            )
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "RewardModel":
        version = doc.get("schema_version")
        if version != MODEL_SCHEMA_VERSION:
            raise InputError(f"unrecognized reward model schema version {version!r}")
        kind = doc["kind"]
        if kind == KIND_TABULAR_MEAN:
            return cls(
                kind=kind,
                action_count=doc["action_count"],
                bucket_count=doc["bucket_count"],
                cell_means=np.array(doc["cell_means"]),
                global_mean=doc.get("global_mean"),
            )
        return cls(
            kind=kind,
            action_count=doc["action_count"],
            feature_dim=doc["feature_dim"],
            coefficients=np.array(doc["coefficients"]),
            ridge_lambda=doc.get("ridge_lambda"),
        )

    def save(self, path: str) -> None:
        fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)) or ".", suffix=".tmp")
        try:
            with os.fdopen(fd, "w") as fh:
                json.dump(self.to_dict(), fh, sort_keys=True)
                fh.write("\n")
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    @classmethod
    def load(cls, path: str) -> "RewardModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class BiasedRewardModel:
    """A model with a constant added to every prediction.

    Constructed misspecification for robustness studies: DM inherits the
    full bias while DR's correction term cancels it when propensities are
    right.
    """

    base: RewardModel
    bias: float

    @property
    def action_count(self) -> int:
        return self.base.action_count

    def predict_all_actions(self, features, indices=None) -> np.ndarray:
        return self.base.predict_all_actions(features, indices) + self.bias

    def predict_batch(self, features, actions, indices=None) -> np.ndarray:
        return self.base.predict_batch(features, actions, indices) + self.bias


@dataclass(frozen=True)
class CrossFitRewardModel:
    """Per-record-position cross-fitted model.

    Record at global position i is predicted by the fold model fitted
    without fold i % n_folds, which removes the optimism of reusing one
    log for both fitting and DM/DR estimation. Predictions therefore need
    the record positions.
    """

    fold_models: tuple[RewardModel, ...]

    @property
    def action_count(self) -> int:
        return self.fold_models[0].action_count

    def _fold_of(self, indices: np.ndarray | None, n: int) -> np.ndarray:
        if indices is None:
            raise InputError("cross-fitted models require record indices for prediction")
        indices = np.asarray(indices, dtype=np.int64)
        if len(indices) != n:
            raise InputError("indices length does not match the batch")
        return indices % len(self.fold_models)

    def predict_all_actions(self, features, indices=None) -> np.ndarray:
        X = np.asarray(features, dtype=np.float64)
        folds = self._fold_of(indices, len(X))
        out = np.empty((len(X), self.action_count))
        for k, model in enumerate(self.fold_models):
            mask = folds == k
            if mask.any():
                out[mask] = model.predict_all_actions(X[mask])
        return out

    def predict_batch(self, features, actions, indices=None) -> np.ndarray:
        actions = np.asarray(actions, dtype=np.int64)
        preds = self.predict_all_actions(features, indices)
        return preds[np.arange(len(actions)), actions]


# -- fitting -----------------------------------------------------------------


class _TabularStats:
    def __init__(self, bucket_count: int, action_count: int):
        self.counts = np.zeros((bucket_count, action_count))
        self.sums = np.zeros((bucket_count, action_count))

    def update(self, batch: RecordBatch, mask: np.ndarray):
        buckets = feature_buckets(batch.features[mask], self.counts.shape[0])
        cells = buckets * self.counts.shape[1] + batch.actions[mask]
        np.add.at(self.counts.ravel(), cells, 1.0)
        np.add.at(self.sums.ravel(), cells, batch.rewards[mask])

    def subtract(self, other: "_TabularStats") -> "_TabularStats":
        out = _TabularStats(*self.counts.shape)
        out.counts = self.counts - other.counts
        out.sums = self.sums - other.sums
        return out

    def to_model(self, action_count: int) -> RewardModel:
        total = self.counts.sum()
        if total <= 0:
            raise InputError("cannot fit a reward model on an empty training set")
        global_mean = self.sums.sum() / total
        with np.errstate(invalid="ignore"):
            means = np.where(self.counts > 0, self.sums / np.maximum(self.counts, 1.0), global_mean)
        return RewardModel(
            kind=KIND_TABULAR_MEAN,
            action_count=action_count,
            bucket_count=self.counts.shape[0],
            cell_means=means,
            global_mean=float(global_mean),
        )


class _RidgeStats:
    def __init__(self, feature_dim: int, action_count: int, ridge_lambda: float):
        self.d, self.k, self.lam = feature_dim, action_count, ridge_lambda
        p = feature_dim * action_count + 1
        self.gram = np.zeros((p, p))
        self.rhs = np.zeros(p)
        self.count = 0

    def update(self, batch: RecordBatch, mask: np.ndarray):
        X, acts, r = batch.features[mask], batch.actions[mask], batch.rewards[mask]
        d = self.d
        self.count += len(r)
        for a in range(self.k):
            rows = acts == a
            if not rows.any():
                continue
            Xa, ra = X[rows], r[rows]
            lo, hi = a * d, (a + 1) * d
            self.gram[lo:hi, lo:hi] += Xa.T @ Xa
            col_sums = Xa.sum(axis=0)
            self.gram[-1, lo:hi] += col_sums
            self.gram[lo:hi, -1] += col_sums
            self.rhs[lo:hi] += Xa.T @ ra
        self.gram[-1, -1] += len(r)
        self.rhs[-1] += r.sum()

    def subtract(self, other: "_RidgeStats") -> "_RidgeStats":
        out = _RidgeStats(self.d, self.k, self.lam)
        out.gram = self.gram - other.gram
        out.rhs = self.rhs - other.rhs
        out.count = self.count - other.count
        return out

    def to_model(self, action_count: int) -> RewardModel:
        if self.count <= 0:
            raise InputError("cannot fit a reward model on an empty training set")
        p = self.gram.shape[0]
        if self.lam > 0.0:
            penalty = np.eye(p) * self.lam
            penalty[-1, -1] = 0.0  # intercept is not shrunk
            coef = np.linalg.solve(self.gram + penalty, self.rhs)
        else:
            coef = np.linalg.lstsq(self.gram, self.rhs, rcond=None)[0]
        return RewardModel(
            kind=KIND_RIDGE_LINEAR,
            action_count=action_count,
            feature_dim=self.d,
            coefficients=coef,
            ridge_lambda=self.lam,
        )


def _infer_dims(first: RecordBatch, action_count: int | None) -> tuple[int, int]:
    d = first.feature_dim
    if action_count is None:
        action_count = int(first.actions.max()) + 1 if len(first) else 1
    return d, action_count


def _fit_stats(
    training,
    kind: str,
    ridge_lambda: float,
    action_count: int | None,
    bucket_count: int,
    n_folds: int,
    batch_size: int,
):
    """One pass over the training stream, accumulating per-fold statistics."""
    stats = None
    k = action_count
    index = 0
    for batch in iter_batches(training, batch_size):
        if not np.isfinite(batch.rewards).all():
            raise InputError("training rewards must be finite")
        if stats is None:
            d, k = _infer_dims(batch, action_count)
            if kind == KIND_TABULAR_MEAN:
                stats = [_TabularStats(bucket_count, k) for _ in range(n_folds)]
            else:
                stats = [_RidgeStats(d, k, ridge_lambda) for _ in range(n_folds)]
        if action_count is None and len(batch) and int(batch.actions.max()) >= k:
            raise InputError("pass action_count explicitly when later records widen the action set")
        folds = (index + np.arange(len(batch))) % n_folds
        for f in range(n_folds):
            mask = folds == f
            if mask.any():
                stats[f].update(batch, mask)
        index += len(batch)
    if stats is None or index == 0:
        raise InputError("cannot fit a reward model on an empty training set")
    return stats, k


def fit_reward_model(
    training,
    kind: str = KIND_TABULAR_MEAN,
    ridge_lambda: float = 1.0,
    *,
    action_count: int | None = None,
    bucket_count: int = DEFAULT_BUCKET_COUNT,
    batch_size: int = 65536,
) -> RewardModel:
    """Fit one model on the full training stream.

    Deterministic given identical input order and parameters. ``training``
    may be logged interactions, a RecordBatch, or an iterable of batches.
    """
    if kind not in MODEL_KINDS:
        raise InputError(f"unknown reward model kind {kind!r}")
    if ridge_lambda < 0.0:
        raise InputError("ridge_lambda must be >= 0")
    stats, k = _fit_stats(training, kind, ridge_lambda, action_count, bucket_count, 1, batch_size)
    return stats[0].to_model(k)


def fit_cross_fitted(
    training,
    kind: str = KIND_TABULAR_MEAN,
    ridge_lambda: float = 1.0,
    *,
    action_count: int | None = None,
    bucket_count: int = DEFAULT_BUCKET_COUNT,
    n_folds: int = 2,
    batch_size: int = 65536,
) -> CrossFitRewardModel:
    """Fit per-fold models in one pass; fold i's model never saw fold i.

    Use when the same log feeds both model fitting and DM/DR estimation.
    """
    if n_folds < 2:
        raise InputError("cross-fitting requires at least 2 folds")
    stats, k = _fit_stats(training, kind, ridge_lambda, action_count, bucket_count, n_folds, batch_size)
    # total statistics = sum over folds; fold model f uses total - fold f
    if kind == KIND_TABULAR_MEAN:
        total = _TabularStats(bucket_count, k)
        total.counts = sum(s.counts for s in stats)
        total.sums = sum(s.sums for s in stats)
    else:
        total = _RidgeStats(stats[0].d, k, ridge_lambda)
        total.gram = sum(s.gram for s in stats)
        total.rhs = sum(s.rhs for s in stats)
        total.count = sum(s.count for s in stats)
    models = tuple(total.subtract(s).to_model(k) for s in stats)
    return CrossFitRewardModel(fold_models=models)


def predict_reward(model, features, action: int) -> float:
    """Predicted reward for one (features, action) pair."""
    X = np.asarray(features, dtype=np.float64).reshape(1, -1)
    return float(model.predict_batch(X, np.array([action]), indices=np.array([0])))


def expected_model_reward(model, policy: PolicySpec, features) -> float:
    """sum_a pi(a|x) * r_hat(x, a) for one context.

    For a deterministic policy this reduces to the prediction at the
    policy's chosen action.
    """
    if policy.action_count != model.action_count:
        raise InputError("policy and reward model disagree on the action count")
    X = np.asarray(features, dtype=np.float64).reshape(1, -1)
    probs = action_probabilities(policy, X)
    preds = model.predict_all_actions(X, indices=np.array([0]))
    return float((probs * preds).sum())
