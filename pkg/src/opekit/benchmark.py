"""Benchmark harness: estimator quality against the on-policy oracle.

The protocol mirrors how estimators are vetted in production: evaluate a
population of candidate policies on logged data, compare the estimates to
the true (oracle) values by Pearson correlation and RMSE, and sweep the
replication variance of each estimator across sample sizes against the
on-policy sample mean.

Replications and scenario cells are embarrassingly parallel; every cell
derives its own generator from the scenario seed, so the result table is
identical for any worker count.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import ESTIMATOR_BLEND, ESTIMATOR_DM, ESTIMATOR_DR, PolicySpec
from .errors import EstimationError, InputError, OpekitError
from .estimators import estimate_all
from .propensity import PropensityConfig
from .reward_model import BiasedRewardModel, KIND_TABULAR_MEAN, MODEL_KINDS, fit_cross_fitted
from .simulate import BanditEnvironment, DiscreteContexts, generate_log, split_seed, true_policy_value

THREADS_ENV_VAR = "OPEKIT_THREADS"
ON_POLICY = "ON-POLICY"

# spawn-key domains under the scenario seed
_DOMAIN_BENCH_LOG = 10
_DOMAIN_BENCH_ON_POLICY = 11
_DOMAIN_BENCH_ORACLE = 12

BENCHMARK_COLUMNS = (
    "policy_id",
    "sample_size",
    "replication",
    "estimator",
    "estimate",
    "standard_error",
    "effective_sample_size",
    "clip_fraction",
    "skipped_records",
    "oracle_value",
    "scenario_seed",
    "error",
)

SWEEP_COLUMNS = (
    "estimator",
    "policy_id",
    "sample_size",
    "replications",
    "mean_estimate",
    "variance",
)


def _resolve_workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get(THREADS_ENV_VAR, "1") or "1")
    return max(1, workers)


@dataclass(frozen=True, eq=False)
class BenchmarkScenario:
    """Everything one benchmark run depends on, seeds included."""

    environment: BanditEnvironment
    logging_policy: PolicySpec
    target_policies: tuple[PolicySpec, ...]
    sample_sizes: tuple[int, ...]
    replications: int
    estimators: tuple[str, ...] = ("IPS", "SNIPS")
    propensity: PropensityConfig = field(default_factory=PropensityConfig)
    reward_model_kind: str = KIND_TABULAR_MEAN
    ridge_lambda: float = 1.0
    bucket_count: int = 64
    reward_model_bias: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "target_policies", tuple(self.target_policies))
        object.__setattr__(self, "sample_sizes", tuple(int(n) for n in self.sample_sizes))
        object.__setattr__(self, "estimators", tuple(str(e).upper() for e in self.estimators))
        if not self.target_policies:
            raise InputError("scenario needs at least one target policy")
        if self.replications < 1:
            raise InputError("replications must be at least 1")
        sizes = self.sample_sizes
        if not sizes or any(b <= a for a, b in zip(sizes, sizes[1:])) or sizes[0] < 1:
            raise InputError("sample sizes must be positive and strictly increasing")
        if self.reward_model_kind not in MODEL_KINDS:
            raise InputError(f"unknown reward model kind {self.reward_model_kind!r}")
        for policy in (self.logging_policy, *self.target_policies):
            if policy.action_count != self.environment.action_count:
                raise InputError("every policy must match the environment's action count")

    def _needs_reward_model(self) -> bool:
        return any(e in (ESTIMATOR_DM, ESTIMATOR_DR, ESTIMATOR_BLEND) for e in self.estimators)

    def to_dict(self) -> dict:
        return {
            "environment": self.environment.to_dict(),
            "logging_policy": self.logging_policy.to_dict(),
            "target_policies": [p.to_dict() for p in self.target_policies],
            "sample_sizes": list(self.sample_sizes),
            "replications": self.replications,
            "estimators": list(self.estimators),
            "propensity": self.propensity.to_dict(),
            "reward_model_kind": self.reward_model_kind,
            "ridge_lambda": self.ridge_lambda,
            "bucket_count": self.bucket_count,
            "reward_model_bias": self.reward_model_bias,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "BenchmarkScenario":
        return cls(
            environment=BanditEnvironment.from_dict(doc["environment"]),
            logging_policy=PolicySpec.from_dict(doc["logging_policy"]),
            target_policies=tuple(PolicySpec.from_dict(p) for p in doc["target_policies"]),
            sample_sizes=tuple(doc["sample_sizes"]),
            replications=doc["replications"],
            estimators=tuple(doc.get("estimators", ("IPS", "SNIPS"))),
            propensity=PropensityConfig.from_dict(doc.get("propensity", {})),
            reward_model_kind=doc.get("reward_model_kind", KIND_TABULAR_MEAN),
            ridge_lambda=doc.get("ridge_lambda", 1.0),
            bucket_count=doc.get("bucket_count", 64),
            reward_model_bias=doc.get("reward_model_bias", 0.0),
            seed=doc.get("seed", 0),
        )


def _policy_id(index: int) -> str:
    return f"p{index:02d}"


def _oracle_values(scenario: BenchmarkScenario) -> list[float]:
    values = []
    for p_idx, policy in enumerate(scenario.target_policies):
        if isinstance(scenario.environment.contexts, DiscreteContexts):
            values.append(true_policy_value(scenario.environment, policy).value)
        else:
            seed = split_seed(scenario.seed, _DOMAIN_BENCH_ORACLE, p_idx)
            values.append(
                true_policy_value(
                    scenario.environment, policy, "monte-carlo", n_mc=200_000, seed=seed
                ).value
            )
    return values


def _fit_scenario_model(scenario: BenchmarkScenario, log):
    model = fit_cross_fitted(
        log,
        scenario.reward_model_kind,
        scenario.ridge_lambda,
        action_count=scenario.environment.action_count,
        bucket_count=scenario.bucket_count,
    )
    if scenario.reward_model_bias:
        return BiasedRewardModel(model, scenario.reward_model_bias)
    return model


def _write_rows_csv(path: str, columns: Sequence[str], rows) -> None:
    import tempfile

    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class BenchmarkResult:
    """Tidy table: one row per (policy, sample size, replication, estimator)."""

    rows: list[dict]

    def write_csv(self, path: str) -> None:
        _write_rows_csv(path, BENCHMARK_COLUMNS, ([row[c] for c in BENCHMARK_COLUMNS] for row in self.rows))

    @staticmethod
    def read_csv(path: str) -> "BenchmarkResult":
        rows = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(BENCHMARK_COLUMNS) - set(reader.fieldnames or ())
            if missing:
                raise InputError(f"benchmark CSV is missing columns: {sorted(missing)}")
            for raw in reader:
                row = dict(raw)
                for c in ("sample_size", "replication", "skipped_records", "scenario_seed"):
                    row[c] = int(raw[c])
                for c in ("estimate", "standard_error", "effective_sample_size", "clip_fraction", "oracle_value"):
                    row[c] = float(raw[c])
                rows.append(row)
        return BenchmarkResult(rows=rows)


@dataclass
class SweepResult:
    """Replication variance of each estimator (and the on-policy mean) per sample size."""

    rows: list[dict]

    def write_csv(self, path: str) -> None:
        _write_rows_csv(path, SWEEP_COLUMNS, ([row[c] for c in SWEEP_COLUMNS] for row in self.rows))

    @staticmethod
    def read_csv(path: str) -> "SweepResult":
        rows = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(SWEEP_COLUMNS) - set(reader.fieldnames or ())
            if missing:
                raise InputError(f"sweep CSV is missing columns: {sorted(missing)}")
            for raw in reader:
                row = dict(raw)
                row["sample_size"] = int(raw["sample_size"])
                row["replications"] = int(raw["replications"])
                row["mean_estimate"] = float(raw["mean_estimate"])
                row["variance"] = float(raw["variance"])
                rows.append(row)
        return SweepResult(rows=rows)


def _estimate_cell(scenario: BenchmarkScenario, size_index: int, replication: int) -> list[dict]:
    """All estimates that share one generated log."""
    n = scenario.sample_sizes[size_index]
    log = generate_log(
        scenario.environment,
        scenario.logging_policy,
        n,
        split_seed(scenario.seed, _DOMAIN_BENCH_LOG, size_index, replication),
    )
    model = _fit_scenario_model(scenario, log) if scenario._needs_reward_model() else None
    out = []
    for p_idx, policy in enumerate(scenario.target_policies):
        base = {
            "policy_id": _policy_id(p_idx),
            "sample_size": n,
            "replication": replication,
            "scenario_seed": scenario.seed,
        }
        try:
            reports = estimate_all(
                log,
                policy,
                scenario.estimators,
                propensity_config=scenario.propensity,
                reward_model=model,
                logging_policy=scenario.logging_policy,
            )
            for est in scenario.estimators:
                r = reports[est]
                out.append(
                    base
                    | {
                        "estimator": est,
                        "estimate": r.point_estimate,
                        "standard_error": r.standard_error,
                        "effective_sample_size": r.effective_sample_size,
                        "clip_fraction": r.clip_fraction,
                        "skipped_records": r.skipped_records,
                        "error": "",
                    }
                )
        except OpekitError as exc:
            for est in scenario.estimators:
                out.append(
                    base
                    | {
                        "estimator": est,
                        "estimate": math.nan,
                        "standard_error": math.nan,
                        "effective_sample_size": math.nan,
                        "clip_fraction": math.nan,
                        "skipped_records": 0,
                        "error": f"{type(exc).__name__}: {exc}",
                    }
                )
    return out


def _map_cells(cells, fn, workers: int):
    if workers <= 1:
        return [fn(*cell) for cell in cells]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda c: fn(*c), cells))


def run_benchmark(scenario: BenchmarkScenario, *, workers: int | None = None) -> BenchmarkResult:
    """One OPE estimate per (target policy, sample size, replication, estimator).

    Within a cell all target policies share the same log, as they would
    share one production dataset. Estimator failures become row-level
    error codes instead of aborting the run. The oracle value column holds
    each policy's true value (exact for discrete environments).
    """
    oracles = _oracle_values(scenario)
    cells = [
        (si, rep)
        for si in range(len(scenario.sample_sizes))
        for rep in range(scenario.replications)
    ]
    per_cell = _map_cells(cells, lambda si, rep: _estimate_cell(scenario, si, rep), _resolve_workers(workers))
    rows = []
    for cell_rows in per_cell:
        for row in cell_rows:
            row["oracle_value"] = oracles[int(row["policy_id"][1:])]
            rows.append(row)
    return BenchmarkResult(rows=rows)


def variance_sweep(scenario: BenchmarkScenario, *, workers: int | None = None) -> SweepResult:
    """Replication variance of each estimator across sample sizes.

    Also reports the on-policy baseline (direct sample mean of a log drawn
    under each target policy) so the off-policy variance can be contrasted
    with what an equally sized experiment would see. Needs at least 30
    replications per cell for a stable second moment.
    """
    if scenario.replications < 30:
        raise InputError("variance_sweep needs at least 30 replications per cell")
    result = run_benchmark(scenario, workers=workers)

    estimates: dict[tuple[str, str, int], list[float]] = {}
    for row in result.rows:
        key = (row["estimator"], row["policy_id"], row["sample_size"])
        estimates.setdefault(key, []).append(row["estimate"])

    def on_policy_cell(p_idx: int, si: int, rep: int) -> tuple:
        n = scenario.sample_sizes[si]
        log = generate_log(
            scenario.environment,
            scenario.target_policies[p_idx],
            n,
            split_seed(scenario.seed, _DOMAIN_BENCH_ON_POLICY, p_idx, si, rep),
        )
        return (ON_POLICY, _policy_id(p_idx), n), float(log.rewards.mean())

    cells = [
        (p, si, rep)
        for p in range(len(scenario.target_policies))
        for si in range(len(scenario.sample_sizes))
        for rep in range(scenario.replications)
    ]
    for key, value in _map_cells(cells, on_policy_cell, _resolve_workers(workers)):
        estimates.setdefault(key, []).append(value)

    rows = []
    names = [ON_POLICY, *scenario.estimators]
    for p_idx in range(len(scenario.target_policies)):
        for est in names:
            for n in scenario.sample_sizes:
                values = np.array(estimates.get((est, _policy_id(p_idx), n), []))
                finite = values[np.isfinite(values)]
                rows.append(
                    {
                        "estimator": est,
                        "policy_id": _policy_id(p_idx),
                        "sample_size": n,
                        "replications": int(len(finite)),
                        "mean_estimate": float(finite.mean()) if len(finite) else math.nan,
                        "variance": float(finite.var(ddof=1)) if len(finite) >= 2 else math.nan,
                    }
                )
    return SweepResult(rows=rows)


def pearson_correlation(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient in [-1, 1]."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise InputError("pearson_correlation needs two equal-length sequences of at least 2 values")
    xc, yc = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt((xc * xc).sum()), np.sqrt((yc * yc).sum())
    if sx == 0.0 or sy == 0.0:
        raise EstimationError("correlation undefined: an input has zero variance")
    return float(np.clip((xc * yc).sum() / (sx * sy), -1.0, 1.0))


def rmse(estimates: Sequence[float], truths: Sequence[float]) -> float:
    """Root mean squared difference between estimates and truths."""
    e = np.asarray(estimates, dtype=np.float64)
    t = np.asarray(truths, dtype=np.float64)
    if e.shape != t.shape or e.ndim != 1 or len(e) < 1:
        raise InputError("rmse needs two equal-length sequences of at least 1 value")
    return float(np.sqrt(np.mean((e - t) ** 2)))
