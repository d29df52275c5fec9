"""Declarative JSON configuration files for the CLI.

One format for everything: policies, environments, simulation runs, and
benchmark scenarios are JSON documents with explicit seeds, so any run can
be reproduced from its config alone. See the README schema reference for
worked examples.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .benchmark import BenchmarkScenario
from .core import PolicySpec
from .errors import ConfigError, InputError
from .logio import FORMAT_JSONL, REWARD_BINARY, REWARD_CONTINUOUS, LogHeader
from .simulate import BanditEnvironment, NOISE_BERNOULLI


def load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from exc


def _build(path: str, doc: dict, builder, what: str):
    try:
        return builder(doc)
    except (KeyError, TypeError, ValueError, InputError) as exc:
        key = f" (missing key {exc})" if isinstance(exc, KeyError) else f": {exc}"
        raise ConfigError(f"config {path!r} is not a valid {what}{key}") from exc


def load_policy(path: str) -> PolicySpec:
    return _build(path, load_json(path), PolicySpec.from_dict, "policy")


def load_environment(path: str) -> BanditEnvironment:
    return _build(path, load_json(path), BanditEnvironment.from_dict, "environment")


def load_scenario(path: str) -> BenchmarkScenario:
    return _build(path, load_json(path), BenchmarkScenario.from_dict, "benchmark scenario")


@dataclass(frozen=True)
class SimulateConfig:
    """A log-generation run: environment, logging policy, size, seed."""

    environment: BanditEnvironment
    logging_policy: PolicySpec
    n: int
    seed: int
    format: str = FORMAT_JSONL

    def __post_init__(self):
        if self.n < 0:
            raise InputError("n must be non-negative")
        if self.logging_policy.action_count != self.environment.action_count:
            raise InputError("logging policy and environment disagree on the action count")

    @classmethod
    def from_dict(cls, doc: dict) -> "SimulateConfig":
        return cls(
            environment=BanditEnvironment.from_dict(doc["environment"]),
            logging_policy=PolicySpec.from_dict(doc["logging_policy"]),
            n=int(doc["n"]),
            seed=int(doc["seed"]),
            format=doc.get("format", FORMAT_JSONL),
        )

    def log_header(self) -> LogHeader:
        env = self.environment
        return LogHeader(
            action_count=env.action_count,
            feature_dim=env.feature_dim,
            reward_kind=REWARD_BINARY if env.reward_noise == NOISE_BERNOULLI else REWARD_CONTINUOUS,
            epsilon=self.logging_policy.epsilon,
        )


def load_simulate_config(path: str) -> SimulateConfig:
    return _build(path, load_json(path), SimulateConfig.from_dict, "simulate config")


def dump_json(path: str, doc: dict) -> None:
    """Deterministic JSON file write (sorted keys, trailing newline)."""
    import os
    import tempfile

    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
