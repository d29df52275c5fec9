"""Logging-propensity recovery and importance weights.

Production logs often come from a deterministic model wrapped in
epsilon-greedy exploration, so no action distribution is recorded. Given
the exploration rate and the base model's greedy choice, the stochastic
logging policy can be recovered: the greedy action carries probability
1 - eps + eps/K and every other action eps/K. Exploration-only mode keeps
just the exploration traffic, where propensities are uniform 1/K.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LoggedInteraction
from .errors import ConfigError, InputError, RecordRejected, SupportViolationError

MODE_LOGGED = "logged"
MODE_EPSILON_GREEDY_RECOVERY = "epsilon-greedy-recovery"
MODE_EXPLORATION_ONLY = "exploration-only"
PROPENSITY_MODES = (MODE_LOGGED, MODE_EPSILON_GREEDY_RECOVERY, MODE_EXPLORATION_ONLY)

SUPPORT_ERROR = "error"
SUPPORT_SKIP = "skip"


@dataclass(frozen=True)
class PropensityConfig:
    """How to obtain logging propensities and treat importance weights.

    ``clip_max`` caps weights from above; None reports raw, unclipped IPS
    (the unbiased reference). For strongly divergent policies a cap in
    [10, 100] is a reasonable stabilizer. ``support_violation`` decides
    whether a zero logging propensity under positive target probability
    aborts the run or drops the record (opt-in, since dropping biases
    the estimate).
    """

    mode: str = MODE_LOGGED
    epsilon: float | None = None
    action_count: int | None = None
    clip_max: float | None = None
    support_violation: str = SUPPORT_ERROR

    def __post_init__(self):
        if self.mode not in PROPENSITY_MODES:
            raise ConfigError(f"unknown propensity mode {self.mode!r}")
        if self.support_violation not in (SUPPORT_ERROR, SUPPORT_SKIP):
            raise ConfigError(f"unknown support_violation policy {self.support_violation!r}")
        if self.mode != MODE_LOGGED:
            if self.epsilon is None:
                raise ConfigError(f"mode {self.mode!r} requires epsilon")
            if not (0.0 < self.epsilon <= 1.0):
                raise ConfigError(f"epsilon must lie in (0, 1], got {self.epsilon}")
            if self.action_count is None or self.action_count < 1:
                raise ConfigError(f"mode {self.mode!r} requires action_count")
        if self.clip_max is not None and not (self.clip_max > 1.0):
            raise ConfigError(f"clip_max must exceed 1, got {self.clip_max}")

    def to_dict(self) -> dict:
        doc = {"mode": self.mode, "support_violation": self.support_violation}
        if self.epsilon is not None:
            doc["epsilon"] = self.epsilon
        if self.action_count is not None:
            doc["action_count"] = self.action_count
        if self.clip_max is not None:
            doc["clip_max"] = self.clip_max
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "PropensityConfig":
        return cls(
            mode=doc.get("mode", MODE_LOGGED),
            epsilon=doc.get("epsilon"),
            action_count=doc.get("action_count"),
            clip_max=doc.get("clip_max"),
            support_violation=doc.get("support_violation", SUPPORT_ERROR),
        )


def epsilon_greedy_propensities(epsilon: float, action_count: int) -> tuple[float, float]:
    """(greedy, non-greedy) probabilities of an epsilon-greedy policy.

    The greedy probability is computed as 1 - (K-1)*(eps/K) so the K
    recovered values sum to exactly 1.
    """
    u = epsilon / action_count
    return 1.0 - (action_count - 1) * u, u


def recover_logging_propensity(
    record: LoggedInteraction, base_greedy_action: int, config: PropensityConfig
) -> float:
    """Propensity the (recovered) stochastic logging policy gave the logged action."""
    if config.mode == MODE_EPSILON_GREEDY_RECOVERY:
        match, other = epsilon_greedy_propensities(config.epsilon, config.action_count)
        return match if record.action == int(base_greedy_action) else other
    if config.mode == MODE_EXPLORATION_ONLY:
        if not record.explored:
            raise RecordRejected("record is not exploration traffic")
        return 1.0 / config.action_count
    raise ConfigError("recover_logging_propensity requires a recovery mode")


def importance_weight(target_prob: float, logging_prob: float, config: PropensityConfig | None = None) -> float:
    """target_prob / logging_prob, clipped from above when configured.

    A zero target probability short-circuits to weight 0 regardless of the
    logging propensity: the record contributes nothing to the target value.
    A zero logging propensity under positive target probability is a
    support violation and always raises here; folds translate that into
    skip-and-count when the config says so.
    """
    if not (0.0 <= target_prob <= 1.0):
        raise InputError(f"target probability {target_prob} outside [0, 1]")
    if not (0.0 <= logging_prob <= 1.0):
        raise InputError(f"logging probability {logging_prob} outside [0, 1]")
    if target_prob == 0.0:
        return 0.0
    if logging_prob == 0.0:
        raise SupportViolationError(
            f"logging policy has zero propensity where the target policy puts {target_prob}"
        )
    w = target_prob / logging_prob
    if config is not None and config.clip_max is not None:
        w = min(w, config.clip_max)
    return w


def importance_weights_array(
    target_probs: np.ndarray, logging_probs: np.ndarray, config: PropensityConfig | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized importance weights.

    Returns (weights, clipped_mask, violation_mask); weights are NaN where
    the violation mask is set, and exactly 0 where the target probability
    is 0.
    """
    t = np.asarray(target_probs, dtype=np.float64)
    l = np.asarray(logging_probs, dtype=np.float64)
    violation = (l == 0.0) & (t > 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(t == 0.0, 0.0, t / l)
    w = np.where(violation, np.nan, w)
    clipped = np.zeros(len(w), dtype=bool)
    if config is not None and config.clip_max is not None:
        clipped = w > config.clip_max
        w = np.where(clipped, config.clip_max, w)
    return w, clipped, violation
