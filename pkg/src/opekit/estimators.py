"""Off-policy value estimators over logged bandit feedback.

Every estimator is a per-record term folded into a mergeable accumulator,
so one engine serves them all, streams out-of-core, and parallel partial
folds reduce to the sequential answer:

- IPS:   term w*r, value = mean(term); w = pi_t(a|x) / pi_0(a|x)
- SNIPS: same terms, value = sum(w*r) / sum(w) (weight-normalized)
- DM:    term sum_a pi_t(a|x) * r_hat(x, a), no propensities
- DR:    term w*(r - r_hat(x, a)) + sum_a pi_t(a|x) * r_hat(x, a)
- BLEND: unweighted mean of the other four point estimates

Standard errors use the normal approximation on per-record terms; SNIPS
uses the delta method for the ratio. A seeded percentile bootstrap is
available for all of them.
"""

from __future__ import annotations

import math
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .accumulators import StreamAccumulator, merge_accumulators
from .core import (
    ESTIMATOR_BLEND,
    ESTIMATOR_DM,
    ESTIMATOR_DR,
    ESTIMATOR_IPS,
    ESTIMATOR_SNIPS,
    EstimateReport,
    LoggedInteraction,
    PolicySpec,
    action_probabilities,
    greedy_actions,
)
from .errors import ConfigError, EstimationError, InputError, SupportViolationError
from .propensity import (
    MODE_EPSILON_GREEDY_RECOVERY,
    MODE_EXPLORATION_ONLY,
    MODE_LOGGED,
    SUPPORT_ERROR,
    PropensityConfig,
    epsilon_greedy_propensities,
    importance_weight,
    importance_weights_array,
)
from .stream import DEFAULT_BATCH_SIZE, iter_batches

__all__ = [
    "per_record_ips_term",
    "estimate_ips",
    "estimate_snips",
    "estimate_dm",
    "estimate_dr",
    "estimate_blend",
    "estimate_all",
    "fold_records",
    "report_from_accumulator",
    "merge_accumulators",
    "bootstrap_interval",
]

_FOLDABLE = (ESTIMATOR_DM, ESTIMATOR_IPS, ESTIMATOR_SNIPS, ESTIMATOR_DR)
_WEIGHTED = (ESTIMATOR_IPS, ESTIMATOR_SNIPS, ESTIMATOR_DR)


def per_record_ips_term(
    record: LoggedInteraction, target_prob: float, logging_prob: float, config: PropensityConfig | None = None
) -> float:
    """w * r for one record, the importance-weighted reward."""
    return importance_weight(target_prob, logging_prob, config) * record.reward


def _config_key(estimator: str, policy: PolicySpec, config: PropensityConfig | None) -> str:
    parts = [estimator, f"policy={policy.kind}/{policy.action_count}"]
    if estimator in _WEIGHTED:
        if config is None:
            parts.append("propensity=none")
        else:
            parts.append(
                f"mode={config.mode},eps={config.epsilon},clip={config.clip_max},support={config.support_violation}"
            )
    return "|".join(parts)


def _normalize_estimators(estimators) -> list[str]:
    if isinstance(estimators, str):
        estimators = [estimators]
    names = []
    for e in estimators:
        name = str(e).upper()
        if name not in _FOLDABLE + (ESTIMATOR_BLEND,):
            raise InputError(f"unknown estimator {e!r}")
        if name not in names:
            names.append(name)
    if not names:
        raise InputError("no estimators requested")
    return names


def _logging_probabilities(
    batch, config: PropensityConfig, logging_policy: PolicySpec | None, position: int
) -> tuple[np.ndarray, np.ndarray | None]:
    """(propensities, rejected_mask) for one batch under the config's mode."""
    if config.mode == MODE_LOGGED:
        probs = batch.logging_propensities
        missing = np.isnan(probs)
        if missing.any():
            bad = position + int(np.argmax(missing))
            raise EstimationError(
                f"record {bad} has no logged propensity; use a recovery mode or fix the log"
            )
        return probs, None
    if config.mode == MODE_EPSILON_GREEDY_RECOVERY:
        if logging_policy is None:
            raise ConfigError("epsilon-greedy recovery needs the base logging policy for greedy actions")
        base = greedy_actions(logging_policy, batch.features)
        matched, other = epsilon_greedy_propensities(config.epsilon, config.action_count)
        return np.where(batch.actions == base, matched, other), None
    # exploration-only: uniform over actions conditional on exploration traffic
    rejected = batch.explored != 1
    probs = np.full(len(batch), 1.0 / config.action_count)
    return probs, rejected


class _FoldChunk(NamedTuple):
    terms: dict
    weights: np.ndarray | None
    clipped: int
    dropped: int


def _iter_fold_chunks(
    records,
    target_policy: PolicySpec,
    estimators: Sequence[str],
    propensity_config: PropensityConfig | None,
    reward_model,
    logging_policy: PolicySpec | None,
    batch_size: int,
    start_index: int,
) -> Iterator[_FoldChunk]:
    needs_weights = any(e in _WEIGHTED for e in estimators)
    needs_model = any(e in (ESTIMATOR_DM, ESTIMATOR_DR) for e in estimators)
    if needs_weights and propensity_config is None:
        raise ConfigError("IPS/SNIPS/DR need a propensity configuration")
    if needs_model:
        if reward_model is None:
            raise ConfigError("DM/DR need a fitted reward model")
        if reward_model.action_count != target_policy.action_count:
            raise InputError("reward model and target policy disagree on the action count")

    position = start_index
    for batch in iter_batches(records, batch_size):
        m = len(batch)
        batch.validate(target_policy.action_count)
        probs = action_probabilities(target_policy, batch.features)
        keep = np.ones(m, dtype=bool)
        weights = clipped_mask = None

        if needs_weights:
            logging_probs, rejected = _logging_probabilities(batch, propensity_config, logging_policy, position)
            if rejected is not None:
                keep &= ~rejected
            target_probs = probs[np.arange(m), batch.actions]
            weights, clipped_mask, violation = importance_weights_array(
                target_probs, logging_probs, propensity_config
            )
            bad = violation & keep
            if bad.any():
                if propensity_config.support_violation == SUPPORT_ERROR:
                    first = position + int(np.argmax(bad))
                    raise SupportViolationError(
                        "logging policy has zero propensity on an action the target policy can take "
                        "(set support_violation='skip' to drop such records)",
                        record_index=first,
                    )
                keep &= ~violation

        kept = int(keep.sum())
        dropped = m - kept
        terms: dict = {}
        w_kept = weights[keep] if weights is not None else None
        clip_count = int((clipped_mask & keep).sum()) if clipped_mask is not None else 0

        if kept:
            rewards = batch.rewards[keep]
            if needs_model:
                indices = (position + np.arange(m))[keep]
                preds = reward_model.predict_all_actions(batch.features[keep], indices=indices)
                pred_taken = preds[np.arange(kept), batch.actions[keep]]
                expected = (probs[keep] * preds).sum(axis=1)
            for est in estimators:
                if est in (ESTIMATOR_IPS, ESTIMATOR_SNIPS):
                    terms[est] = w_kept * rewards
                elif est == ESTIMATOR_DM:
                    terms[est] = expected
                elif est == ESTIMATOR_DR:
                    terms[est] = w_kept * (rewards - pred_taken) + expected
        yield _FoldChunk(terms=terms, weights=w_kept, clipped=clip_count, dropped=dropped)
        position += m


def fold_records(
    records,
    target_policy: PolicySpec,
    estimators=(ESTIMATOR_IPS,),
    *,
    propensity_config: PropensityConfig | None = None,
    reward_model=None,
    logging_policy: PolicySpec | None = None,
    batch_size: int = DEFAULT_BATCH_SIZE,
    start_index: int = 0,
) -> dict:
    """Fold a record stream into one StreamAccumulator per estimator.

    ``start_index`` is the global position of the first record, which lets
    partition folds report correct record indices and keeps cross-fitted
    model fold assignment aligned; merge the partition results with
    :func:`merge_accumulators`.

    When several estimators fold together, a record skipped for one (a
    support violation or non-exploration traffic) is skipped for all, so
    every accumulator covers the same record set — the precondition of the
    blend.
    """
    names = _normalize_estimators(estimators)
    if ESTIMATOR_BLEND in names:
        raise InputError("BLEND is derived from the other four reports; fold those instead")
    accs = {e: StreamAccumulator(config_key=_config_key(e, target_policy, propensity_config)) for e in names}
    for chunk in _iter_fold_chunks(
        records, target_policy, names, propensity_config, reward_model, logging_policy, batch_size, start_index
    ):
        for est in names:
            acc = accs[est]
            if est in chunk.terms:
                if est == ESTIMATOR_DM:
                    acc.add_batch(chunk.terms[est])
                else:
                    acc.add_batch(chunk.terms[est], chunk.weights, clipped=chunk.clipped)
            if chunk.dropped:
                acc.note_skipped(chunk.dropped)
    return accs


def report_from_accumulator(estimator: str, acc: StreamAccumulator) -> EstimateReport:
    """Derive the point estimate and diagnostics from folded statistics."""
    n = acc.count
    if n == 0:
        raise EstimationError(
            f"no usable records for {estimator} ({acc.skipped_count} skipped)"
        )
    if estimator == ESTIMATOR_SNIPS:
        weight_sum = acc.sum_weights.value
        if weight_sum <= 0.0:
            raise EstimationError("SNIPS undefined: target policy places no mass on the logged actions")
        point = acc.sum_terms.value / weight_sum
        # delta method on the ratio: variance of w*(r - point) around the weight mean
        spread = (
            acc.sum_sq_terms.value
            - 2.0 * point * acc.sum_cross.value
            + point * point * acc.sum_weight_sq.value
        )
        se = math.sqrt(n * max(spread, 0.0) / (n - 1)) / weight_sum if n >= 2 else 0.0
    else:
        point = acc.mean_term
        se = math.sqrt(acc.term_variance() / n)
    return EstimateReport(
        estimator_name=estimator,
        point_estimate=point,
        standard_error=se,
        n=n,
        effective_sample_size=acc.effective_sample_size(),
        clip_fraction=acc.clipped_count / n,
        skipped_records=acc.skipped_count,
    )


def estimate_all(
    records,
    target_policy: PolicySpec,
    estimators=(ESTIMATOR_IPS, ESTIMATOR_SNIPS),
    *,
    propensity_config: PropensityConfig | None = None,
    reward_model=None,
    logging_policy: PolicySpec | None = None,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> dict:
    """Run the requested estimators in a single pass over the records.

    Returns a dict estimator name -> EstimateReport. Requesting BLEND pulls
    in all four base estimators over the same record set.
    """
    names = _normalize_estimators(estimators)
    fold_names = [e for e in names if e != ESTIMATOR_BLEND]
    if ESTIMATOR_BLEND in names:
        fold_names = list(_FOLDABLE)
    accs = fold_records(
        records,
        target_policy,
        fold_names,
        propensity_config=propensity_config,
        reward_model=reward_model,
        logging_policy=logging_policy,
        batch_size=batch_size,
    )
    reports = {e: report_from_accumulator(e, accs[e]) for e in fold_names}
    if ESTIMATOR_BLEND in names:
        reports[ESTIMATOR_BLEND] = estimate_blend([reports[e] for e in _FOLDABLE])
    return {e: reports[e] for e in names}


def estimate_ips(
    records,
    target_policy: PolicySpec,
    propensity_config: PropensityConfig,
    *,
    logging_policy: PolicySpec | None = None,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> EstimateReport:
    """Importance-weighted mean of observed rewards."""
    return estimate_all(
        records,
        target_policy,
        (ESTIMATOR_IPS,),
        propensity_config=propensity_config,
        logging_policy=logging_policy,
        batch_size=batch_size,
    )[ESTIMATOR_IPS]


def estimate_snips(
    records,
    target_policy: PolicySpec,
    propensity_config: PropensityConfig,
    *,
    logging_policy: PolicySpec | None = None,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> EstimateReport:
    """Weight-normalized importance sampling: sum(w*r) / sum(w).

    One pass with a numerator and a denominator accumulator; always lies
    within [min r, max r].
    """
    return estimate_all(
        records,
        target_policy,
        (ESTIMATOR_SNIPS,),
        propensity_config=propensity_config,
        logging_policy=logging_policy,
        batch_size=batch_size,
    )[ESTIMATOR_SNIPS]


def estimate_dm(
    records,
    target_policy: PolicySpec,
    reward_model,
    *,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> EstimateReport:
    """Model-based estimate: mean over records of sum_a pi_t(a|x) r_hat(x,a)."""
    return estimate_all(
        records,
        target_policy,
        (ESTIMATOR_DM,),
        reward_model=reward_model,
        batch_size=batch_size,
    )[ESTIMATOR_DM]


def estimate_dr(
    records,
    target_policy: PolicySpec,
    reward_model,
    propensity_config: PropensityConfig,
    *,
    logging_policy: PolicySpec | None = None,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> EstimateReport:
    """Model-assisted importance sampling; unbiased if either input is right.

    Per record: w * (r - r_hat(x, a)) + sum_a pi_t(a|x) * r_hat(x, a).
    The model term absorbs variance; the weighted residual removes the
    model's bias whenever propensities are correct.
    """
    return estimate_all(
        records,
        target_policy,
        (ESTIMATOR_DR,),
        propensity_config=propensity_config,
        reward_model=reward_model,
        logging_policy=logging_policy,
        batch_size=batch_size,
    )[ESTIMATOR_DR]


def estimate_blend(reports: Sequence[EstimateReport]) -> EstimateReport:
    """Unweighted mean of the four base estimates over one record set.

    Diagnostics are conservative: max of the skip and clip counts, min of
    the effective sample sizes, and the mean of the standard errors (an
    upper bound for the mean of correlated estimates).
    """
    reports = list(reports)
    if len(reports) != 4:
        raise InputError(f"blend expects the four base reports, got {len(reports)}")
    ns = {r.n for r in reports}
    if len(ns) != 1:
        raise InputError(f"blend requires reports over the same record set, got n in {sorted(ns)}")
    return EstimateReport(
        estimator_name=ESTIMATOR_BLEND,
        point_estimate=math.fsum(r.point_estimate for r in reports) / 4.0,
        standard_error=math.fsum(r.standard_error for r in reports) / 4.0,
        n=reports[0].n,
        effective_sample_size=min(r.effective_sample_size for r in reports),
        clip_fraction=max(r.clip_fraction for r in reports),
        skipped_records=max(r.skipped_records for r in reports),
    )


def _collect_terms(
    records, target_policy, estimator, propensity_config, reward_model, logging_policy, batch_size
) -> tuple[np.ndarray, np.ndarray | None]:
    terms, weights = [], []
    for chunk in _iter_fold_chunks(
        records, target_policy, [estimator], propensity_config, reward_model, logging_policy, batch_size, 0
    ):
        if estimator in chunk.terms:
            terms.append(chunk.terms[estimator])
            if chunk.weights is not None:
                weights.append(chunk.weights)
    if not terms:
        raise EstimationError(f"no usable records for {estimator}")
    t = np.concatenate(terms)
    w = np.concatenate(weights) if weights else None
    return t, w


def bootstrap_interval(
    records,
    target_policy: PolicySpec,
    estimator: str,
    *,
    propensity_config: PropensityConfig | None = None,
    reward_model=None,
    logging_policy: PolicySpec | None = None,
    n_resamples: int = 200,
    seed: int = 0,
    alpha: float = 0.05,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> tuple[float, float]:
    """Seeded percentile bootstrap interval for one estimator.

    Materializes the per-record terms, so unlike the folds this needs
    memory proportional to the record count.
    """
    name = _normalize_estimators([estimator])[0]
    if name == ESTIMATOR_BLEND:
        raise InputError("bootstrap the four base estimators individually")
    if not (0.0 < alpha < 1.0):
        raise InputError("alpha must lie in (0, 1)")
    terms, weights = _collect_terms(
        records, target_policy, name, propensity_config, reward_model, logging_policy, batch_size
    )
    n = len(terms)
    rng = np.random.default_rng(seed)
    estimates = np.empty(n_resamples)
    for b in range(n_resamples):
        idx = rng.integers(0, n, n)
        if name == ESTIMATOR_SNIPS:
            denom = weights[idx].sum()
            estimates[b] = terms[idx].sum() / denom if denom > 0 else np.nan
        else:
            estimates[b] = terms[idx].mean()
    estimates = estimates[np.isfinite(estimates)]
    if not len(estimates):
        raise EstimationError("bootstrap produced no finite resample estimates")
    lo, hi = np.percentile(estimates, [100.0 * alpha / 2.0, 100.0 * (1.0 - alpha / 2.0)])
    return float(lo), float(hi)
