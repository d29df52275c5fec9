"""Mergeable, compensated accumulators for single-pass estimation.

Million-record sums of heavy-tailed weighted terms lose precision under
naive summation, so every running sum keeps a Neumaier carry. Accumulators
merge associatively and commutatively (up to float rounding), which is what
lets a log be folded in parallel partitions and reduced afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError


class CompensatedSum:
    """Running sum with a Neumaier error term.

    Batch adds feed numpy's pairwise sum of the chunk into the compensated
    scalar, so the carry tracks error across chunks.
    """

    __slots__ = ("partial", "carry")

    def __init__(self, partial: float = 0.0, carry: float = 0.0):
        self.partial = partial
        self.carry = carry

    def add(self, value: float) -> None:
        t = self.partial + value
        if abs(self.partial) >= abs(value):
            self.carry += (self.partial - t) + value
        else:
            self.carry += (value - t) + self.partial
        self.partial = t

    def add_many(self, values: np.ndarray) -> None:
        if len(values):
            self.add(float(np.sum(values)))

    def merge(self, other: "CompensatedSum") -> None:
        self.add(other.partial)
        self.add(other.carry)

    def copy(self) -> "CompensatedSum":
        return CompensatedSum(self.partial, self.carry)

    @property
    def value(self) -> float:
        return self.partial + self.carry

    def __repr__(self) -> str:
        return f"CompensatedSum({self.value!r})"


@dataclass
class StreamAccumulator:
    """Sufficient statistics for one estimator over a stream of records.

    ``sum_terms``/``sum_sq_terms`` are over the per-record estimate terms;
    ``sum_weights``/``sum_weight_sq`` over the importance weights (the
    SNIPS denominator and the effective-sample-size input); ``sum_cross``
    is sum(term * weight), needed by the one-pass delta-method standard
    error of the weight-normalized estimator. ``config_key`` fingerprints
    the estimator configuration so only like accumulators merge.
    """

    config_key: str = ""
    count: int = 0
    sum_terms: CompensatedSum = field(default_factory=CompensatedSum)
    sum_sq_terms: CompensatedSum = field(default_factory=CompensatedSum)
    sum_weights: CompensatedSum = field(default_factory=CompensatedSum)
    sum_weight_sq: CompensatedSum = field(default_factory=CompensatedSum)
    sum_cross: CompensatedSum = field(default_factory=CompensatedSum)
    clipped_count: int = 0
    skipped_count: int = 0

    def add(self, term: float, weight: float = 1.0, clipped: bool = False) -> None:
        self.count += 1
        self.sum_terms.add(term)
        self.sum_sq_terms.add(term * term)
        self.sum_weights.add(weight)
        self.sum_weight_sq.add(weight * weight)
        self.sum_cross.add(term * weight)
        if clipped:
            self.clipped_count += 1

    def add_batch(self, terms: np.ndarray, weights: np.ndarray | None = None, clipped: int = 0) -> None:
        terms = np.asarray(terms, dtype=np.float64)
        self.count += len(terms)
        self.sum_terms.add_many(terms)
        self.sum_sq_terms.add_many(terms * terms)
        if weights is None:
            self.sum_weights.add(float(len(terms)))
            self.sum_weight_sq.add(float(len(terms)))
            self.sum_cross.add_many(terms)
        else:
            weights = np.asarray(weights, dtype=np.float64)
            self.sum_weights.add_many(weights)
            self.sum_weight_sq.add_many(weights * weights)
            self.sum_cross.add_many(terms * weights)
        self.clipped_count += int(clipped)

    def note_skipped(self, n: int = 1) -> None:
        self.skipped_count += int(n)

    # -- derived quantities ------------------------------------------------

    @property
    def mean_term(self) -> float:
        return self.sum_terms.value / self.count

    def term_variance(self) -> float:
        """Sample variance (ddof=1) of the terms; 0.0 when count < 2."""
        if self.count < 2:
            return 0.0
        s, s2 = self.sum_terms.value, self.sum_sq_terms.value
        return max(s2 - s * s / self.count, 0.0) / (self.count - 1)

    def effective_sample_size(self) -> float:
        """(sum w)^2 / sum w^2; 0.0 in the degenerate all-zero-weight case."""
        sq = self.sum_weight_sq.value
        if sq <= 0.0:
            return 0.0
        w = self.sum_weights.value
        return min(w * w / sq, float(self.count))

    def copy(self) -> "StreamAccumulator":
        return StreamAccumulator(
            config_key=self.config_key,
            count=self.count,
            sum_terms=self.sum_terms.copy(),
            sum_sq_terms=self.sum_sq_terms.copy(),
            sum_weights=self.sum_weights.copy(),
            sum_weight_sq=self.sum_weight_sq.copy(),
            sum_cross=self.sum_cross.copy(),
            clipped_count=self.clipped_count,
            skipped_count=self.skipped_count,
        )


def merge_accumulators(a: StreamAccumulator, b: StreamAccumulator) -> StreamAccumulator:
    """Combine two partial folds; fold(A u B) == merge(fold(A), fold(B)).

    Counts add exactly; the compensated sums agree with a sequential fold
    to within float rounding. The empty accumulator is the identity.
    """
    if a.config_key != b.config_key:
        raise InputError(
            f"cannot merge accumulators with different configurations: {a.config_key!r} vs {b.config_key!r}"
        )
    out = a.copy()
    out.count += b.count
    out.sum_terms.merge(b.sum_terms)
    out.sum_sq_terms.merge(b.sum_sq_terms)
    out.sum_weights.merge(b.sum_weights)
    out.sum_weight_sq.merge(b.sum_weight_sq)
    out.sum_cross.merge(b.sum_cross)
    out.clipped_count += b.clipped_count
    out.skipped_count += b.skipped_count
    return out
