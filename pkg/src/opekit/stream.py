"""Normalization of record inputs into a stream of columnar batches.

Estimation and fitting accept logged interactions, a single RecordBatch,
or an iterable of batches; everything downstream sees fixed-size
RecordBatch chunks so memory stays bounded by the batch size.
"""

from __future__ import annotations

import itertools
from typing import Iterable, Iterator

from .core import LoggedInteraction, RecordBatch
from .errors import InputError

DEFAULT_BATCH_SIZE = 65536


def _chunk_batch(batch: RecordBatch, batch_size: int) -> Iterator[RecordBatch]:
    if len(batch) <= batch_size:
        if len(batch):
            yield batch
        return
    for lo in range(0, len(batch), batch_size):
        hi = lo + batch_size
        yield RecordBatch(
            features=batch.features[lo:hi],
            actions=batch.actions[lo:hi],
            rewards=batch.rewards[lo:hi],
            logging_propensities=batch.logging_propensities[lo:hi],
            explored=batch.explored[lo:hi],
            context_ids=batch.context_ids[lo:hi] if batch.context_ids is not None else None,
        )


def iter_batches(records, batch_size: int = DEFAULT_BATCH_SIZE) -> Iterator[RecordBatch]:
    """Yield non-empty RecordBatch chunks of at most ``batch_size`` rows."""
    if batch_size < 1:
        raise InputError("batch_size must be positive")
    if isinstance(records, RecordBatch):
        yield from _chunk_batch(records, batch_size)
        return
    it = iter(records)
    first = next(it, None)
    if first is None:
        return
    if isinstance(first, RecordBatch):
        for batch in itertools.chain([first], it):
            if not isinstance(batch, RecordBatch):
                raise InputError("cannot mix RecordBatch and record items in one stream")
            yield from _chunk_batch(batch, batch_size)
        return
    if not isinstance(first, LoggedInteraction):
        raise InputError(f"unsupported record type {type(first).__name__}")
    chunk = [first]
    for record in it:
        chunk.append(record)
        if len(chunk) >= batch_size:
            yield RecordBatch.from_records(chunk)
            chunk = []
    if chunk:
        yield RecordBatch.from_records(chunk)
