"""Reading and writing bandit feedback logs.

JSONL is the canonical format: line one is the dataset header (schema
version, action count, feature dimension, feature names, reward kind,
optional exploration rate), then one self-describing record per line. CSV
is supported for interchange; its first line carries the same header as a
``#``-prefixed JSON comment, followed by a column row.

Readers stream: iteration never materializes the file, so memory stays
bounded by the batch size. Writers are deterministic (stable field order,
17-significant-digit floats in CSV) and atomic (write to a temp file, then
rename), so a failed run never leaves a partial output.
"""

from __future__ import annotations

import json
import csv
import math
import os
import tempfile
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .core import LoggedInteraction, RecordBatch
from .errors import InputError, LogFormatError
from .stream import iter_batches

LOG_SCHEMA_VERSION = 1
FORMAT_JSONL = "jsonl"
FORMAT_CSV = "csv"

REWARD_BINARY = "binary"
REWARD_CONTINUOUS = "continuous"

_CSV_FIXED_COLUMNS = ("context_id", "action", "reward", "logging_propensity", "explored")
_MAX_ROW_ERRORS_KEPT = 20


def _fmt(value: float) -> str:
    return format(value, ".17g")


@dataclass(frozen=True)
class LogHeader:
    """Dataset metadata every row is validated against."""

    action_count: int
    feature_dim: int
    feature_names: tuple[str, ...] = ()
    reward_kind: str = REWARD_CONTINUOUS
    epsilon: float | None = None
    schema_version: int = LOG_SCHEMA_VERSION

    def __post_init__(self):
        if self.action_count < 1:
            raise InputError("header action_count must be positive")
        if self.feature_dim < 0:
            raise InputError("header feature_dim must be non-negative")
        if self.reward_kind not in (REWARD_BINARY, REWARD_CONTINUOUS):
            raise InputError(f"unknown reward kind {self.reward_kind!r}")
        names = tuple(self.feature_names) or tuple(f"f{i}" for i in range(self.feature_dim))
        if len(names) != self.feature_dim:
            raise InputError("feature_names length must equal feature_dim")
        object.__setattr__(self, "feature_names", names)
        if self.epsilon is not None and not (0.0 <= self.epsilon <= 1.0):
            raise InputError("header epsilon must lie in [0, 1]")

    def to_dict(self) -> dict:
        doc = {
            "schema_version": self.schema_version,
            "action_count": self.action_count,
            "feature_dim": self.feature_dim,
            "feature_names": list(self.feature_names),
            "reward_kind": self.reward_kind,
        }
        if self.epsilon is not None:
            doc["epsilon"] = self.epsilon
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "LogHeader":
        version = doc.get("schema_version")
        if version != LOG_SCHEMA_VERSION:
            raise LogFormatError(f"unrecognized log schema version {version!r}", line=1)
        try:
            return cls(
                action_count=doc["action_count"],
                feature_dim=doc["feature_dim"],
                feature_names=tuple(doc.get("feature_names", ())),
                reward_kind=doc.get("reward_kind", REWARD_CONTINUOUS),
                epsilon=doc.get("epsilon"),
            )
        except KeyError as exc:
            raise LogFormatError(f"log header is missing {exc}", line=1) from None


def detect_format(path: str, format: str | None = None) -> str:
    if format is not None:
        if format not in (FORMAT_JSONL, FORMAT_CSV):
            raise InputError(f"unknown log format {format!r}")
        return format
    suffix = os.path.splitext(path)[1].lower()
    if suffix == ".csv":
        return FORMAT_CSV
    return FORMAT_JSONL


def _validate_columns(header: LogHeader, batch: RecordBatch, line: int | None = None):
    if batch.feature_dim != header.feature_dim:
        raise LogFormatError(
            f"row has {batch.feature_dim} features, header declares {header.feature_dim}", line
        )
    batch.validate(header.action_count)


class _RowParser:
    """Shared row-level checks for both formats."""

    def __init__(self, header: LogHeader):
        self.header = header

    def check(self, context_id, features, action, reward, propensity, explored, line: int):
        if len(features) != self.header.feature_dim:
            raise LogFormatError(
                f"expected {self.header.feature_dim} features, found {len(features)}", line
            )
        if not all(math.isfinite(v) for v in features):
            raise LogFormatError("features must be finite", line)
        if not (0 <= action < self.header.action_count):
            raise LogFormatError(
                f"action {action} outside [0, {self.header.action_count})", line
            )
        if not math.isfinite(reward):
            raise LogFormatError("reward must be finite", line)
        if propensity is not None and not (0.0 < propensity <= 1.0):
            raise LogFormatError(f"logging_propensity {propensity} outside (0, 1]", line)
        return (context_id, features, action, reward, propensity, explored)


class LogReader:
    """Streaming access to one log file.

    Iterating yields :class:`LoggedInteraction`; ``iter_batches`` yields
    columnar :class:`RecordBatch` chunks. Both re-open the file, so a
    reader can drive multi-pass pipelines (e.g. cross-fitting). In lenient
    mode malformed rows are counted and skipped; ``skipped_rows`` and
    ``row_errors`` describe the most recent completed pass.
    """

    def __init__(self, path: str, format: str | None = None, *, strict: bool = True, batch_size: int = 8192):
        self.path = path
        self.format = detect_format(path, format)
        self.strict = strict
        self.batch_size = batch_size
        self.skipped_rows = 0
        self.row_errors: list[str] = []
        self.header = self._read_header()

    def _open(self):
        try:
            return open(self.path, newline="" if self.format == FORMAT_CSV else None)
        except OSError as exc:
            raise LogFormatError(f"cannot open log {self.path!r}: {exc}") from exc

    def _read_header(self) -> LogHeader:
        with self._open() as fh:
            first = fh.readline()
            if not first.strip():
                raise LogFormatError("log file has no header line", line=1)
            text = first.strip()
            if self.format == FORMAT_CSV:
                if not text.startswith("#"):
                    raise LogFormatError("CSV log must start with a '#'-prefixed JSON header", line=1)
                text = text[1:].strip()
            try:
                doc = json.loads(text)
            except json.JSONDecodeError as exc:
                raise LogFormatError(f"header is not valid JSON: {exc}", line=1) from None
            header = LogHeader.from_dict(doc)
            if self.format == FORMAT_CSV:
                columns = next(csv.reader([fh.readline()]), [])
                expected = list(_CSV_FIXED_COLUMNS + header.feature_names)
                if columns != expected:
                    raise LogFormatError(f"CSV column row must list {expected}", line=2)
            return header

    def _note_bad_row(self, exc: LogFormatError):
        if self.strict:
            raise exc
        self.skipped_rows += 1
        if len(self.row_errors) < _MAX_ROW_ERRORS_KEPT:
            self.row_errors.append(str(exc))

    def _iter_rows_jsonl(self, parser: _RowParser) -> Iterator[tuple]:
        with self._open() as fh:
            fh.readline()
            for line_no, line in enumerate(fh, start=2):
                if not line.strip():
                    continue
                try:
                    doc = json.loads(line)
                    row = parser.check(
                        doc.get("context_id", line_no - 2),
                        [float(v) for v in doc["features"]],
                        int(doc["action"]),
                        float(doc["reward"]),
                        None if doc.get("logging_propensity") is None else float(doc["logging_propensity"]),
                        None if doc.get("explored") is None else bool(doc["explored"]),
                        line_no,
                    )
                except LogFormatError as exc:
                    self._note_bad_row(exc)
                    continue
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    self._note_bad_row(LogFormatError(f"malformed row: {exc}", line_no))
                    continue
                yield row

    def _iter_rows_csv(self, parser: _RowParser) -> Iterator[tuple]:
        d = self.header.feature_dim
        with self._open() as fh:
            fh.readline()  # header comment
            fh.readline()  # column row
            reader = csv.reader(fh)
            for cells in reader:
                line_no = reader.line_num + 2
                if not cells:
                    continue
                try:
                    if len(cells) != 5 + d:
                        raise LogFormatError(f"expected {5 + d} columns, found {len(cells)}", line_no)
                    ctx: int | str = cells[0]
                    try:
                        ctx = int(cells[0])
                    except ValueError:
                        pass
                    row = parser.check(
                        ctx,
                        [float(v) for v in cells[5:]],
                        int(cells[1]),
                        float(cells[2]),
                        float(cells[3]) if cells[3] != "" else None,
                        bool(int(cells[4])) if cells[4] != "" else None,
                        line_no,
                    )
                except LogFormatError as exc:
                    self._note_bad_row(exc)
                    continue
                except ValueError as exc:
                    self._note_bad_row(LogFormatError(f"malformed row: {exc}", line_no))
                    continue
                yield row

    def _iter_rows(self) -> Iterator[tuple]:
        self.skipped_rows = 0
        self.row_errors = []
        parser = _RowParser(self.header)
        if self.format == FORMAT_JSONL:
            yield from self._iter_rows_jsonl(parser)
        else:
            yield from self._iter_rows_csv(parser)

    def __iter__(self) -> Iterator[LoggedInteraction]:
        for ctx, features, action, reward, propensity, explored in self._iter_rows():
            yield LoggedInteraction(
                context_id=ctx,
                features=tuple(features),
                action=action,
                reward=reward,
                logging_propensity=propensity,
                explored=explored,
            )

    def iter_batches(self, batch_size: int | None = None) -> Iterator[RecordBatch]:
        size = batch_size or self.batch_size
        cols: list[list] = [[], [], [], [], [], []]

        def flush() -> RecordBatch:
            ctx, feats, acts, rewards, props, expl = cols
            batch = RecordBatch(
                features=np.array(feats, dtype=np.float64).reshape(len(feats), self.header.feature_dim),
                actions=np.array(acts, dtype=np.int64),
                rewards=np.array(rewards, dtype=np.float64),
                logging_propensities=np.array(
                    [np.nan if p is None else p for p in props], dtype=np.float64
                ),
                explored=np.array([-1 if e is None else int(e) for e in expl], dtype=np.int8),
                context_ids=list(ctx),
            )
            for c in cols:
                c.clear()
            return batch

        for ctx, features, action, reward, propensity, explored in self._iter_rows():
            for col, value in zip(cols, (ctx, features, action, reward, propensity, explored)):
                col.append(value)
            if len(cols[0]) >= size:
                yield flush()
        if cols[0]:
            yield flush()


def read_log(path: str, format: str | None = None, *, strict: bool = True) -> tuple[LogHeader, LogReader]:
    """Open a log for streaming; returns (header, record stream)."""
    reader = LogReader(path, format, strict=strict)
    return reader.header, reader


def write_log(path: str, header: LogHeader, records, format: str | None = None) -> None:
    """Write a log atomically; accepts records or batches, streamed through.

    Rows are validated against the header; output is deterministic, so
    rewriting identical input yields a byte-identical file.
    """
    fmt = detect_format(path, format)
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            if fmt == FORMAT_JSONL:
                fh.write(json.dumps(header.to_dict(), separators=(",", ":")) + "\n")
                for batch in iter_batches(records):
                    _validate_columns(header, batch)
                    for record in batch:
                        fh.write(json.dumps(record.to_dict(), separators=(",", ":")) + "\n")
            else:
                fh.write("#" + json.dumps(header.to_dict(), separators=(",", ":")) + "\n")
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(_CSV_FIXED_COLUMNS + header.feature_names)
                for batch in iter_batches(records):
                    _validate_columns(header, batch)
                    ids = batch.context_ids if batch.context_ids is not None else range(len(batch))
                    props = batch.logging_propensities
                    expl = batch.explored
                    for i in range(len(batch)):
                        cells = [
                            str(ids[i]),
                            str(int(batch.actions[i])),
                            _fmt(batch.rewards[i]),
                            "" if np.isnan(props[i]) else _fmt(props[i]),
                            "" if expl[i] < 0 else str(int(expl[i])),
                        ]
                        cells.extend(_fmt(v) for v in batch.features[i])
                        writer.writerow(cells)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
