"""LIBSVM text-format parsing into binary-classification datasets.

The format is one sample per line: a numeric label followed by
``index:value`` pairs with 1-based, strictly increasing indices.  Blank
lines are skipped and ``#`` starts a comment (whole-line or trailing).
Files ending in ``.gz`` are transparently decompressed.

All failure modes raise :class:`LibsvmFormatError` carrying the offending
line number; the parser never raises anything else on malformed input.
"""

from __future__ import annotations

import gzip
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

from .problems import Dataset


class LibsvmFormatError(ValueError):
    """Malformed LIBSVM input; ``line`` is the 1-based line number (0 = file level)."""

    def __init__(self, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


@dataclass(frozen=True)
class LibsvmRecord:
    """One parsed sample: raw label and (1-based index, value) pairs."""

    label: float
    entries: tuple[tuple[int, float], ...]


@dataclass(frozen=True)
class ParseResult:
    records: tuple[LibsvmRecord, ...]
    n_features: int     # max 1-based index seen (0 when no entries at all)
    reordered: int      # lines whose indices arrived out of order


def parse_libsvm(source: str | bytes | Iterable[str]) -> ParseResult:
    """Parse LIBSVM text into records plus the inferred feature count."""
    if isinstance(source, bytes):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise LibsvmFormatError(f"input is not valid UTF-8: {exc}") from None
    if isinstance(source, str):
        lines: Iterable[str] = source.splitlines()
    else:
        lines = source

    records: list[LibsvmRecord] = []
    n_features = 0
    reordered = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise LibsvmFormatError(
                f"label token {tokens[0]!r} is not numeric", lineno
            ) from None
        if not np.isfinite(label):
            raise LibsvmFormatError(f"label {tokens[0]!r} is not finite", lineno)

        entries: list[tuple[int, float]] = []
        seen: set[int] = set()
        out_of_order = False
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise LibsvmFormatError(f"token {tok!r} has no ':' separator", lineno)
            try:
                idx = int(idx_s)
            except ValueError:
                raise LibsvmFormatError(
                    f"token {tok!r} has non-integer index", lineno
                ) from None
            if idx < 1:
                raise LibsvmFormatError(f"token {tok!r} has index < 1", lineno)
            try:
                val = float(val_s)
            except ValueError:
                raise LibsvmFormatError(
                    f"token {tok!r} has non-numeric value", lineno
                ) from None
            if not np.isfinite(val):
                raise LibsvmFormatError(f"token {tok!r} has non-finite value", lineno)
            if idx in seen:
                raise LibsvmFormatError(f"duplicate feature index {idx}", lineno)
            if entries and idx < entries[-1][0]:
                out_of_order = True
            seen.add(idx)
            entries.append((idx, val))
            n_features = max(n_features, idx)

        if out_of_order:
            entries.sort(key=lambda e: e[0])
            reordered += 1
        records.append(LibsvmRecord(label=label, entries=tuple(entries)))

    return ParseResult(
        records=tuple(records), n_features=n_features, reordered=reordered
    )


def load_libsvm(path: str | Path) -> ParseResult:
    """Parse a LIBSVM file from disk, decompressing ``.gz`` files."""
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    try:
        with opener(path, "rb") as fh:
            data = fh.read()
    except (OSError, gzip.BadGzipFile) as exc:
        raise LibsvmFormatError(f"cannot read {path}: {exc}") from None
    return parse_libsvm(data)


def serialize_libsvm(records: Iterable[LibsvmRecord]) -> str:
    """Render records back to LIBSVM text with canonical index order.

    Values are written with full round-trip precision, so
    ``parse(serialize(parse(text)))`` reproduces the records exactly.
    """
    lines = []
    for rec in records:
        parts = [repr(float(rec.label))]
        parts.extend(
            f"{int(idx)}:{float(val)!r}"
            for idx, val in sorted(rec.entries, key=lambda e: e[0])
        )
        lines.append(" ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


def to_dataset(
    records: Iterable[LibsvmRecord],
    label_policy: Mapping[float, int] | None = None,
    n_features: int | None = None,
) -> Dataset:
    """Assemble records into a compressed-row Dataset with +-1 labels.

    Labels already in {-1, +1} are kept; {0, 1} maps 0 to -1.  Any other
    label set needs an explicit two-valued ``label_policy`` mapping raw
    labels to -1 or +1.  ``n_features`` overrides the inferred column count
    (some files omit trailing all-zero columns).
    """
    records = list(records)
    if not records:
        raise ValueError("cannot build a dataset from zero records")

    raw_labels = np.array([rec.label for rec in records])
    if label_policy is not None:
        mapping = {float(k): int(v) for k, v in label_policy.items()}
        if not set(mapping.values()) <= {-1, 1}:
            raise ValueError("label policy must map onto {-1, +1}")
        unknown = sorted(set(raw_labels) - set(mapping))
        if unknown:
            raise ValueError(f"labels {unknown} not covered by the label policy")
        labels = np.array([mapping[l] for l in raw_labels], dtype=float)
    else:
        distinct = set(raw_labels.tolist())
        if distinct <= {-1.0, 1.0}:
            labels = raw_labels.astype(float)
        elif distinct <= {0.0, 1.0}:
            labels = np.where(raw_labels == 0.0, -1.0, 1.0)
        else:
            raise ValueError(
                f"label set {sorted(distinct)} is not {{-1,+1}} or {{0,1}}; "
                "supply an explicit label mapping"
            )

    inferred = max((idx for rec in records for idx, _ in rec.entries), default=0)
    n = n_features if n_features is not None else inferred
    if n < inferred:
        raise ValueError(f"n_features={n} is below the largest seen index {inferred}")

    indptr = np.zeros(len(records) + 1, dtype=np.int64)
    indices = []
    values = []
    for i, rec in enumerate(records):
        for idx, val in sorted(rec.entries, key=lambda e: e[0]):
            indices.append(idx - 1)  # file indices are 1-based, columns 0-based
            values.append(val)
        indptr[i + 1] = len(indices)
    features = sp.csr_matrix(
        (np.asarray(values, dtype=float), np.asarray(indices, dtype=np.int64), indptr),
        shape=(len(records), n),
    )
    return Dataset(features=features, labels=labels)
