"""Reading, writing, and splitting sample sets in the sparse text format.

Lines look like ``<label> <idx>:<val> <idx>:<val> ...`` with 1-based,
strictly increasing column indices; ``#`` starts a comment that runs to the
end of the line, and blank lines are skipped. Parsed labels are normalized
to {-1, +1}. Column indices are 0-based once inside a :class:`Dataset`;
the 1-based convention exists only in the text format.
"""

from __future__ import annotations

import gzip
import io
import re
from dataclasses import dataclass, field

import numpy as np

from .core import RandomSource, ZoproxError

__all__ = [
    "ParseError",
    "LabelError",
    "SplitError",
    "Dataset",
    "parse_libsvm",
    "load_libsvm",
    "serialize_libsvm",
    "split",
]


class ParseError(ZoproxError):
    """Malformed input line. Carries 1-based line and column numbers."""

    def __init__(self, message, line=None, column=None):
        where = ""
        if line is not None:
            where = f" at line {line}"
            if column is not None:
                where += f", column {column}"
        super().__init__(message + where)
        self.line = line
        self.column = column


class LabelError(ZoproxError):
    """Raw label set cannot be mapped onto {-1, +1}."""


class SplitError(ZoproxError):
    """Requested split is impossible for this dataset."""


@dataclass
class Dataset:
    """Sample set with labels in {-1, +1} and CSR features.

    ``d`` is the largest feature index seen across the whole set, so
    subsets taken from one parse share a common dimension. ``meta``
    records provenance such as the label mapping that was applied.
    """

    labels: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    d: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.ascontiguousarray(self.labels, dtype=np.float64)
        self.indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        self.d = int(self.d)

    @property
    def n(self):
        return self.labels.shape[0]

    @property
    def nnz(self):
        return self.indices.shape[0]

    def row(self, i):
        """(label, 0-based column indices, values) of sample ``i``."""
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return float(self.labels[i]), self.indices[lo:hi], self.data[lo:hi]

    def subset(self, rows):
        """New Dataset holding the given rows (in the given order)."""
        rows = np.asarray(rows, dtype=np.int64)
        lengths = self.indptr[rows + 1] - self.indptr[rows]
        indptr = np.zeros(rows.size + 1, dtype=np.int64)
        np.cumsum(lengths, out=indptr[1:])
        indices = np.empty(int(indptr[-1]), dtype=np.int64)
        data = np.empty(int(indptr[-1]), dtype=np.float64)
        for k, i in enumerate(rows):
            lo, hi = self.indptr[i], self.indptr[i + 1]
            indices[indptr[k]:indptr[k + 1]] = self.indices[lo:hi]
            data[indptr[k]:indptr[k + 1]] = self.data[lo:hi]
        return Dataset(
            labels=self.labels[rows].copy(),
            indptr=indptr,
            indices=indices,
            data=data,
            d=self.d,
            meta=dict(self.meta),
        )

    def equal_to(self, other):
        """Exact equality of labels, features, and dimension."""
        return (
            self.d == other.d
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.data, other.data)
        )


_TOKEN = re.compile(r"\S+")

# raw label vocabulary -> mapping to {-1, +1}; checked in order
_LABEL_MAPS = (
    ({-1.0, 1.0}, {-1.0: -1.0, 1.0: 1.0}, "identity"),
    ({0.0, 1.0}, {0.0: -1.0, 1.0: 1.0}, "{0,1}->{-1,+1}"),
    ({1.0, 2.0}, {1.0: 1.0, 2.0: -1.0}, "{1,2}->{+1,-1}"),
)


def _map_labels(raw):
    observed = set(raw)
    for vocabulary, mapping, name in _LABEL_MAPS:
        if observed <= vocabulary:
            return np.array([mapping[v] for v in raw], dtype=np.float64), name
    raise LabelError(
        f"cannot map label set {sorted(observed)} onto -1/+1; "
        "expected labels from {-1,+1}, {0,1}, or {1,2}"
    )


def parse_libsvm(lines):
    """Parse an iterable of text lines into a :class:`Dataset`.

    Single pass; memory stays proportional to the parsed output. Raises
    ParseError (with 1-based line/column) for malformed tokens or
    non-increasing feature indices, LabelError for an unmappable label set.
    """
    raw_labels = []
    row_indices = []
    row_values = []
    counts = []
    d = 0

    for lineno, line in enumerate(lines, start=1):
        hash_pos = line.find("#")
        if hash_pos >= 0:
            line = line[:hash_pos]
        tokens = list(_TOKEN.finditer(line))
        if not tokens:
            continue

        label_tok = tokens[0]
        try:
            raw_labels.append(float(label_tok.group()))
        except ValueError:
            raise ParseError(
                f"bad label {label_tok.group()!r}",
                line=lineno,
                column=label_tok.start() + 1,
            ) from None

        prev_idx = 0
        idxs = []
        vals = []
        for tok in tokens[1:]:
            text = tok.group()
            col = tok.start() + 1
            head, sep, tail = text.partition(":")
            if not sep or not head or not tail:
                raise ParseError(
                    f"bad feature token {text!r}, expected idx:val",
                    line=lineno,
                    column=col,
                )
            try:
                idx = int(head)
            except ValueError:
                raise ParseError(
                    f"bad feature index {head!r}", line=lineno, column=col
                ) from None
            try:
                val = float(tail)
            except ValueError:
                raise ParseError(
                    f"bad feature value {tail!r}", line=lineno, column=col
                ) from None
            if idx < 1:
                raise ParseError(
                    f"feature index {idx} must be >= 1", line=lineno, column=col
                )
            if idx <= prev_idx:
                raise ParseError(
                    f"feature index {idx} not increasing", line=lineno, column=col
                )
            if not np.isfinite(val):
                raise ParseError(
                    f"non-finite feature value {tail!r}", line=lineno, column=col
                )
            prev_idx = idx
            idxs.append(idx - 1)
            vals.append(val)
        if prev_idx > d:
            d = prev_idx
        counts.append(len(idxs))
        row_indices.extend(idxs)
        row_values.extend(vals)

    labels, map_name = (
        _map_labels(raw_labels) if raw_labels else (np.empty(0), "identity")
    )
    indptr = np.zeros(len(counts) + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return Dataset(
        labels=labels,
        indptr=indptr,
        indices=np.array(row_indices, dtype=np.int64),
        data=np.array(row_values, dtype=np.float64),
        d=d,
        meta={"label_map": map_name},
    )


def load_libsvm(path):
    """Parse a file, transparently decompressing gzip (by magic bytes)."""
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"\x1f\x8b":
        opener = gzip.open(path, "rt", encoding="utf-8")
    else:
        opener = open(path, "r", encoding="utf-8")
    with opener as fh:
        ds = parse_libsvm(fh)
    ds.meta["path"] = str(path)
    return ds


def _format_value(v):
    v = float(v)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    # repr of a Python float is the shortest digit string that round-trips
    return repr(v)


def serialize_libsvm(dataset):
    """Render a Dataset back to text. Reparsing gives an identical Dataset."""
    out = io.StringIO()
    for i in range(dataset.n):
        label, idx, vals = dataset.row(i)
        parts = ["+1" if label > 0 else "-1"]
        parts.extend(
            f"{j + 1}:{_format_value(v)}" for j, v in zip(idx, vals)
        )
        out.write(" ".join(parts))
        out.write("\n")
    return out.getvalue()


def split(dataset, fraction, seed):
    """Deterministic shuffled split into (train, test).

    ``|train| = round(fraction * n)``, rounding half up. Both parts keep
    the parent's feature dimension. Raises SplitError for n < 2, a
    fraction outside (0, 1), or a split that would leave a part empty.
    """
    n = dataset.n
    if n < 2:
        raise SplitError(f"cannot split {n} samples")
    if not 0.0 < fraction < 1.0:
        raise SplitError(f"fraction must be in (0, 1), got {fraction}")
    n_train = int(np.floor(fraction * n + 0.5))
    if n_train == 0 or n_train == n:
        raise SplitError(
            f"fraction {fraction} leaves an empty part for n={n}"
        )
    perm = RandomSource(seed, key=(21,)).permutation(n)
    train_rows = np.sort(perm[:n_train])
    test_rows = np.sort(perm[n_train:])
    train = dataset.subset(train_rows)
    test = dataset.subset(test_rows)
    train.meta["split"] = {"fraction": fraction, "seed": int(seed), "part": "train"}
    test.meta["split"] = {"fraction": fraction, "seed": int(seed), "part": "test"}
    return train, test
