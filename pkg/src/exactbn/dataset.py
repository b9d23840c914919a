"""Discrete data matrices, variable subsets, and count tables.

Variable subsets are plain Python ints used as bitmasks over the variable
indices 0..n-1.  Integer order of the masks is lexicographic subset order,
so every proper subset of a set sorts before the set itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, TooManyVariablesError

MAX_VARS = 32


def varset(indices) -> int:
    """Build a bitmask from an iterable of variable indices."""
    mask = 0
    for i in indices:
        mask |= 1 << i
    return mask


def members(mask: int) -> tuple[int, ...]:
    """Variable indices contained in ``mask``, ascending."""
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return tuple(out)


@dataclass(frozen=True)
class Dataset:
    """A complete discrete data matrix.

    Attributes
    ----------
    cells : (N, n) int64 array
        Value indices; column i holds values in [0, arities[i]).
    arities : (n,) int64 array
        Number of values of each variable (>= 1).
    """

    cells: np.ndarray
    arities: np.ndarray

    @property
    def n(self) -> int:
        return self.cells.shape[1]

    @property
    def num_rows(self) -> int:
        return self.cells.shape[0]

    @classmethod
    def from_array(cls, cells, arities=None) -> "Dataset":
        """Validate a matrix of value indices and wrap it as a Dataset.

        Arities default to (column max) + 1.  Explicit arities must still
        cover every observed value.
        """
        cells = np.asarray(cells)
        if cells.ndim != 2 or cells.shape[0] < 1 or cells.shape[1] < 1:
            raise DataError("data must be a non-empty 2-d matrix")
        if cells.shape[1] > MAX_VARS:
            raise TooManyVariablesError(
                f"{cells.shape[1]} variables exceed the design limit of {MAX_VARS}"
            )
        if not np.issubdtype(cells.dtype, np.integer):
            as_int = cells.astype(np.int64)
            if not np.array_equal(as_int, cells):
                raise DataError("data values must be integers")
            cells = as_int
        cells = np.ascontiguousarray(cells, dtype=np.int64)
        if cells.min() < 0:
            raise DataError("data values must be non-negative")
        observed = cells.max(axis=0) + 1
        if arities is None:
            arities = observed
        else:
            arities = np.asarray(arities, dtype=np.int64)
            if arities.shape != (cells.shape[1],):
                raise DataError("arities must give one value count per column")
            if (arities < observed).any():
                bad = int(np.argmax(arities < observed))
                raise DataError(
                    f"column {bad} holds value {int(observed[bad]) - 1} "
                    f"but its declared arity is {int(arities[bad])}"
                )
        cells.setflags(write=False)
        arities = np.ascontiguousarray(arities, dtype=np.int64)
        arities.setflags(write=False)
        return cls(cells=cells, arities=arities)


def load(path, arities=None) -> Dataset:
    """Read a dataset from a text file.

    One row per line; columns separated by whitespace or commas; values are
    base-10 non-negative integers.  Lines starting with ``#`` are ignored.
    """
    rows = []
    width = None
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.replace(",", " ").split()
            try:
                values = [int(t) for t in tokens]
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-integer token in row") from None
            if any(v < 0 for v in values):
                raise DataError(f"{path}:{lineno}: negative value in row")
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise DataError(
                    f"{path}:{lineno}: row has {len(values)} columns, expected {width}"
                )
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return Dataset.from_array(np.array(rows, dtype=np.int64), arities=arities)


@dataclass(frozen=True)
class ContingencyTable:
    """Frequencies of the distinct projected data vectors over ``vars``.

    Rows are kept sorted by value vector, so equal tables compare equal.
    """

    vars: int
    arities: tuple[int, ...]  # arity of each member of vars, ascending index
    rows: tuple[tuple[tuple[int, ...], int], ...]

    @property
    def total(self) -> int:
        return sum(count for _, count in self.rows)


@dataclass(frozen=True)
class CondFreqTable:
    """Counts of one child variable's values per configuration of its parents."""

    child: int
    child_arity: int
    parents: int
    parent_arities: tuple[int, ...]
    rows: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]

    @property
    def total(self) -> int:
        return sum(sum(counts) for _, counts in self.rows)


def build_ct(data: Dataset, vars: int) -> ContingencyTable:
    """Project the data onto ``vars`` and count the distinct vectors."""
    if vars == 0:
        raise ValueError("contingency table needs a non-empty variable set")
    cols = members(vars)
    projected = data.cells[:, cols]
    vectors, counts = np.unique(projected, axis=0, return_counts=True)
    rows = tuple(
        (tuple(int(x) for x in vec), int(cnt)) for vec, cnt in zip(vectors, counts)
    )
    arities = tuple(int(data.arities[c]) for c in cols)
    return ContingencyTable(vars=vars, arities=arities, rows=rows)


def marginalize(ct: ContingencyTable, v: int) -> ContingencyTable:
    """Drop variable ``v`` from the table, merging rows that collide."""
    if not ct.vars & (1 << v):
        raise ValueError(f"variable {v} is not in the table")
    if ct.vars == 1 << v:
        raise ValueError("cannot marginalize the last remaining variable")
    pos = members(ct.vars).index(v)
    merged: dict[tuple[int, ...], int] = {}
    for vec, count in ct.rows:
        key = vec[:pos] + vec[pos + 1 :]
        merged[key] = merged.get(key, 0) + count
    rows = tuple((vec, merged[vec]) for vec in sorted(merged))
    arities = ct.arities[:pos] + ct.arities[pos + 1 :]
    return ContingencyTable(vars=ct.vars & ~(1 << v), arities=arities, rows=rows)


def to_cft(ct: ContingencyTable, v: int) -> CondFreqTable:
    """Regroup the table as per-parent-configuration counts of child ``v``."""
    if not ct.vars & (1 << v):
        raise ValueError(f"variable {v} is not in the table")
    pos = members(ct.vars).index(v)
    child_arity = ct.arities[pos]
    grouped: dict[tuple[int, ...], list[int]] = {}
    for vec, count in ct.rows:
        key = vec[:pos] + vec[pos + 1 :]
        counts = grouped.setdefault(key, [0] * child_arity)
        counts[vec[pos]] += count
    rows = tuple((key, tuple(grouped[key])) for key in sorted(grouped))
    return CondFreqTable(
        child=v,
        child_arity=child_arity,
        parents=ct.vars & ~(1 << v),
        parent_arities=ct.arities[:pos] + ct.arities[pos + 1 :],
        rows=rows,
    )
