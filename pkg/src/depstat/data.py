"""
Sample containers, CSV ingestion and the normalized-rank (copula) map.

A sample is an ``(n, p)`` matrix of observations.  Joint tests partition
its columns into ``d`` disjoint blocks, one per random vector.  Arrays held
by the containers are copied and made read-only at construction.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

MAX_BLOCKS = 16


class DataError(ValueError):
    """Raised for malformed input data or block layouts."""


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DataMatrix:
    """``n`` observations (rows) of ``p`` real coordinates (columns)."""

    values: np.ndarray

    def __post_init__(self):
        try:
            arr = np.asarray(self.values, dtype=np.float64)
        except ValueError as exc:
            raise DataError(f"data is not a rectangular numeric matrix: {exc}") from None
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise DataError(f"data must be 2-dimensional, got shape {arr.shape}")
        n, p = arr.shape
        if n < 2:
            raise DataError(f"need at least 2 observations, got {n}")
        if p < 1:
            raise DataError("need at least 1 column")
        if not np.all(np.isfinite(arr)):
            i, j = np.argwhere(~np.isfinite(arr))[0]
            raise DataError(f"non-finite value at row {i}, column {j}")
        object.__setattr__(self, "values", _frozen(arr))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class BlockSpec:
    """Ordered, pairwise-disjoint column index sets."""

    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        blocks = tuple(tuple(int(c) for c in b) for b in self.blocks)
        if len(blocks) > MAX_BLOCKS:
            raise DataError(f"at most {MAX_BLOCKS} blocks are supported, got {len(blocks)}")
        seen: dict[int, int] = {}
        for k, block in enumerate(blocks):
            if not block:
                raise DataError(f"block {k} is empty")
            for c in block:
                if c < 0:
                    raise DataError(f"negative column index {c} in block {k}")
                if c in seen:
                    raise DataError(
                        f"overlapping blocks: column {c} appears in blocks {seen[c]} and {k}")
                seen[c] = k
        object.__setattr__(self, "blocks", blocks)

    @property
    def d(self) -> int:
        return len(self.blocks)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.blocks)

    def check(self, p: int) -> None:
        for k, block in enumerate(self.blocks):
            bad = [c for c in block if c >= p]
            if bad:
                raise DataError(
                    f"block {k} references column {bad[0]} but data has {p} columns")


@dataclass(frozen=True)
class BlockSample:
    """A :class:`DataMatrix` with its columns partitioned into blocks."""

    data: DataMatrix
    spec: BlockSpec

    def __post_init__(self):
        self.spec.check(self.data.p)

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def d(self) -> int:
        return self.spec.d

    def block(self, k: int) -> np.ndarray:
        """Columns of block ``k`` as an ``(n, p_k)`` array."""
        return self.data.values[:, list(self.spec.blocks[k])]

    def blocks(self) -> list[np.ndarray]:
        return [self.block(k) for k in range(self.d)]

    def ranked(self) -> "BlockSample":
        """Same layout, every column replaced by its normalized ranks."""
        return BlockSample(DataMatrix(to_ranks(self.data).values), self.spec)


@dataclass(frozen=True)
class RankMatrix:
    """Column-wise normalized ranks ``R / n`` with entries in ``(0, 1]``."""

    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]


def as_block_sample(blocks: Sequence) -> BlockSample:
    """Stack a sequence of ``(n,)`` or ``(n, p_k)`` arrays into a BlockSample."""
    arrays = []
    for b in blocks:
        a = np.asarray(b, dtype=np.float64)
        arrays.append(a[:, None] if a.ndim == 1 else a)
    if len({a.shape[0] for a in arrays}) != 1:
        raise DataError("all blocks must have the same number of rows")
    layout, start = [], 0
    for a in arrays:
        layout.append(tuple(range(start, start + a.shape[1])))
        start += a.shape[1]
    return BlockSample(DataMatrix(np.hstack(arrays)), BlockSpec(tuple(layout)))


def to_ranks(data) -> RankMatrix:
    """
    Replace every column by its ranks divided by ``n``.

    Tied values share the average of the positions they occupy (mid-ranks).

    Parameters
    ----------
    data : DataMatrix or array_like, shape (n, p) or (n,)

    Returns
    -------
    RankMatrix

    Examples
    --------
    >>> to_ranks(np.array([3.2, 1.1, 5.0])).values.ravel() * 3
    array([2., 1., 3.])
    >>> to_ranks(np.array([1.0, 1.0, 2.0])).values.ravel()
    array([0.5, 0.5, 1. ])
    """
    if not isinstance(data, DataMatrix):
        data = DataMatrix(data)
    n = data.n
    ranks = rankdata(data.values, method="average", axis=0) / n
    return RankMatrix(_frozen(ranks))


_RANGE = re.compile(r"^\s*(\d+)\s*:\s*(\d+)\s*$")
_INDEX = re.compile(r"^\s*(\d+)\s*$")


def parse_blocks(descriptor: str) -> BlockSpec:
    """
    Parse a block layout such as ``"0;1"`` or ``"0:2;2,4:6"``.

    Blocks are separated by ``;``.  Each block is a comma list of single
    column indices or half-open ranges ``a:b``.
    """
    if descriptor is None or not descriptor.strip():
        raise DataError("empty block descriptor")
    blocks = []
    for k, part in enumerate(descriptor.split(";")):
        cols: list[int] = []
        for item in part.split(","):
            if not item.strip():
                continue
            m = _RANGE.match(item)
            if m:
                a, b = int(m.group(1)), int(m.group(2))
                if b <= a:
                    raise DataError(f"empty range '{item.strip()}' in block {k}")
                cols.extend(range(a, b))
                continue
            m = _INDEX.match(item)
            if not m:
                raise DataError(f"cannot parse '{item.strip()}' in block {k}")
            cols.append(int(m.group(1)))
        if not cols:
            raise DataError(f"block {k} is empty")
        if len(set(cols)) != len(cols):
            raise DataError(f"block {k} lists a column twice")
        blocks.append(tuple(cols))
    return BlockSpec(tuple(blocks))


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_csv_matrix(path) -> tuple[DataMatrix, list[str] | None]:
    """Read a numeric CSV, auto-detecting a single header row."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path} is empty")
    header = None
    if not all(_is_number(c) for c in rows[0]):
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
    width = len(header) if header is not None else len(rows[0]) if rows else 0
    values = []
    # file line numbers are 1-based and include the header
    offset = 2 if header is not None else 1
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataError(
                f"ragged row {i + offset}: expected {width} fields, got {len(row)}")
        parsed = []
        for j, cell in enumerate(row):
            try:
                parsed.append(float(cell))
            except ValueError:
                col = header[j] if header is not None else str(j)
                raise DataError(
                    f"non-numeric value '{cell.strip()}' at row {i + offset}, "
                    f"column \"{col}\"") from None
        values.append(parsed)
    if not values:
        raise DataError(f"{path} has no data rows")
    return DataMatrix(np.array(values)), header


def load_csv(path, spec) -> BlockSample:
    """
    Load a numeric CSV file into a validated :class:`BlockSample`.

    Parameters
    ----------
    path : str or Path
        Comma-separated file; a first row containing any non-numeric
        cell is treated as a header.
    spec : str or BlockSpec
        Block layout, either parsed or as a descriptor string.
    """
    if isinstance(spec, str):
        spec = parse_blocks(spec)
    data, _ = read_csv_matrix(path)
    return BlockSample(data, spec)


def save_csv(path, data, header: Sequence[str] | None = None) -> None:
    """Write a matrix with ``repr`` floats so that :func:`load_csv` round-trips."""
    if isinstance(data, BlockSample):
        data = data.data
    arr = data.values if isinstance(data, (DataMatrix, RankMatrix)) else np.asarray(data)
    if arr.ndim == 1:
        arr = arr[:, None]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        if header is not None:
            w.writerow(header)
        for row in arr:
            w.writerow([repr(float(v)) for v in row])
