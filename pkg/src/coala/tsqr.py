"""Out-of-core R-factor computation for tall calibration matrices.

Activations arrive as row blocks of ``X^T`` (samples x features). Only the
``n x n`` triangular factor is ever kept; Q is never formed. Two drivers share
one QR kernel:

* :func:`tsqr_sequential` folds each new block into the running R.
* :func:`tsqr_tree` factors every block, then merges pairs up a binary tree.

Every R leaving the kernel has a non-negative diagonal, so equal inputs give
entrywise-equal outputs across drivers.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np
from scipy.linalg import get_lapack_funcs

from .io import open_clmx
from .matcore import DimensionError, PreconditionError, RFactor

DEFAULT_CHUNK_ROWS = 8192


class Strategy(str, enum.Enum):
    SEQUENTIAL = "sequential"
    TREE = "tree"


@dataclass(frozen=True)
class TsqrPlan:
    strategy: Strategy = Strategy.SEQUENTIAL
    chunk_rows: int = DEFAULT_CHUNK_ROWS
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.chunk_rows < 1:
            raise PreconditionError(f"chunk_rows must be >= 1, got {self.chunk_rows}")
        if self.workers < 1:
            raise PreconditionError(f"workers must be >= 1, got {self.workers}")


# -- chunk sources -----------------------------------------------------------

class ArrayChunks:
    """Row blocks of an in-memory (or memory-mapped) ``X^T``."""

    def __init__(self, xt, chunk_rows: int = DEFAULT_CHUNK_ROWS, dtype=None):
        if chunk_rows < 1:
            raise PreconditionError(f"chunk_rows must be >= 1, got {chunk_rows}")
        self.xt = xt
        self.chunk_rows = int(chunk_rows)
        self.dtype = dtype

    @classmethod
    def from_activations(cls, X, chunk_rows: int = DEFAULT_CHUNK_ROWS, dtype=None) -> "ArrayChunks":
        """Chunk an ``n x k`` activation matrix along its samples."""
        return cls(np.asarray(X).T, chunk_rows, dtype)

    def __iter__(self) -> Iterator[np.ndarray]:
        total = self.xt.shape[0]
        for start in range(0, total, self.chunk_rows):
            block = self.xt[start:start + self.chunk_rows]
            yield block if self.dtype is None else block.astype(self.dtype, copy=False)


class ClmxFileChunks(ArrayChunks):
    """A single CLMX file of samples x features, read through a memmap."""

    def __init__(self, path, chunk_rows: int = DEFAULT_CHUNK_ROWS, dtype=None):
        super().__init__(open_clmx(path), chunk_rows, dtype)
        self.path = Path(path)


class ClmxDirectoryChunks:
    """``chunk_*.clmx`` files in a directory, in lexicographic order."""

    def __init__(self, directory, dtype=None, pattern: str = "chunk_*.clmx"):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise PreconditionError(f"{self.directory} is not a directory")
        self.files = sorted(self.directory.glob(pattern))
        self.dtype = dtype

    def __iter__(self) -> Iterator[np.ndarray]:
        for path in self.files:
            block = open_clmx(path)
            yield block if self.dtype is None else block.astype(self.dtype, copy=False)


def open_source(path, chunk_rows: int = DEFAULT_CHUNK_ROWS, dtype=None):
    path = Path(path)
    if path.is_dir():
        return ClmxDirectoryChunks(path, dtype=dtype)
    return ClmxFileChunks(path, chunk_rows, dtype=dtype)


# -- buffer accounting -------------------------------------------------------

class BufferMeter:
    """Tracks the scalar count of matrix buffers a driver holds at once."""

    def __init__(self):
        self.peak = 0
        self.samples = 0

    def observe(self, *buffers) -> None:
        live = sum(int(b.size) for b in buffers if b is not None)
        self.samples += 1
        self.peak = max(self.peak, live)


def sequential_buffer_bound(n: int, chunk_rows: int) -> int:
    return 3 * (n * n + chunk_rows * n)


# -- kernel ------------------------------------------------------------------

def _fix_signs(R: np.ndarray) -> np.ndarray:
    neg = np.diagonal(R) < 0
    if np.any(neg):
        R[neg] *= -1
    return R


def r_of(stack: np.ndarray, n: int | None = None, overwrite: bool = False) -> np.ndarray:
    """Triangular factor of ``stack`` padded to ``n x n``, diagonal >= 0.

    With ``overwrite=True`` and a Fortran-ordered float input the QR runs in
    place and ``stack`` is destroyed.
    """
    rows, n_cols = stack.shape
    n = n_cols if n is None else n
    if rows == 0:
        return np.zeros((n, n), dtype=stack.dtype)
    geqrf, = get_lapack_funcs(("geqrf",), (stack,))
    qr, _tau, _work, info = geqrf(stack, lwork=64 * n_cols, overwrite_a=overwrite)
    if info < 0:
        raise ValueError(f"geqrf argument {-info} invalid")
    R = np.zeros((n, n), dtype=qr.dtype)
    top = min(rows, n)
    R[:top] = np.triu(qr[:top])
    return _fix_signs(R)


def combine(Ra: np.ndarray, Rb: np.ndarray) -> np.ndarray:
    """R of the stacked pair ``[Ra; Rb]``; always a full ``2n x n`` QR."""
    n = Ra.shape[1]
    stack = np.empty((2 * n, n), dtype=Ra.dtype, order="F")
    stack[:n] = Ra
    stack[n:] = Rb
    return r_of(stack, n, overwrite=True)


def _validate_chunk(chunk, index: int, n: int | None, dtype) -> np.ndarray:
    chunk = np.asarray(chunk) if not isinstance(chunk, np.ndarray) else chunk
    if chunk.ndim != 2:
        raise DimensionError(f"chunk {index} must be 2-D, got shape {chunk.shape}")
    if n is not None and chunk.shape[1] != n:
        raise DimensionError(f"chunk {index} has {chunk.shape[1]} columns, expected {n}")
    if chunk.dtype not in (np.float32, np.float64) and dtype is None:
        chunk = chunk.astype(np.float64)
    if not np.all(np.isfinite(chunk)):
        raise PreconditionError(f"chunk {index} contains non-finite entries")
    return chunk


def _leaf(chunk: np.ndarray, n: int, dtype) -> np.ndarray:
    return r_of(np.array(chunk, dtype=dtype, order="F", copy=True), n, overwrite=True)


def tsqr_sequential(source: Iterable, meter: BufferMeter | None = None) -> RFactor:
    """Fold blocks into a running R: ``R <- qr_r([R; X_i^T])``.

    Holds at most the running R, one incoming block, their stack and the new
    R, i.e. ``3 n^2 + 2 c n`` scalars for blocks of ``c`` rows.
    """
    R = None
    n = dtype = None
    total = 0
    for index, chunk in enumerate(source):
        chunk = _validate_chunk(chunk, index, n, dtype)
        if n is None:
            n, dtype = chunk.shape[1], chunk.dtype
        total += chunk.shape[0]
        if R is None:
            stack = np.array(chunk, dtype=dtype, order="F", copy=True)
        else:
            stack = np.empty((n + chunk.shape[0], n), dtype=dtype, order="F")
            stack[:n] = R
            stack[n:] = chunk
        if meter is not None:
            meter.observe(R, chunk, stack)
        del chunk
        R_new = r_of(stack, n, overwrite=True)
        if meter is not None:
            meter.observe(R, stack, R_new)
        del stack
        R = R_new
    if R is None:
        raise DimensionError("chunk source is empty")
    return RFactor(R, total_rows=total, short_data=total < n)


def tsqr_tree(source: Iterable, plan: TsqrPlan = TsqrPlan(Strategy.TREE)) -> RFactor:
    """Leaf QR per block, then pairwise merges up a left-to-right binary tree.

    An odd node at any level is promoted unchanged. The pairing depends only
    on block order, so results do not depend on thread scheduling.
    """
    n = dtype = None
    total = 0
    executor = ThreadPoolExecutor(plan.workers) if plan.workers > 1 else None
    try:
        leaves = []
        for index, chunk in enumerate(source):
            chunk = _validate_chunk(chunk, index, n, dtype)
            if n is None:
                n, dtype = chunk.shape[1], chunk.dtype
            total += chunk.shape[0]
            if executor is None:
                leaves.append(_leaf(chunk, n, dtype))
            else:
                leaves.append(executor.submit(_leaf, np.array(chunk, dtype=dtype), n, dtype))
        if not leaves:
            raise DimensionError("chunk source is empty")
        level = [f.result() if executor is not None else f for f in leaves]
        while len(level) > 1:
            pairs = [(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
            if executor is None:
                merged = [combine(a, b) for a, b in pairs]
            else:
                merged = list(executor.map(lambda p: combine(*p), pairs))
            if len(level) % 2:
                merged.append(level[-1])
            level = merged
    finally:
        if executor is not None:
            executor.shutdown()
    return RFactor(level[0], total_rows=total, short_data=total < n)


def tree_depth(n_chunks: int) -> int:
    return math.ceil(math.log2(n_chunks)) if n_chunks > 1 else 0


def run_plan(source: Iterable, plan: TsqrPlan, meter: BufferMeter | None = None) -> RFactor:
    if plan.strategy is Strategy.TREE:
        return tsqr_tree(source, plan)
    return tsqr_sequential(source, meter)


def augment_with_regularizer(R, mu: float):
    """Return R' with ``R'^T R' = R^T R + mu I`` via QR of ``[R; sqrt(mu) I]``.

    Accepts an :class:`RFactor` or a bare array and returns the same kind;
    ``mu == 0`` hands back the input object itself.
    """
    if not mu >= 0:
        raise PreconditionError(f"mu must be non-negative, got {mu}")
    if mu == 0:
        return R
    mat = R.matrix if isinstance(R, RFactor) else np.asarray(R)
    n = mat.shape[1]
    if mat.shape[0] != n:
        raise DimensionError(f"R must be square, got {mat.shape}")
    scaled = np.eye(n, dtype=mat.dtype) * mat.dtype.type(np.sqrt(mu))
    out = combine(mat, scaled)
    if isinstance(R, RFactor):
        return RFactor(out, total_rows=R.total_rows, short_data=False, mu=R.mu + float(mu))
    return out
