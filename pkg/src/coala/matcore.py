"""Dense matrix container, precision control and the shared domain types.

Solvers work on plain ``numpy`` arrays; :class:`DenseMatrix` is the validated,
immutable wrapper used at I/O boundaries and anywhere a caller wants the
finite-entries guarantee spelled out. Every function here accepts either.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Union

import numpy as np

ArrayLike = Union["DenseMatrix", np.ndarray]


class CoalaError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(CoalaError, ValueError):
    """Shapes of the supplied matrices are incompatible."""


class PreconditionError(CoalaError, ValueError):
    """An input violates a documented precondition (rank, sign, ordering)."""


class NumericalFailure(CoalaError, ArithmeticError):
    """A factorization broke down or produced non-finite output."""


class CholeskyBreakdown(NumericalFailure):
    def __init__(self, pivot: int, detail: str = ""):
        self.pivot = pivot
        msg = f"Cholesky factorization failed at pivot {pivot}: leading minor not positive definite"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class Precision(str, enum.Enum):
    SINGLE = "single"
    DOUBLE = "double"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.float32) if self is Precision.SINGLE else np.dtype(np.float64)

    @property
    def eps(self) -> float:
        return float(np.finfo(self.dtype).eps)

    @classmethod
    def parse(cls, value) -> "Precision":
        if isinstance(value, Precision):
            return value
        key = str(value).lower()
        aliases = {"f32": cls.SINGLE, "float32": cls.SINGLE, "single": cls.SINGLE,
                   "f64": cls.DOUBLE, "float64": cls.DOUBLE, "double": cls.DOUBLE}
        if key not in aliases:
            raise PreconditionError(f"unknown precision {value!r}; expected f32 or f64")
        return aliases[key]

    @classmethod
    def of(cls, array: np.ndarray) -> "Precision":
        return cls.SINGLE if np.asarray(array).dtype == np.float32 else cls.DOUBLE


@dataclass(frozen=True)
class Tolerances:
    """Default numerical tolerances; pass a modified copy to override per call."""

    orth_single: float = 1e-6
    orth_double: float = 1e-10
    objective_rtol_single: float = 1e-3
    objective_rtol_double: float = 1e-8
    # sigma_r - sigma_{r+1} at or below gap_rtol * sigma_1 marks the subspace as non-unique
    gap_rtol_single: float = 1e-5
    gap_rtol_double: float = 1e-12
    # solve_reference refuses X with sigma_min / sigma_max at or below this
    reference_min_rcond: float = 1e-10

    def orth(self, precision: Precision) -> float:
        return self.orth_single if precision is Precision.SINGLE else self.orth_double

    def objective_rtol(self, precision: Precision) -> float:
        return self.objective_rtol_single if precision is Precision.SINGLE else self.objective_rtol_double

    def gap_rtol(self, precision: Precision) -> float:
        return self.gap_rtol_single if precision is Precision.SINGLE else self.gap_rtol_double


DEFAULT_TOLERANCES = Tolerances()


def as_array(x: ArrayLike, name: str = "matrix", dtype=None) -> np.ndarray:
    """Return ``x`` as a finite 2-D float32/float64 array.

    Integer and other real inputs are promoted to float64; float32 is kept so
    single-precision experiments stay single precision.
    """
    if isinstance(x, DenseMatrix):
        arr = x.array
    else:
        arr = np.asarray(x)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    elif arr.dtype not in (np.float32, np.float64):
        if np.iscomplexobj(arr):
            raise PreconditionError(f"{name} must be real-valued")
        arr = arr.astype(np.float64)
    if not np.all(np.isfinite(arr)):
        raise PreconditionError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class DenseMatrix:
    """Immutable, finite, real matrix in single or double precision."""

    array: np.ndarray

    def __post_init__(self):
        arr = np.array(as_array(self.array), copy=True, order="C")
        arr.setflags(write=False)
        object.__setattr__(self, "array", arr)

    @classmethod
    def from_flat(cls, rows: int, cols: int, data, precision="double") -> "DenseMatrix":
        if rows < 1 or cols < 1:
            raise DimensionError(f"rows and cols must be positive, got {rows}x{cols}")
        flat = np.asarray(data, dtype=Precision.parse(precision).dtype).ravel()
        if flat.size != rows * cols:
            raise DimensionError(f"data length {flat.size} != rows*cols = {rows * cols}")
        return cls(flat.reshape(rows, cols))

    @property
    def rows(self) -> int:
        return self.array.shape[0]

    @property
    def cols(self) -> int:
        return self.array.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.array.shape

    @property
    def precision(self) -> Precision:
        return Precision.of(self.array)

    @property
    def data(self) -> np.ndarray:
        """Row-major flat view of the entries."""
        return self.array.ravel()

    def astype(self, precision) -> "DenseMatrix":
        return DenseMatrix(self.array.astype(Precision.parse(precision).dtype))

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.array
        return self.array.astype(dtype)

    def __repr__(self):
        return f"DenseMatrix({self.rows}x{self.cols}, {self.precision.value})"


@dataclass(frozen=True)
class ProblemInstance:
    """One weighted approximation task: minimize ||(W - W')X||_F over rank(W') <= r.

    ``mu`` is the weight of the ``||W' - W||_F^2`` regularizer and ``alpha`` the
    exponent of the generalized weighting ``(X X^T)^alpha``; each solver reads
    only the fields it needs.
    """

    W: np.ndarray
    X: np.ndarray
    r: int
    mu: float = 0.0
    alpha: int = 1

    def __post_init__(self):
        W = as_array(self.W, "W")
        X = as_array(self.X, "X")
        dtype = np.result_type(W.dtype, X.dtype)
        W, X = W.astype(dtype, copy=False), X.astype(dtype, copy=False)
        if X.shape[0] != W.shape[1]:
            raise DimensionError(
                f"W is {W.shape[0]}x{W.shape[1]} but X is {X.shape[0]}x{X.shape[1]}: "
                f"X.rows must equal W.cols")
        check_rank(self.r, W.shape)
        if not self.mu >= 0:
            raise PreconditionError(f"mu must be non-negative, got {self.mu}")
        check_alpha(self.alpha)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "mu", float(self.mu))

    @property
    def m(self) -> int:
        return self.W.shape[0]

    @property
    def n(self) -> int:
        return self.W.shape[1]

    @property
    def k(self) -> int:
        return self.X.shape[1]

    @property
    def precision(self) -> Precision:
        return Precision.of(self.W)

    def astype(self, precision) -> "ProblemInstance":
        dtype = Precision.parse(precision).dtype
        return ProblemInstance(self.W.astype(dtype), self.X.astype(dtype), self.r, self.mu, self.alpha)


def check_rank(r, shape) -> None:
    m, n = shape
    if isinstance(r, bool) or not isinstance(r, (int, np.integer)):
        raise PreconditionError(f"invalid rank {r!r}: must be an integer")
    if not 1 <= r <= min(m, n):
        raise PreconditionError(f"invalid rank {r}: must satisfy 1 <= r <= min(m, n) = {min(m, n)}")


def check_alpha(alpha) -> None:
    if isinstance(alpha, bool) or not isinstance(alpha, (int, np.integer)):
        raise PreconditionError(f"alpha must be a non-negative integer, got {alpha!r}")
    if alpha < 0:
        raise PreconditionError(f"alpha must be a non-negative integer, got {alpha}")


@dataclass
class SolveStatus:
    method: str
    path_taken: str
    degenerate: bool = False
    gap_degenerate: bool = False
    elapsed_seconds: float = 0.0


@dataclass
class FactorPair:
    """Rank-r factors with ``W' = A @ B``; the rank bound holds by shape."""

    A: np.ndarray
    B: np.ndarray
    status: SolveStatus | None = None

    def __post_init__(self):
        if self.A.ndim != 2 or self.B.ndim != 2 or self.A.shape[1] != self.B.shape[0]:
            raise DimensionError(
                f"factor shapes {self.A.shape} and {self.B.shape} do not chain: A.cols must equal B.rows")

    @property
    def rank(self) -> int:
        return self.A.shape[1]

    def product(self) -> np.ndarray:
        return self.A @ self.B

    def orthonormality_error(self) -> float:
        A = self.A.astype(np.float64)
        return float(np.linalg.norm(A.T @ A - np.eye(A.shape[1])))


@dataclass(frozen=True)
class RFactor:
    """Upper-triangular ``n x n`` R with ``R^T R = X X^T`` (plus ``mu I`` if augmented).

    ``short_data`` records that fewer than n samples went in, so R carries
    zero rows at the bottom.
    """

    matrix: np.ndarray
    total_rows: int
    short_data: bool = False
    mu: float = 0.0

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    def gram(self) -> np.ndarray:
        R = self.matrix.astype(np.float64)
        return R.T @ R


@dataclass(frozen=True)
class SpectralSummary:
    sigmas: np.ndarray = field(repr=False)

    def __post_init__(self):
        s = np.asarray(self.sigmas, dtype=np.float64)
        if s.ndim != 1 or np.any(s < 0) or np.any(np.diff(s) > 0):
            raise PreconditionError("sigmas must be a non-increasing 1-D array of non-negative values")
        s = s.copy()
        s.setflags(write=False)
        object.__setattr__(self, "sigmas", s)

    @classmethod
    def of(cls, M: ArrayLike) -> "SpectralSummary":
        M = as_array(M).astype(np.float64)
        return cls(np.linalg.svd(M, compute_uv=False))

    def sigma(self, i: int) -> float:
        """1-based singular value; zero past the end of the stored spectrum."""
        return float(self.sigmas[i - 1]) if i <= self.sigmas.size else 0.0

    def gap_at(self, r: int) -> float:
        return self.sigma(r) - self.sigma(r + 1)

    def tail_energy(self, r: int) -> float:
        return float(np.sqrt(np.sum(self.sigmas[r:] ** 2)))

    def head_energy(self, r: int) -> float:
        return float(np.sqrt(np.sum(self.sigmas[:r] ** 2)))

    def frobenius(self) -> float:
        return float(np.sqrt(np.sum(self.sigmas ** 2)))


def _check_chain(W: np.ndarray, factors: FactorPair, X: np.ndarray) -> None:
    m, n = W.shape
    if factors.A.shape[0] != m or factors.B.shape[1] != n:
        raise DimensionError(
            f"factors produce a {factors.A.shape[0]}x{factors.B.shape[1]} matrix but W is {m}x{n}")
    if X.shape[0] != n:
        raise DimensionError(f"X has {X.shape[0]} rows but W has {n} columns")


def objective_value(W: ArrayLike, factors: FactorPair, X: ArrayLike) -> float:
    """``||(W - A B) X||_F`` evaluated in double precision."""
    W = as_array(W, "W").astype(np.float64)
    X = as_array(X, "X").astype(np.float64)
    _check_chain(W, factors, X)
    D = W - factors.A.astype(np.float64) @ factors.B.astype(np.float64)
    return float(np.linalg.norm(D @ X))


def regularized_objective(W: ArrayLike, factors: FactorPair, X: ArrayLike, mu: float) -> float:
    """``||(W - W')X||_F^2 + mu ||W' - W||_F^2`` (squared form)."""
    if not mu >= 0:
        raise PreconditionError(f"mu must be non-negative, got {mu}")
    W = as_array(W, "W").astype(np.float64)
    X = as_array(X, "X").astype(np.float64)
    _check_chain(W, factors, X)
    D = W - factors.A.astype(np.float64) @ factors.B.astype(np.float64)
    return float(np.linalg.norm(D @ X) ** 2 + mu * np.linalg.norm(D) ** 2)


def subspace_distance(A1: ArrayLike, A2: ArrayLike, tolerances: Tolerances = DEFAULT_TOLERANCES) -> float:
    """Projector distance ``||A1 A1^T - A2 A2^T||_F`` between orthonormal bases."""
    A1 = as_array(A1, "A1")
    A2 = as_array(A2, "A2")
    if A1.shape != A2.shape:
        raise DimensionError(f"bases have different shapes {A1.shape} and {A2.shape}")
    for name, A in (("A1", A1), ("A2", A2)):
        tol = tolerances.orth(Precision.of(A))
        A64 = A.astype(np.float64)
        err = np.linalg.norm(A64.T @ A64 - np.eye(A.shape[1]))
        if err > tol:
            raise PreconditionError(f"{name} columns are not orthonormal: ||A^T A - I||_F = {err:.3e} > {tol:.1e}")
    A1 = A1.astype(np.float64)
    A2 = A2.astype(np.float64)
    return float(np.linalg.norm(A1 @ A1.T - A2 @ A2.T))
