"""Dense small-matrix kernel shared by topology, lmi, synthesis and sim.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. The kernel adds
the validation, tolerances and error semantics the rest of the package relies
on; the numerical work itself goes through LAPACK via numpy/scipy.
"""

from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np
import scipy.linalg

from models.errors import NonFiniteEntries, NotSymmetric, Overflow, ShapeMismatch, Singular

# Module tolerances; callers override them per call through keyword arguments.
SYMMETRY_TOL = 1e-10
EIG_RESIDUAL_TOL = 1e-9
SOLVE_RESIDUAL_TOL = 1e-9
CONDITION_LIMIT = 1e12

Mat = np.ndarray
MatLike = Union[np.ndarray, Sequence[Sequence[float]]]


@dataclass(frozen=True)
class SymEig:
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix"""
    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.T


@dataclass(frozen=True)
class DefinitenessReport:
    positive: bool
    min_eigenvalue: float

    def __bool__(self):
        return self.positive


def as_matrix(a: MatLike, name: str = "matrix") -> np.ndarray:
    """Coerce ``a`` to a finite 2-D float array"""
    arr = np.array(a, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ShapeMismatch(f"{name} must be two-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteEntries(f"{name} has non-finite entries")
    return arr


def from_entries(rows: int, cols: int, entries: Iterable[float], name: str = "matrix") -> np.ndarray:
    """Build a matrix from row-major entries, checking the declared dimensions"""
    values = [float(v) for v in entries]
    if rows <= 0 or cols <= 0:
        raise ShapeMismatch(f"{name}: dimensions must be positive, got {rows}x{cols}")
    if len(values) != rows * cols:
        raise ShapeMismatch(
            f"{name}: expected {rows}x{cols}={rows * cols} entries, got {len(values)}")
    return as_matrix(np.array(values).reshape(rows, cols), name)


def to_entries(a: np.ndarray) -> list:
    return [float(v) for v in np.asarray(a, dtype=float).ravel()]


def symmetry_residual(s: np.ndarray) -> float:
    """Frobenius asymmetry relative to the matrix norm"""
    s = np.asarray(s, dtype=float)
    scale = max(np.linalg.norm(s), 1.0)
    return float(np.linalg.norm(s - s.T) / scale)


def symmetrize(s: np.ndarray) -> np.ndarray:
    return 0.5 * (s + s.T)


def _require_symmetric(s: np.ndarray, tol: float) -> np.ndarray:
    s = as_matrix(s)
    if s.shape[0] != s.shape[1]:
        raise NotSymmetric(f"matrix is not square: {s.shape}")
    if symmetry_residual(s) > tol:
        raise NotSymmetric(f"asymmetry {symmetry_residual(s):.3e} exceeds {tol:.1e}")
    return symmetrize(s)


def kron(a: MatLike, b: MatLike) -> np.ndarray:
    return np.kron(as_matrix(a, "a"), as_matrix(b, "b"))


def sym_eig(s: MatLike, symmetry_tol: float = SYMMETRY_TOL,
            residual_tol: float = EIG_RESIDUAL_TOL) -> SymEig:
    """
    Symmetric eigendecomposition with a reconstruction check

    Args:
        s: Symmetric matrix
        symmetry_tol: Allowed relative asymmetry
        residual_tol: Allowed ``‖s·V − V·diag(λ)‖`` relative to ``‖s‖``

    Returns:
        SymEig with ascending eigenvalues
    """
    s = _require_symmetric(s, symmetry_tol)
    values, vectors = scipy.linalg.eigh(s)
    residual = np.linalg.norm(s @ vectors - vectors * values)
    if residual > residual_tol * max(np.linalg.norm(s), 1.0):
        raise Singular(f"eigendecomposition residual {residual:.3e} too large")
    return SymEig(values=values, vectors=vectors)


def eigvalsh(s: MatLike, symmetry_tol: float = SYMMETRY_TOL) -> np.ndarray:
    return scipy.linalg.eigvalsh(_require_symmetric(s, symmetry_tol))


def is_pd(s: MatLike, margin: float = 0.0, symmetry_tol: float = SYMMETRY_TOL) -> DefinitenessReport:
    """True iff the smallest eigenvalue of ``s`` exceeds ``margin``"""
    values = eigvalsh(s, symmetry_tol)
    lowest = float(values[0])
    return DefinitenessReport(positive=lowest > margin, min_eigenvalue=lowest)


def solve(a: MatLike, b: MatLike, condition_limit: float = CONDITION_LIMIT,
          residual_tol: float = SOLVE_RESIDUAL_TOL) -> np.ndarray:
    """Solve ``a·x = b`` for a square, well-conditioned ``a``"""
    a = as_matrix(a, "a")
    b_arr = np.array(b, dtype=float)
    vector_rhs = b_arr.ndim == 1
    b = as_matrix(b_arr, "b")
    if a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"solve needs a square matrix, got {a.shape}")
    if a.shape[0] != b.shape[0]:
        raise ShapeMismatch(f"solve: {a.shape} incompatible with right-hand side {b.shape}")

    condition = np.linalg.cond(a)
    if not np.isfinite(condition) or condition > condition_limit:
        raise Singular(f"condition estimate {condition:.3e} exceeds {condition_limit:.1e}")
    try:
        x = scipy.linalg.solve(a, b)
    except (scipy.linalg.LinAlgError, ValueError) as e:
        raise Singular(str(e)) from e

    residual = np.linalg.norm(a @ x - b)
    if residual > residual_tol * max(np.linalg.norm(b), 1.0):
        raise Singular(f"solve residual {residual:.3e} too large")
    return x.ravel() if vector_rhs else x


def expm(a: MatLike, t: float = 1.0) -> np.ndarray:
    """Matrix exponential ``e^{a·t}``"""
    a = as_matrix(a, "a")
    if a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"expm needs a square matrix, got {a.shape}")
    with np.errstate(over='ignore', invalid='ignore'):
        result = scipy.linalg.expm(a * float(t))
    if not np.all(np.isfinite(result)):
        raise Overflow(f"e^(A·{t}) is not representable")
    return result
