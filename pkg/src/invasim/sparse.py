"""
Compressed-sparse-row matrices and a Jacobi-preconditioned conjugate
gradient solver with a mean-free mode for singular periodic/Neumann systems.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp


class SolverError(RuntimeError):
    """Linear solve failed (non-convergence or incompatible data)."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Square CSR matrix with strictly increasing column indices per row."""

    row_offsets: np.ndarray
    column_indices: np.ndarray
    values: np.ndarray
    n: int

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def nnz(self) -> int:
        return len(self.values)

    @cached_property
    def _csr(self) -> sp.csr_matrix:
        # shares memory with the arrays above; used only for fast products
        return sp.csr_matrix((self.values, self.column_indices, self.row_offsets), shape=self.shape)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self._csr @ x

    def __matmul__(self, x):
        return self.matvec(x)

    def diagonal(self) -> np.ndarray:
        return self._csr.diagonal()

    def toarray(self) -> np.ndarray:
        return self._csr.toarray()

    def to_scipy(self) -> sp.csr_matrix:
        return self._csr.copy()

    def same_pattern(self, values: np.ndarray) -> "SparseMatrix":
        return SparseMatrix(self.row_offsets, self.column_indices, np.asarray(values, float), self.n)

    def __add__(self, other: "SparseMatrix") -> "SparseMatrix":
        if other.n != self.n:
            raise ValueError("shape mismatch")
        if other.row_offsets is self.row_offsets and other.column_indices is self.column_indices:
            return self.same_pattern(self.values + other.values)
        return from_scipy(self._csr + other._csr)

    def __mul__(self, scalar: float) -> "SparseMatrix":
        return self.same_pattern(float(scalar) * self.values)

    __rmul__ = __mul__

    def is_symmetric(self, rtol: float = 1e-14) -> bool:
        d = abs(self._csr - self._csr.T)
        scale = abs(self.values).max(initial=0.0)
        return d.nnz == 0 or d.max() <= rtol * scale

    def row_sums(self) -> np.ndarray:
        return np.asarray(self._csr.sum(axis=1)).ravel()


def from_scipy(a) -> SparseMatrix:
    a = sp.csr_matrix(a)
    a.sum_duplicates()
    a.sort_indices()
    return SparseMatrix(a.indptr.astype(np.int64), a.indices.astype(np.int64), a.data.astype(float), a.shape[0])


def from_triplets(n: int, rows, cols=None, vals=None) -> SparseMatrix:
    """Build an ``n x n`` CSR matrix, summing duplicate entries.

    Accepts either three parallel arrays or a single list of
    ``(row, col, value)`` tuples.
    """
    if cols is None:
        entries = list(rows)
        if entries:
            rows, cols, vals = (np.asarray(c) for c in zip(*entries))
        else:
            rows = cols = vals = np.zeros(0)
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=float).ravel()
    if not (len(rows) == len(cols) == len(vals)):
        raise ValueError("rows, cols and vals must have equal length")
    if len(rows) and (rows.min() < 0 or cols.min() < 0 or rows.max() >= n or cols.max() >= n):
        raise IndexError(f"triplet index out of range for a {n}x{n} matrix")
    pattern = Pattern.from_indices(n, rows, cols)
    return pattern.assemble(vals)


@dataclass(frozen=True, eq=False)
class Pattern:
    """Sparsity pattern plus the scatter map from a fixed triplet layout.

    Reusing a pattern makes repeated assembly with the same ``(rows, cols)``
    a single ``bincount``.
    """

    row_offsets: np.ndarray
    column_indices: np.ndarray
    scatter: np.ndarray
    n: int

    @classmethod
    def from_indices(cls, n: int, rows: np.ndarray, cols: np.ndarray) -> "Pattern":
        keys = rows * n + cols
        uniq, inverse = np.unique(keys, return_inverse=True)
        r = uniq // n
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(r, minlength=n), out=offsets[1:])
        return cls(offsets, (uniq % n).astype(np.int64), inverse.ravel(), n)

    def assemble(self, vals: np.ndarray) -> SparseMatrix:
        v = np.bincount(self.scatter, weights=np.asarray(vals, float).ravel(), minlength=len(self.column_indices))
        return SparseMatrix(self.row_offsets, self.column_indices, v, self.n)


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    final_residual: float  # relative, ||b - A x|| / ||b||
    converged: bool


def cg_solve(A: SparseMatrix, b, tol: float = 1e-10, max_iter: int | None = None,
             mean_free: bool = False, x0=None, preconditioner: str = "jacobi",
             raise_on_failure: bool = True):
    """Preconditioned conjugate gradients for symmetric positive (semi)definite ``A``.

    Parameters
    ----------
    tol : float
        Target relative residual ``||b - A x|| / ||b||``.
    max_iter : int, optional
        Defaults to ``10 * n``.
    mean_free : bool
        Solve a singular system whose kernel is the constant vector. ``b``
        must be orthogonal to constants within ``tol``; the constant
        component is projected out of the iterate every iteration and the
        returned solution has zero mean.
    preconditioner : {"jacobi", "none"}

    Returns
    -------
    x : ndarray
    report : SolveReport
    """
    b = np.asarray(b, dtype=float)
    n = A.n
    if b.shape != (n,):
        raise ValueError(f"right-hand side has shape {b.shape}, expected ({n},)")
    max_iter = 10 * n if max_iter is None else max_iter
    bnorm = np.linalg.norm(b)

    if mean_free:
        # compatibility: cosine between b and the constant vector
        if bnorm > 0 and abs(b.sum()) / (np.sqrt(n) * bnorm) > tol:
            raise SolverError("right-hand side is not orthogonal to constants; "
                              "the singular system is incompatible")
        b = b - b.mean()
        bnorm = np.linalg.norm(b)

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if mean_free:
        x -= x.mean()
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True)
    prev_res = np.inf

    if preconditioner == "jacobi":
        d = A.diagonal()
        inv_diag = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), 1.0)
    elif preconditioner == "none":
        inv_diag = np.ones(n)
    else:
        raise ValueError(f"unknown preconditioner {preconditioner!r}")

    k = 0
    while True:
        k, res = _pcg_sweep(A, b, x, inv_diag, tol, max_iter, k, bnorm, mean_free)
        # the recursive residual drifts from the true one; restart from the
        # true residual until it also meets the tolerance
        r_true = b - A @ x
        if mean_free:
            r_true -= r_true.mean()
        res = float(np.linalg.norm(r_true) / bnorm)
        if res <= tol or k >= max_iter or res >= 0.5 * prev_res:
            break
        prev_res = res
    report = SolveReport(k, res, res <= tol)
    if not report.converged and raise_on_failure:
        raise SolverError(f"CG did not converge: residual {res:.3e} after {k} iterations", report)
    return x, report


def _pcg_sweep(A, b, x, inv_diag, tol, max_iter, k, bnorm, mean_free):
    """PCG iterations updating ``x`` in place; returns (iterations, recursive residual)."""
    r = b - A @ x
    if mean_free:
        r -= r.mean()
    res = np.linalg.norm(r) / bnorm
    if res <= tol:
        return k, res
    z = inv_diag * r
    if mean_free:
        z -= z.mean()
    p = z.copy()
    rz = r @ z
    while k < max_iter:
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if mean_free:
            x -= x.mean()
            r -= r.mean()
        k += 1
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            break
        z = inv_diag * r
        if mean_free:
            z -= z.mean()
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return k, res
