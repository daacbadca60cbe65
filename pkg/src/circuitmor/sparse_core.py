"""Sparse storage, direct factorization, and block orthogonalization kernels.

Every other module works in terms of the two data types defined here:
``SparseMatrix`` for the immutable circuit system blocks, and plain
``numpy.ndarray`` column blocks for dense data.  Factorizations are computed
once and reused across many right-hand sides.
"""

from __future__ import annotations

import numpy as np
import scipy.io
import scipy.sparse as sp
from scipy.sparse.linalg import splu


class SingularMatrixError(RuntimeError):
    """Raised when a solve is requested against a singular factorization."""


class SparseMatrix:
    """Immutable real sparse matrix (CSC storage).

    Duplicate (row, col) entries are summed at build time.  Values must be
    finite.  ``symmetric`` is a storage hint used by the Matrix Market writer;
    it is not enforced numerically.
    """

    __slots__ = ("csc", "symmetric")

    def __init__(self, data, shape=None, symmetric=False):
        csc = sp.csc_matrix(data, shape=shape, dtype=float)
        csc.sum_duplicates()
        csc.sort_indices()
        if csc.nnz and not np.all(np.isfinite(csc.data)):
            raise ValueError("sparse matrix contains non-finite entries")
        self.csc = csc
        self.symmetric = bool(symmetric)

    @classmethod
    def from_triplets(cls, nrows, ncols, rows, cols, values, symmetric=False):
        """Assemble from (row, col, value) triplets; duplicates are summed."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=float)
        if rows.size and (rows.min() < 0 or rows.max() >= nrows):
            raise ValueError("row index out of range")
        if cols.size and (cols.min() < 0 or cols.max() >= ncols):
            raise ValueError("column index out of range")
        coo = sp.coo_matrix((values, (rows, cols)), shape=(nrows, ncols))
        return cls(coo.tocsc(), symmetric=symmetric)

    @property
    def shape(self):
        return self.csc.shape

    @property
    def nrows(self):
        return self.csc.shape[0]

    @property
    def ncols(self):
        return self.csc.shape[1]

    @property
    def nnz(self):
        return self.csc.nnz

    @property
    def T(self):
        return SparseMatrix(self.csc.T.tocsc(), symmetric=self.symmetric)

    def toarray(self):
        return self.csc.toarray()

    def __matmul__(self, other):
        if isinstance(other, SparseMatrix):
            return SparseMatrix(self.csc @ other.csc)
        return self.csc @ np.asarray(other)

    def __repr__(self):
        return f"SparseMatrix({self.nrows}x{self.ncols}, nnz={self.nnz})"


def sparse_zeros(nrows, ncols):
    return SparseMatrix(sp.csc_matrix((nrows, ncols)))


def sparse_eye(n):
    return SparseMatrix(sp.identity(n, format="csc"))


def sparse_diag(values):
    values = np.asarray(values, dtype=float)
    return SparseMatrix(sp.diags(values).tocsc(), symmetric=True)


def sparse_block(blocks):
    """Assemble a block matrix from a 2D list of SparseMatrix/None entries."""
    grid = [[b.csc if isinstance(b, SparseMatrix) else b for b in row] for row in blocks]
    return SparseMatrix(sp.bmat(grid, format="csc"))


class Factorization:
    """Reusable LU factorization of a square SparseMatrix.

    Singularity (structural or a pivot below tolerance) sets ``singular``
    together with diagnostics instead of raising at factorization time;
    ``solve`` raises ``SingularMatrixError`` when the flag is set.
    """

    def __init__(self, n, lu=None, singular=False, bad_columns=(), pivot_magnitude=None):
        self.n = n
        self._lu = lu
        self.singular = singular
        self.bad_columns = list(bad_columns)
        self.pivot_magnitude = pivot_magnitude

    def solve(self, rhs):
        """Solve A @ Y = rhs for one vector or a column block."""
        if self.singular:
            raise SingularMatrixError(
                f"matrix is singular (columns {self.bad_columns}, "
                f"pivot magnitude {self.pivot_magnitude!r})"
            )
        rhs = np.asarray(rhs, dtype=float)
        squeeze = rhs.ndim == 1
        if squeeze:
            rhs = rhs[:, None]
        if rhs.shape[0] != self.n:
            raise ValueError(f"rhs has {rhs.shape[0]} rows, expected {self.n}")
        if self.n == 0 or rhs.shape[1] == 0:
            out = np.zeros_like(rhs)
        else:
            out = self._lu.solve(np.ascontiguousarray(rhs))
        return out[:, 0] if squeeze else out

    def __repr__(self):
        tag = "singular" if self.singular else "ok"
        return f"Factorization(n={self.n}, {tag})"


def factorize(A, pivot_rtol=1e-14):
    """Sparse LU with partial pivoting and fill-reducing column ordering.

    Never raises on singular input: the returned factorization carries a
    ``singular`` flag plus the offending column indices and the smallest
    pivot magnitude encountered.
    """
    if A.nrows != A.ncols:
        raise ValueError(f"matrix is {A.nrows}x{A.ncols}, expected square")
    n = A.nrows
    if n == 0:
        return Factorization(0)

    # Structurally empty columns or rows make the matrix singular outright.
    col_nnz = np.diff(A.csc.indptr)
    row_nnz = np.bincount(A.csc.indices, minlength=n) if A.nnz else np.zeros(n, dtype=int)
    empty = np.flatnonzero((col_nnz == 0) | (row_nnz == 0))
    if empty.size:
        return Factorization(n, singular=True, bad_columns=empty.tolist(), pivot_magnitude=0.0)

    try:
        lu = splu(A.csc)
    except RuntimeError:
        return Factorization(n, singular=True, bad_columns=[-1], pivot_magnitude=0.0)

    udiag = np.abs(lu.U.diagonal())
    ref = udiag.max() if udiag.size else 0.0
    k = int(np.argmin(udiag))
    if ref == 0.0 or udiag[k] <= pivot_rtol * ref:
        # U column k maps back through the fill-reducing column permutation.
        bad = int(np.flatnonzero(lu.perm_c == k)[0])
        return Factorization(n, singular=True, bad_columns=[bad], pivot_magnitude=float(udiag[k]))
    return Factorization(n, lu=lu)


def solve(F, rhs):
    """Solve against a Factorization; thin wrapper over ``F.solve``."""
    return F.solve(rhs)


def spmm(A, X):
    """Sparse-dense product A @ X."""
    X = np.asarray(X, dtype=float)
    ncols = X.shape[0] if X.ndim else None
    if ncols != A.ncols:
        raise ValueError(f"inner dimensions disagree: {A.shape} @ {X.shape}")
    return A.csc @ X


def _mgs(X, tol=1e-10):
    """Modified Gram-Schmidt with rank-revealing column drops.

    Returns (Q, kept) where kept lists the input column indices that
    survived.  A column is dropped when its norm after orthogonalization
    falls below tol times its original norm.  Two orthogonalization passes
    per column keep the basis orthonormal to roundoff.
    """
    X = np.array(X, dtype=float, order="F", copy=True)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    Q = np.empty((n, k), order="F")
    kept = []
    d = 0
    for j in range(k):
        v = X[:, j].copy()
        v0 = np.linalg.norm(v)
        if v0 == 0.0:
            continue
        for _ in range(2):
            if d:
                v -= Q[:, :d] @ (Q[:, :d].T @ v)
        nv = np.linalg.norm(v)
        if nv < tol * v0:
            continue
        Q[:, d] = v / nv
        kept.append(j)
        d += 1
    return np.array(Q[:, :d], order="F"), kept


def qr_orth(X, tol=1e-10):
    """Orthonormal basis of range(X); numerically dependent columns dropped.

    All-zero input yields an empty (n, 0) basis.
    """
    Q, _ = _mgs(X, tol=tol)
    return Q


def orth_wrt(X1, Xj, p, blocks=None):
    """Orthogonalize the columns of X1 against the orthonormal basis Xj.

    Xj is swept block by block (default grouping: consecutive blocks of 2*p
    columns); explicit (start, stop) pairs may be passed instead when block
    widths vary.  The sweep runs twice: a single pass loses orthogonality
    once the basis is wide.
    """
    X1 = np.array(X1, dtype=float, order="F", copy=True)
    if X1.ndim == 1:
        X1 = X1[:, None]
    d = Xj.shape[1]
    if blocks is None:
        if p <= 0 or d % (2 * p):
            raise ValueError(f"basis width {d} is not a multiple of block size {2 * p}")
        blocks = [(lo, lo + 2 * p) for lo in range(0, d, 2 * p)]
    for _ in range(2):
        for lo, hi in blocks:
            Qb = Xj[:, lo:hi]
            X1 -= Qb @ (Qb.T @ X1)
    return X1


# ---------------------------------------------------------------------------
# Serialization: Matrix Market for sparse/dense matrices, CSV for debug dumps.

def write_matrix_market(path, A, comment=""):
    symmetry = "symmetric" if A.symmetric else "general"
    scipy.io.mmwrite(str(path), A.csc, comment=comment, symmetry=symmetry)


def read_matrix_market(path):
    info = scipy.io.mminfo(str(path))
    mat = scipy.io.mmread(str(path))
    return SparseMatrix(sp.csc_matrix(mat), symmetric=(info[5] == "symmetric"))


def write_dense_matrix_market(path, X, comment=""):
    scipy.io.mmwrite(str(path), np.atleast_2d(np.asarray(X, dtype=float)), comment=comment)


def read_dense_matrix_market(path):
    return np.asarray(scipy.io.mmread(str(path)), dtype=float)


def write_dense_csv(path, X):
    np.savetxt(str(path), np.atleast_2d(X), delimiter=",")


def read_dense_csv(path):
    return np.atleast_2d(np.loadtxt(str(path), delimiter=",", ndmin=2))
