"""Detection and elimination of the singular part of a descriptor model.

Nodes without any capacitive connection make the descriptor mass matrix
singular (all-zero rows).  Those algebraic node voltages can be eliminated
through the Schur complement of the corresponding conductance block,
yielding a regular model with state dimension n1 + m.  The eliminated block
renders the reduced system matrix dense, so all solves and products with it
are implemented against the original sparse blocks: solves go through a
bordered sparse system that carries the eliminated unknowns along, and
products use the low-rank correction form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .netlist import capacitive_node_mask
from .sparse_core import (
    Factorization,
    SparseMatrix,
    factorize,
    sparse_block,
    sparse_zeros,
)


class RegularizationError(RuntimeError):
    """Conductance block of the eliminated nodes is singular."""


@dataclass
class PartitionedModel:
    """Permuted block structure with capacitive nodes first.

    ``perm`` maps new position -> original node index; the first n1 entries
    are the capacitive nodes.  F22 is the reusable factorization of G22.
    """

    perm: np.ndarray
    n1: int
    n2: int
    m: int
    p: int
    q: int
    G11: SparseMatrix
    G12: SparseMatrix
    G22: SparseMatrix
    W1: SparseMatrix
    W2: SparseMatrix
    C1: SparseMatrix
    M: SparseMatrix
    B1: SparseMatrix
    B2: SparseMatrix
    L1: SparseMatrix
    L2: SparseMatrix
    D: SparseMatrix
    F22: Factorization

    _bordered: Factorization = field(default=None, repr=False)
    _bordered_matrix: SparseMatrix = field(default=None, repr=False)
    _E: SparseMatrix = field(default=None, repr=False)
    _rhs: tuple = field(default=None, repr=False)
    _feedthrough: np.ndarray = field(default=None, repr=False)

    @property
    def order(self):
        """State dimension of the regularized model."""
        return self.n1 + self.m

    @property
    def E(self):
        """Regularized mass matrix diag(C1, M); nonsingular by construction."""
        if self._E is None:
            self._E = sparse_block([[self.C1, None], [None, self.M]])
            self._E.symmetric = True
        return self._E

    @property
    def bordered_matrix(self):
        """Sparse bordered form of the regularized system matrix.

        Eliminating the trailing n2 unknowns of this matrix reproduces the
        dense Schur-complement system matrix exactly, so solves against it
        are solves with the regularized A without ever densifying.
        """
        if self._bordered_matrix is None:
            negG11 = SparseMatrix(-self.G11.csc)
            negW1 = SparseMatrix(-self.W1.csc)
            negG12 = SparseMatrix(-self.G12.csc)
            negG12T = SparseMatrix(-self.G12.csc.T)
            negW2 = SparseMatrix(-self.W2.csc)
            negG22 = SparseMatrix(-self.G22.csc)
            zmm = sparse_zeros(self.m, self.m)
            self._bordered_matrix = sparse_block([
                [negG11, negW1, negG12],
                [self.W1.T, zmm, self.W2.T],
                [negG12T, negW2, negG22],
            ])
        return self._bordered_matrix

    @property
    def bordered(self):
        if self._bordered is None:
            F = factorize(self.bordered_matrix)
            if F.singular:
                raise RegularizationError(
                    f"bordered system matrix is singular (columns {F.bad_columns})")
            self._bordered = F
        return self._bordered


def partition(model, zero_tol=1e-30):
    """Permute and split a DescriptorModel around its capacitance-free nodes.

    Always returns a PartitionedModel; n2 may be zero.  Raises
    RegularizationError when G22 is singular (some eliminated node lacks a
    resistive path out of the eliminated block).
    """
    mask = capacitive_node_mask(model.C, zero_tol=zero_tol)
    perm = np.concatenate([np.flatnonzero(mask), np.flatnonzero(~mask)])
    n1 = int(mask.sum())
    n2 = model.n - n1

    cap, nocap = perm[:n1], perm[n1:]
    G = model.G.csc
    G11 = SparseMatrix(G[cap][:, cap], symmetric=True)
    G12 = SparseMatrix(G[cap][:, nocap])
    G22 = SparseMatrix(G[nocap][:, nocap], symmetric=True)
    W1 = SparseMatrix(model.W.csc[cap])
    W2 = SparseMatrix(model.W.csc[nocap])
    C1 = SparseMatrix(model.C.csc[cap][:, cap], symmetric=True)
    B1 = SparseMatrix(model.B1.csc[cap])
    B2 = SparseMatrix(model.B1.csc[nocap])
    L1 = SparseMatrix(model.L1.csc[:, cap])
    L2 = SparseMatrix(model.L1.csc[:, nocap])

    F22 = factorize(G22)
    if F22.singular:
        offenders = [int(perm[n1 + c]) if c >= 0 else -1 for c in F22.bad_columns]
        raise RegularizationError(
            "conductance block of the capacitance-free nodes is singular; "
            f"offending node indices {offenders} (smallest pivot "
            f"{F22.pivot_magnitude!r}); every eliminated node needs a "
            "resistive connection out of the eliminated block")

    return PartitionedModel(perm=perm, n1=n1, n2=n2, m=model.m, p=model.p, q=model.q,
                            G11=G11, G12=G12, G22=G22, W1=W1, W2=W2, C1=C1,
                            M=model.M, B1=B1, B2=B2, L1=L1, L2=L2, D=model.D, F22=F22)


def detect_and_partition(model, zero_tol=1e-30):
    """PartitionedModel when the capacitance matrix has zero rows, else None."""
    mask = capacitive_node_mask(model.C, zero_tol=zero_tol)
    if mask.all():
        return None
    return partition(model, zero_tol=zero_tol)


def build_rhs(pm):
    """Input and output maps of the regularized model, as dense column blocks.

    Returns (B_reg, L_reg) of shapes (n1 + m, p) and (n1 + m, q); L_reg holds
    the output map in transposed (state-to-output) orientation.  Costs p + q
    sparse solves against G22.
    """
    if pm._rhs is None:
        Sb = pm.F22.solve(pm.B2.toarray())
        B_reg = np.vstack([pm.B1.toarray() - pm.G12.csc @ Sb,
                           pm.W2.csc.T @ Sb])
        Sl = pm.F22.solve(pm.L2.csc.T.toarray())
        L_reg = np.vstack([pm.L1.csc.T.toarray() - pm.G12.csc @ Sl,
                           -(pm.W2.csc.T @ Sl)])
        pm._rhs = (B_reg, L_reg)
    B_reg, L_reg = pm._rhs
    return B_reg.copy(), L_reg.copy()


def feedthrough(pm):
    """Direct input-to-output term of the regularized model, D + L2 G22^-1 B2.

    Eliminating the algebraic nodes moves part of the response into an
    instantaneous feedthrough even when the original model had none.
    """
    if pm._feedthrough is None:
        Sb = pm.F22.solve(pm.B2.toarray())
        pm._feedthrough = pm.D.toarray() + pm.L2.csc @ Sb
    return pm._feedthrough.copy()


def _as_block(X, nrows, name):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != nrows:
        raise ValueError(f"{name} has {X.shape[0]} rows, expected {nrows}")
    return X


def bordered_solve(pm, R1, R2):
    """Solve the regularized system matrix against [R1; R2].

    R1 has n1 rows (node part), R2 has m rows (branch part).  The eliminated
    unknowns are carried as a temporary trailing block and discarded.
    """
    R1 = _as_block(R1, pm.n1, "R1")
    R2 = _as_block(R2, pm.m, "R2") if pm.m else np.zeros((0, R1.shape[1]))
    if R2.shape[1] != R1.shape[1]:
        raise ValueError(f"rhs blocks {R1.shape} / {R2.shape} have mismatched widths")
    rhs = np.vstack([R1, R2, np.zeros((pm.n2, R1.shape[1]))])
    Y = pm.bordered.solve(rhs)
    return Y[:pm.n1], Y[pm.n1:pm.n1 + pm.m]


def apply_A(pm, K):
    """Product of the regularized system matrix with a dense block K.

    Uses the low-rank correction form: one sparse solve against G22 plus
    sparse products, never forming the dense Schur complement.
    """
    K = _as_block(K, pm.order, "block")
    K1, K2 = K[:pm.n1], K[pm.n1:]
    out1 = -(pm.G11.csc @ K1) - (pm.W1.csc @ K2)
    out2 = pm.W1.csc.T @ K1
    if pm.n2:
        X = pm.F22.solve(-(pm.G12.csc.T @ K1) - (pm.W2.csc @ K2))
        out1 -= pm.G12.csc @ X
        out2 += pm.W2.csc.T @ X
    return np.vstack([out1, out2])


def build_dense_A(pm, cap=20000):
    """Materialize the regularized system matrix densely (oracle/debug path).

    Solves against G22 with the rows of G12 and W2^T as right-hand sides,
    then forms the correction products.  Guarded by ``cap`` on n1 + m.
    """
    if pm.order > cap:
        raise ValueError(f"dense system matrix of order {pm.order} exceeds cap {cap}")
    G11 = pm.G11.toarray()
    W1 = pm.W1.toarray()
    if pm.n2:
        Sg = pm.F22.solve(pm.G12.csc.T.toarray())   # G22^-1 G12^T
        Sw = pm.F22.solve(pm.W2.toarray())          # G22^-1 W2
        A11 = -(G11 - pm.G12.csc @ Sg)
        A12 = -(W1 - pm.G12.csc @ Sw)
        A21 = -(pm.W2.csc.T @ Sg - W1.T)
        A22 = -(pm.W2.csc.T @ Sw)
    else:
        A11, A12 = -G11, -W1
        A21, A22 = W1.T.copy(), np.zeros((pm.m, pm.m))
    return np.block([[A11, A12], [A21, A22]])


def recover_v2(pm, v1, i, u):
    """Reconstruct the eliminated node voltages from state and input blocks."""
    v1 = _as_block(v1, pm.n1, "v1")
    k = v1.shape[1]
    i = _as_block(i, pm.m, "i") if pm.m else np.zeros((0, k))
    u = _as_block(u, pm.p, "u")
    rhs = pm.B2.csc @ u - pm.G12.csc.T @ v1 - pm.W2.csc @ i
    return pm.F22.solve(rhs)


def export_permutation_csv(pm, path):
    """Two-column CSV (new position, original node index) for debugging."""
    rows = np.column_stack([np.arange(pm.perm.size), pm.perm])
    np.savetxt(str(path), rows, fmt="%d", delimiter=",", header="position,original_node",
               comments="")
