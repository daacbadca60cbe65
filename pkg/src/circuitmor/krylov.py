"""Standard and extended Krylov projection bases and reduced-model assembly.

The reduction operator is A_E = A^-1 E.  A standard basis spans
span{B_E, A_E B_E, ..., A_E^(k-1) B_E} with B_E = A^-1 B and matches the
leading transfer-function moments at s = 0.  The extended basis additionally
folds in the inverse directions A_E^-1, ..., A_E^-(k-1) applied to B_E,
which carry the behavior at s = infinity, at the cost of requiring a
nonsingular E (guaranteed after regularization).

Only sparse A and E are ever touched: applications of A_E and its inverse
are sparse solves plus sparse products against shared factorizations.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from . import regularize
from .netlist import DescriptorModel, capacitive_node_mask
from .regularize import PartitionedModel
from .sparse_core import (
    SingularMatrixError,
    _mgs,
    factorize,
    orth_wrt,
    read_dense_matrix_market,
    write_dense_matrix_market,
)


class OperatorPair:
    """Forward and inverse actions of A_E over one model, sharing factorizations.

    ``solve_e`` is None when E is singular; the extended subspace is then
    unavailable and ``apply_AEinv`` raises with the offending node list.
    """

    def __init__(self, dim, apply_e, apply_a, solve_a, solve_e=None,
                 zero_capacitance_nodes=()):
        self.dim = dim
        self.apply_e = apply_e
        self.apply_a = apply_a
        self.solve_a = solve_a
        self.solve_e = solve_e
        self.zero_capacitance_nodes = list(zero_capacitance_nodes)

    @property
    def has_inverse_direction(self):
        return self.solve_e is not None

    def apply_AE(self, V):
        """A^-1 (E @ V)."""
        return self.solve_a(self.apply_e(V))

    def apply_AEinv(self, V):
        """E^-1 (A @ V); requires nonsingular E."""
        if self.solve_e is None:
            raise SingularMatrixError(
                "E is singular, extended subspace unavailable; capacitance-free "
                f"nodes {self.zero_capacitance_nodes} (regularize the model first)")
        return self.solve_e(self.apply_a(V))


def make_operators(model):
    """Build the OperatorPair for a DescriptorModel or PartitionedModel."""
    if isinstance(model, PartitionedModel):
        pm = model

        def solve_a(R):
            X1, X2 = regularize.bordered_solve(pm, R[:pm.n1], R[pm.n1:])
            return np.vstack([X1, X2])

        FE = factorize(pm.E)
        if FE.singular:
            raise SingularMatrixError(
                f"regularized mass matrix is singular (columns {FE.bad_columns})")
        return OperatorPair(pm.order,
                            apply_e=lambda V: pm.E.csc @ V,
                            apply_a=lambda V: regularize.apply_A(pm, V),
                            solve_a=solve_a,
                            solve_e=FE.solve)

    A, E = model.A, model.E
    FA = factorize(A)
    if FA.singular:
        raise SingularMatrixError(
            f"descriptor system matrix is singular (columns {FA.bad_columns}); "
            "check that every node has a DC path to ground and that no "
            "inductor-only loop exists")
    mask = capacitive_node_mask(model.C)
    if mask.all():
        FE = factorize(E)
        solve_e = FE.solve
        zero_nodes = []
    else:
        solve_e = None
        zero_nodes = np.flatnonzero(~mask).tolist()
    return OperatorPair(model.order,
                        apply_e=lambda V: E.csc @ V,
                        apply_a=lambda V: A.csc @ V,
                        solve_a=FA.solve,
                        solve_e=solve_e,
                        zero_capacitance_nodes=zero_nodes)


@dataclass
class BasisBlock:
    kind: str     # "fwd" or "bwd"
    level: int    # 0 for the seed pair, then the iteration that produced it
    start: int
    stop: int

    @property
    def width(self):
        return self.stop - self.start


@dataclass
class ProjectionBasis:
    """Orthonormal basis with a ledger of which columns each iteration added."""

    X: np.ndarray
    blocks: list
    kind: str                 # "standard" or "extended"
    k: int                    # requested moment count per direction
    k_effective: int
    p: int
    warning: str = None

    @property
    def dim(self):
        return self.X.shape[1]

    def column_slices(self):
        return [(b.start, b.stop) for b in self.blocks if b.width]


def _latest(blocks, kind, level):
    for b in blocks:
        if b.kind == kind and b.level == level and b.width:
            return b
    return None


def _extend(X, blocks, V, tol):
    """Orthogonalize candidate columns V against the accumulated basis.

    Columns whose norm collapses below tol times their pre-orthogonalization
    norm are deflated.  Returns (Q_new, kept_input_indices).
    """
    pre = np.linalg.norm(V, axis=0)
    Y = orth_wrt(V, X, p=0, blocks=[(b.start, b.stop) for b in blocks if b.width])
    post = np.linalg.norm(Y, axis=0)
    alive = np.flatnonzero((pre > 0) & (post >= tol * pre))
    if alive.size == 0:
        return np.zeros((X.shape[0], 0)), []
    Q, kept_local = _mgs(Y[:, alive], tol=tol)
    return Q, [int(alive[i]) for i in kept_local]


def standard_basis(ops, B_E, k, tol=1e-10):
    """Block Arnoldi basis of the order-k standard Krylov subspace.

    Breakdown (all candidate columns deflated) stops the iteration early;
    the basis built so far is returned with a warning status.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    B_E = np.asarray(B_E, dtype=float)
    if B_E.ndim == 1:
        B_E = B_E[:, None]
    p = B_E.shape[1]

    Q0, _ = _mgs(B_E, tol=tol)
    blocks = [BasisBlock("fwd", 0, 0, Q0.shape[1])]
    X = Q0
    if Q0.shape[1] == 0:
        return ProjectionBasis(X, blocks, "standard", k, 0, p,
                               warning="input block is numerically zero")

    warning = None
    k_eff = 1
    for level in range(1, k):
        prev = _latest(blocks, "fwd", level - 1)
        if prev is None:
            warning = f"breakdown at iteration {level}: no surviving directions"
            break
        V = ops.apply_AE(X[:, prev.start:prev.stop])
        Q, kept = _extend(X, blocks, V, tol)
        if not kept:
            warning = f"breakdown at iteration {level}: all candidates deflated"
            break
        blocks.append(BasisBlock("fwd", level, X.shape[1], X.shape[1] + Q.shape[1]))
        X = np.hstack([X, Q])
        k_eff = level + 1
    return ProjectionBasis(X, blocks, "standard", k, k_eff, p, warning=warning)


def extended_basis(ops, B_E, r, p, tol=1e-10):
    """Extended Krylov basis by the two-direction block Arnoldi procedure.

    ``r`` is the target order per direction (k = r / p moment counts); when p
    does not divide r, k is rounded up with a warning and the final basis is
    truncated to 2r columns.  Each iteration applies A_E to the newest
    forward block and A_E^-1 to the newest backward block, orthogonalizes
    against everything accumulated, and appends the survivors.
    """
    if not ops.has_inverse_direction:
        raise SingularMatrixError(
            "extended subspace requires nonsingular E; capacitance-free nodes "
            f"{ops.zero_capacitance_nodes}")
    B_E = np.asarray(B_E, dtype=float)
    if B_E.ndim == 1:
        B_E = B_E[:, None]
    if p != B_E.shape[1]:
        raise ValueError(f"port count {p} does not match input block width {B_E.shape[1]}")

    warning = None
    k, rem = divmod(r, p)
    if rem:
        k += 1
        warning = f"order {r} is not divisible by {p} ports; rounded up to k={k}"
        warnings.warn(warning, stacklevel=2)
    if k < 1:
        raise ValueError("requested order yields k < 1")

    seed = np.hstack([B_E, ops.apply_AEinv(B_E)])
    Q0, kept = _mgs(seed, tol=tol)
    nf = sum(1 for j in kept if j < p)
    blocks = [BasisBlock("fwd", 0, 0, nf), BasisBlock("bwd", 0, nf, Q0.shape[1])]
    X = Q0
    if Q0.shape[1] == 0:
        return ProjectionBasis(X, blocks, "extended", k, 0, p,
                               warning="input block is numerically zero")

    k_eff = 1
    for level in range(1, k):
        fwd = _latest(blocks, "fwd", level - 1)
        bwd = _latest(blocks, "bwd", level - 1)
        parts, widths = [], []
        if fwd is not None:
            parts.append(ops.apply_AE(X[:, fwd.start:fwd.stop]))
            widths.append(fwd.width)
        if bwd is not None:
            parts.append(ops.apply_AEinv(X[:, bwd.start:bwd.stop]))
            widths.append(bwd.width)
        if not parts:
            warning = f"breakdown at iteration {level}: no surviving directions"
            break
        V = np.hstack(parts)
        Q, kept = _extend(X, blocks, V, tol)
        if not kept:
            warning = f"breakdown at iteration {level}: all candidates deflated"
            break
        nf = sum(1 for j in kept if fwd is not None and j < widths[0])
        base = X.shape[1]
        blocks.append(BasisBlock("fwd", level, base, base + nf))
        blocks.append(BasisBlock("bwd", level, base + nf, base + Q.shape[1]))
        X = np.hstack([X, Q])
        k_eff = level + 1

    if X.shape[1] > 2 * r:
        X = np.array(X[:, :2 * r], order="F")
        trimmed = []
        for b in blocks:
            if b.start >= X.shape[1]:
                continue
            trimmed.append(BasisBlock(b.kind, b.level, b.start, min(b.stop, X.shape[1])))
        blocks = trimmed
    return ProjectionBasis(X, blocks, "extended", k, k_eff, p, warning=warning)


@dataclass
class ReducedModel:
    """Dense reduced-order model (E, A, B, L, D) plus provenance."""

    E: np.ndarray
    A: np.ndarray
    B: np.ndarray
    L: np.ndarray
    D: np.ndarray
    method: str = "unknown"
    k: int = 0
    port: int = None
    source_order: int = 0

    @property
    def order(self):
        return self.A.shape[0]

    def transfer_at(self, s):
        """Dense transfer-function evaluation L (sE - A)^-1 B + D."""
        shifted = s * self.E - self.A
        return self.L @ np.linalg.solve(shifted, self.B.astype(complex)) + self.D


def project(model, basis, port=None):
    """Galerkin projection of a model onto an orthonormal basis.

    ``port`` restricts the input map (and the feedthrough column) to a single
    input, which is how the per-port SIMO reductions are assembled.
    """
    X = basis.X if isinstance(basis, ProjectionBasis) else np.asarray(basis, dtype=float)
    if X.shape[0] != model.order:
        raise ValueError(f"basis rows {X.shape[0]} do not match model order {model.order}")

    if isinstance(model, PartitionedModel):
        E_red = X.T @ (model.E.csc @ X)
        A_red = X.T @ regularize.apply_A(model, X)
        B_full, L_regT = regularize.build_rhs(model)
        L_red = L_regT.T @ X
        D_full = regularize.feedthrough(model)
    else:
        E_red = X.T @ (model.E.csc @ X)
        A_red = X.T @ (model.A.csc @ X)
        B_full = model.B.csc.toarray()
        L_red = model.L.csc @ X
        D_full = model.D.toarray()

    if port is None:
        B_red, D_red = X.T @ B_full, D_full
    else:
        B_red, D_red = X.T @ B_full[:, [port]], D_full[:, [port]]

    meta = {}
    if isinstance(basis, ProjectionBasis):
        meta = dict(method=("eks" if basis.kind == "extended" else "mm"), k=basis.k)
    return ReducedModel(E=E_red, A=A_red, B=B_red, L=L_red, D=D_red,
                        port=port, source_order=model.order, **meta)


def moments(model, i_max, cap=2000):
    """Transfer-function moment matrices M_0 .. M_i_max at expansion point 0.

    M_i = L (A^-1 E)^i A^-1 B, computed by repeated sparse solves (or dense
    solves for a ReducedModel).  Guarded by ``cap`` since this is an oracle
    path quadratic in memory for wide bases.
    """
    if isinstance(model, ReducedModel):
        lu = scipy.linalg.lu_factor(model.A)
        Y = scipy.linalg.lu_solve(lu, model.B)
        out = [model.L @ Y]
        for _ in range(i_max):
            Y = scipy.linalg.lu_solve(lu, model.E @ Y)
            out.append(model.L @ Y)
        return out

    if model.order > cap:
        raise ValueError(f"model order {model.order} exceeds moment-oracle cap {cap}")

    ops = make_operators(model)
    if isinstance(model, PartitionedModel):
        B_full, L_regT = regularize.build_rhs(model)
        L_row = L_regT.T
    else:
        B_full = model.B.csc.toarray()
        L_row = model.L.csc
    Y = ops.solve_a(B_full)
    out = [np.asarray(L_row @ Y)]
    for _ in range(i_max):
        Y = ops.solve_a(ops.apply_e(Y))
        out.append(np.asarray(L_row @ Y))
    return out


# ---------------------------------------------------------------------------
# Reduced-model directories: dense Matrix Market blocks plus a manifest.

_ROM_FILES = ("E", "A", "B", "L", "D")


def save_rom(rom, path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for name in _ROM_FILES:
        write_dense_matrix_market(path / f"{name}.mtx", getattr(rom, name))
    manifest = {
        "schema_version": 1,
        "method": rom.method,
        "k": rom.k,
        "port": rom.port,
        "source_order": rom.source_order,
        "rom_order": rom.order,
    }
    (path / "rom.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_rom(path):
    path = Path(path)
    manifest = json.loads((path / "rom.json").read_text())
    mats = {name: read_dense_matrix_market(path / f"{name}.mtx") for name in _ROM_FILES}
    return ReducedModel(E=mats["E"], A=mats["A"], B=mats["B"], L=mats["L"], D=mats["D"],
                        method=manifest["method"], k=manifest["k"],
                        port=manifest["port"], source_order=manifest["source_order"])
