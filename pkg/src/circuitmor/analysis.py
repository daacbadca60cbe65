"""Frequency-domain evaluation of transfer functions and error metrics.

The original model's transfer matrix H(s) = L (sE - A)^-1 B + D is sampled
over a logarithmic grid on the imaginary axis.  Each complex solve is
realized through the equivalent real system of twice the dimension,

    [[-A, -w E], [w E, -A]] [Xr; Xi] = [B; 0]        (s = j w)

so the one real sparse factorization path serves everything, including
models with singular E.  Grid points are independent and may be evaluated
concurrently.  The headline error metric is the grid maximum of the largest
singular value of H_reduced - H, a sampled approximation of the H-infinity
distance; entrywise per-port-pair maxima are reported alongside for curve
comparisons.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import regularize, superpose
from .krylov import ReducedModel
from .regularize import PartitionedModel
from .sparse_core import SparseMatrix, factorize
from .superpose import PortDecomposition


@dataclass(frozen=True)
class FrequencyGrid:
    """Sample points s = j*omega, omega strictly increasing, in rad/s."""

    omega: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        if w.size < 2:
            raise ValueError("grid needs at least two points")
        if not np.all(np.diff(w) > 0):
            raise ValueError("grid frequencies must be strictly increasing")
        object.__setattr__(self, "omega", w)

    @classmethod
    def log_spaced(cls, omega_min=1e0, omega_max=1e12, n=200):
        return cls(np.geomspace(omega_min, omega_max, n))

    @property
    def s(self):
        return 1j * self.omega

    def __len__(self):
        return self.omega.size


def _real_embedded_solve(A_csc, E_csc, rhs, omega):
    """Solve (j*omega*E - A) X = rhs through the doubled real system."""
    n, k = rhs.shape
    K = sp.bmat([[-A_csc, -omega * E_csc], [omega * E_csc, -A_csc]], format="csc")
    F = factorize(SparseMatrix(K))
    if F.singular:
        raise np.linalg.LinAlgError(f"pencil numerically singular at omega={omega}")
    Y = F.solve(np.vstack([rhs, np.zeros((n, k))]))
    return Y[:n] + 1j * Y[n:]


def eval_original(model, grid, workers=None):
    """Transfer matrix of the full model at every grid point.

    Works directly on the assembled descriptor blocks, singular E included.
    Returns (H, flags) with H of shape (len(grid), q, p); flagged points are
    NaN and excluded from norms downstream.
    """
    A_csc, E_csc = model.A.csc, model.E.csc
    B = model.B.csc.toarray()
    L = model.L.csc
    D = model.D.toarray()
    return _eval_pencil(A_csc, E_csc, B, L, D, grid, workers)


def eval_regularized(pm, grid, workers=None):
    """Transfer matrix through the regularized path, kept sparse.

    The shifted regularized pencil is solved in bordered form: the eliminated
    unknowns ride along as a trailing block with zero rows in the mass matrix
    and zero right-hand side, which reproduces the Schur-complement model
    without densifying it.
    """
    nb = pm.order + pm.n2
    Kb = pm.bordered_matrix.csc
    Eb = sp.block_diag([pm.C1.csc, pm.M.csc, sp.csc_matrix((pm.n2, pm.n2))], format="csc")
    B_reg, L_regT = regularize.build_rhs(pm)
    Bb = np.vstack([B_reg, np.zeros((pm.n2, pm.p))])
    L_row = np.hstack([L_regT.T, np.zeros((pm.q, pm.n2))])
    D_reg = regularize.feedthrough(pm)
    return _eval_pencil(Kb, Eb, Bb, L_row, D_reg, grid, workers)


def _eval_pencil(A_csc, E_csc, B, L, D, grid, workers=None):
    workers = superpose.default_workers() if workers is None else max(1, int(workers))
    ns = len(grid)
    q, p = D.shape
    H = np.full((ns, q, p), np.nan, dtype=complex)
    flags = np.zeros(ns, dtype=bool)

    def one_point(j):
        try:
            X = _real_embedded_solve(A_csc, E_csc, B, grid.omega[j])
            return j, L @ X + D, False
        except np.linalg.LinAlgError:
            return j, None, True

    if workers == 1:
        results = [one_point(j) for j in range(ns)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one_point, range(ns)))
    for j, Hj, bad in results:
        flags[j] = bad
        if not bad:
            H[j] = Hj
    return H, flags


def eval_reduced(reduced, grid):
    """Transfer matrix of a PortDecomposition or a single ReducedModel."""
    if isinstance(reduced, PortDecomposition):
        return superpose.assemble_H(reduced, grid.s)
    if isinstance(reduced, ReducedModel):
        ns = len(grid)
        q, p = reduced.L.shape[0], reduced.B.shape[1]
        H = np.full((ns, q, p), np.nan, dtype=complex)
        flags = np.zeros(ns, dtype=bool)
        for j, s in enumerate(grid.s):
            try:
                H[j] = reduced.transfer_at(s)
            except np.linalg.LinAlgError:
                flags[j] = True
        return H, flags
    raise TypeError(f"cannot evaluate {type(reduced).__name__}")


@dataclass
class ResponseSet:
    """Sampled responses of the original model and each reduction method."""

    grid: FrequencyGrid
    original: np.ndarray
    original_flags: np.ndarray
    reduced: dict = field(default_factory=dict)
    reduced_flags: dict = field(default_factory=dict)

    def add_reduced(self, method, H, flags):
        self.reduced[method] = H
        self.reduced_flags[method] = flags

    def valid_mask(self, method):
        return ~(self.original_flags | self.reduced_flags[method])


def collect_responses(model, decompositions, grid, pm=None, workers=None):
    """Evaluate the original model and every PortDecomposition on one grid.

    When ``pm`` is given the original response is taken through the
    regularized path so that reduced and reference responses describe the
    same (equivalent) system realization.
    """
    if pm is not None:
        H0, f0 = eval_regularized(pm, grid, workers=workers)
    else:
        H0, f0 = eval_original(model, grid, workers=workers)
    rs = ResponseSet(grid=grid, original=H0, original_flags=f0)
    for method, pd in decompositions.items():
        H, flags = eval_reduced(pd, grid)
        rs.add_reduced(method, H, flags)
    return rs


def sigma_max_curve(diff):
    """Largest singular value of a (ns, q, p) stack, NaN-safe per point."""
    out = np.full(diff.shape[0], np.nan)
    ok = ~np.isnan(diff).any(axis=(1, 2))
    if ok.any():
        out[ok] = np.linalg.svd(diff[ok], compute_uv=False)[:, 0]
    return out


def max_error(rs, method):
    """Grid maximum of sigma_max(H_reduced(s) - H(s)) over unflagged points."""
    mask = rs.valid_mask(method)
    if not mask.any():
        raise ValueError(f"no valid grid points for method {method!r}")
    curve = sigma_max_curve(rs.reduced[method] - rs.original)
    return float(np.nanmax(curve[mask]))


def error_reduction(err_mm, err_eks):
    """Error reduction of the extended method over the standard one, percent.

    Returns None (not applicable) when the reference error is zero.
    """
    if err_mm < 0 or err_eks < 0:
        raise ValueError("errors must be nonnegative")
    if err_mm == 0:
        return None
    return 100.0 * (err_mm - err_eks) / err_mm


@dataclass
class ErrorReport:
    """Headline and per-frequency errors for each method, plus the reduction."""

    max_error: dict
    curves: dict                 # method -> per-frequency sigma_max curve
    entrywise_max: dict          # method -> (q, p) max abs entry error
    error_reduction_percentage: float = None
    flagged_points: dict = field(default_factory=dict)


def build_error_report(rs):
    maxes, curves, entrywise, flagged = {}, {}, {}, {}
    for method in rs.reduced:
        mask = rs.valid_mask(method)
        diff = rs.reduced[method] - rs.original
        curve = sigma_max_curve(diff)
        curve[~mask] = np.nan
        curves[method] = curve
        maxes[method] = float(np.nanmax(curve)) if mask.any() else None
        ent = np.abs(diff)
        ent[~mask] = np.nan
        entrywise[method] = np.nanmax(ent, axis=0) if mask.any() else None
        flagged[method] = np.flatnonzero(~mask).tolist()
    reduction = None
    if maxes.get("mm") is not None and maxes.get("eks") is not None:
        reduction = error_reduction(maxes["mm"], maxes["eks"])
    return ErrorReport(max_error=maxes, curves=curves, entrywise_max=entrywise,
                       error_reduction_percentage=reduction, flagged_points=flagged)


def write_port_pair_csv(path, rs, out_idx, in_idx):
    """Per-frequency magnitude and error columns for one (output, input) pair."""
    cols = [rs.grid.omega, np.abs(rs.original[:, out_idx, in_idx])]
    header = ["omega", "abs_h"]
    for method in sorted(rs.reduced):
        Hm = rs.reduced[method][:, out_idx, in_idx]
        cols.append(np.abs(Hm))
        cols.append(np.abs(Hm - rs.original[:, out_idx, in_idx]))
        header += [f"abs_h_{method}", f"abs_err_{method}"]
    np.savetxt(str(path), np.column_stack(cols), delimiter=",",
               header=",".join(header), comments="")


def write_summary_json(path, summary):
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True,
                                     default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")
