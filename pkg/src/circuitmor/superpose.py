"""Per-port SIMO reduction and reassembly of the full transfer matrix.

A linear time-invariant model with p inputs decomposes into p single-input
multi-output subsystems, one per column of the input map; their transfer
columns concatenate back into the full transfer matrix.  Each port gets its
own projection basis and reduced model, so the ports are independent tasks
sharing only read-only factorizations.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import krylov, regularize
from .krylov import ProjectionBasis, ReducedModel, extended_basis, make_operators, standard_basis
from .regularize import PartitionedModel

WORKERS_ENV = "CIRCUITMOR_WORKERS"


def default_workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass
class PortReduction:
    port: int
    basis: ProjectionBasis
    rom: ReducedModel
    error: str = None


@dataclass
class PortDecomposition:
    """One SIMO reduced model per input port, all built identically."""

    method: str
    k: int
    ports: list = field(default_factory=list)

    @property
    def p(self):
        return len(self.ports)

    @property
    def failed_ports(self):
        return [pr.port for pr in self.ports if pr.error is not None]

    def warnings(self):
        out = []
        for pr in self.ports:
            if pr.basis is not None and pr.basis.warning:
                out.append(f"port {pr.port}: {pr.basis.warning}")
            if pr.error is not None:
                out.append(f"port {pr.port} failed: {pr.error}")
        return out


def reduce_all_ports(model, method, k, workers=None, tol=1e-10):
    """Reduce each input port independently with the chosen subspace.

    ``method`` is "mm" (standard subspace, k moments, order k per port) or
    "eks" (extended subspace, k moments per direction, order 2k per port).
    Per-port failures are recorded on the affected entry; the surviving
    reductions are returned regardless.
    """
    if method not in ("mm", "eks"):
        raise ValueError(f"unknown method {method!r}")
    if k < 1:
        raise ValueError("k must be at least 1")
    workers = default_workers() if workers is None else max(1, int(workers))

    ops = make_operators(model)
    if isinstance(model, PartitionedModel):
        B_full, _ = regularize.build_rhs(model)
        regularize.feedthrough(model)  # prime the shared cache before workers start
    else:
        B_full = model.B.csc.toarray()
    p = B_full.shape[1]

    def one_port(i):
        try:
            b_e = ops.solve_a(B_full[:, [i]])
            if method == "mm":
                basis = standard_basis(ops, b_e, k, tol=tol)
            else:
                basis = extended_basis(ops, b_e, r=k, p=1, tol=tol)
            rom = krylov.project(model, basis, port=i)
            rom.method, rom.k = method, k
            return PortReduction(port=i, basis=basis, rom=rom)
        except Exception as exc:  # propagate per port, keep the rest
            return PortReduction(port=i, basis=None, rom=None, error=str(exc))

    if workers == 1:
        results = [one_port(i) for i in range(p)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one_port, range(p)))
    return PortDecomposition(method=method, k=k, ports=results)


def assemble_H(pd, s_values):
    """Concatenate per-port transfer columns over a grid of complex points.

    Returns (H, flags): H has shape (len(s_values), q, p); flags marks grid
    points where some port's shifted pencil was singular (those entries are
    left NaN and must be excluded from norms).
    """
    if pd.failed_ports:
        raise ValueError(f"ports {pd.failed_ports} have no reduced model")
    s_values = np.asarray(s_values, dtype=complex)
    q = pd.ports[0].rom.L.shape[0]
    p = pd.p
    H = np.full((s_values.size, q, p), np.nan, dtype=complex)
    flags = np.zeros(s_values.size, dtype=bool)
    for pr in pd.ports:
        rom = pr.rom
        for j, s in enumerate(s_values):
            try:
                H[j, :, pr.port] = rom.transfer_at(s)[:, 0]
            except np.linalg.LinAlgError:
                flags[j] = True
    return H, flags


def save_decomposition(pd, path):
    """One reduced-model directory per port plus an index manifest."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = []
    for pr in pd.ports:
        if pr.rom is None:
            entries.append({"port": pr.port, "error": pr.error})
            continue
        sub = f"port_{pr.port:04d}"
        krylov.save_rom(pr.rom, path / sub)
        entries.append({"port": pr.port, "dir": sub, "rom_order": pr.rom.order})
    index = {"schema_version": 1, "method": pd.method, "k": pd.k, "ports": entries}
    (path / "index.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")


def load_decomposition(path):
    path = Path(path)
    index = json.loads((path / "index.json").read_text())
    ports = []
    for entry in index["ports"]:
        if "dir" not in entry:
            ports.append(PortReduction(port=entry["port"], basis=None, rom=None,
                                       error=entry.get("error", "missing")))
            continue
        rom = krylov.load_rom(path / entry["dir"])
        ports.append(PortReduction(port=entry["port"], basis=None, rom=rom))
    return PortDecomposition(method=index["method"], k=index["k"], ports=ports)
