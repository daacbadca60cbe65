"""SPICE-subset netlist parsing and MNA descriptor model assembly.

The accepted input is the line-oriented power-grid flavor of SPICE: R/L/C
element cards, I/V source cards (with or without a ``DC`` keyword), ``*``
comments, and dot directives (ignored).  Ground is ``0`` or ``gnd``, case
insensitive; all other node names are opaque tokens.

Assembly produces the generalized state-space (descriptor) blocks

    [[ G, W ], [ -W^T, 0 ]] x + [[ C, 0 ], [ 0, M ]] x' = [[ B1 ], [ 0 ]] u
    y = [ L1, 0 ] x + D u

with node voltages and inductor branch currents as the state x.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .sparse_core import (
    SparseMatrix,
    read_matrix_market,
    sparse_block,
    sparse_zeros,
    write_matrix_market,
)

GROUND_NAMES = ("0", "gnd")

_SUFFIX = {
    "t": 1e12, "g": 1e9, "meg": 1e6, "k": 1e3,
    "m": 1e-3, "u": 1e-6, "n": 1e-9, "p": 1e-12, "f": 1e-15,
}
_NUM_RE = re.compile(r"^([+-]?[\d.]+(?:[eE][+-]?\d+)?)([a-zA-Z]*)$")


class NetlistError(ValueError):
    """Malformed netlist input; carries the 1-based source line number."""

    def __init__(self, message, line_no=None):
        self.line_no = line_no
        where = f" (line {line_no})" if line_no is not None else ""
        super().__init__(f"{message}{where}")


def is_ground(name):
    return name.lower() in GROUND_NAMES


def parse_value(token, line_no=None):
    """Parse a SPICE number with an optional magnitude suffix (k, m, u, ...)."""
    m = _NUM_RE.match(token)
    if not m:
        raise NetlistError(f"cannot parse value {token!r}", line_no)
    base, suffix = m.groups()
    try:
        val = float(base)
    except ValueError:
        raise NetlistError(f"cannot parse value {token!r}", line_no) from None
    if suffix:
        key = suffix.lower()
        key = "meg" if key.startswith("meg") else key[0]
        if key not in _SUFFIX:
            raise NetlistError(f"unknown value suffix {suffix!r}", line_no)
        val *= _SUFFIX[key]
    return val


@dataclass(frozen=True)
class Element:
    kind: str            # one of R, L, C, I, V
    a: str
    b: str
    value: float


@dataclass
class Circuit:
    """Parsed circuit: elements, node numbering, and the port list.

    ``node_index`` maps non-ground node names to contiguous indices in first
    appearance order; ground never receives an index.  Ports are (a, b) node
    name pairs derived from current/voltage source cards unless an explicit
    list was supplied.
    """

    elements: list = field(default_factory=list)
    node_index: dict = field(default_factory=dict)
    ports: list = field(default_factory=list)

    @property
    def n_nodes(self):
        return len(self.node_index)

    def node_of(self, index):
        """Inverse lookup of node_index (debugging helper)."""
        for name, i in self.node_index.items():
            if i == index:
                return name
        raise KeyError(index)


def parse_netlist(source, ports=None):
    """Parse a netlist from a string, open file, or path.

    ``ports`` optionally overrides the source-derived port list with explicit
    node names (each becomes a port against ground).
    """
    if isinstance(source, Path):
        text = source.read_text()
    elif isinstance(source, str) and "\n" not in source and Path(source).is_file():
        text = Path(source).read_text()
    elif hasattr(source, "read"):
        text = source.read()
    else:
        text = source

    circuit = Circuit()
    seen_ports = {}

    def intern_node(name):
        if is_ground(name):
            return
        if name not in circuit.node_index:
            circuit.node_index[name] = len(circuit.node_index)

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("*"):
            continue
        if line.startswith("."):
            continue  # .op / .end and friends carry no model content
        parts = line.split()
        kind = parts[0][0].upper()
        if kind not in "RLCIV":
            raise NetlistError(f"unknown card kind {parts[0]!r}", line_no)
        if kind in "IV" and len(parts) == 5 and parts[3].upper() == "DC":
            del parts[3]
        if len(parts) != 4:
            raise NetlistError(f"malformed card {raw.strip()!r}", line_no)
        _, a, b, val_tok = parts
        value = parse_value(val_tok, line_no)
        if kind in "RLC" and value <= 0:
            raise NetlistError(f"nonpositive {kind} value {value!r}", line_no)
        if is_ground(a) and is_ground(b):
            raise NetlistError("element with both terminals grounded", line_no)
        intern_node(a)
        intern_node(b)
        circuit.elements.append(Element(kind, a, b, value))
        if kind in "IV":
            key = (a, b)
            if key not in seen_ports:
                seen_ports[key] = None

    if ports is not None:
        circuit.ports = []
        for name in ports:
            if is_ground(name):
                raise NetlistError("ground cannot be a port")
            if name not in circuit.node_index:
                raise NetlistError(f"port node {name!r} not in netlist")
            circuit.ports.append((name, "0"))
    else:
        circuit.ports = list(seen_ports)
    return circuit


def read_port_file(path):
    """Port node names, one per line; blank lines and * comments skipped."""
    names = []
    for line in Path(path).read_text().splitlines():
        s = line.strip()
        if s and not s.startswith("*"):
            names.append(s.split()[0])
    return names


def write_netlist(circuit, path=None):
    """Serialize a Circuit back to netlist text (deterministic card order)."""
    counters = {}
    lines = ["* circuitmor netlist"]
    for el in circuit.elements:
        counters[el.kind] = counters.get(el.kind, 0) + 1
        lines.append(f"{el.kind}{counters[el.kind]} {el.a} {el.b} {el.value:.17g}")
    lines.append(".end")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


@dataclass
class DescriptorModel:
    """Sparse blocks of the first-order descriptor form of an RLC circuit."""

    n: int
    m: int
    p: int
    q: int
    G: SparseMatrix
    C: SparseMatrix
    M: SparseMatrix
    W: SparseMatrix
    B1: SparseMatrix
    L1: SparseMatrix
    D: SparseMatrix

    _E: SparseMatrix = field(default=None, repr=False)
    _A: SparseMatrix = field(default=None, repr=False)

    @property
    def order(self):
        return self.n + self.m

    @property
    def E(self):
        """Assembled descriptor mass matrix diag(C, M)."""
        if self._E is None:
            self._E = sparse_block([[self.C, None], [None, self.M]])
            self._E.symmetric = True
        return self._E

    @property
    def A(self):
        """Assembled descriptor system matrix [[-G, -W], [W^T, 0]]."""
        if self._A is None:
            negG = SparseMatrix(-self.G.csc)
            negW = SparseMatrix(-self.W.csc)
            self._A = sparse_block([[negG, negW], [self.W.T, None]])
        return self._A

    @property
    def B(self):
        """Full input map [B1; 0] of shape (order, p)."""
        return sparse_block([[self.B1], [sparse_zeros(self.m, self.p)]])

    @property
    def L(self):
        """Full output map [L1, 0] of shape (q, order)."""
        return sparse_block([[self.L1, sparse_zeros(self.q, self.m)]])


def assemble_mna(circuit, norton_resistance=1e-6):
    """Stamp a Circuit into the sparse descriptor blocks.

    Ideal voltage sources get a series resistance of ``norton_resistance``
    ohms and are then replaced by their Norton equivalent: the conductance is
    stamped into G and the node pair becomes a current injection port.
    """
    if not circuit.elements:
        raise NetlistError("empty circuit")
    idx = circuit.node_index
    n = len(idx)

    g_r, g_c, g_v = [], [], []
    c_r, c_c, c_v = [], [], []
    w_r, w_c, w_v = [], [], []
    m_diag = []

    def stamp_pair(rows, cols, vals, a, b, g):
        ia = idx.get(a) if not is_ground(a) else None
        ib = idx.get(b) if not is_ground(b) else None
        if ia is not None:
            rows.append(ia); cols.append(ia); vals.append(g)
        if ib is not None:
            rows.append(ib); cols.append(ib); vals.append(g)
        if ia is not None and ib is not None:
            rows.append(ia); cols.append(ib); vals.append(-g)
            rows.append(ib); cols.append(ia); vals.append(-g)

    branch = 0
    for el in circuit.elements:
        if el.kind == "R":
            stamp_pair(g_r, g_c, g_v, el.a, el.b, 1.0 / el.value)
        elif el.kind == "C":
            stamp_pair(c_r, c_c, c_v, el.a, el.b, el.value)
        elif el.kind == "L":
            if not is_ground(el.a):
                w_r.append(idx[el.a]); w_c.append(branch); w_v.append(1.0)
            if not is_ground(el.b):
                w_r.append(idx[el.b]); w_c.append(branch); w_v.append(-1.0)
            m_diag.append(el.value)
            branch += 1
        elif el.kind == "V":
            stamp_pair(g_r, g_c, g_v, el.a, el.b, 1.0 / norton_resistance)
        # current sources only define ports; they carry no matrix stamp

    m = branch
    ports = circuit.ports
    p = len(ports)
    if p == 0:
        raise NetlistError("circuit has no ports (no sources and no explicit port list)")
    b_r, b_c, b_v = [], [], []
    for j, (a, b) in enumerate(ports):
        if not is_ground(a):
            b_r.append(idx[a]); b_c.append(j); b_v.append(1.0)
        if not is_ground(b):
            b_r.append(idx[b]); b_c.append(j); b_v.append(-1.0)

    G = SparseMatrix.from_triplets(n, n, g_r, g_c, g_v, symmetric=True)
    C = SparseMatrix.from_triplets(n, n, c_r, c_c, c_v, symmetric=True)
    M = SparseMatrix.from_triplets(m, m, range(m), range(m), m_diag, symmetric=True)
    W = SparseMatrix.from_triplets(n, m, w_r, w_c, w_v)
    B1 = SparseMatrix.from_triplets(n, p, b_r, b_c, b_v)
    L1 = B1.T  # symmetric probing: outputs observe the port nodes
    D = sparse_zeros(p, p)
    return DescriptorModel(n=n, m=m, p=p, q=p, G=G, C=C, M=M, W=W, B1=B1, L1=L1, D=D)


def split_ports(model):
    """Single-column input matrices B_i (full state dimension), one per port."""
    B = model.B.csc
    return [SparseMatrix(B[:, [i]]) for i in range(model.p)]


def capacitive_node_mask(C, zero_tol=1e-30):
    """True for nodes whose capacitance row has any entry above zero_tol."""
    n = C.nrows
    mask = np.zeros(n, dtype=bool)
    if C.nnz:
        keep = np.abs(C.csc.data) > zero_tol
        cols = np.repeat(np.arange(n), np.diff(C.csc.indptr))
        mask[cols[keep]] = True
        mask[C.csc.indices[keep]] = True  # symmetric safety net
    return mask


def augment_capacitance(circuit, value=1e-12, seed=None, rel_spread=0.5):
    """Add a grounded capacitor to every node that has none.

    Values are drawn uniformly from value * [1 - rel_spread, 1 + rel_spread]
    with the given seed, so augmented models are reproducible.
    """
    if seed is None:
        raise ValueError("capacitance augmentation requires an explicit seed")
    rng = np.random.default_rng(seed)
    has_cap = set()
    for el in circuit.elements:
        if el.kind == "C":
            has_cap.add(el.a)
            has_cap.add(el.b)
    new_elements = list(circuit.elements)
    for name in circuit.node_index:
        if name not in has_cap:
            val = value * rng.uniform(1.0 - rel_spread, 1.0 + rel_spread)
            new_elements.append(Element("C", name, "0", val))
    return Circuit(elements=new_elements, node_index=dict(circuit.node_index),
                   ports=list(circuit.ports))


# ---------------------------------------------------------------------------
# Pre-assembled model directories: Matrix Market blocks plus a JSON manifest.

_MODEL_FILES = ("G", "C", "M", "W", "B", "L")


def save_model_dir(model, path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    blocks = {"G": model.G, "C": model.C, "M": model.M,
              "W": model.W, "B": model.B1, "L": model.L1}
    for name, block in blocks.items():
        write_matrix_market(path / f"{name}.mtx", block)
    if model.D.nnz:
        write_matrix_market(path / "D.mtx", model.D)
    manifest = {"schema_version": 1, "n": model.n, "m": model.m,
                "p": model.p, "q": model.q}
    (path / "model.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_model_dir(path):
    path = Path(path)
    manifest = json.loads((path / "model.json").read_text())
    n, m, p, q = (manifest[k] for k in ("n", "m", "p", "q"))
    mats = {name: read_matrix_market(path / f"{name}.mtx") for name in _MODEL_FILES}
    dfile = path / "D.mtx"
    D = read_matrix_market(dfile) if dfile.is_file() else sparse_zeros(q, p)
    expected = {"G": (n, n), "C": (n, n), "M": (m, m), "W": (n, m),
                "B": (n, p), "L": (q, n)}
    for name, shape in expected.items():
        if mats[name].shape != shape:
            raise NetlistError(f"{name}.mtx has shape {mats[name].shape}, expected {shape}")
    return DescriptorModel(n=n, m=m, p=p, q=q, G=mats["G"], C=mats["C"], M=mats["M"],
                           W=mats["W"], B1=mats["B"], L1=mats["L"], D=D)
