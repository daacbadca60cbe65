"""Seeded synthetic RC/RLC benchmark circuits (ladders and 2D meshes).

These generators produce Circuit objects in the same element vocabulary the
netlist parser emits, so everything downstream (assembly, regularization,
reduction, analysis) is exercised identically on synthetic and file inputs.
All randomness is drawn from one generator seeded by the caller.
"""

from __future__ import annotations

import numpy as np

from .netlist import Circuit, Element


def _log_uniform(rng, lo, hi, size=None):
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size))


def rc_ladder(n, p=1, seed=0, r_scale=1.0, c_scale=1.0, spread=2.0):
    """Chain of n nodes: series resistors, grounded capacitor at each node.

    Node 1 is tied to ground through a resistor so the conductance matrix is
    nonsingular.  Ports are spread evenly along the chain.  The resulting
    model is symmetric (no inductors, outputs mirror inputs), which is the
    setting where one-sided projection doubles the matched moment count.
    """
    if n < 2 or not (1 <= p <= n):
        raise ValueError("need n >= 2 and 1 <= p <= n")
    rng = np.random.default_rng(seed)
    elements = [Element("R", "n1", "0", float(_log_uniform(rng, r_scale / spread,
                                                           r_scale * spread)))]
    for i in range(1, n):
        rv = float(_log_uniform(rng, r_scale / spread, r_scale * spread))
        elements.append(Element("R", f"n{i}", f"n{i + 1}", rv))
    for i in range(1, n + 1):
        cv = float(_log_uniform(rng, c_scale / spread, c_scale * spread))
        elements.append(Element("C", f"n{i}", "0", cv))
    port_nodes = np.linspace(1, n, p).round().astype(int)
    port_nodes = np.unique(port_nodes)
    for i in port_nodes:
        elements.append(Element("I", f"n{i}", "0", 1.0))
    return _finish(elements)


def rc_mesh(nx, ny, p=1, seed=0, r_scale=1.0, c_scale=1e-9, spread=3.0,
            n_pads=None, inductor_frac=0.0, cap_free=0, l_lo=1e-12, l_hi=1e-10):
    """2D power-grid style mesh of nx * ny nodes.

    Neighboring nodes are connected by resistors; a few pad nodes are tied to
    ground resistively; every node gets a grounded capacitor except for
    ``cap_free`` randomly chosen interior nodes (which make the descriptor
    model singular).  A fraction of the mesh edges can be made inductive in
    series with their resistor; inductive edges are kept cycle-free so the
    system matrix stays nonsingular at DC.
    """
    if nx < 2 or ny < 2:
        raise ValueError("mesh needs nx, ny >= 2")
    n = nx * ny
    if not (1 <= p <= n):
        raise ValueError("need 1 <= p <= number of nodes")
    rng = np.random.default_rng(seed)

    def name(ix, iy):
        return f"n{ix}_{iy}"

    edges = []
    for ix in range(nx):
        for iy in range(ny):
            if ix + 1 < nx:
                edges.append(((ix, iy), (ix + 1, iy)))
            if iy + 1 < ny:
                edges.append(((ix, iy), (ix, iy + 1)))

    elements = []
    # union-find over nodes plus ground keeps the inductive edge set acyclic
    parent = {}

    def find(x):
        while parent.setdefault(x, x) != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra == rb:
            return False
        parent[ra] = rb
        return True

    n_inductive = int(round(inductor_frac * len(edges)))
    inductive = set()
    if n_inductive:
        for j in rng.permutation(len(edges)):
            if len(inductive) == n_inductive:
                break
            a, b = edges[j]
            if union(a, b):
                inductive.add(j)

    mid_names = []
    for j, (a, b) in enumerate(edges):
        rv = float(_log_uniform(rng, r_scale / spread, r_scale * spread))
        na, nb = name(*a), name(*b)
        if j in inductive:
            mid = f"b{j}"
            mid_names.append(mid)
            lv = float(_log_uniform(rng, l_lo, l_hi))
            elements.append(Element("R", na, mid, rv))
            elements.append(Element("L", mid, nb, lv))
        else:
            elements.append(Element("R", na, nb, rv))

    mesh_names = [name(ix, iy) for ix in range(nx) for iy in range(ny)]
    n_pads = max(1, n // 25) if n_pads is None else n_pads
    pad_idx = rng.choice(n, size=min(n_pads, n), replace=False)
    pads = {mesh_names[j] for j in pad_idx}
    for node in sorted(pads):
        rv = float(_log_uniform(rng, r_scale / spread, r_scale * spread))
        elements.append(Element("R", node, "0", rv))

    # capacitor on every node (mesh and inductor midpoints) except the
    # designated capacitance-free ones; those make the model singular
    all_names = mesh_names + mid_names
    no_cap = set()
    if cap_free:
        candidates = [nm for nm in all_names if nm not in pads]
        chosen = rng.choice(len(candidates), size=min(cap_free, len(candidates)),
                            replace=False)
        no_cap = {candidates[j] for j in chosen}
    for node in all_names:
        if node in no_cap:
            continue
        cv = float(_log_uniform(rng, c_scale / spread, c_scale * spread))
        elements.append(Element("C", node, "0", cv))

    port_idx = rng.choice(n, size=p, replace=False)
    for j in sorted(port_idx.tolist()):
        elements.append(Element("I", mesh_names[j], "0", 1.0))
    return _finish(elements)


def rlc_mesh(nx, ny, p=1, seed=0, inductor_frac=0.15, cap_free=0, **kw):
    """Mesh with a default share of inductive edges; see rc_mesh."""
    return rc_mesh(nx, ny, p=p, seed=seed, inductor_frac=inductor_frac,
                   cap_free=cap_free, **kw)


def _finish(elements):
    circuit = Circuit()
    ports = {}
    for el in elements:
        for node in (el.a, el.b):
            if node != "0" and node not in circuit.node_index:
                circuit.node_index[node] = len(circuit.node_index)
        if el.kind in "IV":
            ports.setdefault((el.a, el.b), None)
    circuit.elements = list(elements)
    circuit.ports = list(ports)
    return circuit
