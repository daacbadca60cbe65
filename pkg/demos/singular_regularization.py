#!/usr/bin/env python3
"""Handle a singular descriptor model: detect, eliminate, reduce, verify.

Some nodes of a power grid carry no capacitance, which zeroes rows of the
descriptor mass matrix and breaks any method that needs to solve with it.
This demo builds such a model, eliminates the algebraic nodes through the
conductance Schur complement (kept implicit and sparse), checks that the
transfer function is untouched, and then runs the extended-subspace
reduction that the singular model alone would have refused.
"""

import numpy as np

from circuitmor import (
    FrequencyGrid,
    assemble_mna,
    detect_and_partition,
    eval_original,
    eval_reduced,
    eval_regularized,
    make_operators,
    reduce_all_ports,
)
from circuitmor.sparse_core import SingularMatrixError
from circuitmor.synth import rlc_mesh

# 1. A mesh with inductive segments and 12 capacitance-free nodes.
circuit = rlc_mesh(12, 12, p=2, seed=5, inductor_frac=0.1, cap_free=12,
                   c_scale=1e-10)
model = assemble_mna(circuit)
print(f"descriptor order {model.order} ({model.n} nodes, {model.m} branches)")

# 2. The extended subspace needs a nonsingular mass matrix; see it refuse.
ops = make_operators(model)
try:
    ops.apply_AEinv(np.ones((model.order, 1)))
except SingularMatrixError as err:
    print(f"raw model refuses the inverse direction:\n  {err}")

# 3. Eliminate the algebraic nodes.  The Schur complement is never formed:
#    solves ride a bordered sparse factorization, products use the
#    low-rank correction form.
pm = detect_and_partition(model)
print(f"partitioned: n1={pm.n1} dynamic nodes, n2={pm.n2} eliminated, "
      f"regular order {pm.order}")

# 4. Transfer function is preserved exactly (up to solver roundoff).
grid = FrequencyGrid.log_spaced(1e0, 1e12, 60)
H0, _ = eval_original(model, grid)       # original singular pencil
Hr, _ = eval_regularized(pm, grid)       # bordered regularized path
rel = max(np.linalg.norm(Hr[j] - H0[j]) / np.linalg.norm(H0[j])
          for j in range(len(grid)))
print(f"worst relative deviation over {len(grid)} grid points: {rel:.2e}")

# 5. Now both subspaces work on the regularized model.
for method, k in (("mm", 4), ("eks", 2)):
    pd = reduce_all_ports(pm, method, k=k)
    H, _ = eval_reduced(pd, grid)
    err = max(np.linalg.norm(H[j] - H0[j]) for j in range(len(grid)))
    print(f"{method:3s} (k={k}, per-port order {pd.ports[0].rom.order}): "
          f"max abs error {err:.3e}")
