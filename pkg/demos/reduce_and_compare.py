#!/usr/bin/env python3
"""Reduce a synthetic power-grid mesh with both subspaces and compare errors.

Walks the full pipeline in-process: synthesize -> assemble -> reduce each
port with the standard and the extended Krylov subspace at equal reduced
order -> sample both transfer functions over a log frequency grid -> report
the grid-maximum singular-value error and the error reduction percentage.
Saves a Bode-style comparison plot for one port pair.
"""

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from circuitmor import (
    FrequencyGrid,
    ResponseSet,
    assemble_mna,
    build_error_report,
    eval_original,
    eval_reduced,
    max_error,
    reduce_all_ports,
)
from circuitmor.synth import rc_mesh

# 1. A 30x30 mesh: ~1 ohm segments, ~0.1 nF node capacitance, 4 ports.
circuit = rc_mesh(30, 30, p=4, seed=11, c_scale=1e-10, spread=1.5)
model = assemble_mna(circuit)
print(f"model: {model.n} nodes, {model.m} branches, {model.p} ports "
      f"(order {model.order})")

# 2. Equal reduced order per port: 4 forward moments vs 2 per direction.
pd_mm = reduce_all_ports(model, "mm", k=4)
pd_eks = reduce_all_ports(model, "eks", k=2)
print(f"per-port reduced order: mm={pd_mm.ports[0].rom.order}, "
      f"eks={pd_eks.ports[0].rom.order}")

# 3. Sample everything over 10^0 .. 10^12 rad/s.
grid = FrequencyGrid.log_spaced(1e0, 1e12, 200)
H0, flags = eval_original(model, grid)
rs = ResponseSet(grid=grid, original=H0, original_flags=flags)
for method, pd in (("mm", pd_mm), ("eks", pd_eks)):
    H, fl = eval_reduced(pd, grid)
    rs.add_reduced(method, H, fl)

report = build_error_report(rs)
e_mm, e_eks = report.max_error["mm"], report.max_error["eks"]
print(f"max error   mm : {e_mm:.4e}")
print(f"max error   eks: {e_eks:.4e}")
print(f"error reduction: {report.error_reduction_percentage:.2f}%")

# 4. Port (0, 0) magnitude curves plus absolute errors.
fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(7, 7))
ax1.loglog(grid.omega, np.abs(rs.original[:, 0, 0]), "k-", label="original")
ax1.loglog(grid.omega, np.abs(rs.reduced["mm"][:, 0, 0]), "C0--", label="standard")
ax1.loglog(grid.omega, np.abs(rs.reduced["eks"][:, 0, 0]), "C1-.", label="extended")
ax1.set_ylabel("|H(jw)| at port (0,0)")
ax1.legend()
ax2.loglog(grid.omega, np.abs(rs.reduced["mm"][:, 0, 0] - rs.original[:, 0, 0]),
           "C0--", label="standard")
ax2.loglog(grid.omega, np.abs(rs.reduced["eks"][:, 0, 0] - rs.original[:, 0, 0]),
           "C1-.", label="extended")
ax2.set_xlabel("omega [rad/s]")
ax2.set_ylabel("absolute error")
ax2.legend()
fig.tight_layout()
fig.savefig("reduce_and_compare.png", dpi=120)
print("wrote reduce_and_compare.png")
