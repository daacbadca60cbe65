#!/usr/bin/env python3
"""Show which transfer-function moments each reduction reproduces.

On a symmetric RC ladder (no inductors, outputs mirroring inputs) the
one-sided projection onto a k-moment Krylov basis matches the first 2k
moments of the transfer function; the extended basis spends half its
directions on the behavior at infinity instead, trading some expansion
depth at DC for a much better global fit.
"""

import numpy as np

from circuitmor import (
    assemble_mna,
    extended_basis,
    make_operators,
    moments,
    project,
    standard_basis,
)
from circuitmor.synth import rc_ladder

model = assemble_mna(rc_ladder(120, p=2, seed=3))
print(f"ladder model: order {model.order}, {model.p} ports")

ops = make_operators(model)
B_E = ops.solve_a(model.B.toarray())
k = 3

roms = {
    "standard k=3": project(model, standard_basis(ops, B_E, k=k)),
    "extended k=3": project(model, extended_basis(ops, B_E, r=k * model.p,
                                                  p=model.p)),
}
i_max = 2 * k - 1
reference = moments(model, i_max)

header = f"{'i':>3} {'|M_i|':>12}" + "".join(f" {name:>16}" for name in roms)
print(header)
for i in range(i_max + 1):
    ref_norm = np.linalg.norm(reference[i])
    row = f"{i:>3} {ref_norm:>12.4e}"
    for name, rom in roms.items():
        dev = np.linalg.norm(moments(rom, i_max)[i] - reference[i]) / ref_norm
        row += f" {dev:>16.4e}"
    print(row)

print("\nstandard: deviations stay at roundoff through i = 2k-1 = "
      f"{2 * k - 1} (symmetric one-sided projection doubles the count)")
print("extended: forward moments up to i = k-1 are matched; the remaining "
      "directions carry the response at infinity")
