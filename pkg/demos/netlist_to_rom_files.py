#!/usr/bin/env python3
"""File-level round trip: netlist in, reduced-model directories out.

Everything here is also reachable from the command line:

    circuitmor synth --kind rlc-mesh --nodes 400 --ports 3 --seed 21 --out grid.sp
    circuitmor info   --input grid.sp
    circuitmor reduce --input grid.sp --method both --k 2 --out out/
    circuitmor compare --input grid.sp --k 2 --npoints 120 --out out/

This script drives the same steps through the library API and shows what
lands on disk.
"""

import json
from pathlib import Path

from circuitmor import (
    assemble_mna,
    load_decomposition,
    parse_netlist,
    reduce_all_ports,
    save_decomposition,
    save_model_dir,
    write_netlist,
)
from circuitmor.synth import rlc_mesh

work = Path("netlist_demo")
work.mkdir(exist_ok=True)

# 1. Write a netlist, read it back.
circuit = rlc_mesh(20, 20, p=3, seed=21, inductor_frac=0.08, c_scale=1e-10)
netlist_path = work / "grid.sp"
write_netlist(circuit, netlist_path)
print(f"wrote {netlist_path} ({netlist_path.stat().st_size} bytes)")
model = assemble_mna(parse_netlist(netlist_path))
print(f"parsed back: order {model.order}, p={model.p}")

# 2. The assembled blocks can be persisted as a Matrix Market directory and
#    fed to the CLI with --format mm-dir.
save_model_dir(model, work / "model_dir")
print("model directory:", sorted(p.name for p in (work / "model_dir").iterdir()))

# 3. Reduce per port and persist one ROM directory per port.
pd = reduce_all_ports(model, "eks", k=2)
save_decomposition(pd, work / "roms_eks")
index = json.loads((work / "roms_eks" / "index.json").read_text())
print(f"saved {len(index['ports'])} reduced models "
      f"(method {index['method']}, k={index['k']})")

# 4. Reload and evaluate one reduced transfer value.
back = load_decomposition(work / "roms_eks")
H_port0 = back.ports[0].rom.transfer_at(1j * 1e9)
print(f"port 0 reduced transfer column at s=j*1e9: {H_port0.ravel()}")
