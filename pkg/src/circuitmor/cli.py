"""Batch front-end: reduce circuit models, compare methods, dump moments.

Subcommands:

    reduce    parse -> assemble -> regularize if singular -> per-port reduce
              -> persist reduced models and a replayable run manifest
    compare   reduce with both subspaces and report frequency-domain errors
    moments   print leading transfer-function moments, original vs reduced
    info      model statistics as JSON
    synth     generate a seeded synthetic benchmark netlist

Configuration precedence is flags > --config file > defaults.  A run
manifest written by ``reduce``/``compare`` can be fed back through
``--config`` to reproduce the run byte for byte.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis, krylov, netlist, regularize, superpose, synth
from .analysis import FrequencyGrid

SCHEMA_VERSION = 1

_DEFAULTS = {
    "format": "spice",
    "method": "both",
    "k": None,
    "order": None,
    "fmin": 1e0,
    "fmax": 1e12,
    "npoints": 200,
    "ports": None,
    "add_cap": None,
    "seed": None,
    "workers": None,
    "out": "out",
    "norton_rs": 1e-6,
    "tol": 1e-10,
    "save_bases": False,
    "pairs": None,
    "max_index": None,
    "oracle_cap": 2000,
}


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        self.stage = stage
        super().__init__(f"stage {stage!r} failed: {cause}")


class Run:
    """Collects timings and warnings across pipeline stages."""

    def __init__(self):
        self.timings = {}
        self.warnings = []

    def stage(self, name, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            result = fn(*args, **kwargs)
        except Exception as exc:
            raise StageError(name, exc) from exc
        self.timings[name] = time.perf_counter() - t0
        return result

    def warn(self, message):
        self.warnings.append(message)
        print(f"warning: {message}", file=sys.stderr)


def _load_config_file(path):
    data = json.loads(Path(path).read_text())
    if "config" in data and isinstance(data["config"], dict):
        data = data["config"]  # accept a full run manifest
    return data


def resolve_config(args):
    """Merge flags over config-file values over defaults."""
    file_cfg = _load_config_file(args.config) if getattr(args, "config", None) else {}
    cfg = {}
    for key, default in _DEFAULTS.items():
        flag_val = getattr(args, key, None)
        if flag_val is not None and flag_val is not False:
            cfg[key] = flag_val
        elif key in file_cfg:
            cfg[key] = file_cfg[key]
        else:
            cfg[key] = default
    for key in ("input",):
        cfg[key] = getattr(args, key, None) or file_cfg.get(key)
    if cfg.get("add_cap") is not None and cfg.get("seed") is None:
        raise ValueError("--add-cap requires --seed for reproducible values")
    return cfg


def load_model(cfg, run):
    if not cfg.get("input"):
        raise ValueError("no input given (use --input)")
    path = Path(cfg["input"])
    if cfg["format"] == "mm-dir":
        model = run.stage("load", netlist.load_model_dir, path)
        return model, None
    ports = netlist.read_port_file(cfg["ports"]) if cfg.get("ports") else None
    circuit = run.stage("parse", netlist.parse_netlist, path, ports)
    if cfg.get("add_cap") is not None:
        circuit = run.stage("augment", netlist.augment_capacitance, circuit,
                            float(cfg["add_cap"]), int(cfg["seed"]))
    model = run.stage("assemble", netlist.assemble_mna, circuit,
                      float(cfg["norton_rs"]))
    return model, circuit


def resolve_k(cfg, p, method, run):
    """Moment count from --k or --order; records the rounding policy."""
    if cfg["k"] is not None and cfg["order"] is not None:
        raise ValueError("--k and --order are mutually exclusive")
    if cfg["k"] is not None:
        return int(cfg["k"])
    if cfg["order"] is not None:
        r = int(cfg["order"])
        per_dir = 2 * p if method == "eks" else p
        k, rem = divmod(r, per_dir)
        if rem:
            k += 1
            run.warn(f"order {r} not divisible by {per_dir}; rounded k up to {k}"
                     f" for method {method}")
        return max(1, k)
    raise ValueError("one of --k or --order is required")


def regularize_if_needed(model, run):
    pm = run.stage("regularize", regularize.detect_and_partition, model)
    return pm


def methods_from(cfg):
    m = cfg["method"]
    if m not in ("mm", "eks", "both"):
        raise ValueError(f"unknown method {m!r}")
    return ["mm", "eks"] if m == "both" else [m]


def write_manifest(out_dir, command, cfg, run, extra):
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": {k: v for k, v in cfg.items() if v is not None},
        "warnings": run.warnings,
        "timings": {k: round(v, 6) for k, v in run.timings.items()},
    }
    manifest.update(extra)
    path = Path(out_dir) / "run_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True,
                               default=analysis._json_default) + "\n")
    return path


def _reduce_pipeline(cfg, run):
    model, _ = load_model(cfg, run)
    pm = regularize_if_needed(model, run)
    target = pm if pm is not None else model
    workers = int(cfg["workers"]) if cfg["workers"] is not None else None
    decomps = {}
    per_port = {}
    for method in methods_from(cfg):
        k = resolve_k(cfg, model.p, method, run)
        t0 = time.perf_counter()
        pd = superpose.reduce_all_ports(target, method, k, workers=workers,
                                        tol=float(cfg["tol"]))
        run.timings[f"reduce_{method}_total"] = time.perf_counter() - t0
        run.timings[f"reduce_{method}_per_port_mean"] = (
            run.timings[f"reduce_{method}_total"] / max(1, model.p))
        for w in pd.warnings():
            run.warn(f"{method}: {w}")
        decomps[method] = pd
        per_port[method] = [pr.rom.order if pr.rom is not None else None
                            for pr in pd.ports]
    return model, pm, decomps, per_port


def cmd_reduce(args):
    run = Run()
    cfg = resolve_config(args)
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    model, pm, decomps, per_port = _reduce_pipeline(cfg, run)
    for method, pd in decomps.items():
        superpose.save_decomposition(pd, out_dir / "roms" / method)
        if pd.failed_ports:
            raise StageError("reduce", f"ports {pd.failed_ports} failed ({method})")
    if cfg["save_bases"]:
        for method, pd in decomps.items():
            bdir = out_dir / "bases" / method
            bdir.mkdir(parents=True, exist_ok=True)
            for pr in pd.ports:
                if pr.basis is not None:
                    np.save(bdir / f"port_{pr.port:04d}.npy", pr.basis.X)
    extra = {
        "model": {"n": model.n, "m": model.m, "p": model.p, "q": model.q,
                  "order": model.order},
        "regularized": pm is not None,
        "rom_orders": per_port,
    }
    if pm is not None:
        extra["partition"] = {"n1": pm.n1, "n2": pm.n2,
                              "regular_order": pm.order}
    path = write_manifest(out_dir, "reduce", cfg, run, extra)
    print(f"wrote {path}")
    for name, val in sorted(run.timings.items()):
        print(f"  {name}: {val:.3f}s")
    return 0


def _parse_pairs(spec, q, p):
    if spec:
        pairs = []
        for tok in spec.split(","):
            a, b = tok.split(":")
            pairs.append((int(a), int(b)))
        return pairs
    return [(i, i) for i in range(min(q, p, 4))]


def cmd_compare(args):
    run = Run()
    cfg = resolve_config(args)
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    model, pm, decomps, per_port = _reduce_pipeline(cfg, run)
    for method, pd in decomps.items():
        superpose.save_decomposition(pd, out_dir / "roms" / method)
        if pd.failed_ports:
            run.warn(f"{method}: ports {pd.failed_ports} failed; method skipped")
    usable = {m: pd for m, pd in decomps.items() if not pd.failed_ports}

    grid = FrequencyGrid.log_spaced(float(cfg["fmin"]), float(cfg["fmax"]),
                                    int(cfg["npoints"]))
    workers = int(cfg["workers"]) if cfg["workers"] is not None else None
    t0 = time.perf_counter()
    rs = analysis.collect_responses(model, usable, grid, pm=pm, workers=workers)
    run.timings["evaluate"] = time.perf_counter() - t0
    report = analysis.build_error_report(rs)

    pair_files = {}
    for out_idx, in_idx in _parse_pairs(cfg.get("pairs"), model.q, model.p):
        name = f"pair_{out_idx}_{in_idx}.csv"
        analysis.write_port_pair_csv(out_dir / name, rs, out_idx, in_idx)
        pair_files[f"{out_idx}:{in_idx}"] = name

    summary = {
        "schema_version": SCHEMA_VERSION,
        "dimension": model.order,
        "ports": model.p,
        "rom_orders": per_port,
        "moments": {m: decomps[m].k for m in decomps},
        "max_error": {m: report.max_error.get(m) for m in ("mm", "eks")},
        "error_reduction_percentage": report.error_reduction_percentage,
        "flagged_points": report.flagged_points,
        "runtimes": {k: round(v, 6) for k, v in run.timings.items()},
        "pair_csv": pair_files,
    }
    analysis.write_summary_json(out_dir / "summary.json", summary)
    extra = {"summary_file": "summary.json"}
    write_manifest(out_dir, "compare", cfg, run, extra)
    printable = {m: summary["max_error"][m] for m in ("mm", "eks")}
    print(f"max_error: {printable}")
    print(f"error_reduction_percentage: {summary['error_reduction_percentage']}")
    print(f"wrote {out_dir / 'summary.json'}")
    return 0


def cmd_moments(args):
    run = Run()
    cfg = resolve_config(args)
    model, _ = load_model(cfg, run)
    pm = regularize_if_needed(model, run)
    target = pm if pm is not None else model
    methods = methods_from(cfg)
    k = resolve_k(cfg, model.p, methods[0], run)
    i_max = int(cfg["max_index"]) if cfg["max_index"] is not None else 2 * k - 1
    cap = int(cfg["oracle_cap"])

    original = krylov.moments(target, i_max, cap=cap)
    columns = {}
    for method in methods:
        pd = superpose.reduce_all_ports(target, method, k)
        if pd.failed_ports:
            run.warn(f"{method}: ports {pd.failed_ports} failed; skipped")
            continue
        columns[method] = _decomposition_moments(pd, i_max)

    print(f"{'i':>3} {'|M_i|':>12}", end="")
    for method in columns:
        print(f" {f'dev_{method}':>12}", end="")
    print()
    for i in range(i_max + 1):
        ref = np.linalg.norm(original[i])
        print(f"{i:>3} {ref:>12.5e}", end="")
        for method in columns:
            dev = np.linalg.norm(columns[method][i] - original[i]) / max(ref, 1e-300)
            print(f" {dev:>12.5e}", end="")
        print()
    return 0


def _decomposition_moments(pd, i_max):
    """Moment matrices of the concatenated per-port reduced models."""
    per_port = [krylov.moments(pr.rom, i_max) for pr in pd.ports]
    out = []
    for i in range(i_max + 1):
        out.append(np.hstack([m[i] for m in per_port]))
    return out


def cmd_info(args):
    run = Run()
    cfg = resolve_config(args)
    model, circuit = load_model(cfg, run)
    mask = netlist.capacitive_node_mask(model.C)
    info = {
        "schema_version": SCHEMA_VERSION,
        "n": model.n, "m": model.m, "p": model.p, "q": model.q,
        "order": model.order,
        "nnz": {"G": model.G.nnz, "C": model.C.nnz, "M": model.M.nnz,
                "W": model.W.nnz, "B": model.B1.nnz},
        "singular": bool((~mask).any()),
        "capacitance_free_nodes": int((~mask).sum()),
    }
    if circuit is not None:
        info["elements"] = len(circuit.elements)
    print(json.dumps(info, indent=2, sort_keys=True))
    return 0


def cmd_synth(args):
    if args.seed is None:
        raise ValueError("synth requires --seed")
    kind = args.kind
    if kind == "ladder":
        circuit = synth.rc_ladder(args.nodes, p=args.ports, seed=args.seed)
    else:
        nx = args.nx or max(2, int(math.isqrt(args.nodes)))
        ny = args.ny or max(2, args.nodes // nx)
        frac = args.inductor_frac if kind == "rlc-mesh" else 0.0
        circuit = synth.rc_mesh(nx, ny, p=args.ports, seed=args.seed,
                                inductor_frac=frac, cap_free=args.cap_free)
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    netlist.write_netlist(circuit, path)
    print(f"wrote {path} ({len(circuit.elements)} elements, "
          f"{circuit.n_nodes} nodes, {len(circuit.ports)} ports)")
    return 0


def _add_input_flags(sp):
    sp.add_argument("--input", help="netlist file or model directory")
    sp.add_argument("--format", choices=["spice", "mm-dir"], default=None)
    sp.add_argument("--ports", help="file of port node names, one per line")
    sp.add_argument("--add-cap", dest="add_cap", type=float,
                    help="add grounded capacitance of this value to bare nodes")
    sp.add_argument("--seed", type=int, help="seed for randomized values")
    sp.add_argument("--norton-rs", dest="norton_rs", type=float,
                    help="series resistance inserted for ideal V sources")
    sp.add_argument("--config", help="JSON config file or prior run manifest")
    sp.add_argument("--workers", type=int,
                    help=f"parallel workers (default ${superpose.WORKERS_ENV} or 1)")
    sp.add_argument("--out", help="output directory")


def _add_reduce_flags(sp):
    sp.add_argument("--method", choices=["mm", "eks", "both"], default=None)
    sp.add_argument("--k", type=int, help="moments per expansion direction")
    sp.add_argument("--order", type=int, help="target reduced order (k derived)")
    sp.add_argument("--tol", type=float, help="basis deflation tolerance")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="circuitmor",
        description="Krylov-subspace model order reduction for RLC circuit models")
    sub = parser.add_subparsers(dest="cmd", required=True)

    sp = sub.add_parser("reduce", help="reduce a model and persist the ROMs")
    _add_input_flags(sp)
    _add_reduce_flags(sp)
    sp.add_argument("--save-bases", dest="save_bases", action="store_true",
                    default=None, help="also save the projection bases (.npy)")
    sp.set_defaults(fn=cmd_reduce)

    sp = sub.add_parser("compare", help="reduce and compare methods over a grid")
    _add_input_flags(sp)
    _add_reduce_flags(sp)
    sp.add_argument("--fmin", type=float, help="grid start, rad/s")
    sp.add_argument("--fmax", type=float, help="grid end, rad/s")
    sp.add_argument("--npoints", type=int, help="grid point count")
    sp.add_argument("--pairs", help='port pairs for CSV curves, e.g. "0:0,1:1"')
    sp.set_defaults(fn=cmd_compare)

    sp = sub.add_parser("moments", help="moment table, original vs reduced")
    _add_input_flags(sp)
    _add_reduce_flags(sp)
    sp.add_argument("--max-index", dest="max_index", type=int,
                    help="highest moment index to print")
    sp.add_argument("--oracle-cap", dest="oracle_cap", type=int,
                    help="largest model order the moment oracle accepts")
    sp.set_defaults(fn=cmd_moments)

    sp = sub.add_parser("info", help="model statistics as JSON")
    _add_input_flags(sp)
    sp.set_defaults(fn=cmd_info)

    sp = sub.add_parser("synth", help="write a synthetic benchmark netlist")
    sp.add_argument("--kind", choices=["ladder", "mesh", "rlc-mesh"], default="mesh")
    sp.add_argument("--nodes", type=int, default=100)
    sp.add_argument("--nx", type=int)
    sp.add_argument("--ny", type=int)
    sp.add_argument("--ports", type=int, default=1)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--cap-free", dest="cap_free", type=int, default=0)
    sp.add_argument("--inductor-frac", dest="inductor_frac", type=float, default=0.1)
    sp.add_argument("--out", default="synthetic.sp")
    sp.set_defaults(fn=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
