"""Command-line surface: reduce / verify / simulate / bench / gen-bus / gen-mesh.

Every command writes machine-readable output (JSON reports, CSV tables) and
maps error classes to stable exit codes:

    0  success
    1  verification failure
    2  usage error
    3  input error (parse / bundle problems)
    4  numerical failure
"""

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis, generators, ingest, partition, prima, reduce as reduce_mod
from .config import DEFAULT_CONFIG, ReduceConfig, Tolerances
from .errors import (
    EXIT_INPUT,
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_USAGE,
    EXIT_VERIFY_FAIL,
    BundleError,
    NetlistError,
    NumericalError,
    PromotionOverflowError,
    TurboMORError,
)
from .reduce import SCHEMA_VERSION


class UsageError(Exception):
    pass


def _load_input(netlist=None, bundle=None):
    given = [x for x in (netlist, bundle) if x]
    if len(given) != 1:
        raise UsageError("exactly one of --netlist or --bundle is required")
    if netlist:
        text = Path(netlist).read_text()
        return ingest.stamp(ingest.parse_netlist(text))
    return ingest.load_matrix_bundle(bundle)


def _load_model(path):
    """A model spec is either a ROM bundle, a G/C/B bundle, or a netlist."""
    path = Path(path)
    if path.is_dir():
        if (path / "rom.G.mtx").exists():
            return reduce_mod.load_rom_bundle(path)
        return ingest.load_matrix_bundle(path)
    return ingest.stamp(ingest.parse_netlist(path.read_text()))


def _config_from_args(args):
    tol = Tolerances()
    if getattr(args, "pivot_delta", None) is not None:
        tol.pivot_delta = args.pivot_delta
    if getattr(args, "promotion_fraction", None) is not None:
        tol.promotion_fraction = args.promotion_fraction
    return ReduceConfig(tolerances=tol)


def _resolved_config(args):
    skip = {"func"}
    return {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in vars(args).items()
        if k not in skip and not callable(v)
    }


def cmd_reduce(args):
    if args.q < 1:
        raise UsageError("--q must be >= 1")
    system = _load_input(args.netlist, args.bundle)
    config = _config_from_args(args)
    out = Path(args.out)

    if args.method == "prima":
        if args.partition:
            raise UsageError("--partition applies to the turbomor method only")
        model, report = prima.prima_reduce(system, args.q, config)
    elif args.partition:
        model, report = partition.reduce_partitioned(
            system,
            args.q,
            leaf_size=args.leaf_size,
            config=config,
            perm_file=args.perm_file,
        )
    else:
        model, report = reduce_mod.turbomor_reduce(system, args.q, config)

    reduce_mod.export_rom(model, out, fmt="bundle")
    if args.netlist_out:
        reduce_mod.export_rom(model, Path(args.netlist_out), fmt="netlist")
    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": "reduce",
        "config": _resolved_config(args),
        "report": report.to_dict(),
        "rom_order": model.order,
        "rom_dense": model.dense,
    }
    (out / "report.json").write_text(json.dumps(payload, indent=1))
    print(f"wrote ROM of order {model.order} (q={model.q}) to {out}")
    return EXIT_OK


def cmd_verify(args):
    system = _load_input(args.netlist, args.bundle)
    model = _load_model(args.rom)
    checks = {}
    ok = True

    if args.moments:
        K = args.moments
        ref = analysis.moments_direct(system, K)
        got = analysis.moments_direct(model, K)
        worst = []
        for k, (a, b) in enumerate(zip(ref, got)):
            scale = max(np.abs(a).max(), 1e-300)
            rel = float(np.abs(a - b).max() / scale)
            worst.append(rel)
        checks["moments"] = {
            "count": K,
            "relative_errors": worst,
            "tolerance": args.tol,
            "passed": all(e <= args.tol for e in worst),
        }
        if not checks["moments"]["passed"]:
            bad = next(i for i, e in enumerate(worst) if e > args.tol)
            checks["moments"]["witness"] = {"moment": bad, "residual": worst[bad]}
            ok = False

    if args.freq:
        svals = [2j * np.pi * f for f in args.freq]
        ref, rf = analysis.transfer_eval(system, svals)
        got, gf = analysis.transfer_eval(model, svals)
        rows = []
        for f, a, b in zip(args.freq, ref, got):
            if a is None or b is None:
                rows.append({"freq": f, "error": None})
                ok = False
                continue
            scale = max(np.abs(a).max(), 1e-300)
            rows.append({"freq": f, "error": float(np.abs(a - b).max() / scale)})
        checks["transfer"] = {"samples": rows, "failures": len(rf) + len(gf)}

    if args.passivity:
        rep = analysis.passivity_check(model)
        checks["passivity"] = {"passed": rep.passed, "details": rep.details}
        ok = ok and rep.passed

    if not checks:
        raise UsageError("select at least one of --moments/--freq/--passivity")
    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": "verify",
        "config": _resolved_config(args),
        "checks": checks,
        "passed": ok,
    }
    text = json.dumps(payload, indent=1)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return EXIT_OK if ok else EXIT_VERIFY_FAIL


def _read_waveform(path, t):
    """Interpolate a `t,port1,...` CSV onto the simulation grid."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    names = list(data.dtype.names)
    if names[0] != "t":
        raise NetlistError(f"waveform CSV must start with a 't' column, got {names[0]}")
    src_t = data["t"]
    cols = [np.interp(t, src_t, data[n]) for n in names[1:]]
    return np.column_stack(cols)


def _write_waveform(path, result):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"port{i+1}" for i in range(result.y.shape[1])])
        for tk, row in zip(result.t, result.y):
            w.writerow([repr(float(tk))] + [repr(float(v)) for v in row])


def cmd_simulate(args):
    if args.dt <= 0 or args.t_end <= 0:
        raise UsageError("--dt and --t-end must be positive")
    model = _load_model(args.model)
    steps = int(round(args.t_end / args.dt))
    t = np.arange(steps + 1) * args.dt
    p = model.B.shape[1] if hasattr(model, "B") else model.Bhat.shape[1]
    if args.sources:
        U = _read_waveform(args.sources, t)
        if U.shape[1] != p:
            raise NetlistError(
                f"waveform has {U.shape[1]} ports, model has {p}"
            )
    else:
        U = np.zeros((steps + 1, p))
    result = analysis.transient_sim(model, U, args.t_end, args.dt)
    _write_waveform(args.out, result)

    metrics = {"schema_version": SCHEMA_VERSION, "command": "simulate"}
    metrics["timing"] = {
        k: result.meta[k] for k in ("factor_time", "step_time", "steps")
    }
    if args.reference:
        ref = np.genfromtxt(args.reference, delimiter=",", names=True)
        ry = np.column_stack([ref[n] for n in ref.dtype.names[1:]])
        ref_result = analysis.TransientResult(t=ref["t"], y=ry)
        metrics["errors"] = analysis.error_metrics(ref_result, result)
    if args.metrics_out:
        Path(args.metrics_out).write_text(json.dumps(metrics, indent=1))
    print(f"wrote {steps + 1} samples to {args.out}")
    return EXIT_OK


def _bench_input(spec, seed):
    kind, _, rest = spec.partition(":")
    if kind == "bus":
        L, S = (int(x) for x in rest.split("x"))
        return f"bus-L{L}-S{S}", generators.bus_system(L, S)
    if kind == "mesh":
        r, c = (int(x) for x in rest.split("x"))
        return f"mesh-{r}x{c}", generators.mesh_system(r, c, seed=seed)
    if kind == "netlist":
        sys_ = ingest.stamp(ingest.parse_netlist(Path(rest).read_text()))
        return Path(rest).stem, sys_
    if kind == "bundle":
        return Path(rest).name, ingest.load_matrix_bundle(rest)
    raise UsageError(f"unknown bench input spec {spec!r}")


def cmd_bench(args):
    rows = []
    failures = []
    for spec in args.input:
        for method in args.methods:
            for q in args.q:
                try:
                    name, system = _bench_input(spec, args.seed)
                    times = []
                    for _ in range(args.repeats):
                        t0 = time.perf_counter()
                        if method == "turbomor":
                            model, _ = reduce_mod.turbomor_reduce(system, q)
                        elif method == "turbomor+partition":
                            model, _ = partition.reduce_partitioned(
                                system, q, leaf_size=args.leaf_size
                            )
                        else:
                            model, _ = prima.prima_reduce(system, q)
                        times.append(time.perf_counter() - t0)
                    sim_time = ""
                    if args.sim_t_end > 0:
                        res = analysis.transient_sim(
                            model,
                            lambda tk: np.full(model.p, 1e-3),
                            args.sim_t_end,
                            args.sim_dt,
                        )
                        sim_time = res.meta["factor_time"] + res.meta["step_time"]
                    nnz = (
                        int(np.count_nonzero(model.Ghat))
                        + int(np.count_nonzero(model.Chat))
                        if model.dense
                        else int(model.Ghat.nnz + model.Chat.nnz)
                    )
                    rows.append(
                        [name, method, q, float(np.median(times)), sim_time,
                         model.order, nnz]
                    )
                except TurboMORError as exc:
                    failures.append({"input": spec, "method": method, "q": q,
                                     "error": str(exc)})
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["example", "method", "q", "reduce_time", "sim_time", "rom_order", "nnz"]
        )
        w.writerows(rows)
    if failures:
        print(json.dumps({"failed_cells": failures}, indent=1), file=sys.stderr)
    print(f"wrote {len(rows)} bench rows to {args.out}")
    return EXIT_OK


def cmd_gen_bus(args):
    net = generators.bus_netlist(args.lines, args.segments, r=args.r, c=args.c)
    text = ingest.netlist_to_text(
        net, header_comments=[f"bus: L={args.lines} S={args.segments}"]
    )
    Path(args.out).write_text(text)
    m = args.lines * (2 * args.segments + 1)
    print(f"wrote bus netlist: m={m}, p={2 * args.lines} to {args.out}")
    return EXIT_OK


def cmd_gen_mesh(args):
    net = generators.mesh_netlist(
        args.rows, args.cols, ports=args.ports, seed=args.seed
    )
    text = ingest.netlist_to_text(
        net,
        header_comments=[
            f"mesh: {args.rows}x{args.cols} ports={args.ports} seed={args.seed}"
        ],
    )
    Path(args.out).write_text(text)
    print(f"wrote mesh netlist: m={args.rows * args.cols}, p={args.ports} to {args.out}")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(
        prog="turbomor",
        description="Moment-matching reduction of passive RC networks",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def add_input(p):
        p.add_argument("--netlist", help="netlist file input")
        p.add_argument("--bundle", help="G/C/B matrix bundle directory input")

    p = sub.add_parser("reduce", help="reduce a network to a ROM bundle")
    add_input(p)
    p.add_argument("--q", type=int, required=True, help="number of moment blocks")
    p.add_argument("--method", choices=["turbomor", "prima"], default="turbomor")
    p.add_argument("--partition", action="store_true")
    p.add_argument("--leaf-size", type=int, default=500)
    p.add_argument("--perm-file", help="node permutation file with @separators")
    p.add_argument("--pivot-delta", type=float)
    p.add_argument("--promotion-fraction", type=float)
    p.add_argument("--out", default="rom", help="output ROM bundle directory")
    p.add_argument("--netlist-out", help="also export the ROM as a netlist")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("verify", help="check a ROM against its original")
    add_input(p)
    p.add_argument("--rom", required=True, help="ROM bundle directory")
    p.add_argument("--moments", type=int, help="match the first K moments")
    p.add_argument("--freq", type=float, nargs="+", help="frequencies in Hz")
    p.add_argument("--passivity", action="store_true")
    p.add_argument("--tol", type=float, default=DEFAULT_CONFIG.tolerances.verify_tol)
    p.add_argument("--out", help="write the report JSON here as well")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="transient simulation (trapezoidal)")
    p.add_argument("--model", required=True, help="netlist, bundle dir, or ROM dir")
    p.add_argument("--sources", help="port current waveform CSV (t,port1,...)")
    p.add_argument("--t-end", type=float, required=True)
    p.add_argument("--dt", type=float, required=True)
    p.add_argument("--out", required=True, help="output waveform CSV")
    p.add_argument("--reference", help="waveform CSV to compare against")
    p.add_argument("--metrics-out", help="error/timing metrics JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="timing suite over inputs x methods x q")
    p.add_argument(
        "--input",
        nargs="*",
        default=[],
        help="specs like bus:64x30, mesh:20x20, netlist:f.sp, bundle:dir/",
    )
    p.add_argument(
        "--methods",
        nargs="+",
        default=["turbomor", "prima"],
        choices=["turbomor", "prima", "turbomor+partition"],
    )
    p.add_argument("--q", type=int, nargs="+", default=[3])
    p.add_argument("--leaf-size", type=int, default=500)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sim-t-end", type=float, default=0.0,
                   help="also time a step-input transient of this length")
    p.add_argument("--sim-dt", type=float, default=1e-12)
    p.add_argument("--out", default="bench.csv")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen-bus", help="generate a parallel-bus netlist")
    p.add_argument("--lines", type=int, required=True)
    p.add_argument("--segments", type=int, required=True)
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--c", type=float, default=10e-15)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_bus)

    p = sub.add_parser("gen-mesh", help="generate a random RC mesh netlist")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int, required=True)
    p.add_argument("--ports", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_mesh)
    return ap


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NetlistError, BundleError, FileNotFoundError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, PromotionOverflowError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
