"""Command-line entry point.

Subcommands: gen-data, probe, search, finalize, emit-rtl, report.
Exit codes: 0 success, 2 usage/config error, 3 verification failure,
4 I/O error.  Every command writes a manifest.json into its output
directory with enough information to re-run it bit-identically.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .costmodel import (CalibrationModel, CostWeights, WEIGHT_PRESETS,
                        deployed_latency, latency_estimate)
from .dataset import load_dataset, synth_dataset, write_dataset
from .design import FIELD_NAMES, DesignPoint
from .errors import (FormatError, HdlParseError, LutreadError, UsageError,
                     VerificationError)
from .integrator import feature_word_width, flatten_to_bits, integrate_batch
from .lutnet import (build_topology, extract_tables, fidelity, infer_bits,
                     load_tables, save_tables, train)
from .report import render_run_report
from .rtl import HdlModel, emit, interpret
from .search import (SearchConfig, random_probe, run_search,
                     write_log_csv, write_trajectory_csv)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VERIFY = 3
EXIT_IO = 4


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir, command, config, seed, inputs, outputs, started):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "tool_version": __version__,
        "config": config,
        "master_seed": seed,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
        "duration_s": round(time.monotonic() - started, 3),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def _require_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {p}")
    return p


def _parse_weights(args) -> CostWeights:
    if getattr(args, "target", None):
        return WEIGHT_PRESETS[args.target]
    if getattr(args, "weights", None):
        parts = args.weights.split(",")
        if len(parts) != 3:
            raise UsageError("--weights expects wa,wl,wf")
        return CostWeights(*(float(p) for p in parts))
    return WEIGHT_PRESETS["fidelity"]


def _load_calib(args) -> CalibrationModel:
    if getattr(args, "calib", None):
        return CalibrationModel.load(args.calib)
    return CalibrationModel()


# --- commands --------------------------------------------------------------

def cmd_gen_data(args) -> int:
    started = time.monotonic()
    ds = synth_dataset(args.n, args.T, args.separation, args.noise_sd, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(ds, out)
    _write_manifest(out.parent, "gen-data",
                    {"n": args.n, "T": args.T, "separation": args.separation,
                     "noise_sd": args.noise_sd, "out": str(out)},
                    args.seed, [], [out], started)
    print(f"wrote {len(ds)} records (T={ds.trace_len}) to {out}")
    return EXIT_OK


def cmd_probe(args) -> int:
    started = time.monotonic()
    ds = load_dataset(_require_file(args.data))
    cfg = SearchConfig(weights=_parse_weights(args), master_seed=args.seed,
                       jobs=args.jobs, search_epochs=args.epochs,
                       search_batch=args.batch)
    calib = _load_calib(args)
    results = random_probe(args.n, ds, cfg, calib)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_csv = out_dir / "probe.csv"
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(FIELD_NAMES) + ["cost", "area", "latency", "fidelity"])
        for dp, rep in results:
            writer.writerow(dp.to_vector()
                            + [f"{rep.composite:.6f}", f"{rep.area_luts:.1f}",
                               rep.latency_cycles, f"{rep.fidelity:.6f}"])
    _write_manifest(out_dir, "probe",
                    {"n": args.n, "data": str(args.data),
                     "weights": asdict(cfg.weights), "epochs": args.epochs,
                     "batch": args.batch, "jobs": args.jobs},
                    args.seed, [args.data], [out_csv], started)
    print(f"evaluated {len(results)} probes -> {out_csv}")
    return EXIT_OK


def cmd_search(args) -> int:
    started = time.monotonic()
    ds = load_dataset(_require_file(args.data))
    weights = _parse_weights(args)
    cfg = SearchConfig(np_size=args.np, g_max=args.gmax, patience=args.patience,
                       weights=weights, search_epochs=args.epochs,
                       search_batch=args.batch, jobs=args.jobs,
                       master_seed=args.seed)
    calib = _load_calib(args)
    result = run_search(ds, cfg, calib)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    best_json = out_dir / "best.json"
    best_json.write_text(result.best_point.to_json())
    report_json = out_dir / "best_report.json"
    report_json.write_text(result.best_report.to_json())
    traj_csv = out_dir / "trajectory.csv"
    write_trajectory_csv(traj_csv, result.trajectory)
    log_csv = out_dir / "search_log.csv"
    write_log_csv(log_csv, result.log_rows)
    _write_manifest(out_dir, "search",
                    {"data": str(args.data), "weights": asdict(weights),
                     "np": args.np, "gmax": args.gmax, "patience": args.patience,
                     "epochs": args.epochs, "batch": args.batch, "jobs": args.jobs,
                     "generations_run": result.generations_run,
                     "stopped_early": result.stopped_early},
                    args.seed, [args.data],
                    [best_json, report_json, traj_csv, log_csv], started)
    print(f"best cost {result.best_report.composite:.6f} "
          f"(fidelity {result.best_report.fidelity:.4f}, "
          f"area {result.best_report.area_luts:.0f}, "
          f"latency {result.best_report.latency_cycles}) -> {best_json}")
    return EXIT_OK


def cmd_finalize(args) -> int:
    started = time.monotonic()
    ds = load_dataset(_require_file(args.data))
    dp = DesignPoint.from_json(_require_file(args.design).read_text())
    T = ds.trace_len
    cfg = dp.integrator
    ww = feature_word_width(cfg, T)
    topo = build_topology(dp, feature_bits=2 * dp.num_windows * ww,
                          seed=args.seed, word_width=ww)
    net = train(topo, ds, cfg, epochs=args.epochs, batch_size=args.batch,
                lr=args.lr, seed=args.seed)
    ttn = extract_tables(net)
    fid = fidelity(ttn, cfg, ds)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tables_json = out_dir / "tables.json"
    tables_blob = out_dir / "tables.bin"
    save_tables(ttn, tables_json, tables_blob)
    try:
        reloaded = load_tables(tables_json, tables_blob)
    except (FormatError, OSError) as exc:
        raise VerificationError(f"saved tables failed to reload: {exc}")
    same = all(np.array_equal(a, b)
               for la, lb in zip(ttn.tables, reloaded.tables)
               for a, b in zip(la, lb))
    if not same:
        raise VerificationError("saved table blob does not match the trained tables")

    design = emit(dp, ttn, cfg, T=T, name=args.name)
    hdl_paths = design.write(out_dir)

    # hard gate: emitted hardware must match the software pipeline exactly
    rng = np.random.default_rng(args.seed)
    idx = rng.choice(len(ds), size=args.traces, replace=len(ds) < args.traces)
    model = HdlModel(design.full_text)
    words, _ = integrate_batch(ds.i[idx], ds.q[idx], cfg)
    expected = infer_bits(ttn, flatten_to_bits(words, ww))
    mismatches = 0
    lat = latency_estimate(dp, T)
    for row, want in zip(idx, expected):
        got, cycles = interpret(model, ds.record(int(row)))
        if got != int(want) or cycles != lat:
            mismatches += 1
    if mismatches:
        raise VerificationError(
            f"emitted HDL disagreed with software pipeline on {mismatches}/"
            f"{args.traces} traces"
        )

    report = {
        "design": asdict(dp),
        "fidelity": fid,
        "latency_cycles": lat,
        "deployed_latency_cycles": deployed_latency(dp, T),
        "equivalence_traces": int(args.traces),
        "epochs": args.epochs,
        "batch": args.batch,
    }
    report_path = out_dir / "final_report.json"
    report_path.write_text(json.dumps(report, indent=2) + "\n")
    _write_manifest(out_dir, "finalize",
                    {"data": str(args.data), "design": str(args.design),
                     "epochs": args.epochs, "batch": args.batch,
                     "traces": args.traces, "name": args.name},
                    args.seed, [args.data, args.design],
                    [tables_json, tables_blob, report_path, *hdl_paths.values()],
                    started)
    print(f"fidelity {fid:.4f}, latency {lat} cycles "
          f"({deployed_latency(dp, T)} deployed); HDL verified on "
          f"{args.traces} traces -> {out_dir}")
    return EXIT_OK


def cmd_emit_rtl(args) -> int:
    started = time.monotonic()
    dp = DesignPoint.from_json(_require_file(args.design).read_text())
    ttn = load_tables(_require_file(args.tables))
    design = emit(dp, ttn, dp.integrator, T=args.T, name=args.name)
    paths = design.write(args.out_dir)
    _write_manifest(args.out_dir, "emit-rtl",
                    {"design": str(args.design), "tables": str(args.tables),
                     "T": args.T, "name": args.name},
                    args.seed, [args.design, args.tables],
                    list(paths.values()), started)
    print(f"emitted {paths['integrator'].name}, {paths['lutnet'].name}")
    return EXIT_OK


def cmd_report(args) -> int:
    started = time.monotonic()
    outputs = render_run_report(args.run_dir, args.out_dir)
    _write_manifest(args.out_dir, "report", {"run_dir": str(args.run_dir)},
                    args.seed, [], outputs, started)
    print(f"wrote {len(outputs)} report files to {args.out_dir}")
    return EXIT_OK


# --- argument parsing ------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lutread",
        description="Co-design toolkit for LUT-mapped qubit-readout classifiers",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--out-dir", default=".")

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--T", type=int, default=500)
    p.add_argument("--separation", type=float, required=True)
    p.add_argument("--noise-sd", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("probe", help="evaluate random design points")
    common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--target", choices=sorted(WEIGHT_PRESETS))
    p.add_argument("--weights")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch", type=int, default=512)
    p.add_argument("--calib")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("search", help="run the differential-evolution search")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--target", choices=sorted(WEIGHT_PRESETS))
    p.add_argument("--weights", help="wa,wl,wf (must sum to 1)")
    p.add_argument("--np", type=int, default=75)
    p.add_argument("--gmax", type=int, default=150)
    p.add_argument("--patience", type=int, default=40)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch", type=int, default=512)
    p.add_argument("--calib")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("finalize", help="retrain, emit HDL, and verify a design")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--design", required=True, help="best.json from a search run")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch", type=int, default=1024)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--traces", type=int, default=1000)
    p.add_argument("--name", default="design")
    p.set_defaults(func=cmd_finalize)

    p = sub.add_parser("emit-rtl", help="emit HDL from saved tables")
    common(p)
    p.add_argument("--design", required=True)
    p.add_argument("--tables", required=True, help="tables.json from finalize")
    p.add_argument("--T", type=int, default=500)
    p.add_argument("--name", default="design")
    p.set_defaults(func=cmd_emit_rtl)

    p = sub.add_parser("report", help="render figures from a run directory")
    common(p)
    p.add_argument("--run-dir", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VerificationError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (FormatError, HdlParseError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except LutreadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
