"""Command-line entry point: single runs, sweeps, and plot-data export.

Every run cell writes, under its output directory:
  manifest.json   config path, resolved-config hash, seed, package version
  graph.txt       the communication graph as a 0-based edge list
  trace.csv       per-tick metrics (deterministic; byte-identical on rerun)
  summary.json    final metrics + config echo (deterministic)
  timing.json     wall-clock measurements, kept apart so the files above
                  stay byte-comparable
  plots/*.csv     long-format (algorithm, x_metric, x, y_metric, y) data

A sweep adds table.csv aggregating (objective, rounds, time, data volume)
across cells, mirroring the usual comparison-table layout. Exit code is 0
iff every run converged, unless --allow-diverge is given.
"""

import argparse
import json
import math
import sys
from pathlib import Path

from . import __version__, kernels
from .baselines import run_baseline
from .config import (ExperimentConfig, parse_config, with_overrides)
from .simulator import RunResult, run_ceps, seed_streams, build_graph
from .topology import save_edge_list

SWEEP_AXES = ("m", "epsilon", "r")


def run_one(cfg: ExperimentConfig) -> RunResult:
    if cfg.algo == "ceps":
        return run_ceps(cfg)
    return run_baseline(cfg)


def _json_safe(obj):
    """Replace non-finite floats (e.g. an overflowed theory constant) with
    strings so the emitted files stay strict JSON."""
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_json_safe(obj), sort_keys=True, indent=2) + "\n",
                    encoding="ascii")


def write_manifest(outdir: Path, cfg: ExperimentConfig, config_path) -> None:
    _write_json(outdir / "manifest.json", {
        "config_path": str(config_path),
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "output_dir": str(outdir),
        "version": __version__,
    })


def export_plot_data(cells, outdir: Path, axis: str = None) -> list:
    """Write long-format CSVs, one per figure family.

    `cells` is a list of (axis_value, RunResult); axis_value is None for a
    single run. Always emits objective-vs-round; with an axis also emits
    rounds/dtv/time vs the axis.
    """
    plots = outdir / "plots"
    plots.mkdir(parents=True, exist_ok=True)
    written = []

    def emit(name, rows):
        path = plots / name
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("algorithm,x_metric,x,y_metric,y\n")
            for algo, xm, x, ym, y in rows:
                fh.write(f"{algo},{xm},{x!r},{ym},{y!r}\n")
        written.append(path)

    rows = []
    for _, res in cells:
        rounds = res.trace.column("comm_round")
        objective = res.trace.column("objective")
        rows += [(res.algo, "comm_round", float(cr), "objective", float(ob))
                 for cr, ob in zip(rounds, objective)]
    emit("objective_vs_round.csv", rows)
    if axis is not None:
        emit(f"cr_vs_{axis}.csv",
             [(res.algo, axis, float(v), "rounds", float(res.rounds_a))
              for v, res in cells])
        emit(f"dtv_vs_{axis}.csv",
             [(res.algo, axis, float(v), "dtv_bytes", res.dtv_bits_ideal / 8)
              for v, res in cells])
        emit(f"time_vs_{axis}.csv",
             [(res.algo, axis, float(v), "seconds", res.wall_seconds)
              for v, res in cells])
    return written


def run_experiment(cfg: ExperimentConfig, outdir: Path, config_path) -> RunResult:
    """One cell: execute, then write manifest, trace, summary, timing, plots."""
    outdir.mkdir(parents=True, exist_ok=True)
    write_manifest(outdir, cfg, config_path)
    save_edge_list(build_graph(cfg, seed_streams(cfg)["graph"]),
                   outdir / "graph.txt")
    result = run_one(cfg)
    result.trace.to_csv(outdir / "trace.csv")
    summary = result.summary()
    summary["config"] = cfg.to_dict()
    summary["config_hash"] = cfg.config_hash()
    _write_json(outdir / "summary.json", summary)
    _write_json(outdir / "timing.json", {"wall_seconds": result.wall_seconds})
    export_plot_data([(None, result)], outdir)
    return result


def sweep(cfg: ExperimentConfig, axis: str, values, outdir: Path,
          config_path) -> list:
    """Run one cell per axis value; write per-cell outputs and table.csv."""
    outdir.mkdir(parents=True, exist_ok=True)
    write_manifest(outdir, cfg, config_path)
    cells = []
    for value in values:
        cell_cfg = with_overrides(cfg, **{axis: value})
        cell_dir = outdir / "cells" / f"{axis}={value:g}"
        try:
            result = run_experiment(cell_cfg, cell_dir, config_path)
            cells.append((value, result))
        except Exception as exc:  # record the failure, keep sweeping
            print(f"sweep cell {axis}={value} failed: {exc}", file=sys.stderr)
            cells.append((value, None))
    with open(outdir / "table.csv", "w", encoding="ascii", newline="\n") as fh:
        fh.write("axis,value,algorithm,objective,rounds,comm_ticks,ticks,"
                 "time_s,dtv_bytes_ideal,converged\n")
        for value, res in cells:
            if res is None:
                fh.write(f"{axis},{value:g},error,,,,,,,\n")
                continue
            fh.write(f"{axis},{value:g},{res.algo},{res.final_objective!r},"
                     f"{res.rounds_a},{res.comm_ticks},{res.ticks},"
                     f"{res.wall_seconds:.3f},{res.dtv_bits_ideal // 8},"
                     f"{res.converged}\n")
    export_plot_data([(v, r) for v, r in cells if r is not None], outdir, axis)
    return cells


def _parse_sweep(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError("expected AXIS=v1,v2,...")
    axis, _, tail = text.partition("=")
    axis = axis.strip()
    if axis not in SWEEP_AXES:
        raise argparse.ArgumentTypeError(
            f"sweep axis must be one of {', '.join(SWEEP_AXES)}")
    try:
        if axis == "m":
            values = [int(v) for v in tail.split(",") if v.strip()]
        else:
            values = [float(v) for v in tail.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if not values:
        raise argparse.ArgumentTypeError("no sweep values given")
    return axis, values


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sdfl",
        description="Sparse decentralized federated learning simulator")
    parser.add_argument("--config", required=True, help="config file path")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--algo", default=None,
                        help="override run.algo (ceps, dpsgd, dpsgd_dn, "
                             "dpsgd_pc, dfedavgm)")
    parser.add_argument("--sweep", type=_parse_sweep, default=None,
                        metavar="AXIS=v1,v2,...",
                        help="sweep one axis (m, epsilon, or r)")
    parser.add_argument("--max-rounds", type=int, default=None,
                        help="override termination.max_ticks")
    parser.add_argument("--perfect-comm", action="store_true",
                        help="disable one-bit compression for this run")
    parser.add_argument("--no-dp", action="store_true",
                        help="disable privacy noise for this run")
    parser.add_argument("--allow-diverge", action="store_true",
                        help="exit 0 even when runs fail to converge")
    parser.add_argument("--version", action="version",
                        version=f"sdfl {__version__} "
                                f"(kernels: {kernels.backend()})")
    args = parser.parse_args(argv)

    cfg = parse_config(args.config)
    cfg = with_overrides(cfg, seed=args.seed, algo=args.algo,
                         max_ticks=args.max_rounds,
                         perfect_comm=args.perfect_comm, no_dp=args.no_dp)
    outdir = Path(args.out)
    if args.sweep is not None:
        axis, values = args.sweep
        cells = sweep(cfg, axis, values, outdir, args.config)
        results = [r for _, r in cells]
        ok = all(r is not None and r.converged for r in results)
    else:
        result = run_experiment(cfg, outdir, args.config)
        print(f"{result.algo}: converged={result.converged} "
              f"objective={result.final_objective:.6g} "
              f"rounds={result.rounds_a} ticks={result.ticks} "
              f"dtv_bytes={result.dtv_bits_ideal // 8}")
        ok = result.converged
    return 0 if (ok or args.allow_diverge) else 1


if __name__ == "__main__":
    sys.exit(main())
