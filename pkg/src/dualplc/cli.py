"""Command-line experiment runner.

Subcommands:

  sim-run     run one configuration, write cycles.csv / summary.csv / manifest
  sim-sweep   run a config repeatedly with one dotted key swept over values
  live-serve  run the network-side process (Modbus/TCP + link poller + sink)
  live-io     run the IO-side wall-clock loop and report its self-measurement
  live-flood  datagram flood generator, reports achieved rate as JSON
  report      print the per-segment cycle summary of a previous run

Exit codes: 0 success, 1 configuration/validation error, 2 runtime I/O error.
``--config`` accepts either a filesystem path or the name of a shipped
configuration (dual-default, dual-jitter-figure, baseline-figure,
sweep-utilization, live-default).
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import json
import statistics
import sys
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

from . import __version__, engine, live, metrics
from .core import ConfigError, SimConfig, load_config

SHIPPED_CONFIGS = ("dual-default", "dual-jitter-figure", "baseline-figure",
                   "sweep-utilization", "live-default")


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems via exit code 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dualplc", description=__doc__.split("\n", 1)[0])
    p.add_argument("--version", action="version", version=f"dualplc {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("sim-run", help="run one simulation configuration")
    run.add_argument("--config", required=True)
    run.add_argument("--out", required=True)
    run.add_argument("--seed", type=int, default=None,
                     help="override the config's seed")
    run.add_argument("--force", action="store_true",
                     help="overwrite existing output files")

    sweep = sub.add_parser("sim-sweep", help="sweep one config key over values")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--param", required=True,
                       help="dotted config key, e.g. traffic.segments.0.arrival.rate")
    sweep.add_argument("--values", required=True,
                       help="comma-separated values for the swept key")
    sweep.add_argument("--out", required=True)
    sweep.add_argument("--force", action="store_true")

    serve = sub.add_parser("live-serve", help="run the network-side process")
    serve.add_argument("--config", required=True)

    io = sub.add_parser("live-io", help="run the IO-side wall-clock loop")
    io.add_argument("--config", required=True)
    io.add_argument("--out", default=None,
                    help="also write cycles.csv / summary.csv here")
    io.add_argument("--force", action="store_true")

    fl = sub.add_parser("live-flood", help="datagram flood generator")
    fl.add_argument("--target", required=True, help="host:port")
    fl.add_argument("--rate", type=float, required=True, help="packets per second")
    fl.add_argument("--duration", type=float, required=True, help="seconds")
    fl.add_argument("--payload-size", type=int, default=64)

    rep = sub.add_parser("report", help="summarize a previous run directory")
    rep.add_argument("--in", dest="in_dir", required=True)
    return p


# ===================================================================
# Config resolution and output-directory handling
# ===================================================================


def resolve_config_path(name_or_path: str) -> Path:
    """A real file wins; otherwise try the shipped configuration names."""
    p = Path(name_or_path)
    if p.is_file():
        return p
    bare = name_or_path.removesuffix(".json")
    if "/" not in name_or_path and bare in SHIPPED_CONFIGS:
        ref = resources.files("dualplc") / "configs" / f"{bare}.json"
        with resources.as_file(ref) as real:
            return Path(real)
    raise ConfigError(
        f"config {name_or_path!r} is neither a file nor a shipped config "
        f"(shipped: {', '.join(SHIPPED_CONFIGS)})")


def _prepare_out(out: str, names: Sequence[str], force: bool) -> Path:
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not force:
        clashes = [n for n in names if (out_dir / n).exists()]
        if clashes:
            raise ConfigError(
                f"refusing to overwrite {', '.join(clashes)} in {out_dir} "
                f"(use --force)")
    return out_dir


def _write_manifest(path: Path, cfg: SimConfig, trace: engine.Trace) -> None:
    doc = {
        "artifact": "dualplc",
        "version": __version__,
        "config_hash": trace.config_hash,
        "seed": trace.seed,
        "mode": trace.mode,
        "nominal_us": trace.nominal_us,
        "cycles": len(trace.cycles),
        "overrun_count": trace.overrun_count,
        "trace_sha256": engine.trace_hash(trace),
        "net_segments": {
            label: dataclasses.asdict(stats)
            for label, stats in trace.net_segments.items()
        },
        "config": cfg.to_json(),
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


# ===================================================================
# sim-run / sim-sweep
# ===================================================================


def cmd_sim_run(args: argparse.Namespace) -> int:
    cfg = load_config(str(resolve_config_path(args.config)))
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
        cfg.validate()
    out_dir = _prepare_out(args.out, ("cycles.csv", "summary.csv",
                                      "run-manifest.json"), args.force)
    trace = engine.run(cfg)
    metrics.export_cycles_csv(trace.cycles, str(out_dir / "cycles.csv"))
    summaries = metrics.summarize(trace.cycles, trace.nominal_us)
    metrics.export_summary_csv(summaries, str(out_dir / "summary.csv"))
    _write_manifest(out_dir / "run-manifest.json", cfg, trace)
    print(f"{len(trace.cycles)} cycles -> {out_dir} "
          f"(mode={trace.mode}, seed={trace.seed}, "
          f"hash={trace.config_hash[:12]})")
    return 0


def set_by_dotted_key(doc: Any, dotted: str, value: Any) -> None:
    """Assign into a JSON document along a dot-separated path.

    Dict steps use the key as-is; list steps require a decimal index.  The
    final container must already hold the key — sweeping can change values,
    not invent new schema.
    """
    parts = dotted.split(".")
    node = doc
    for i, part in enumerate(parts):
        last = i == len(parts) - 1
        if isinstance(node, list):
            try:
                idx = int(part)
            except ValueError:
                raise ConfigError(f"sweep param: {part!r} is not a list index "
                                  f"in {dotted!r}") from None
            if not (0 <= idx < len(node)):
                raise ConfigError(f"sweep param: index {idx} out of range "
                                  f"in {dotted!r}")
            if last:
                node[idx] = value
            else:
                node = node[idx]
        elif isinstance(node, dict):
            if part not in node:
                raise ConfigError(f"sweep param: unknown key {part!r} "
                                  f"in {dotted!r}")
            if last:
                node[part] = value
            else:
                node = node[part]
        else:
            raise ConfigError(f"sweep param: {dotted!r} descends into a "
                              f"non-container at {part!r}")


def _parse_sweep_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def cmd_sim_sweep(args: argparse.Namespace) -> int:
    path = resolve_config_path(args.config)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            base_doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("sweep: --values is empty")

    out_dir = _prepare_out(args.out, ("sweep.csv", "sweep-manifest.json"),
                           args.force)
    rows = []
    for text in values:
        doc = copy.deepcopy(base_doc)
        set_by_dotted_key(doc, args.param, _parse_sweep_value(text))
        cfg = SimConfig.from_json(doc)
        trace = engine.run(cfg)
        totals = trace.totals()
        rows.append((text, len(totals), min(totals), max(totals),
                     sum(totals) / len(totals), int(statistics.median(totals))))

    with open(out_dir / "sweep.csv", "w", encoding="ascii", newline="\n") as fh:
        fh.write("param,value,cycles,min_us,max_us,mean_us,median_us\n")
        for text, n, lo, hi, mean, med in rows:
            fh.write(f"{args.param},{text},{n},{lo},{hi},{mean:.3f},{med}\n")
    manifest = {
        "artifact": "dualplc",
        "version": __version__,
        "param": args.param,
        "values": values,
        "base_config": base_doc,
    }
    (out_dir / "sweep-manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"swept {args.param} over {len(values)} values -> {out_dir}")
    return 0


# ===================================================================
# live-* commands
# ===================================================================


def cmd_live_serve(args: argparse.Namespace) -> int:
    cfg = live.load_live_config(str(resolve_config_path(args.config)))
    print(f"serving Modbus/TCP on {cfg.listen_address}, "
          f"polling IO at {cfg.io_link_address} "
          f"every {cfg.poll_interval_us} us (Ctrl-C to stop)")
    live.serve_modbus(cfg)
    return 0


def cmd_live_io(args: argparse.Namespace) -> int:
    cfg = live.load_live_config(str(resolve_config_path(args.config)))
    out_dir = None
    if args.out is not None:
        out_dir = _prepare_out(args.out, ("cycles.csv", "summary.csv",
                                          "run-manifest.json"), args.force)
    loop = live.LiveIoLoop(cfg)
    result = loop.run()
    s = result.summary
    print(json.dumps({
        "cycles": s.count,
        "min_us": s.min_us,
        "max_us": s.max_us,
        "median_us": s.median_us,
        "jitter_abs_us": s.jitter_abs_us,
        "jitter_pct": round(s.jitter_pct, 4),
        "exchanges_ok": result.exchanges_ok,
        "exchanges_timeout": result.exchanges_timeout,
        "exchanges_rejected": result.exchanges_rejected,
        "final_outputs": result.final_outputs,
    }))
    if out_dir is not None:
        metrics.export_cycles_csv(result.records, str(out_dir / "cycles.csv"))
        metrics.export_summary_csv([s], str(out_dir / "summary.csv"))
        manifest = {
            "artifact": "dualplc",
            "version": __version__,
            "mode": "live-io",
            "nominal_us": cfg.target_cycle_us,
            "cycles": s.count,
            "config": cfg.to_json(),
        }
        (out_dir / "run-manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
    return 0


def cmd_live_flood(args: argparse.Namespace) -> int:
    if args.rate < 0:
        raise ConfigError("flood rate must be >= 0")
    if args.duration <= 0:
        raise ConfigError("flood duration must be > 0")
    if not (1 <= args.payload_size <= 1400):
        raise ConfigError("flood payload size must be in [1, 1400]")
    report = live.flood(args.target, args.rate, args.duration,
                        args.payload_size)
    print(json.dumps(report.to_json()))
    return 0


# ===================================================================
# report
# ===================================================================


def _report_nominal(in_dir: Path, records: list[metrics.CycleRecord]) -> int:
    manifest = in_dir / "run-manifest.json"
    if manifest.is_file():
        try:
            doc = json.loads(manifest.read_text(encoding="utf-8"))
            nominal = doc.get("nominal_us")
            if isinstance(nominal, int) and nominal > 0:
                return nominal
        except (OSError, json.JSONDecodeError):
            pass
    # No manifest: fall back to the median total, which keeps the ratio
    # columns meaningful for roughly-periodic data.
    return int(statistics.median(r.total_us for r in records))


def cmd_report(args: argparse.Namespace) -> int:
    in_dir = Path(args.in_dir)
    cycles_path = in_dir / "cycles.csv"
    if not cycles_path.is_file():
        print("no cycles.csv found", file=sys.stderr)
        return 1
    records = metrics.load_cycles(str(cycles_path))
    if not records:
        print("no cycles.csv found", file=sys.stderr)
        return 1
    nominal = _report_nominal(in_dir, records)
    summaries = metrics.summarize(records, nominal)
    header = (f"{'segment':<12} {'count':>7} {'min':>8} {'max':>9} "
              f"{'mean':>10} {'median':>8} {'q1':>8} {'q3':>8} "
              f"{'jit_abs':>8} {'jit_pct':>8}")
    print(f"nominal cycle: {nominal} us")
    print(header)
    print("-" * len(header))
    for s in summaries:
        print(f"{s.segment:<12} {s.count:>7} {s.min_us:>8} {s.max_us:>9} "
              f"{s.mean_us:>10.3f} {s.median_us:>8} {s.q1_us:>8} {s.q3_us:>8} "
              f"{s.jitter_abs_us:>8} {s.jitter_pct:>8.4f}")
    return 0


# ===================================================================
# entry point
# ===================================================================


_COMMANDS = {
    "sim-run": cmd_sim_run,
    "sim-sweep": cmd_sim_sweep,
    "live-serve": cmd_live_serve,
    "live-io": cmd_live_io,
    "live-flood": cmd_live_flood,
    "report": cmd_report,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except metrics.MetricsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 0


if __name__ == "__main__":
    sys.exit(main())
