"""Command line entry point: ``relmon monitor | table1 | calibrate | simulate``.

Exit codes: 0 completed, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from typing import Iterator, TextIO

from . import simlab
from .core import (
    ConfigurationError,
    DataError,
    MonitorConfig,
    MonitorError,
    new_stream,
)
from .monitor import Monitor

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


def _open_in(path: str) -> TextIO:
    return sys.stdin if path == "-" else open(path, newline="")


def _open_out(path: str | None) -> TextIO:
    return sys.stdout if path in (None, "-") else open(path, "w", newline="")


def read_rows(
    fh: TextIO, value_column: str | None = None, timestamp_column: str | None = None
) -> Iterator[tuple[int, str | None, float]]:
    """Yield ``(row_number, timestamp, value)`` from a CSV with a header row.

    The value column is taken by name or 0-based position, defaulting to a
    column called ``value`` or else the last column. Row numbers count the
    header as row 1.
    """
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError("input is empty") from None

    def resolve(spec, fallback):
        if spec is None:
            return fallback
        if spec in header:
            return header.index(spec)
        try:
            idx = int(spec)
        except ValueError:
            raise ConfigurationError(f"column {spec!r} not found in header {header}") from None
        if not 0 <= idx < len(header):
            raise ConfigurationError(f"column index {idx} out of range for header {header}")
        return idx

    vi = resolve(value_column, header.index("value") if "value" in header else len(header) - 1)
    ti = resolve(timestamp_column, header.index("timestamp") if "timestamp" in header else None)
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            v = float(row[vi])
        except (ValueError, IndexError):
            cell = row[vi] if vi < len(row) else ""
            raise DataError(f"row {lineno}: non-numeric value {cell!r}") from None
        if not math.isfinite(v):
            raise DataError(f"row {lineno}: non-finite value {row[vi]!r}")
        ts = None
        if ti is not None and ti < len(row) and row[ti].strip():
            ts = row[ti].strip()
        yield lineno, ts, v


def _config_from_args(args, n_rows: int | None = None) -> MonitorConfig:
    deltas = args.delta or [1.0]
    ccp = args.ccp
    ccp = "calibrate" if ccp in ("auto", "calibrate") else float(ccp)
    horizon = args.horizon
    if n_rows is not None and n_rows > horizon * args.train_size:
        horizon = math.ceil(n_rows / args.train_size) + 1
        print(
            f"relmon: input spans {n_rows / args.train_size:.2f} training lengths; "
            f"horizon raised to {horizon}",
            file=sys.stderr,
        )
    return MonitorConfig(
        N=args.train_size,
        beta=args.beta,
        delta=deltas[0],
        alpha=args.alpha,
        cp_constant=ccp,
        cp_budget=args.cp_budget,
        mc_reps=args.mc_reps,
        horizon=horizon,
        seed=args.seed,
        stream_id=args.stream_id,
        quantile_mode=args.quantile_mode,
        stop_on_reject=args.stop_on_reject,
    )


def _count_rows(path: str) -> int | None:
    if path == "-":
        return None
    with open(path, newline="") as fh:
        return sum(1 for row in csv.reader(fh) if row and any(c.strip() for c in row)) - 1


def cmd_monitor(args) -> int:
    deltas = args.delta or [1.0]
    fh = _open_in(args.input)
    rows = read_rows(fh, args.value_column, args.timestamp_column)
    stamps: dict[int, str | None] = {}

    if args.resume:
        mon = Monitor.load(args.resume)
    else:
        config = _config_from_args(args, _count_rows(args.input))
        training = []
        for _, ts, v in rows:
            training.append(v)
            stamps[len(training)] = ts
            if len(training) == config.N:
                break
        if len(training) < config.N:
            raise ConfigurationError(
                f"training size N={config.N} exceeds the {len(training)} available rows"
            )
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            mon = Monitor(config, training)
        for w in caught:
            print(f"relmon: warning: {w.message}", file=sys.stderr)

    first_by_delta: dict[float, int | None] = {d: None for d in deltas}
    events_out = _open_out(args.events)
    traj = _open_out(args.trajectory) if args.trajectory else None
    traj_w = None
    if traj is not None:
        traj_w = csv.writer(traj, lineterminator="\n")
        traj_w.writerow(["k", "timestamp", "value", "delta_max_signed", "detection_flag"])

    n_done = 0
    try:
        for _, ts, v in rows:
            if mon.stopped or (args.max_rows is not None and n_done >= args.max_rows):
                break
            ev = mon.update(v, ts)
            stamps[ev.k] = ts
            n_done += 1
            events_out.write(ev.to_json() + "\n")
            for d in deltas:
                if first_by_delta[d] is None and ev.delta_max > d:
                    first_by_delta[d] = ev.k
            if traj_w is not None:
                traj_w.writerow([ev.k, ts or "", repr(v), repr(ev.deviation_sign * ev.delta_max),
                                 int(ev.new_detection is not None)])
    finally:
        if events_out is not sys.stdout:
            events_out.close()
        if traj is not None and traj is not sys.stdout:
            traj.close()
        if fh is not sys.stdin:
            fh.close()

    if args.checkpoint_out:
        mon.save(args.checkpoint_out)

    summary = mon.summary()
    for det in summary["detections"]:
        det["location_timestamp"] = stamps.get(det["location"])
        det["detect_timestamp"] = stamps.get(det["detect_time"])
    summary["first_rejection_timestamp"] = stamps.get(summary["first_rejection"])
    summary["first_rejection_by_delta"] = [
        {"delta": d, "k": k, "timestamp": stamps.get(k)} for d, k in first_by_delta.items()
    ]
    summary["observations_processed"] = n_done
    text = json.dumps(summary, indent=2)
    if args.summary:
        with open(args.summary, "w") as out:
            out.write(text + "\n")
    else:
        print(text, file=sys.stderr)
    return EXIT_OK


def cmd_table1(args) -> int:
    if args.full:
        cells = simlab.full_grid_cells()
    else:
        cells = simlab.full_grid_cells(args.noise, args.N, args.beta, args.scenario)

    def progress(r):
        if not args.quiet:
            print(f"{r.noise:>3} N={r.N:<4} beta={r.beta:<5} {r.scenario:<9} "
                  f"rate={r.rejection_rate:.3f}", file=sys.stderr)

    results = simlab.run_table(
        cells, args.reps, seed=args.seed, progress=progress,
        mc_reps=args.mc_reps, quantile_mode=args.quantile_mode,
    )
    with _open_out(args.out) as out:
        out.write(simlab.table_csv(results))
    return EXIT_OK


def cmd_calibrate(args) -> int:
    with _open_in(args.input) as fh:
        values = [v for _, _, v in read_rows(fh, args.value_column)][: args.train_size]
    if len(values) < args.train_size:
        raise ConfigurationError(
            f"training size N={args.train_size} exceeds the {len(values)} available rows"
        )
    config = MonitorConfig(
        N=args.train_size, beta=args.beta, cp_budget=args.budget,
        mc_reps=args.mc_reps, horizon=args.horizon, seed=args.seed,
    )
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        state = new_stream(config, values)
    for w in caught:
        print(f"relmon: warning: {w.message}", file=sys.stderr)
    print(json.dumps({
        "cp_constant": state.cp_constant,
        "sigma2_hat": state.sigma2_hat,
        "block_length": state.block_length,
        "n_blocks": state.n_blocks,
    }))
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec, data = simlab.replication_data(
        args.scenario, args.noise, args.train_size, args.delta, args.seed, args.rep
    )
    with _open_out(args.out) as out:
        out.write(simlab.scenario_csv(data))
    print(json.dumps({"change_locations": spec.change_locations, "jumps": spec.jumps}),
          file=sys.stderr)
    return EXIT_OK


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--train-size", "-N", type=int, required=True, help="training sample size N")
    p.add_argument("--beta", type=float, default=0.45, help="detector weight exponent")
    p.add_argument("--mc-reps", type=int, default=100, help="Monte-Carlo replications")
    p.add_argument("--horizon", type=float, default=20.0, help="rescaled horizon H")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relmon", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("monitor", help="monitor a CSV series (or '-' for stdin)")
    p.add_argument("input")
    _add_model_flags(p)
    p.add_argument("--delta", type=float, action="append",
                   help="relevance threshold; repeat for nested thresholds (first is primary)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--ccp", default="auto", help="threshold constant or 'auto'")
    p.add_argument("--cp-budget", type=float, default=0.05,
                   help="false-detection budget for --ccp auto")
    p.add_argument("--stream-id", type=int, default=0, help="limit-ensemble stream")
    p.add_argument("--stop-on-reject", action="store_true")
    p.add_argument("--quantile-mode", choices=("delta-free", "delta-specific"),
                   default="delta-free")
    p.add_argument("--value-column")
    p.add_argument("--timestamp-column")
    p.add_argument("--events", help="JSONL event log (default stdout)")
    p.add_argument("--summary", help="summary JSON (default stderr)")
    p.add_argument("--trajectory", help="CSV of k, timestamp, value, signed delta_max, detections")
    p.add_argument("--checkpoint-out", help="write the stream state here when done")
    p.add_argument("--resume", help="continue from a checkpoint; input rows are new observations")
    p.add_argument("--max-rows", type=int, help="stop after this many monitoring rows")
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("table1", help="rejection-rate table on synthetic scenarios")
    p.add_argument("--full", action="store_true", help="every cell of the 3x3x3x5 grid (135)")
    p.add_argument("--noise", nargs="+", default=["IID"], choices=simlab.NOISE_MODELS)
    p.add_argument("--N", nargs="+", type=int, default=[100])
    p.add_argument("--beta", nargs="+", type=float, default=[0.3])
    p.add_argument("--scenario", nargs="+", default=list(simlab.KINDS), choices=simlab.KINDS)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--mc-reps", type=int, default=100)
    p.add_argument("--quantile-mode", choices=("delta-free", "delta-specific"),
                   default="delta-specific")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV output (default stdout)")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("calibrate", help="print calibrated C_cp and long-run variance")
    p.add_argument("input")
    _add_model_flags(p)
    p.add_argument("--budget", type=float, default=0.05)
    p.add_argument("--value-column")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("simulate", help="write one synthetic replication as CSV")
    p.add_argument("--scenario", choices=simlab.KINDS, default="AltIII")
    p.add_argument("--noise", choices=simlab.NOISE_MODELS, default="IID")
    p.add_argument("--train-size", "-N", type=int, default=100)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rep", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"relmon: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"relmon: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except MonitorError as exc:
        print(f"relmon: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
