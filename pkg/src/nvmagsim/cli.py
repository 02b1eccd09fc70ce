"""Command-line front end.

Verbs: sweep-odmr, sensitivity, param-scan, reconstruct, validate-config.
Global flags: --config <path>, --seed <u64>, --out <dir>, --no-timestamp,
--threads <n>. All commands emit CSV / key-value text artifacts, never plots.
Exit codes: 0 success, 2 usage or config error, 3 numeric failure
(fit, overflow, degenerate data).

Given the same config file and seed, every command writes byte-identical
files when --no-timestamp is passed (the timestamp header is the only
impure output).
"""

import argparse
import datetime
import sys
from pathlib import Path

import numpy as np

from . import pipelines
from .errors import (
    ConfigError,
    DegenerateReferenceError,
    EnbwTooWideError,
    FitFailedError,
    InvalidArgument,
    NoCrossingError,
    OverflowStageError,
    UnderdeterminedError,
)
from .scenario import load_scenario

_USAGE_ERRORS = (ConfigError, InvalidArgument, EnbwTooWideError)
_NUMERIC_ERRORS = (
    FitFailedError,
    NoCrossingError,
    OverflowStageError,
    DegenerateReferenceError,
    UnderdeterminedError,
)


def _fmt(x) -> str:
    return f"{float(x):.12e}"


def _header_lines(title: str, no_timestamp: bool, extra=()):
    lines = [f"# nvmagsim {title}"]
    if not no_timestamp:
        lines.append(f"# generated: {datetime.datetime.now().isoformat()}")
    lines.extend(f"# {item}" for item in extra)
    return lines


def write_csv(path: Path, title: str, columns: dict, no_timestamp: bool, extra=()):
    """Comma-separated table: comment header, column-name row, then data."""
    names = list(columns)
    arrays = [np.asarray(columns[n]) for n in names]
    n_rows = len(arrays[0])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in _header_lines(title, no_timestamp, extra):
            fh.write(line + "\n")
        fh.write(",".join(names) + "\n")
        for i in range(n_rows):
            fh.write(",".join(_fmt(a[i]) for a in arrays) + "\n")


def write_text(path: Path, title: str, body: str, no_timestamp: bool):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in _header_lines(title, no_timestamp):
            fh.write(line + "\n")
        fh.write(body)


def write_lockin_csv(path: Path, out, seed: int, f_m: float, no_timestamp: bool):
    """LockinOutput trace: (t_seconds, x_volts, y_volts) with provenance."""
    extra = (
        f"enbw_hz = {_fmt(out.enbw)}",
        f"f_m_hz = {_fmt(f_m)}",
        f"path = {out.path}",
        f"seed = {seed}",
    )
    write_csv(
        path,
        "lockin-trace",
        {"t_seconds": out.times(), "x_volts": out.x, "y_volts": out.y},
        no_timestamp,
        extra,
    )


def write_timeseries_csv(path: Path, ts, n_max: int, no_timestamp: bool):
    """Raw dual-channel codes: (t, code_a, code_b), first n_max samples."""
    n = min(len(ts), n_max)
    t = ts.t0 + np.arange(n) / ts.sample_rate
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in _header_lines("timeseries", no_timestamp,
                                  (f"seed = {ts.seed_used}", f"digest = {ts.config_digest}")):
            fh.write(line + "\n")
        fh.write("t_seconds,code_a,code_b\n")
        for i in range(n):
            fh.write(f"{_fmt(t[i])},{int(ts.codes_a[i])},{int(ts.codes_b[i])}\n")


def cmd_sweep_odmr(scenario, out_dir: Path, no_timestamp: bool, args) -> int:
    result = pipelines.sweep_odmr_run(scenario)
    for key in ("spectrum_hs_off", "spectrum_hs_on"):
        curve = result[key]
        write_csv(
            out_dir / f"{key}.csv",
            "sweep-odmr",
            {"frequency_hz": curve.freqs, "pl_normalized": curve.values},
            no_timestamp,
        )
    for key in ("lockin_hs_off", "lockin_hs_on"):
        curve = result[key]
        write_csv(
            out_dir / f"{key}.csv",
            "sweep-odmr",
            {"frequency_hz": curve.freqs, "x_volts": curve.values},
            no_timestamp,
        )
    s_off, s_on = result["slope_hs_off"], result["slope_hs_on"]
    body = "\n".join(
        [
            f"slope_hs_off_volts_per_hz: {_fmt(s_off.slope)}",
            f"zero_crossing_hs_off_hz: {_fmt(s_off.zero_crossing)}",
            f"slope_hs_on_volts_per_hz: {_fmt(s_on.slope)}",
            f"zero_crossing_hs_on_hz: {_fmt(s_on.zero_crossing)}",
            f"slope_ratio_on_off: {_fmt(result['slope_ratio'])}",
            f"balance_k1: {_fmt(result['balance'].k1)}",
            f"balance_k2: {_fmt(result['balance'].k2)}",
        ]
    ) + "\n"
    write_text(out_dir / "sweep_summary.txt", "sweep-odmr summary", body, no_timestamp)
    print(f"sweep-odmr: slope ratio hs_on/hs_off = {result['slope_ratio']:.3f}")
    return 0


def cmd_sensitivity(scenario, out_dir: Path, no_timestamp: bool, args) -> int:
    report, out, slope, bal = pipelines.sensitivity_run(scenario, args.mode)
    body = report.to_text() + (
        f"zero_crossing_hz: {_fmt(slope.zero_crossing)}\n"
        f"balance_k1: {_fmt(bal.k1)}\n"
        f"balance_k2: {_fmt(bal.k2)}\n"
    )
    write_text(out_dir / f"sensitivity_{args.mode}.txt", "sensitivity", body, no_timestamp)
    write_lockin_csv(
        out_dir / f"noise_trace_{args.mode}.csv", out, scenario.seed,
        scenario.mw.f_m, no_timestamp,
    )
    if args.dump_raw:
        ts = pipelines.simulate_point(
            scenario, scenario.off_resonant_center,
            pipelines.derive_seed(scenario.seed, 3), duration=min(1.0, scenario.duration),
        )
        write_timeseries_csv(out_dir / "raw_head.csv", ts, args.dump_raw, no_timestamp)
    print(f"sensitivity[{args.mode}]: eta = {report.eta:.4e} T/sqrt(Hz)")
    return 0


def cmd_param_scan(scenario, out_dir: Path, no_timestamp: bool, args) -> int:
    grid = [float(tok) for tok in args.grid.split(",") if tok.strip()]
    results = pipelines.param_scan(scenario, args.axis, grid, threads=args.threads)
    write_csv(
        out_dir / f"scan_{args.axis}.csv",
        f"param-scan {args.axis}",
        {
            args.axis: [v for v, _ in results],
            "eta_tesla_per_sqrthz": [r.eta for _, r in results],
            "noise_rms_volts": [r.noise_rms for _, r in results],
            "slope_volts_per_hz": [r.slope for _, r in results],
        },
        no_timestamp,
    )
    for v, r in results:
        print(f"scan {args.axis} = {v:g}: eta = {r.eta:.4e} T/sqrt(Hz)")
    return 0


def cmd_reconstruct(scenario, out_dir: Path, no_timestamp: bool, args) -> int:
    result = pipelines.reconstruct_run(scenario)
    rec = result["reconstruction"]
    truth = result["truth"]
    body = rec.to_text() + (
        f"true_b_x_tesla: {_fmt(truth[0])}\n"
        f"true_b_y_tesla: {_fmt(truth[1])}\n"
        f"true_b_z_tesla: {_fmt(truth[2])}\n"
        f"error_tesla: {_fmt(result['error_tesla'])}\n"
    )
    write_text(out_dir / "reconstruct.txt", "reconstruct", body, no_timestamp)
    write_csv(
        out_dir / "reconstruct_sweep.csv",
        "reconstruct sweep",
        {
            "frequency_hz": result["curve"].freqs,
            "pl_normalized": result["curve"].values,
        },
        no_timestamp,
    )
    print(f"reconstruct: |error| = {result['error_tesla']:.3e} T")
    return 0


def cmd_validate_config(scenario, out_dir: Path, no_timestamp: bool, args) -> int:
    print("config OK")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nvmagsim",
        description="NV magnetometer signal-chain simulator",
    )
    parser.add_argument("--config", required=True, help="scenario JSON file")
    parser.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument(
        "--no-timestamp", action="store_true",
        help="omit the timestamp header line for byte-identical reruns",
    )
    parser.add_argument("--threads", type=int, default=1, help="parallel scan workers")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sweep-odmr", help="spectrum and lock-in sweeps, hs on/off")

    p_sens = sub.add_parser("sensitivity", help="noise run and sensitivity report")
    p_sens.add_argument(
        "--mode", choices=("unbalanced", "balanced", "electronic"), default="balanced"
    )
    p_sens.add_argument(
        "--dump-raw", type=int, default=0, metavar="N",
        help="also write the first N raw (t, code_a, code_b) samples",
    )

    p_scan = sub.add_parser("param-scan", help="sensitivity across one parameter")
    p_scan.add_argument("--axis", choices=("f_m", "power", "depth", "enbw"), required=True)
    p_scan.add_argument("--grid", required=True, help="comma-separated grid values")

    sub.add_parser("reconstruct", help="full-chain vector-field reconstruction")
    sub.add_parser("validate-config", help="validate the scenario file and exit")
    return parser


_COMMANDS = {
    "sweep-odmr": cmd_sweep_odmr,
    "sensitivity": cmd_sensitivity,
    "param-scan": cmd_param_scan,
    "reconstruct": cmd_reconstruct,
    "validate-config": cmd_validate_config,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        scenario = load_scenario(args.config, seed_override=args.seed)
    except FileNotFoundError:
        print(f"config file not found: {args.config}", file=sys.stderr)
        return 2
    except _USAGE_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        return _COMMANDS[args.command](scenario, out_dir, args.no_timestamp, args)
    except _USAGE_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except _NUMERIC_ERRORS as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
