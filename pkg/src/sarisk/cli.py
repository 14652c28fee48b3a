"""Command-line entry point: ``sarisk compute|replay|simulate|validate|alerts``.

Exit codes: 0 clean, 1 warnings emitted, 2 critical alerts, 3 input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io as sio
from .alerts import AlertContext, context_from_history, evaluate_alerts, exit_code
from .config import RunConfig, format_config, load_config
from .errors import InputError, SaRError
from .metrics import SaRParams, run_pipeline
from .simulator import ScenarioConfig, make_shock_path, make_stress_exchange, run_stress_scenario
from .timeseries import MetricSeries, granger_both, lead_lag_correlation

__all__ = ["main", "build_parser"]

EXIT_INPUT_ERROR = 3


def _history_context(history_path, now: int, insurance_fund: float | None) -> AlertContext:
    if history_path is None:
        return AlertContext(insurance_fund=insurance_fund)
    sar = sio.read_series(history_path, "sar")
    depth = sio.read_series(history_path, "depth_usd")
    return context_from_history(sar, depth, now, insurance_fund)


def _write_out(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_compute(args) -> int:
    cfg = load_config(args.config)
    parsed = sio.parse_snapshot_file(args.snapshots, args.input_format)
    for err in parsed.errors:
        print(f"{args.snapshots}:{err}", file=sys.stderr)
    oi = sio.read_open_interest(args.oi)
    positions = sio.read_position_sizes(args.positions) if args.positions else None
    inputs, skipped = sio.build_inputs(parsed, oi, positions)
    report, records = run_pipeline(inputs, cfg.sar, max_workers=args.workers)
    if skipped:
        report = replace(report, flags=report.flags + tuple(skipped))
    context = _history_context(args.history, report.timestamp, args.insurance_fund)
    alerts = evaluate_alerts(report, records, context)
    _write_out(sio.emit_report(report, records, alerts, args.format), args.out)
    return exit_code(alerts)


def cmd_replay(args) -> int:
    cfg = load_config(args.config)
    directory = Path(args.directory)
    history = Path(args.history) if args.history else directory / "history.csv"
    result = sio.replay_history(
        directory,
        history,
        cfg.sar,
        oi_path=args.oi,
        positions_path=args.positions,
        rebuild=args.rebuild,
        cadence=args.cadence,
        max_gap=args.max_gap,
    )
    for flag in result.flags:
        print(f"flag: {flag}", file=sys.stderr)
    print(f"history: {result.history_path} ({len(result.reports)} snapshots)")
    return 0


_SHOCK_KEYS = ("steps", "calm_vol", "stress_vol", "stress_prob", "stress_len")
_EXCHANGE_KEYS = ("n_markets", "positions_per_market", "insurance_fund")


def _scenario_from_json(path, seed_override: int | None, cfg_scenario: dict):
    """Scenario file: ``{"seed", "exchange": {...}, "shocks": {...}, "scenario": {...}, "sar": {...}}``."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read scenario {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise InputError(f"{path}: scenario must be a JSON object")
    allowed = {"seed", "exchange", "shocks", "scenario", "sar"}
    unknown = set(doc) - allowed
    if unknown:
        raise InputError(f"{path}: unknown scenario sections {sorted(unknown)}")
    seed = int(doc.get("seed", 0) if seed_override is None else seed_override)

    def section(name, keys):
        part = doc.get(name, {})
        bad = set(part) - set(keys)
        if bad:
            raise InputError(f"{path}: unknown keys in {name}: {sorted(bad)}")
        return part

    exchange = section("exchange", _EXCHANGE_KEYS)
    shocks = section("shocks", _SHOCK_KEYS)
    scen_keys = tuple(f.name for f in fields(ScenarioConfig))
    scenario = {**cfg_scenario, **section("scenario", scen_keys)}
    sar_keys = tuple(f.name for f in fields(SaRParams) if f.name not in ("haircut", "spoof_weights"))
    sar = section("sar", sar_keys)
    n_markets = int(exchange.get("n_markets", 10))
    state = make_stress_exchange(seed, **exchange)
    path_ = make_shock_path(seed, n_markets=n_markets, **shocks)
    return state, path_, ScenarioConfig(**scenario), sar


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    state, shocks, scenario, sar_over = _scenario_from_json(args.scenario, args.seed, cfg.scenario)
    params = replace(cfg.sar, **sar_over)
    sink = None
    if args.dump_snapshots:
        dump = Path(args.dump_snapshots)
        dump.mkdir(parents=True, exist_ok=True)
        oi_rows = []

        def sink(ts, inputs):
            sio.write_snapshot_file(dump / f"snapshots_{ts}.csv", [i.snapshot for i in inputs])
            oi_rows.extend((ts, i.token, i.open_interest) for i in inputs)

    result = run_stress_scenario(state, shocks, params, scenario, snapshot_sink=sink)
    if args.dump_snapshots:
        sio.write_open_interest(Path(args.dump_snapshots) / "oi.csv", oi_rows)
        # replaying with this file reproduces the simulator's TSaR series
        conf = format_config(RunConfig(params, {"eta_depth_decay": scenario.eta_depth_decay}))
        (Path(args.dump_snapshots) / "params.conf").write_text(conf)
    prefix = args.out_prefix
    sio.write_series(f"{prefix}_tsar.csv", result.tsar, "tsar_usd")
    sio.write_series(f"{prefix}_deficits.csv", result.deficits, "deficit_usd")
    for flag in result.flags:
        print(f"flag: {flag}", file=sys.stderr)
    print(f"steps: {len(result.tsar)}")
    print(f"liquidations: {sum(result.liquidations)}")
    print(f"total deficit_usd: {float(np.sum(result.deficits.values)):.2f}")
    print(f"series: {prefix}_tsar.csv {prefix}_deficits.csv")
    return 0


def _common(x: MetricSeries, y: MetricSeries) -> tuple[MetricSeries, MetricSeries]:
    common, ix, iy = np.intersect1d(x.timestamps, y.timestamps, return_indices=True)
    if len(common) < 3:
        raise InputError("series share fewer than 3 timestamps")
    return MetricSeries(common, x.values[ix], x.name), MetricSeries(common, y.values[iy], y.name)


def cmd_validate(args) -> int:
    x, y = _common(sio.read_series(args.x, args.x_column), sio.read_series(args.y, args.y_column))
    lags = range(-args.lags, args.lags + 1)
    ll = lead_lag_correlation(x, y, lags)
    print("lag,correlation")
    for lag, c in zip(ll.lags, ll.correlations):
        print(f"{lag},{'nan' if np.isnan(c) else f'{c:.6f}'}")
    if args.granger_lags > 0:
        for g in granger_both(x, y, args.granger_lags):
            print(f"granger {g.direction.value}: F={g.f_statistic:.6f} p={g.p_value:.6g} df=({g.df_num},{g.df_den})")
    return 0


def cmd_alerts(args) -> int:
    report, records, _ = sio.load_report(args.report)
    context = _history_context(args.history, report.timestamp, args.insurance_fund)
    alerts = evaluate_alerts(report, records, context)
    for a in alerts:
        print(sio.format_alert(a))
    return exit_code(alerts)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sarisk", description="Slippage-at-Risk engine")
    p.add_argument("--config", help="key = value parameter file (else $SARISK_CONFIG)")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compute", help="one snapshot file to a report")
    c.add_argument("snapshots")
    c.add_argument("--oi", required=True, help="timestamp,token,open_interest CSV")
    c.add_argument("--positions", help="token,position_size_usd CSV")
    c.add_argument("--input-format", choices=("csv", "jsonl"))
    c.add_argument("--format", choices=("json_doc", "csv_table", "text_summary"), default="json_doc")
    c.add_argument("--out")
    c.add_argument("--insurance-fund", type=float)
    c.add_argument("--history", help="history CSV for trend and depth-drop alerts")
    c.add_argument("--workers", type=int)
    c.set_defaults(func=cmd_compute)

    r = sub.add_parser("replay", help="directory of snapshot files to a history CSV")
    r.add_argument("directory")
    r.add_argument("--history")
    r.add_argument("--oi")
    r.add_argument("--positions")
    r.add_argument("--rebuild", action="store_true")
    r.add_argument("--cadence", type=int)
    r.add_argument("--max-gap", type=int)
    r.set_defaults(func=cmd_replay)

    s = sub.add_parser("simulate", help="stress scenario to TSaR and deficit series")
    s.add_argument("scenario", help="scenario JSON")
    s.add_argument("--seed", type=int)
    s.add_argument("--out-prefix", default="scenario")
    s.add_argument("--dump-snapshots", metavar="DIR")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("validate", help="lead-lag table and Granger tests for two series")
    v.add_argument("x")
    v.add_argument("y")
    v.add_argument("--x-column")
    v.add_argument("--y-column")
    v.add_argument("--lags", type=int, default=3)
    v.add_argument("--granger-lags", type=int, default=4)
    v.set_defaults(func=cmd_validate)

    a = sub.add_parser("alerts", help="evaluate alert rules on a saved report")
    a.add_argument("report")
    a.add_argument("--insurance-fund", type=float)
    a.add_argument("--history")
    a.set_defaults(func=cmd_alerts)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SaRError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
