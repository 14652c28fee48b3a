"""Flat-file formats: snapshot ladders, open interest, position sizes, metric
series, reports and the replay history.

Snapshot CSV header is exactly ``timestamp,token,side,price,size,account_id``
(``account_id`` may be empty); the JSONL form uses the same field names.
"""

from __future__ import annotations

import csv
import io as _io
import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .concentration import ConcentrationStats
from .errors import EmptyDirectory, InputError, MalformedHeader
from .metrics import SaRParams, SaRReport, TokenInput, TokenRiskRecord, run_pipeline
from .orderbook import BookSide, OrderBookSnapshot, Side
from .timeseries import MetricSeries

__all__ = [
    "SNAPSHOT_FIELDS",
    "OI_FIELDS",
    "HISTORY_FIELDS",
    "RecordError",
    "ParsedSnapshots",
    "parse_snapshot_file",
    "write_snapshot_file",
    "read_open_interest",
    "write_open_interest",
    "read_position_sizes",
    "read_series",
    "write_series",
    "build_inputs",
    "emit_report",
    "load_report",
    "format_alert",
    "resample_locf",
    "ReplayResult",
    "replay_history",
]

SNAPSHOT_FIELDS = ("timestamp", "token", "side", "price", "size", "account_id")
OI_FIELDS = ("timestamp", "token", "open_interest")
POSITION_FIELDS = ("token", "position_size_usd")
DEFICIT_FIELDS = ("timestamp", "deficit_usd")
HISTORY_FIELDS = ("timestamp", "sar", "esar", "tsar_usd", "depth_usd")
REPORT_SCHEMA = "sarisk.report/1"

_SNAPSHOT_NAME = re.compile(r"(\d+)\.(csv|jsonl)$")


@dataclass(frozen=True)
class RecordError:
    line: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.message}"


@dataclass
class ParsedSnapshots:
    snapshots: list[OrderBookSnapshot]
    errors: list[RecordError]
    n_records: int
    consumed: int

    def by_token(self) -> dict[str, OrderBookSnapshot]:
        return {s.token: s for s in self.snapshots}


# -- snapshots ---------------------------------------------------------------


def _read_header(path: Path) -> list[str]:
    with open(path, newline="") as fh:
        first = fh.readline()
    return [c.strip() for c in first.rstrip("\r\n").split(",")]


_COLUMNS = list(SNAPSHOT_FIELDS) + ["line", "_error"]
_TYPED = {"timestamp": float, "token": "category", "side": "category", "price": float, "size": float, "account_id": "category"}


def _exact_numeric(column: pd.Series) -> pd.Series:
    """Strings to floats, NaN where unparsable.

    ``pd.to_numeric`` can be off by one ulp; ``astype(float)`` is correctly
    rounded, so it is used on the entries that parse.
    """
    ok = pd.to_numeric(column, errors="coerce").notna()
    out = pd.Series(np.nan, index=column.index)
    out[ok] = column[ok].str.strip().astype(float)
    return out


def _typed(frame: pd.DataFrame) -> pd.DataFrame:
    for col in ("timestamp", "price", "size"):
        frame[col] = _exact_numeric(frame[col].astype(str))
    return frame


def _load_csv(path: Path) -> pd.DataFrame:
    with open(path, newline="") as fh:
        text = fh.read()
    first = text.split("\n", 1)[0].rstrip("\r")
    header = [c.strip() for c in first.split(",")] if text else []
    if tuple(header) != SNAPSHOT_FIELDS:
        raise MalformedHeader(f"{path}: expected header {','.join(SNAPSHOT_FIELDS)!r}, got {','.join(header)!r}")
    width = len(SNAPSHOT_FIELDS) - 1
    n_lines = text.count("\n") + (not text.endswith("\n"))
    # fast path: a short line would need a long one to balance the comma total, and
    # long lines make the C parser raise; blank lines shrink the row count
    if n_lines > 1 and text.count(",") == width * n_lines:
        try:
            frame = pd.read_csv(path, dtype=_TYPED, na_filter=False, float_precision="round_trip")
        except ValueError:
            frame = None
        if frame is not None and len(frame) == n_lines - 1:
            for col in ("token", "side", "account_id"):
                frame[col] = frame[col].astype(object)
            frame["line"] = np.arange(2, n_lines + 1)
            frame["_error"] = ""
            return frame

    body = text.splitlines()[1:]
    kept, kept_no, bad = [], [], []
    for lineno, text in enumerate(body, start=2):
        if not text.strip():
            continue
        if text.count(",") != width:
            bad.append({"line": lineno, "_error": f"expected {width + 1} comma-separated fields"})
            continue
        kept.append(text)
        kept_no.append(lineno)
    if kept:
        frame = pd.read_csv(
            _io.StringIO("\n".join(kept)), header=None, names=list(SNAPSHOT_FIELDS), dtype=str, keep_default_na=False
        )
    else:
        frame = pd.DataFrame({c: pd.Series(dtype=object) for c in SNAPSHOT_FIELDS})
    frame["line"] = kept_no
    frame["_error"] = ""
    frame = _typed(frame)
    if bad:
        filler = pd.DataFrame(bad).reindex(columns=_COLUMNS)
        filler[["token", "side", "account_id"]] = ""
        frame = pd.concat([frame, filler.astype(frame.dtypes.to_dict())], ignore_index=True)
    return frame


def _load_jsonl(path: Path) -> pd.DataFrame:
    rows = []
    with open(path) as fh:
        for lineno, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            row = {k: "" for k in SNAPSHOT_FIELDS}
            row["line"] = lineno
            try:
                obj = json.loads(text)
                if not isinstance(obj, dict):
                    raise ValueError("not an object")
            except ValueError as exc:
                row["_error"] = f"invalid JSON: {exc}"
                rows.append(row)
                continue
            row.update({k: "" if obj.get(k) is None else str(obj.get(k)) for k in SNAPSHOT_FIELDS})
            missing = [k for k in SNAPSHOT_FIELDS[:5] if k not in obj]
            row["_error"] = f"missing fields {missing}" if missing else ""
            rows.append(row)
    frame = pd.DataFrame(rows, columns=_COLUMNS)
    frame["_error"] = frame["_error"].fillna("")
    return _typed(frame)


def _load_frame(path: Path, fmt: str) -> pd.DataFrame:
    """Frame with float numeric columns (NaN where unparsable), ``line`` and ``_error``."""
    if fmt == "csv":
        return _load_csv(path)
    if fmt == "jsonl":
        return _load_jsonl(path)
    raise InputError(f"unknown snapshot format {fmt!r}")


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt:
        return fmt
    return "jsonl" if path.suffix.lower() == ".jsonl" else "csv"


def parse_snapshot_file(path, fmt: str | None = None) -> ParsedSnapshots:
    """Parse, validate and group a ladder file into snapshots.

    Every data line is either consumed into a snapshot or reported as a
    :class:`RecordError`. Field values are taken verbatim: ``side`` must be
    exactly ``bid`` or ``ask``. Raises :class:`InputError` if no line survives.
    """
    path = Path(path)
    frame = _load_frame(path, _infer_format(path, fmt))
    n = len(frame)
    lines = frame["line"].to_numpy(dtype=np.int64)
    reason = frame["_error"].to_numpy(dtype=object).copy()
    ts = frame["timestamp"].to_numpy(dtype=float)
    price = frame["price"].to_numpy(dtype=float)
    size = frame["size"].to_numpy(dtype=float)
    token = frame["token"].to_numpy(dtype=object)
    side = frame["side"].to_numpy(dtype=object)

    def flag(mask, message):
        reason[mask & (reason == "")] = message

    with np.errstate(invalid="ignore"):
        flag(~np.isfinite(ts) | (ts != np.round(ts)), "timestamp is not an integer")
        flag(token == "", "empty token")
        flag((side != "bid") & (side != "ask"), "side must be 'bid' or 'ask'")
        flag(~(np.isfinite(price) & (price > 0)), "price must be a positive number")
        flag(~(np.isfinite(size) & (size > 0)), "size must be a positive number")

    good = reason == ""
    errors = [RecordError(int(l), str(m)) for l, m in zip(lines[~good].tolist(), reason[~good].tolist())]
    snapshots, consumed = [], 0
    if good.any():
        snapshots, group_errors, consumed = _group_snapshots(
            ts[good].astype(np.int64), token[good], side[good], price[good], size[good],
            frame["account_id"].to_numpy(dtype=object)[good], lines[good],
        )
        errors += group_errors
    errors.sort(key=lambda e: e.line)
    if n and not snapshots:
        raise InputError(f"{path}: no valid snapshot; first error: {errors[0] if errors else 'n/a'}")
    return ParsedSnapshots(snapshots, errors, n, consumed)


def _group_snapshots(ts, token, side, price, size, account, lines):
    codes, names = pd.factorize(token, sort=True)
    is_ask = side == "ask"
    # ordering: timestamp, token, bids before asks, best price first; lexsort is stable,
    # so providers quoting the same price keep their file order
    order = np.lexsort((np.where(is_ask, price, -price), is_ask, codes, ts))
    ts, codes, is_ask = ts[order], codes[order], is_ask[order]
    price, size, lines = price[order], size[order], lines[order]
    accounts = [a if a else None for a in account[order].tolist()]
    cut = np.flatnonzero((np.diff(ts) != 0) | (np.diff(codes) != 0)) + 1
    starts = np.concatenate([[0], cut]).tolist()
    ends = np.concatenate([cut, [len(ts)]]).tolist()

    snapshots, errors, consumed = [], [], 0
    for a, b in zip(starts, ends):
        tok, stamp = str(names[codes[a]]), int(ts[a])
        m = a + int(np.count_nonzero(~is_ask[a:b]))
        try:
            if m == a or m == b:
                missing = "bid" if m == a else "ask"
                raise InputError(f"{tok}@{stamp}: no {missing} levels, cannot derive mid price")
            bids = BookSide(Side.BID, price[a:m], size[a:m], tuple(accounts[a:m]))
            asks = BookSide(Side.ASK, price[m:b], size[m:b], tuple(accounts[m:b]))
            snapshots.append(OrderBookSnapshot(tok, stamp, bids, asks))
            consumed += b - a
        except InputError as exc:
            errors.extend(RecordError(int(l), str(exc)) for l in lines[a:b].tolist())
    return snapshots, errors, consumed


def write_snapshot_file(path, snapshots: Iterable[OrderBookSnapshot]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SNAPSHOT_FIELDS)
        for snap in snapshots:
            for book in (snap.bids, snap.asks):
                for lvl in book:
                    w.writerow([snap.timestamp, snap.token, book.side.value, repr(lvl.price), repr(lvl.size), lvl.account_id or ""])


# -- auxiliary inputs --------------------------------------------------------


def _read_table(path, fields: Sequence[str], optional: Sequence[str] = ()) -> pd.DataFrame:
    header = _read_header(Path(path))
    if tuple(header[: len(fields)]) != tuple(fields) or any(h not in optional for h in header[len(fields) :]):
        raise MalformedHeader(f"{path}: expected header {','.join(fields)!r}, got {','.join(header)!r}")
    return pd.read_csv(path, dtype={"token": str}, float_precision="round_trip")


def read_open_interest(path) -> pd.DataFrame:
    """Open-interest table; an optional ``oi_skew`` column carries signed long-minus-short OI."""
    frame = _read_table(path, OI_FIELDS, optional=("oi_skew",))
    if frame["open_interest"].isna().any() or (frame["open_interest"] < 0).any():
        raise InputError(f"{path}: open_interest must be non-negative numbers")
    return frame.sort_values(["token", "timestamp"], kind="stable").reset_index(drop=True)


def write_open_interest(path, rows: Iterable[tuple[int, str, float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OI_FIELDS)
        for ts, token, oi in rows:
            w.writerow([ts, token, repr(float(oi))])


def read_position_sizes(path) -> dict[str, list[float]]:
    frame = _read_table(path, POSITION_FIELDS)
    return {tok: g["position_size_usd"].astype(float).tolist() for tok, g in frame.groupby("token", sort=True)}


def read_series(path, column: str | None = None) -> MetricSeries:
    """Two-or-more-column CSV with ``timestamp`` first; picks ``column`` (default: second)."""
    frame = pd.read_csv(path, float_precision="round_trip")
    if frame.columns[0] != "timestamp" or len(frame.columns) < 2:
        raise MalformedHeader(f"{path}: first column must be 'timestamp'")
    column = column or frame.columns[1]
    if column not in frame:
        raise InputError(f"{path}: no column {column!r}")
    return MetricSeries(frame["timestamp"].to_numpy(), frame[column].to_numpy(dtype=float), column)


def write_series(path, series: MetricSeries, column: str | None = None) -> None:
    column = column or series.name or "value"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("timestamp", column))
        for ts, v in series.points:
            w.writerow([ts, repr(v)])


def build_inputs(
    parsed: ParsedSnapshots,
    open_interest: pd.DataFrame,
    position_sizes: dict[str, list[float]] | None = None,
) -> tuple[list[TokenInput], list[str]]:
    """Pair each snapshot with the latest open interest at or before its timestamp."""
    inputs, flags = [], []
    by_token = {tok: g for tok, g in open_interest.groupby("token", sort=False)}
    for snap in parsed.snapshots:
        g = by_token.get(snap.token)
        rows = g[g["timestamp"] <= snap.timestamp] if g is not None else None
        if rows is None or rows.empty:
            flags.append(f"skipped:{snap.token}:no open interest at or before {snap.timestamp}")
            continue
        row = rows.iloc[-1]
        skew = row["oi_skew"] if "oi_skew" in row and not pd.isna(row.get("oi_skew")) else None
        inputs.append(
            TokenInput(
                snap,
                float(row["open_interest"]),
                position_sizes.get(snap.token) if position_sizes else None,
                oi_skew=None if skew is None else float(skew),
            )
        )
    return inputs, flags


# -- reports -----------------------------------------------------------------


def _frac(x: float) -> float:
    return round(float(x), 6)


def _usd(x: float) -> float:
    return round(float(x), 2)


def _report_dict(report: SaRReport) -> dict:
    return {
        "timestamp": report.timestamp,
        "sar": _frac(report.sar),
        "esar": _frac(report.esar),
        "tsar_usd": _usd(report.tsar_dollars),
        "weighted_sar": _frac(report.weighted_sar),
        "tail_tokens": list(report.tail_tokens),
        "n_tokens": report.n_tokens,
        "tail_oi_share": _frac(report.tail_oi_share),
        "depth_usd": _usd(report.depth_usd),
        "flags": list(report.flags),
    }


def _record_dict(r: TokenRiskRecord) -> dict:
    stats = None
    if r.stats is not None:
        stats = {
            "hhi": _frac(r.stats.hhi),
            "n_eff": _frac(r.stats.n_eff),
            "cr_1": _frac(r.stats.cr_1),
            "cr_k": [_frac(c) for c in r.stats.cr_k],
            "provider_count": r.stats.provider_count,
        }
    return {
        "token": r.token,
        "open_interest_usd": _usd(r.open_interest),
        "stress_notional_usd": _usd(r.stress_notional_q),
        "raw_slippage": _frac(r.raw_slippage),
        "concentration": stats,
        "haircut_conc": _frac(r.haircut_conc),
        "spoof_score": _frac(r.spoof_score),
        "haircut_total": _frac(r.haircut_total),
        "cascade_factor": _frac(r.cascade_factor),
        "adjusted_slippage": _frac(r.adjusted_slippage),
        "avg_leverage": None if r.avg_leverage is None else _frac(r.avg_leverage),
        "exhausted": r.exhausted,
        "unattributed": r.unattributed,
    }


def _alert_dict(a) -> dict:
    return {
        "rule_id": a.rule_id,
        "severity": getattr(a.severity, "value", a.severity),
        "token": a.token,
        "observed": _frac(a.observed),
        "threshold": _frac(a.threshold),
        "timestamp": a.timestamp,
    }


def format_alert(alert) -> str:
    return "|".join(
        [alert.severity.upper(), alert.rule_id, alert.token or "", f"{alert.observed:.6f}", f"{alert.threshold:.6f}", str(alert.timestamp)]
    )


_CSV_COLUMNS = (
    "token",
    "open_interest_usd",
    "stress_notional_usd",
    "raw_slippage",
    "n_eff",
    "cr_1",
    "haircut_conc",
    "spoof_score",
    "haircut_total",
    "adjusted_slippage",
    "exhausted",
    "unattributed",
    "in_tail",
)


def _render(report: SaRReport, records: Sequence[TokenRiskRecord], alerts: Sequence, fmt: str) -> str:
    if fmt == "json_doc":
        doc = {
            "schema": REPORT_SCHEMA,
            "report": _report_dict(report),
            "tokens": [_record_dict(r) for r in records],
            "alerts": [_alert_dict(a) for a in alerts],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if fmt == "csv_table":
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(_CSV_COLUMNS)
        tail = set(report.tail_tokens)
        for r in records:
            w.writerow(
                [
                    r.token,
                    f"{r.open_interest:.2f}",
                    f"{r.stress_notional_q:.2f}",
                    f"{r.raw_slippage:.6f}",
                    "" if r.stats is None else f"{r.stats.n_eff:.6f}",
                    "" if r.stats is None else f"{r.stats.cr_1:.6f}",
                    f"{r.haircut_conc:.6f}",
                    f"{r.spoof_score:.6f}",
                    f"{r.haircut_total:.6f}",
                    f"{r.adjusted_slippage:.6f}",
                    int(r.exhausted),
                    int(r.unattributed),
                    int(r.token in tail),
                ]
            )
        return buf.getvalue()
    if fmt == "text_summary":
        lines = [
            f"timestamp: {report.timestamp}",
            f"tokens: {report.n_tokens}",
            f"SaR: {report.sar:.6f}",
            f"ESaR: {report.esar:.6f}",
            f"TSaR_usd: {report.tsar_dollars:.2f}",
            f"weighted SaR: {report.weighted_sar:.6f}",
            f"tail tokens ({len(report.tail_tokens)}): {' '.join(report.tail_tokens) or '-'}",
            f"tail OI share: {report.tail_oi_share:.6f}",
            f"depth_usd: {report.depth_usd:.2f}",
        ]
        lines += [f"flag: {f}" for f in report.flags]
        lines += [f"alert: {format_alert(a)}" for a in alerts]
        return "\n".join(lines) + "\n"
    raise InputError(f"unknown report format {fmt!r}")


def emit_report(report: SaRReport, records: Sequence[TokenRiskRecord], alerts: Sequence = (), fmt: str = "json_doc", path=None) -> str:
    """Serialise deterministically; writes to ``path`` when given and returns the text."""
    text = _render(report, records, alerts, fmt)
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def load_report(path) -> tuple[SaRReport, list[TokenRiskRecord], list]:
    """Inverse of ``emit_report(..., fmt="json_doc")``."""
    from .alerts import Alert

    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema") != REPORT_SCHEMA:
        raise InputError(f"{path}: not a {REPORT_SCHEMA} document")
    r = doc["report"]
    report = SaRReport(
        timestamp=int(r["timestamp"]),
        sar=r["sar"],
        esar=r["esar"],
        tsar_dollars=r["tsar_usd"],
        weighted_sar=r["weighted_sar"],
        tail_tokens=tuple(r["tail_tokens"]),
        n_tokens=int(r["n_tokens"]),
        tail_oi_share=r["tail_oi_share"],
        depth_usd=r["depth_usd"],
        flags=tuple(r["flags"]),
    )
    records = []
    for t in doc["tokens"]:
        c = t["concentration"]
        stats = None
        if c is not None:
            stats = ConcentrationStats(
                hhi=1.0 / c["n_eff"], n_eff=c["n_eff"], cr_1=c["cr_1"], cr_k=tuple(c["cr_k"]), provider_count=c["provider_count"]
            )
        records.append(
            TokenRiskRecord(
                token=t["token"],
                open_interest=t["open_interest_usd"],
                stress_notional_q=t["stress_notional_usd"],
                raw_slippage=t["raw_slippage"],
                stats=stats,
                haircut_conc=t["haircut_conc"],
                spoof_score=t["spoof_score"],
                haircut_total=t["haircut_total"],
                adjusted_slippage=t["adjusted_slippage"],
                avg_leverage=t["avg_leverage"],
                exhausted=t["exhausted"],
                cascade_factor=t["cascade_factor"],
                unattributed=t["unattributed"],
            )
        )
    alerts = [Alert(**a) for a in doc["alerts"]]
    return report, records, alerts


# -- replay ------------------------------------------------------------------


def resample_locf(series: MetricSeries, cadence: int, max_gap: int | None = None) -> tuple[MetricSeries, list[str]]:
    """Carry the last observation forward onto a uniform grid from first to last timestamp."""
    if cadence <= 0:
        raise InputError("cadence must be positive")
    if not len(series):
        return series, []
    ts = series.timestamps
    grid = np.arange(ts[0], ts[-1] + 1, cadence, dtype=np.int64)
    idx = np.searchsorted(ts, grid, side="right") - 1
    flags = []
    if max_gap is not None:
        gaps = np.diff(ts)
        flags = [f"gap:{int(a)}-{int(b)}" for a, b, g in zip(ts[:-1], ts[1:], gaps) if g > max_gap]
    return MetricSeries(grid, series.values[idx], series.name), flags


@dataclass
class ReplayResult:
    series: dict[str, MetricSeries]
    history_path: Path
    flags: list[str] = field(default_factory=list)
    reports: list[SaRReport] = field(default_factory=list)


def _snapshot_files(directory: Path) -> list[tuple[int, Path]]:
    found = []
    for p in directory.iterdir():
        m = _SNAPSHOT_NAME.search(p.name)
        if m and p.is_file():
            found.append((int(m.group(1)), p))
    return sorted(found)


def _read_history(path: Path) -> pd.DataFrame:
    if not path.exists() or path.stat().st_size == 0:
        return pd.DataFrame(columns=list(HISTORY_FIELDS))
    header = _read_header(path)
    if tuple(header) != HISTORY_FIELDS:
        raise MalformedHeader(f"{path}: expected header {','.join(HISTORY_FIELDS)!r}")
    return pd.read_csv(path, float_precision="round_trip")


def replay_history(
    snapshot_dir,
    history_path,
    params: SaRParams = SaRParams(),
    oi_path=None,
    positions_path=None,
    rebuild: bool = False,
    cadence: int | None = None,
    max_gap: int | None = None,
) -> ReplayResult:
    """Run the pipeline over every ``*<unix_ts>.csv|jsonl`` file in ``snapshot_dir``.

    New timestamps are appended to the history CSV (``rebuild`` rewrites it
    from scratch); the returned series cover the whole directory and are
    resampled onto a uniform cadence.
    """
    directory = Path(snapshot_dir)
    files = _snapshot_files(directory)
    if not files:
        raise EmptyDirectory(f"{directory}: no snapshot files named *<timestamp>.csv or .jsonl")
    oi = read_open_interest(oi_path or directory / "oi.csv")
    positions = None
    if positions_path or (directory / "positions.csv").exists():
        positions = read_position_sizes(positions_path or directory / "positions.csv")

    history_path = Path(history_path)
    existing = set() if rebuild else set(_read_history(history_path)["timestamp"].astype(int).tolist())
    rows, reports, flags = [], [], []
    for stamp, path in files:
        parsed = parse_snapshot_file(path)
        flags += [f"{path.name}:{e}" for e in parsed.errors]
        inputs, skipped = build_inputs(parsed, oi, positions)
        report, _ = run_pipeline(inputs, params)
        if skipped:
            report = replace(report, flags=report.flags + tuple(skipped))
        reports.append(report)
        rows.append((stamp, report))

    new_rows = [(s, r) for s, r in rows if rebuild or s not in existing]
    mode = "w" if rebuild or not history_path.exists() or history_path.stat().st_size == 0 else "a"
    with open(history_path, mode, newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if mode == "w":
            w.writerow(HISTORY_FIELDS)
        for stamp, r in new_rows:
            w.writerow([stamp, f"{r.sar:.6f}", f"{r.esar:.6f}", f"{r.tsar_dollars:.2f}", f"{r.depth_usd:.2f}"])

    stamps = [s for s, _ in rows]
    raw = {
        "sar": MetricSeries(stamps, [r.sar for _, r in rows], "sar"),
        "esar": MetricSeries(stamps, [r.esar for _, r in rows], "esar"),
        "tsar_usd": MetricSeries(stamps, [r.tsar_dollars for _, r in rows], "tsar_usd"),
        "depth_usd": MetricSeries(stamps, [r.depth_usd for _, r in rows], "depth_usd"),
    }
    if cadence is None:
        diffs = np.diff(stamps)
        cadence = int(diffs.min()) if len(diffs) else 1
    series = {}
    for name, s in raw.items():
        series[name], gap_flags = resample_locf(s, cadence, max_gap)
    flags += gap_flags
    return ReplayResult(series, history_path, flags, reports)
