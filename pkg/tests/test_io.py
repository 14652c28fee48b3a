from __future__ import annotations

import json
import re
import tempfile
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sarisk.alerts import Alert, Severity
from sarisk.errors import EmptyDirectory, InputError, MalformedHeader
from sarisk.io import (
    HISTORY_FIELDS,
    build_inputs,
    emit_report,
    load_report,
    parse_snapshot_file,
    read_open_interest,
    read_series,
    replay_history,
    resample_locf,
    write_series,
)
from sarisk.metrics import SaRParams, run_pipeline
from sarisk.simulator import ScenarioConfig, make_shock_path, make_stress_exchange, run_stress_scenario
from sarisk.timeseries import MetricSeries

from books import write_universe

HEADER = "timestamp,token,side,price,size,account_id\n"


def write(tmp_path, text, name="snap.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


# -- snapshot parsing --------------------------------------------------------


def test_minimal_file(tmp_path):
    parsed = parse_snapshot_file(write(tmp_path, HEADER + "5,BTC,bid,99,1,\n5,BTC,ask,101,2,\n"))
    (snap,) = parsed.snapshots
    assert snap.mid_price == 100 and snap.timestamp == 5 and not snap.attributed
    assert parsed.errors == [] and parsed.consumed == parsed.n_records == 2


def test_bad_size_flagged_rest_parsed(tmp_path):
    text = HEADER + "5,BTC,bid,99,1,a\n5,BTC,bid,98,0,a\n5,BTC,ask,101,2,b\n"
    parsed = parse_snapshot_file(write(tmp_path, text))
    assert [(e.line, "size" in e.message) for e in parsed.errors] == [(3, True)]
    assert len(parsed.snapshots[0].bids) == 1 and parsed.snapshots[0].attributed


def test_crossed_group_reports_each_line(tmp_path):
    text = HEADER + "5,A,bid,102,1,\n5,A,ask,101,1,\n5,B,bid,99,1,\n5,B,ask,101,1,\n"
    parsed = parse_snapshot_file(write(tmp_path, text))
    assert [s.token for s in parsed.snapshots] == ["B"]
    assert [e.line for e in parsed.errors] == [2, 3] and "crossed" in parsed.errors[0].message


def test_one_sided_group_rejected(tmp_path):
    parsed = parse_snapshot_file(write(tmp_path, HEADER + "5,A,bid,99,1,\n5,B,bid,99,1,\n5,B,ask,101,1,\n"))
    assert parsed.errors[0].line == 2 and "no ask" in parsed.errors[0].message


def test_wrong_field_count_is_a_line_error(tmp_path):
    parsed = parse_snapshot_file(write(tmp_path, HEADER + "5,A,bid,99,1\n5,A,bid,99,1,,\n5,A,bid,99,1,x\n5,A,ask,101,1,y\n"))
    assert [e.line for e in parsed.errors] == [2, 3]
    assert parsed.consumed == 2


def test_header_must_match(tmp_path):
    with pytest.raises(MalformedHeader):
        parse_snapshot_file(write(tmp_path, "ts,token,side,price,size,account_id\n"))


def test_all_bad_lines_is_fatal(tmp_path):
    with pytest.raises(InputError):
        parse_snapshot_file(write(tmp_path, HEADER + "5,A,bid,-1,1,\n"))


def test_jsonl_mirror(tmp_path):
    lines = [
        {"timestamp": 5, "token": "A", "side": "bid", "price": 99, "size": 1, "account_id": "m"},
        {"timestamp": 5, "token": "A", "side": "ask", "price": 101, "size": 1, "account_id": None},
        "not json",
        {"timestamp": 5, "token": "A", "side": "ask"},
    ]
    text = "\n".join(json.dumps(x) if isinstance(x, dict) else x for x in lines) + "\n"
    parsed = parse_snapshot_file(write(tmp_path, text, "snap.jsonl"))
    assert parsed.snapshots[0].mid_price == 100
    assert [e.line for e in parsed.errors] == [3, 4]


def test_large_universe_token_count(tmp_path):
    path = write_universe(tmp_path, n_tokens=184, levels=50)
    parsed = parse_snapshot_file(path)
    groups = {tuple(line.split(",")[:2]) for line in path.read_text().splitlines()[1:]}
    assert len(parsed.snapshots) == len(groups) == 184
    assert parsed.consumed == 184 * 100


cells = st.one_of(
    st.sampled_from(["5", "6", "x", "", "-1", "1e3", "nan", "inf"]),
    st.sampled_from(["A", "B", ""]),
    st.sampled_from(["bid", "ask", "BID", "mid"]),
    st.floats(-5, 200, allow_nan=False).map(lambda v: repr(round(v, 2))),
)


@given(st.lists(st.lists(cells, min_size=4, max_size=7), max_size=20))
def test_every_line_consumed_or_diagnosed(rows):
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "snap.csv"
        path.write_text(HEADER + "".join(",".join(r) + "\n" for r in rows))
        try:
            parsed = parse_snapshot_file(path)
        except InputError:
            return
        data_lines = sum(1 for r in rows if ",".join(r).strip())
        assert parsed.n_records == data_lines
        assert parsed.consumed + len(parsed.errors) == data_lines
        assert len({e.line for e in parsed.errors}) == len(parsed.errors)


# -- open interest and inputs -------------------------------------------------


def test_open_interest_carried_forward(tmp_path):
    snaps = parse_snapshot_file(write(tmp_path, HEADER + "10,A,bid,99,1,\n10,A,ask,101,1,\n10,B,bid,9,1,\n10,B,ask,11,1,\n"))
    oi = tmp_path / "oi.csv"
    oi.write_text("timestamp,token,open_interest\n5,A,100\n9,A,200\n11,A,300\n12,B,5\n")
    inputs, flags = build_inputs(snaps, read_open_interest(oi))
    assert [(i.token, i.open_interest) for i in inputs] == [("A", 200.0)]
    assert flags and flags[0].startswith("skipped:B")


def test_oi_skew_column(tmp_path):
    oi = tmp_path / "oi.csv"
    oi.write_text("timestamp,token,open_interest,oi_skew\n1,A,100,-3\n")
    snaps = parse_snapshot_file(write(tmp_path, HEADER + "1,A,bid,99,1,\n1,A,ask,101,1,\n"))
    assert build_inputs(snaps, read_open_interest(oi))[0][0].oi_skew == -3.0


def test_oi_header_checked(tmp_path):
    oi = tmp_path / "oi.csv"
    oi.write_text("timestamp,token,oi\n")
    with pytest.raises(MalformedHeader):
        read_open_interest(oi)


# -- reports -----------------------------------------------------------------


@pytest.fixture
def report_pair(tmp_path):
    path = write_universe(tmp_path, n_tokens=12, levels=40)
    inputs, _ = build_inputs(parse_snapshot_file(path), read_open_interest(tmp_path / "oi.csv"))
    return run_pipeline(inputs, SaRParams(alpha=0.75))


def test_json_round_trip(report_pair, tmp_path):
    report, records = report_pair
    alerts = [Alert("sar_level_warn", Severity.WARNING, None, 0.04, 0.03, report.timestamp)]
    out = tmp_path / "r.json"
    text = emit_report(report, records, alerts, "json_doc", out)
    again, recs2, alerts2 = load_report(out)
    assert emit_report(again, recs2, alerts2, "json_doc") == text
    assert alerts2 == alerts
    assert again.tail_tokens == report.tail_tokens


def test_csv_table_rows(report_pair):
    report, records = report_pair
    lines = emit_report(report, records, fmt="csv_table").splitlines()
    assert len(lines) == len(records) + 1


def test_text_summary_matches_report(report_pair):
    report, records = report_pair
    text = emit_report(report, records, fmt="text_summary")
    grab = lambda key: float(re.search(rf"^{key}: ([0-9.]+)$", text, re.M).group(1))
    assert grab("SaR") == pytest.approx(report.sar, abs=5e-7)
    assert grab("ESaR") == pytest.approx(report.esar, abs=5e-7)
    assert grab("TSaR_usd") == pytest.approx(report.tsar_dollars, abs=5e-3)


def test_unknown_format(report_pair):
    with pytest.raises(InputError):
        emit_report(*report_pair, fmt="xml")


# -- series and replay -------------------------------------------------------


def test_resample_carries_last_value():
    s = MetricSeries([0, 10, 40], [1.0, 2.0, 3.0])
    grid, flags = resample_locf(s, 10, max_gap=20)
    assert grid.points == [(0, 1.0), (10, 2.0), (20, 2.0), (30, 2.0), (40, 3.0)]
    assert flags == ["gap:10-40"]


def test_series_round_trip(tmp_path):
    s = MetricSeries([1, 2, 3], [0.1, 1 / 3, 2.0], "x")
    write_series(tmp_path / "s.csv", s)
    assert read_series(tmp_path / "s.csv") == s


def _replay_dir(tmp_path, stamps=(100, 200, 300)):
    d = tmp_path / "snaps"
    for i, ts in enumerate(stamps):
        write_universe(d, n_tokens=6, levels=30, timestamp=ts, seed=i)
    oi = "timestamp,token,open_interest\n" + "".join(f"0,TK{t:03d},{1e6 * (t + 1)}\n" for t in range(6))
    (d / "oi.csv").write_text(oi)
    return d


def test_replay_writes_one_row_per_snapshot(tmp_path):
    d = _replay_dir(tmp_path)
    result = replay_history(d, tmp_path / "h.csv", SaRParams(alpha=0.5))
    rows = (tmp_path / "h.csv").read_text().splitlines()
    assert rows[0] == ",".join(HISTORY_FIELDS)
    stamps = [int(r.split(",")[0]) for r in rows[1:]]
    assert stamps == [100, 200, 300]
    assert result.series["sar"].timestamps.tolist() == [100, 200, 300]


def test_replay_is_idempotent(tmp_path):
    d = _replay_dir(tmp_path)
    h = tmp_path / "h.csv"
    replay_history(d, h)
    first = h.read_bytes()
    replay_history(d, h)
    assert h.read_bytes() == first
    replay_history(d, h, rebuild=True)
    assert h.read_bytes() == first


def test_replay_appends_new_snapshots_only(tmp_path):
    d = _replay_dir(tmp_path, stamps=(100, 200))
    h = tmp_path / "h.csv"
    replay_history(d, h)
    write_universe(d, n_tokens=6, levels=30, timestamp=300, seed=9)
    (d / "oi.csv").write_text("timestamp,token,open_interest\n" + "".join(f"0,TK{t:03d},1e6\n" for t in range(6)))
    replay_history(d, h)
    assert [r.split(",")[0] for r in h.read_text().splitlines()[1:]] == ["100", "200", "300"]


def test_replay_flags_gaps(tmp_path):
    d = _replay_dir(tmp_path, stamps=(100, 200, 500))
    result = replay_history(d, tmp_path / "h.csv", max_gap=100)
    assert "gap:200-500" in result.flags
    assert result.series["tsar_usd"].timestamps.tolist() == [100, 200, 300, 400, 500]


def test_empty_directory(tmp_path):
    with pytest.raises(EmptyDirectory):
        replay_history(tmp_path, tmp_path / "h.csv")


def test_replay_reproduces_simulator_series(tmp_path):
    from sarisk.io import write_open_interest, write_snapshot_file

    d = tmp_path / "sim"
    d.mkdir()
    oi_rows = []

    def sink(ts, inputs):
        write_snapshot_file(d / f"snapshots_{ts}.csv", [i.snapshot for i in inputs])
        oi_rows.extend((ts, i.token, i.open_interest) for i in inputs)

    params = SaRParams(alpha=0.8)
    sim = run_stress_scenario(make_stress_exchange(5, n_markets=6), make_shock_path(5, steps=12, n_markets=6),
                              params, ScenarioConfig(eta_depth_decay=10, depth_recovery=0.1), snapshot_sink=sink)
    write_open_interest(d / "oi.csv", oi_rows)
    replayed = replay_history(d, tmp_path / "h.csv", params)
    assert replayed.series["tsar_usd"] == sim.tsar
