from __future__ import annotations

import json

import numpy as np
import pytest

from sarisk import cli
from sarisk.config import CONFIG_ENV
from sarisk.io import emit_report, read_series, write_series
from sarisk.timeseries import MetricSeries

from alertcases import all_rules_case, benign_case
from books import write_universe

SCENARIO = {
    "seed": 3,
    "exchange": {"n_markets": 5, "positions_per_market": 6, "insurance_fund": 2.0e5},
    "shocks": {"steps": 10, "stress_prob": 0.3},
    "scenario": {"eta_depth_decay": 5.0, "depth_recovery": 0.1},
    "sar": {"alpha": 0.8},
}


@pytest.fixture
def universe(tmp_path):
    snap = write_universe(tmp_path / "u", n_tokens=12, levels=40)
    return snap, snap.parent / "oi.csv"


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_compute_formats(universe, tmp_path, capsys):
    snap, oi = universe
    for fmt in ("json_doc", "csv_table", "text_summary"):
        code, out, _ = run(["compute", snap, "--oi", oi, "--format", fmt], capsys)
        assert code in (0, 1, 2)
        if fmt == "json_doc":
            assert json.loads(out)["report"]["n_tokens"] == 12
        elif fmt == "csv_table":
            assert len(out.splitlines()) == 13
        else:
            assert "SaR:" in out


def test_compute_is_byte_identical(universe, tmp_path, capsys):
    snap, oi = universe
    outs = []
    for i in range(2):
        path = tmp_path / f"r{i}.json"
        run(["compute", snap, "--oi", oi, "--out", path], capsys)
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_config_changes_the_result(universe, tmp_path, capsys, monkeypatch):
    snap, oi = universe
    _, base, _ = run(["compute", snap, "--oi", oi], capsys)
    conf = tmp_path / "c.conf"
    conf.write_text("beta = 0.2\n")
    _, explicit, _ = run(["--config", conf, "compute", snap, "--oi", oi], capsys)
    monkeypatch.setenv(CONFIG_ENV, str(conf))
    _, via_env, _ = run(["compute", snap, "--oi", oi], capsys)
    assert explicit == via_env != base


def test_input_errors_exit_three(universe, tmp_path, capsys):
    snap, oi = universe
    bad_conf = tmp_path / "bad.conf"
    bad_conf.write_text("alhpa = 0.9\n")
    assert run(["--config", bad_conf, "compute", snap, "--oi", oi], capsys)[0] == 3
    assert run(["compute", tmp_path / "missing.csv", "--oi", oi], capsys)[0] == 3
    headerless = tmp_path / "h.csv"
    headerless.write_text("a,b\n")
    code, _, err = run(["compute", headerless, "--oi", oi], capsys)
    assert code == 3 and "header" in err


def test_line_diagnostics_go_to_stderr(universe, capsys):
    snap, oi = universe
    with open(snap, "a") as fh:
        fh.write("1700000000,TK000,bid,-1,1,\n")
    code, out, err = run(["compute", snap, "--oi", oi], capsys)
    assert code != 3 and "must be a positive" in err
    assert json.loads(out)["report"]["n_tokens"] == 12


def _save(tmp_path, case):
    rep, recs = case[0], case[1]
    path = tmp_path / "report.json"
    emit_report(rep, recs, (), "json_doc", path)
    return path


def test_alerts_subcommand_critical(tmp_path, capsys):
    rep, recs, ctx, expected = all_rules_case()
    path = _save(tmp_path, (rep, recs))
    code, out, _ = run(["alerts", path, "--insurance-fund", ctx.insurance_fund], capsys)
    assert code == 2
    rows = [line.split("|") for line in out.splitlines()]
    got = {(r[1], r[0].lower(), r[2] or None) for r in rows}
    assert got == {e for e in expected if e[0] not in ("trend_persist", "depth_drop")}


def test_alerts_subcommand_uses_history(tmp_path, capsys):
    rep, recs, ctx, expected = all_rules_case()
    path = _save(tmp_path, (rep, recs))
    stamps = rep.timestamp - 3600 * np.arange(48, -1, -1)
    hist = tmp_path / "history.csv"
    lines = ["timestamp,sar,esar,tsar_usd,depth_usd"]
    lines += [f"{t},{0.01 + 0.001 * i:.6f},0,0,{1.0e8:.2f}" for i, t in enumerate(stamps.tolist())]
    hist.write_text("\n".join(lines) + "\n")
    code, out, _ = run(["alerts", path, "--insurance-fund", ctx.insurance_fund, "--history", hist], capsys)
    assert code == 2
    assert {line.split("|")[1] for line in out.splitlines()} == {e[0] for e in expected}


def test_alerts_subcommand_clean(tmp_path, capsys):
    rep, recs, ctx = benign_case()
    path = _save(tmp_path, (rep, recs))
    assert run(["alerts", path, "--insurance-fund", ctx.insurance_fund], capsys)[:2] == (0, "")


def test_warning_only_exit_one(tmp_path, capsys):
    rep, recs, _ = benign_case()
    from dataclasses import replace
    path = _save(tmp_path, (replace(rep, sar=0.04), recs))
    code, out, _ = run(["alerts", path], capsys)
    assert code == 1 and out.startswith("WARNING|sar_level_warn|")


def test_simulate_then_replay_matches(tmp_path, capsys):
    scen = tmp_path / "scen.json"
    scen.write_text(json.dumps(SCENARIO))
    dump = tmp_path / "dump"
    prefix = tmp_path / "run"
    code, out, _ = run(["simulate", scen, "--out-prefix", prefix, "--dump-snapshots", dump], capsys)
    assert code == 0 and "steps: 10" in out
    tsar = read_series(f"{prefix}_tsar.csv", "tsar_usd")
    deficits = read_series(f"{prefix}_deficits.csv", "deficit_usd")
    assert len(tsar) == len(deficits) == 10
    assert run(["--config", dump / "params.conf", "replay", dump], capsys)[0] == 0
    replayed = read_series(dump / "history.csv", "tsar_usd")
    np.testing.assert_allclose(replayed.values, tsar.values, rtol=0, atol=0.005)
    np.testing.assert_array_equal(replayed.timestamps, tsar.timestamps)


def test_simulate_seed_override_and_unknown_keys(tmp_path, capsys):
    scen = tmp_path / "scen.json"
    scen.write_text(json.dumps(SCENARIO))
    run(["simulate", scen, "--out-prefix", tmp_path / "a"], capsys)
    run(["simulate", scen, "--out-prefix", tmp_path / "b", "--seed", 3], capsys)
    run(["simulate", scen, "--out-prefix", tmp_path / "c", "--seed", 4], capsys)
    a, b, c = (read_series(tmp_path / f"{k}_tsar.csv", "tsar_usd").values for k in "abc")
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    scen.write_text(json.dumps({**SCENARIO, "shocks": {"stepz": 3}}))
    assert run(["simulate", scen], capsys)[0] == 3


def test_validate_prints_lag_table_and_granger(tmp_path, capsys):
    rng = np.random.default_rng(1)
    n = 300
    x = rng.standard_normal(n)
    y = np.concatenate([[0.0], 0.8 * x[:-1]]) + 0.3 * rng.standard_normal(n)
    stamps = 3600 * np.arange(n)
    write_series(tmp_path / "x.csv", MetricSeries(stamps, x), "tsar_usd")
    write_series(tmp_path / "y.csv", MetricSeries(stamps, y), "deficit_usd")
    code, out, _ = run(["validate", tmp_path / "x.csv", tmp_path / "y.csv", "--lags", 2, "--granger-lags", 2], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "lag,correlation" and len(lines) == 1 + 5 + 2
    table = dict(line.split(",") for line in lines[1:6])
    best = max(table, key=lambda k: float(table[k]))
    assert best == "-1"  # x leads y by one step
    assert sum(line.startswith("granger") for line in lines) == 2


def test_validate_needs_overlap(tmp_path, capsys):
    write_series(tmp_path / "x.csv", MetricSeries([1, 2, 3], [1.0, 2.0, 3.0]), "v")
    write_series(tmp_path / "y.csv", MetricSeries([7, 8, 9], [1.0, 2.0, 3.0]), "v")
    assert run(["validate", tmp_path / "x.csv", tmp_path / "y.csv"], capsys)[0] == 3
