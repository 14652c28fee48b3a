from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sarisk.config import CONFIG_ENV, KNOWN_KEYS, RunConfig, format_config, load_config, parse_config
from sarisk.errors import BadConfig
from sarisk.metrics import SaRParams


def test_defaults_when_no_file(monkeypatch):
    monkeypatch.delenv(CONFIG_ENV, raising=False)
    assert load_config() == RunConfig()


def test_table_keys_and_comments():
    cfg = parse_config(
        """
        # risk desk settings
        alpha = 0.9
        beta = 0.02   # stress fraction
        n_target = 12
        cr1_thresh = 0.4
        lambda_conc = 0.3
        mu_dom = 0.6
        c_deficit = 0.5
        side_policy = ask
        eta_depth_decay = 7
        """
    )
    assert cfg.sar.alpha == 0.9 and cfg.sar.beta == 0.02 and cfg.sar.c_deficit == 0.5
    assert (cfg.sar.haircut.n_target, cfg.sar.haircut.cr1_thresh) == (12.0, 0.4)
    assert (cfg.sar.haircut.lambda_conc, cfg.sar.haircut.mu_dom) == (0.3, 0.6)
    assert cfg.sar.side_policy == "ask"
    assert cfg.scenario == {"eta_depth_decay": 7.0}


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("alhpa = 0.9", "unknown key"),
        ("alpha = 0.9\nalpha = 0.8", "duplicate"),
        ("alpha 0.9", "key = value"),
        ("alpha =", "key = value"),
        ("beta = lots", "needs a number"),
        ("side_policy = sideways", "side_policy"),
        ("alpha = 1.5", "alpha"),
    ],
)
def test_bad_files_fail_loudly(text, fragment):
    with pytest.raises(BadConfig, match=fragment):
        parse_config(text, "x.conf")


def test_error_names_the_line():
    with pytest.raises(BadConfig, match=r"x.conf:3"):
        parse_config("alpha = 0.9\n\nbogus = 1\n", "x.conf")


def test_env_var_and_explicit_path(tmp_path, monkeypatch):
    env = tmp_path / "env.conf"
    env.write_text("alpha = 0.8\n")
    explicit = tmp_path / "explicit.conf"
    explicit.write_text("alpha = 0.7\n")
    monkeypatch.setenv(CONFIG_ENV, str(env))
    assert load_config().sar.alpha == 0.8
    assert load_config(explicit).sar.alpha == 0.7


def test_missing_file(tmp_path):
    with pytest.raises(BadConfig):
        load_config(tmp_path / "absent.conf")


def test_every_known_key_is_rendered():
    text = format_config(RunConfig(SaRParams(), {"eta_depth_decay": 3.0}))
    keys = [line.split("=")[0].strip() for line in text.splitlines()]
    assert set(keys) <= set(KNOWN_KEYS)
    assert {"alpha", "beta", "n_target", "cr1_thresh", "lambda_conc", "mu_dom", "c_deficit"} <= set(keys)


@given(
    alpha=st.floats(0.5, 0.999),
    beta=st.floats(1e-4, 0.5),
    lam=st.floats(0.0, 5.0),
    mu=st.floats(0.0, 5.0),
    n_target=st.floats(1.0, 100.0),
    eta=st.floats(0.0, 50.0),
)
def test_format_then_parse_is_identity(alpha, beta, lam, mu, n_target, eta):
    base = parse_config(f"alpha = {alpha!r}\nbeta = {beta!r}\nlambda_conc = {lam!r}\nmu_dom = {mu!r}\nn_target = {n_target!r}\n")
    cfg = RunConfig(base.sar, {"eta_depth_decay": eta})
    assert parse_config(format_config(cfg)) == cfg
