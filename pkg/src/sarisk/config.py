"""Flat ``key = value`` configuration files.

Unknown keys are errors so that a misspelt risk parameter never silently
falls back to its default. ``#`` starts a comment.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .concentration import HaircutParams
from .errors import BadConfig, InputError
from .metrics import SIDE_POLICIES, SaRParams

__all__ = ["CONFIG_ENV", "KNOWN_KEYS", "RunConfig", "parse_config", "load_config", "resolve_config_path", "format_config"]

CONFIG_ENV = "SARISK_CONFIG"

_HAIRCUT_KEYS = ("n_target", "cr1_thresh", "lambda_conc", "mu_dom")
_SAR_KEYS = ("alpha", "beta", "c_deficit", "gamma_cascade", "delta_spoof", "max_slippage", "liquidation_cap")
_SCENARIO_KEYS = ("eta_depth_decay",)
KNOWN_KEYS = _SAR_KEYS[:2] + _HAIRCUT_KEYS + _SAR_KEYS[2:] + ("side_policy",) + _SCENARIO_KEYS


@dataclass(frozen=True)
class RunConfig:
    sar: SaRParams = SaRParams()
    scenario: dict = field(default_factory=dict)
    """Simulator overrides, keyed by :class:`~sarisk.simulator.ScenarioConfig` field."""


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (part.strip() for part in line.partition("="))
        if not sep or not key or not value:
            raise BadConfig(f"{source}:{lineno}: expected 'key = value'")
        if key not in KNOWN_KEYS:
            raise BadConfig(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise BadConfig(f"{source}:{lineno}: duplicate key {key!r}")
        if key == "side_policy":
            if value not in SIDE_POLICIES:
                raise BadConfig(f"{source}:{lineno}: side_policy must be one of {SIDE_POLICIES}")
            values[key] = value
            continue
        try:
            values[key] = float(value)
        except ValueError:
            raise BadConfig(f"{source}:{lineno}: {key} needs a number, got {value!r}") from None

    try:
        haircut = replace(HaircutParams(), **{k: values[k] for k in _HAIRCUT_KEYS if k in values})
        sar = replace(
            SaRParams(haircut=haircut),
            **{k: values[k] for k in _SAR_KEYS + ("side_policy",) if k in values},
        )
    except InputError as exc:
        raise BadConfig(f"{source}: {exc}") from None
    return RunConfig(sar, {k: values[k] for k in _SCENARIO_KEYS if k in values})


def resolve_config_path(explicit=None) -> Path | None:
    """An explicit path wins, then the ``SARISK_CONFIG`` environment variable."""
    if explicit:
        return Path(explicit)
    env = os.environ.get(CONFIG_ENV)
    return Path(env) if env else None


def load_config(path=None) -> RunConfig:
    path = resolve_config_path(path)
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise BadConfig(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


def format_config(config: RunConfig) -> str:
    """Render every expressible key; ``parse_config`` reads it back to an equal config."""
    lines = []
    for key in KNOWN_KEYS:
        if key in _HAIRCUT_KEYS:
            value = getattr(config.sar.haircut, key)
        elif key in _SCENARIO_KEYS:
            value = config.scenario.get(key)
        else:
            value = getattr(config.sar, key)
        if value is None:
            continue
        lines.append(f"{key} = {value if isinstance(value, str) else repr(float(value))}")
    return "\n".join(lines) + "\n"
