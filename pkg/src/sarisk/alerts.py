"""Threshold alerts over a report, its token records and a little history."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

from .errors import BadConfig
from .metrics import SaRReport, TokenRiskRecord
from .timeseries import MetricSeries, rolling_stats

__all__ = [
    "Severity",
    "Condition",
    "AlertRule",
    "Alert",
    "AlertContext",
    "DEFAULT_RULES",
    "evaluate_alerts",
    "context_from_history",
    "exit_code",
]


class Severity(str, enum.Enum):
    WARNING = "warning"
    CRITICAL = "critical"


class Condition(str, enum.Enum):
    SAR_LEVEL_WARN = "sar_level_warn"
    SAR_LEVEL_CRIT = "sar_level_crit"
    TSAR_VS_IF = "tsar_vs_if"
    N_EFF_FLOOR = "n_eff_floor"
    CR1_CEILING = "cr1_ceiling"
    TREND_PERSIST = "trend_persist"
    DEPTH_DROP = "depth_drop"


_DEFAULT_SEVERITY = {
    Condition.SAR_LEVEL_WARN: Severity.WARNING,
    Condition.SAR_LEVEL_CRIT: Severity.CRITICAL,
    Condition.TSAR_VS_IF: Severity.CRITICAL,
    Condition.N_EFF_FLOOR: Severity.WARNING,
    Condition.CR1_CEILING: Severity.CRITICAL,
    Condition.TREND_PERSIST: Severity.WARNING,
    Condition.DEPTH_DROP: Severity.CRITICAL,
}


@dataclass(frozen=True)
class AlertRule:
    """One threshold rule.

    Units of ``threshold`` depend on the condition: a slippage fraction for
    the SaR levels, a multiple of the insurance fund for ``tsar_vs_if``, a
    provider count for ``n_eff_floor``, a share for ``cr1_ceiling``, hours
    for ``trend_persist`` and a fractional drop for ``depth_drop``.
    """

    rule_id: str
    condition: Condition
    threshold: float
    severity: Severity

    def __post_init__(self) -> None:
        object.__setattr__(self, "condition", Condition(self.condition))
        object.__setattr__(self, "severity", Severity(self.severity))
        if not self.threshold > 0:
            raise BadConfig(f"rule {self.rule_id}: threshold must be positive")
        if self.severity is not _DEFAULT_SEVERITY[self.condition]:
            raise BadConfig(f"rule {self.rule_id}: {self.condition.value} alerts are {_DEFAULT_SEVERITY[self.condition].value}")


@dataclass(frozen=True)
class Alert:
    rule_id: str
    severity: Severity
    token: str | None
    observed: float
    threshold: float
    timestamp: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "severity", Severity(self.severity))


DEFAULT_RULES: tuple[AlertRule, ...] = (
    AlertRule("sar_level_warn", Condition.SAR_LEVEL_WARN, 0.03, Severity.WARNING),
    AlertRule("sar_level_crit", Condition.SAR_LEVEL_CRIT, 0.05, Severity.CRITICAL),
    AlertRule("tsar_vs_if", Condition.TSAR_VS_IF, 2.0, Severity.CRITICAL),
    AlertRule("n_eff_floor", Condition.N_EFF_FLOOR, 3.0, Severity.WARNING),
    AlertRule("cr1_ceiling", Condition.CR1_CEILING, 0.5, Severity.CRITICAL),
    AlertRule("trend_persist", Condition.TREND_PERSIST, 24.0, Severity.WARNING),
    AlertRule("depth_drop", Condition.DEPTH_DROP, 0.30, Severity.CRITICAL),
)


@dataclass(frozen=True)
class AlertContext:
    """History-dependent inputs. Rules whose input is missing stay silent.

    ``trend_history`` holds ``(timestamp, trend)`` pairs of the SaR trend
    statistic; ``prior_depth`` is exchange depth at the comparison horizon.
    """

    insurance_fund: float | None = None
    trend_history: tuple[tuple[int, float], ...] = ()
    prior_depth: float | None = None


def _positive_run_hours(history: Sequence[tuple[int, float]], now: int) -> float:
    """Length in hours of the unbroken run of positive trend ending at ``now``."""
    pts = sorted((int(t), float(v)) for t, v in history if int(t) <= now)
    if not pts or pts[-1][1] <= 0:
        return 0.0
    start = pts[-1][0]
    for t, v in reversed(pts):
        if v <= 0:
            break
        start = t
    return (now - start) / 3600.0


def evaluate_alerts(
    report: SaRReport,
    records: Sequence[TokenRiskRecord],
    context: AlertContext = AlertContext(),
    rules: Sequence[AlertRule] = DEFAULT_RULES,
) -> list[Alert]:
    """Every violated rule instance, in rule order then token order."""
    ts = report.timestamp
    ordered = sorted(records, key=lambda r: r.token)
    out: list[Alert] = []
    for rule in rules:
        c, thr = rule.condition, rule.threshold

        def emit(observed: float, bound: float, token: str | None = None) -> None:
            out.append(Alert(rule.rule_id, rule.severity, token, float(observed), float(bound), ts))

        if c in (Condition.SAR_LEVEL_WARN, Condition.SAR_LEVEL_CRIT):
            if report.sar > thr:
                emit(report.sar, thr)
        elif c is Condition.TSAR_VS_IF:
            if context.insurance_fund is not None and report.tsar_dollars > thr * context.insurance_fund:
                emit(report.tsar_dollars, thr * context.insurance_fund)
        elif c is Condition.N_EFF_FLOOR:
            for r in ordered:
                if r.stats is not None and r.stats.n_eff < thr:
                    emit(r.stats.n_eff, thr, r.token)
        elif c is Condition.CR1_CEILING:
            for r in ordered:
                if r.stats is not None and r.stats.cr_1 > thr:
                    emit(r.stats.cr_1, thr, r.token)
        elif c is Condition.TREND_PERSIST:
            hours = _positive_run_hours(context.trend_history, ts)
            if hours >= thr:
                emit(hours, thr)
        elif c is Condition.DEPTH_DROP:
            prior = context.prior_depth
            if prior is not None and prior > 0:
                drop = 1.0 - report.depth_usd / prior
                if drop > thr:
                    emit(drop, thr)
    return out


def context_from_history(
    sar: MetricSeries,
    depth: MetricSeries,
    now: int,
    insurance_fund: float | None = None,
    trend_window: int = 6,
    depth_lookback: int = 12 * 3600,
) -> AlertContext:
    """Derive trend and prior-depth inputs from uniform-cadence history series.

    The trend is the rolling OLS slope of SaR over ``trend_window`` points;
    prior depth is the last observation at or before ``now - depth_lookback``.
    """
    trend: tuple[tuple[int, float], ...] = ()
    upto = sar.timestamps <= now
    if upto.sum() >= trend_window:
        clipped = MetricSeries(sar.timestamps[upto], sar.values[upto])
        trend = tuple((s.timestamp, s.trend) for s in rolling_stats(clipped, trend_window))
    prior = None
    before = depth.timestamps <= now - depth_lookback
    if before.any():
        prior = float(depth.values[before][-1])
    return AlertContext(insurance_fund, trend, prior)


def exit_code(alerts: Sequence[Alert]) -> int:
    """0 when clean, 1 for warnings only, 2 if anything is critical."""
    if any(a.severity is Severity.CRITICAL for a in alerts):
        return 2
    return 1 if alerts else 0
