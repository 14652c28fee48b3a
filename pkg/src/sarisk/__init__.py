"""Slippage-at-Risk: order-book stress slippage, concentration haircuts,
cross-sectional tail metrics, insurance-fund sizing and a liquidation
simulator for validating the metrics as leading indicators."""

from __future__ import annotations

from .alerts import DEFAULT_RULES, Alert, AlertContext, AlertRule, evaluate_alerts
from .capital import CapitalParams, FundSizing, optimal_if_from_deficits, sar_implied_if
from .concentration import (
    STRICT_DOMINANCE_THRESHOLD,
    ConcentrationStats,
    HaircutParams,
    ProviderShares,
    adjusted_slippage,
    concentration_haircut,
    concentration_stats,
    provider_shares,
    withdrawal_haircut,
    withdrawal_slippage,
)
from .errors import InputError, SaRError
from .metrics import (
    SaRParams,
    SaRReport,
    SpoofFeatures,
    TokenInput,
    TokenRiskRecord,
    calibrate_notional,
    correlated_tsar,
    esar,
    run_pipeline,
    sar_quantile,
    score_token,
    tsar_dollars,
    weighted_sar,
)
from .orderbook import EXHAUSTED, BookSide, Direction, OrderBookSnapshot, PriceLevel, Side, book_walk, walk_book_slippage
from .timeseries import MetricSeries, granger_f_test, lead_lag_correlation, rolling_stats

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_RULES",
    "Alert",
    "AlertContext",
    "AlertRule",
    "evaluate_alerts",
    "CapitalParams",
    "FundSizing",
    "optimal_if_from_deficits",
    "sar_implied_if",
    "STRICT_DOMINANCE_THRESHOLD",
    "ConcentrationStats",
    "HaircutParams",
    "ProviderShares",
    "adjusted_slippage",
    "concentration_haircut",
    "concentration_stats",
    "provider_shares",
    "withdrawal_haircut",
    "withdrawal_slippage",
    "InputError",
    "SaRError",
    "SaRParams",
    "SaRReport",
    "SpoofFeatures",
    "TokenInput",
    "TokenRiskRecord",
    "calibrate_notional",
    "correlated_tsar",
    "esar",
    "run_pipeline",
    "sar_quantile",
    "score_token",
    "tsar_dollars",
    "weighted_sar",
    "EXHAUSTED",
    "BookSide",
    "Direction",
    "OrderBookSnapshot",
    "PriceLevel",
    "Side",
    "book_walk",
    "walk_book_slippage",
    "MetricSeries",
    "granger_f_test",
    "lead_lag_correlation",
    "rolling_stats",
]
