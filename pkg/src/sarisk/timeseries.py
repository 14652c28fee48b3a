"""Rolling regime statistics and lead-lag / Granger validation of metric series.

Series are assumed to share a fixed cadence; resampling irregular data is
done beforehand (see :func:`sarisk.io.resample_locf`).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ._special import f_sf
from .errors import (
    DegenerateRegression,
    InputError,
    InsufficientLength,
    InsufficientOverlap,
    WindowTooLong,
)

__all__ = [
    "MetricSeries",
    "RollingStats",
    "LeadLagResult",
    "GrangerDirection",
    "GrangerResult",
    "rolling_stats",
    "pearson",
    "lead_lag_correlation",
    "granger_f_test",
    "granger_both",
]


@dataclass(frozen=True, eq=False)
class MetricSeries:
    timestamps: np.ndarray
    values: np.ndarray
    name: str = ""

    def __post_init__(self) -> None:
        ts = np.asarray(self.timestamps, dtype=np.int64)
        vals = np.asarray(self.values, dtype=float)
        if ts.ndim != 1 or ts.shape != vals.shape:
            raise InputError("timestamps and values must be 1-D and of equal length")
        if len(ts) > 1 and np.any(np.diff(ts) <= 0):
            raise InputError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(vals)):
            raise InputError("series values must be finite")
        ts.flags.writeable = False
        vals.flags.writeable = False
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_points(cls, points: Iterable[tuple[int, float]], name: str = "") -> "MetricSeries":
        points = list(points)
        return cls(
            np.array([p[0] for p in points], dtype=np.int64),
            np.array([p[1] for p in points], dtype=float),
            name,
        )

    @property
    def points(self) -> list[tuple[int, float]]:
        return list(zip(self.timestamps.tolist(), self.values.tolist()))

    def __len__(self) -> int:
        return len(self.values)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MetricSeries):
            return NotImplemented
        return np.array_equal(self.timestamps, other.timestamps) and np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class RollingStats:
    timestamp: int
    level: float
    dispersion: float
    vol: float
    trend: float


def _pstd(v: np.ndarray) -> float:
    if np.all(v == v[0]):
        return 0.0
    return float(np.sqrt(np.mean((v - v.mean()) ** 2)))


def _ols_slope(v: np.ndarray) -> float:
    if np.all(v == v[0]):
        return 0.0
    idx = np.arange(len(v), dtype=float)
    idx -= idx.mean()
    return float(np.dot(idx, v - v.mean()) / np.dot(idx, idx))


def rolling_stats(series: MetricSeries, window: int, vol_span: int | None = None) -> list[RollingStats]:
    """Level, dispersion, short-span volatility and OLS trend for each full window.

    Dispersion and vol are population standard deviations; the trend is the
    slope per step against the within-window index.
    """
    vol_span = window if vol_span is None else vol_span
    if window < 2:
        raise InputError("window must hold at least two points")
    if vol_span < 1:
        raise InputError("vol_span must be positive")
    n = len(series)
    first = max(window, vol_span) - 1
    if first >= n:
        raise WindowTooLong(f"series of length {n} is shorter than the window")
    v = series.values
    out = []
    for t in range(first, n):
        w = v[t - window + 1 : t + 1]
        level = float(w[0]) if np.all(w == w[0]) else float(w.mean())
        out.append(
            RollingStats(
                timestamp=int(series.timestamps[t]),
                level=level,
                dispersion=_pstd(w),
                vol=_pstd(v[t - vol_span + 1 : t + 1]),
                trend=_ols_slope(w),
            )
        )
    return out


@dataclass(frozen=True)
class LeadLagResult:
    lags: tuple[int, ...]
    correlations: tuple[float, ...]
    undefined: tuple[int, ...] = ()
    """Lags whose overlap had zero variance (correlation reported as NaN)."""

    def at(self, lag: int) -> float:
        return self.correlations[self.lags.index(lag)]


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    da, db = a - a.mean(), b - b.mean()
    denom = np.sqrt(np.dot(da, da) * np.dot(db, db))
    if denom == 0 or np.all(a == a[0]) or np.all(b == b[0]):
        return float("nan")
    return float(np.clip(np.dot(da, db) / denom, -1.0, 1.0))


def _aligned(x: MetricSeries, y: MetricSeries) -> tuple[np.ndarray, np.ndarray]:
    if len(x) != len(y) or not np.array_equal(x.timestamps, y.timestamps):
        raise InputError("series must share the same timestamps; resample first")
    return x.values, y.values


def lead_lag_correlation(x: MetricSeries, y: MetricSeries, lags: Sequence[int]) -> LeadLagResult:
    """Pearson correlation of x_t with y_(t - lag) for each lag.

    Negative lags pair x with future y, i.e. measure x leading y.
    """
    xv, yv = _aligned(x, y)
    n = len(xv)
    corrs, undefined = [], []
    for lag in lags:
        lag = int(lag)
        if n - abs(lag) < 3:
            raise InsufficientOverlap(f"lag {lag} leaves fewer than 3 overlapping points")
        xs = xv[max(0, lag) : n + min(0, lag)]
        ys = yv[max(0, -lag) : n - max(0, lag)]
        c = pearson(xs, ys)
        if np.isnan(c):
            undefined.append(lag)
        corrs.append(c)
    return LeadLagResult(tuple(int(l) for l in lags), tuple(corrs), tuple(undefined))


class GrangerDirection(str, enum.Enum):
    X_CAUSES_Y = "x_causes_y"
    Y_CAUSES_X = "y_causes_x"


@dataclass(frozen=True)
class GrangerResult:
    f_statistic: float
    p_value: float
    lag_order: int
    direction: GrangerDirection
    df_num: int
    df_den: int


def _lagged(v: np.ndarray, p: int) -> np.ndarray:
    n = len(v)
    return np.column_stack([v[p - k : n - k] for k in range(1, p + 1)])


def _rss(design: np.ndarray, target: np.ndarray) -> float:
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise DegenerateRegression("design matrix is rank deficient")
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    resid = target - design @ coef
    return float(np.dot(resid, resid))


def granger_f_test(
    x: MetricSeries,
    y: MetricSeries,
    lag_order: int,
    direction: GrangerDirection | str = GrangerDirection.X_CAUSES_Y,
) -> GrangerResult:
    """Nested-regression F-test of whether lags of the cause improve on the effect's own lags.

    Requires at least ``10 * lag_order`` observations.
    """
    direction = GrangerDirection(direction)
    xv, yv = _aligned(x, y)
    cause, effect = (xv, yv) if direction is GrangerDirection.X_CAUSES_Y else (yv, xv)
    p = int(lag_order)
    if p < 1:
        raise InputError("lag_order must be positive")
    n = len(effect)
    if n < 10 * p:
        raise InsufficientLength(f"need at least {10 * p} points for {p} lags, got {n}")
    if np.all(effect == effect[0]):
        raise DegenerateRegression("regressand is constant")
    target = effect[p:]
    t = len(target)
    ones = np.ones((t, 1))
    restricted = np.hstack([ones, _lagged(effect, p)])
    unrestricted = np.hstack([restricted, _lagged(cause, p)])
    df_den = t - 2 * p - 1
    if df_den < 1:
        raise InsufficientLength("not enough observations for the unrestricted model")
    rss_r = _rss(restricted, target)
    rss_u = _rss(unrestricted, target)
    if rss_u <= 0:
        raise DegenerateRegression("unrestricted model fits exactly")
    f = max(0.0, ((rss_r - rss_u) / p) / (rss_u / df_den))
    return GrangerResult(f, f_sf(f, p, df_den), p, direction, p, df_den)


def granger_both(x: MetricSeries, y: MetricSeries, lag_order: int) -> tuple[GrangerResult, GrangerResult]:
    return (
        granger_f_test(x, y, lag_order, GrangerDirection.X_CAUSES_Y),
        granger_f_test(x, y, lag_order, GrangerDirection.Y_CAUSES_X),
    )
