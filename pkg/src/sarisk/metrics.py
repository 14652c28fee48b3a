"""Cross-sectional Slippage-at-Risk metrics and the per-snapshot pipeline.

All quantiles are nearest-rank (no interpolation) and the tail is defined by
strict inequality against the quantile, so ties at the quantile are never
in the tail.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .concentration import (
    ConcentrationStats,
    HaircutParams,
    ProviderShares,
    concentration_haircut,
    concentration_stats,
    provider_shares,
)
from .errors import (
    BadWeights,
    EmptyUniverse,
    InputError,
    MalformedCorrelation,
    NegativeQuadraticForm,
    SaRError,
    Unattributed,
    ZeroOpenInterest,
)
from .orderbook import EXHAUSTED, Direction, OrderBookSnapshot, Side, depth_at_bps, directional_slippage

__all__ = [
    "SaRParams",
    "SpoofFeatures",
    "TokenInput",
    "TokenRiskRecord",
    "SaRReport",
    "nearest_rank_index",
    "nearest_rank_quantile",
    "calibrate_notional",
    "sar_quantile",
    "strict_tail",
    "esar",
    "tsar_dollars",
    "weighted_sar",
    "cascade_adjust",
    "correlated_tsar",
    "spoof_total_haircut",
    "score_token",
    "assess_token",
    "build_report",
    "run_pipeline",
]

SIDE_POLICIES = ("bid", "ask", "dominant_oi_skew")


@dataclass(frozen=True)
class SaRParams:
    alpha: float = 0.95
    beta: float = 0.10
    liquidation_cap: float | None = None
    gamma_cascade: float = 0.0
    delta_spoof: float = 0.0
    max_slippage: float = 1.0
    side_policy: str = "bid"
    haircut: HaircutParams = HaircutParams()
    c_deficit: float = 2.0
    spoof_weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    unattributed_haircut: float = 0.0
    share_band_bps: float | None = None
    position_quantile: float = 0.95
    depth_band_bps: float = 100.0

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise InputError("alpha must lie in (0, 1)")
        if not 0.0 <= self.beta <= 1.0:
            raise InputError("beta must lie in [0, 1]")
        if self.liquidation_cap is not None and not self.liquidation_cap > 0:
            raise InputError("liquidation_cap must be positive when set")
        if self.gamma_cascade < 0 or self.delta_spoof < 0 or self.unattributed_haircut < 0:
            raise InputError("gamma_cascade, delta_spoof and unattributed_haircut must be non-negative")
        if not self.max_slippage > 0:
            raise InputError("max_slippage must be positive")
        if self.side_policy not in SIDE_POLICIES:
            raise InputError(f"side_policy must be one of {SIDE_POLICIES}")
        if not self.c_deficit > 0:
            raise InputError("c_deficit must be positive")


@dataclass(frozen=True)
class SpoofFeatures:
    cancel_rate: float
    retreat_rate: float
    asymmetry: float

    def __post_init__(self) -> None:
        for name in ("cancel_rate", "retreat_rate", "asymmetry"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InputError(f"{name} must lie in [0, 1]")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.cancel_rate, self.retreat_rate, self.asymmetry)


@dataclass(frozen=True)
class TokenInput:
    """Everything the pipeline needs for one token at one snapshot time."""

    snapshot: OrderBookSnapshot
    open_interest: float
    position_sizes: Sequence[float] | None = None
    avg_leverage: float | None = None
    spoof: SpoofFeatures | None = None
    oi_skew: float | None = None
    """Signed long-minus-short open interest; needed by ``dominant_oi_skew``."""
    shares: ProviderShares | None = None
    """Externally supplied provider shares; overrides book attribution."""

    @property
    def token(self) -> str:
        return self.snapshot.token


@dataclass(frozen=True)
class TokenRiskRecord:
    token: str
    open_interest: float
    stress_notional_q: float
    raw_slippage: float
    stats: ConcentrationStats | None
    haircut_conc: float
    spoof_score: float
    haircut_total: float
    adjusted_slippage: float
    avg_leverage: float | None = None
    exhausted: bool = False
    cascade_factor: float = 1.0
    unattributed: bool = False


@dataclass(frozen=True)
class SaRReport:
    timestamp: int
    sar: float
    esar: float
    tsar_dollars: float
    weighted_sar: float
    tail_tokens: tuple[str, ...]
    n_tokens: int
    tail_oi_share: float
    depth_usd: float = 0.0
    flags: tuple[str, ...] = ()


# -- quantiles ---------------------------------------------------------------


def nearest_rank_index(n: int, level: float) -> int:
    """1-based rank k of the smallest k with k/n >= level (evaluated in floats).

    This is the order-statistic form of ``inf{s : F_n(s) >= level}``; the
    float comparison is kept so the result agrees bit-for-bit with a direct
    scan of the empirical CDF.
    """
    if n < 1:
        raise EmptyUniverse("no values")
    k = min(max(1, math.ceil(level * n)), n)
    while k > 1 and (k - 1) / n >= level:
        k -= 1
    while k < n and k / n < level:
        k += 1
    return k


def nearest_rank_quantile(values: Iterable[float], level: float) -> float:
    vals = sorted(float(v) for v in values)
    if not vals:
        raise EmptyUniverse("no values")
    return vals[nearest_rank_index(len(vals), level) - 1]


def calibrate_notional(
    open_interest: float,
    beta: float,
    position_size_samples: Sequence[float] | None = None,
    liquidation_cap: float | None = None,
    quantile: float = 0.95,
) -> float:
    """Stress notional: beta x OI, capped by the position-size quantile and a hard cap."""
    if open_interest < 0:
        raise InputError("open interest must be non-negative")
    q = beta * open_interest
    if position_size_samples is not None and len(position_size_samples):
        q = min(q, nearest_rank_quantile(position_size_samples, quantile))
    if liquidation_cap is not None:
        q = min(q, liquidation_cap)
    return q


def _adjusted(records) -> np.ndarray:
    return np.array([r.adjusted_slippage if hasattr(r, "adjusted_slippage") else r for r in records], dtype=float)


def sar_quantile(values: Sequence[float], alpha: float) -> float:
    return nearest_rank_quantile(values, alpha)


def strict_tail(values: Sequence[float], alpha: float) -> tuple[float, np.ndarray]:
    """SaR and the indices of values strictly above it."""
    vals = np.asarray(values, dtype=float)
    sar = sar_quantile(vals.tolist(), alpha)
    return sar, np.flatnonzero(vals > sar)


def esar(records: Sequence, alpha: float) -> float:
    """Mean adjusted slippage over the strict tail; SaR itself when the tail is empty."""
    vals = _adjusted(records)
    sar, tail = strict_tail(vals, alpha)
    if len(tail) == 0:
        return sar
    return math.fsum(vals[tail].tolist()) / len(tail)


def tsar_dollars(records: Sequence, alpha: float) -> float:
    if not len(records):
        raise EmptyUniverse("no tokens")
    vals = _adjusted(records)
    _, tail = strict_tail(vals, alpha)
    return math.fsum(vals[i] * records[i].stress_notional_q for i in tail)


def weighted_sar(records: Sequence, alpha: float) -> float:
    """Smallest slippage level whose cumulative open-interest share reaches alpha."""
    if not len(records):
        raise EmptyUniverse("no tokens")
    vals = _adjusted(records)
    oi = np.array([r.open_interest for r in records], dtype=float)
    total = math.fsum(oi.tolist())
    if not total > 0:
        raise ZeroOpenInterest("total open interest is zero")
    order = np.argsort(vals, kind="stable")
    # exact sums, so equal open interest reproduces the plain k/n comparison
    exact_total = sum(map(Fraction, oi.tolist()), Fraction(0))
    covered = Fraction(0)
    i = 0
    while i < len(order):
        s = vals[order[i]]
        # absorb every token tied at this slippage level
        while i < len(order) and vals[order[i]] == s:
            covered += Fraction(float(oi[order[i]]))
            i += 1
        if float(covered / exact_total) >= alpha:
            return float(s)
    return float(vals[order[-1]])


# -- extensions --------------------------------------------------------------


def cascade_adjust(slippage: float, gamma: float, avg_leverage: float) -> float:
    if gamma < 0 or avg_leverage < 0:
        raise InputError("gamma and leverage must be non-negative")
    return slippage * (1.0 + gamma * avg_leverage)


def correlated_tsar(dollar_slippages: Sequence[float], rho, tol: float = 1e-12) -> float:
    """Portfolio TSaR: sqrt(s' rho s) over per-token dollar slippage."""
    s = np.asarray(dollar_slippages, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (len(s), len(s)):
        raise MalformedCorrelation(f"correlation matrix shape {rho.shape} does not match {len(s)} tokens")
    if not np.array_equal(rho, rho.T):
        raise MalformedCorrelation("correlation matrix is not symmetric")
    if not np.all(np.diag(rho) == 1.0):
        raise MalformedCorrelation("correlation matrix diagonal must be 1")
    if np.any(np.abs(rho) > 1.0):
        raise MalformedCorrelation("correlations must lie in [-1, 1]")
    q = float(s @ rho @ s)
    if q < 0:
        if q < -tol * max(1.0, float(s @ s)):
            raise NegativeQuadraticForm(f"s' rho s = {q!r} < 0")
        q = 0.0
    return math.sqrt(q)


def spoof_total_haircut(
    haircut_conc: float,
    delta: float,
    spoof_features: SpoofFeatures | Sequence[float],
    feature_weights: Sequence[float] = (1 / 3, 1 / 3, 1 / 3),
) -> tuple[float, float]:
    """Linear spoofing score and the resulting total haircut.

    Returns ``(spoof_score, haircut_total)``.
    """
    if isinstance(spoof_features, SpoofFeatures):
        feats = spoof_features.as_tuple()
    else:
        feats = tuple(SpoofFeatures(*spoof_features).as_tuple())
    weights = tuple(float(w) for w in feature_weights)
    if len(weights) != 3 or any(w < 0 for w in weights) or abs(math.fsum(weights) - 1.0) > 1e-9:
        raise BadWeights("spoof feature weights must be three non-negative numbers summing to 1")
    if delta < 0:
        raise InputError("delta must be non-negative")
    score = min(1.0, max(0.0, math.fsum(w * f for w, f in zip(weights, feats))))
    return score, haircut_conc + delta * score


# -- pipeline ----------------------------------------------------------------


def score_token(
    token: str,
    open_interest: float,
    stress_notional_q: float,
    raw_slippage,
    stats: ConcentrationStats | None,
    params: SaRParams = SaRParams(),
    avg_leverage: float | None = None,
    spoof: SpoofFeatures | None = None,
) -> TokenRiskRecord:
    """Turn a raw slippage (or EXHAUSTED) and concentration stats into a record."""
    exhausted = raw_slippage is EXHAUSTED
    raw = params.max_slippage if exhausted else max(0.0, float(raw_slippage))
    if stats is None:
        h_conc = params.unattributed_haircut
    else:
        h_conc = concentration_haircut(stats, params.haircut)
    if spoof is not None:
        score, h_total = spoof_total_haircut(h_conc, params.delta_spoof, spoof, params.spoof_weights)
    else:
        score, h_total = 0.0, h_conc
    factor = 1.0 if avg_leverage is None else 1.0 + params.gamma_cascade * avg_leverage
    return TokenRiskRecord(
        token=token,
        open_interest=float(open_interest),
        stress_notional_q=float(stress_notional_q),
        raw_slippage=raw,
        stats=stats,
        haircut_conc=h_conc,
        spoof_score=score,
        haircut_total=h_total,
        adjusted_slippage=raw * factor * (1.0 + h_total),
        avg_leverage=avg_leverage,
        exhausted=exhausted,
        cascade_factor=factor,
        unattributed=stats is None,
    )


def _direction(item: TokenInput, policy: str) -> Direction:
    if policy == "bid":
        return Direction.LONG_LIQUIDATION
    if policy == "ask":
        return Direction.SHORT_LIQUIDATION
    if item.oi_skew is None:
        raise InputError(f"{item.token}: dominant_oi_skew policy needs a signed open-interest input")
    return Direction.LONG_LIQUIDATION if item.oi_skew >= 0 else Direction.SHORT_LIQUIDATION


def assess_token(item: TokenInput, params: SaRParams = SaRParams()) -> TokenRiskRecord:
    snap = item.snapshot
    q = calibrate_notional(
        item.open_interest, params.beta, item.position_sizes, params.liquidation_cap, params.position_quantile
    )
    direction = _direction(item, params.side_policy)
    # stress notional is in quote currency; the book is walked in base units
    raw = directional_slippage(snap, direction, q / snap.mid_price) if q > 0 else 0.0
    stats: ConcentrationStats | None
    if item.shares is not None:
        stats = concentration_stats(item.shares)
    else:
        side = snap.side(direction.side)
        try:
            stats = concentration_stats(provider_shares(side, snap.mid_price, params.share_band_bps))
        except Unattributed:
            stats = None
        except InputError:
            # empty walked side: no shares to measure, the walk already reports exhaustion
            stats = None
    return score_token(snap.token, item.open_interest, q, raw, stats, params, item.avg_leverage, item.spoof)


def build_report(
    records: Sequence[TokenRiskRecord],
    params: SaRParams = SaRParams(),
    timestamp: int = 0,
    depth_usd: float = 0.0,
    flags: Iterable[str] = (),
) -> SaRReport:
    if not len(records):
        raise EmptyUniverse("no tokens to aggregate")
    vals = _adjusted(records)
    sar, tail = strict_tail(vals, params.alpha)
    flags = list(flags)
    if len(tail) == 0:
        flags.append("degenerate-tail")
    flags += [f"exhausted:{r.token}" for r in records if r.exhausted]
    flags += [f"unattributed:{r.token}" for r in records if r.unattributed]
    total_oi = math.fsum(r.open_interest for r in records)
    tail_oi = math.fsum(records[i].open_interest for i in tail)
    return SaRReport(
        timestamp=int(timestamp),
        sar=sar,
        esar=esar(records, params.alpha),
        tsar_dollars=tsar_dollars(records, params.alpha),
        weighted_sar=weighted_sar(records, params.alpha) if total_oi > 0 else sar,
        tail_tokens=tuple(records[i].token for i in tail),
        n_tokens=len(records),
        tail_oi_share=tail_oi / total_oi if total_oi > 0 else 0.0,
        depth_usd=depth_usd,
        flags=tuple(flags),
    )


def run_pipeline(
    inputs: Sequence[TokenInput],
    params: SaRParams = SaRParams(),
    max_workers: int | None = None,
) -> tuple[SaRReport, list[TokenRiskRecord]]:
    """Score every token and aggregate the cross-section.

    Tokens that fail validation are skipped and reported as ``skipped:<token>``
    flags. Output is independent of ``max_workers``.
    """
    if not len(inputs):
        raise EmptyUniverse("no tokens supplied")

    def attempt(item: TokenInput):
        try:
            return assess_token(item, params)
        except SaRError as exc:
            return exc

    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            outcomes = list(pool.map(attempt, inputs))
    else:
        outcomes = [attempt(item) for item in inputs]

    records, flags = [], []
    for item, out in zip(inputs, outcomes):
        if isinstance(out, Exception):
            flags.append(f"skipped:{item.token}:{out}")
        else:
            records.append(out)
    if not records:
        raise EmptyUniverse("every token was skipped: " + "; ".join(flags))
    stamps = {item.snapshot.timestamp for item in inputs}
    if len(stamps) > 1:
        flags.append("mixed-timestamps")
    depth = math.fsum(
        depth_at_bps(item.snapshot, side, params.depth_band_bps) for item in inputs for side in (Side.BID, Side.ASK)
    )
    report = build_report(records, params, max(stamps), depth, flags)
    return report, records


def with_params(params: SaRParams, **changes) -> SaRParams:
    """``dataclasses.replace`` that also accepts haircut field names."""
    haircut_keys = {"n_target", "cr1_thresh", "lambda_conc", "mu_dom"}
    h = {k: changes.pop(k) for k in list(changes) if k in haircut_keys}
    if h:
        changes["haircut"] = replace(params.haircut, **h)
    return replace(params, **changes)
