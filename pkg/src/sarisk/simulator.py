"""Desk-scale perpetuals exchange: margin, linear-impact liquidation, insurance
fund accounting, synthetic constant-density books and stress scenarios.

Collateral is static (no funding or realised PnL between steps) and each
liquidation closes the whole position in one impact event.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np

from .concentration import ProviderShares
from .errors import BadConfig, InputError, NotLiquidatable
from .metrics import SaRParams, TokenInput, run_pipeline
from .orderbook import BookSide, OrderBookSnapshot, Side
from .timeseries import MetricSeries

__all__ = [
    "Position",
    "MarginConfig",
    "PositionMetrics",
    "Execution",
    "SyntheticBookConfig",
    "Market",
    "ExchangeState",
    "ScenarioConfig",
    "ScenarioResult",
    "position_metrics",
    "execute_liquidation",
    "settle_insurance",
    "generate_synthetic_book",
    "run_stress_scenario",
    "make_stress_exchange",
    "make_shock_path",
]


@dataclass
class Position:
    quantity: float
    """Signed base-asset size, positive for longs."""
    collateral: float
    entry_price: float
    entry_time: int = 0
    direction: str | None = None

    def __post_init__(self) -> None:
        if self.quantity == 0:
            raise InputError("position quantity must be non-zero")
        if not self.collateral > 0 or not self.entry_price > 0:
            raise InputError("collateral and entry price must be positive")
        implied = "long" if self.quantity > 0 else "short"
        if self.direction is None:
            self.direction = implied
        elif self.direction != implied:
            raise InputError(f"direction {self.direction!r} contradicts quantity sign")

    @property
    def is_long(self) -> bool:
        return self.quantity > 0

    @property
    def bankruptcy_price(self) -> float:
        return self.entry_price - self.collateral / self.quantity


@dataclass(frozen=True)
class MarginConfig:
    max_leverage: float = 20.0
    maintenance_fraction: float = 0.5
    """Maintenance margin as a fraction of initial margin."""

    def __post_init__(self) -> None:
        if not self.max_leverage > 0:
            raise InputError("max_leverage must be positive")
        if not 0.0 < self.maintenance_fraction < 1.0:
            raise InputError("maintenance_fraction must lie in (0, 1)")


class PositionMetrics(NamedTuple):
    leverage: float
    equity: float
    bankruptcy_price: float
    maintenance_margin: float
    liquidatable: bool


class Execution(NamedTuple):
    exec_price: float
    deficit: float


def position_metrics(position: Position, mark_price: float, config: MarginConfig) -> PositionMetrics:
    if not mark_price > 0:
        raise InputError("mark price must be positive")
    notional = mark_price * abs(position.quantity)
    equity = position.collateral + position.quantity * (mark_price - position.entry_price)
    mm = config.maintenance_fraction * notional / config.max_leverage
    return PositionMetrics(
        leverage=notional / position.collateral,
        equity=equity,
        bankruptcy_price=position.bankruptcy_price,
        maintenance_margin=mm,
        liquidatable=equity < mm,
    )


def _exec_price(position: Position, mark_price: float, impact_lambda: float) -> float:
    push = 0.5 * impact_lambda * abs(position.quantity)
    # a sale cannot clear below zero however thin the book
    return max(0.0, mark_price - push) if position.is_long else mark_price + push


def execute_liquidation(
    position: Position, mark_price: float, impact_lambda: float, config: MarginConfig
) -> Execution:
    """Close ``position`` at the linear-impact price; deficit is the loss beyond bankruptcy."""
    if not position_metrics(position, mark_price, config).liquidatable:
        raise NotLiquidatable("position equity is above maintenance margin")
    px = _exec_price(position, mark_price, impact_lambda)
    # q * (p_bk - p_exec) is the loss past bankruptcy for both longs and shorts
    deficit = max(0.0, position.quantity * (position.bankruptcy_price - px))
    return Execution(px, deficit)


def settle_insurance(insurance_fund: float, total_deficit: float) -> tuple[float, float]:
    """Absorb a deficit into the fund; returns ``(new_fund, adl_residual)``."""
    if total_deficit < 0 or insurance_fund < 0:
        raise InputError("fund and deficit must be non-negative")
    absorbed = min(insurance_fund, total_deficit)
    return insurance_fund - absorbed, total_deficit - absorbed


@dataclass(frozen=True)
class SyntheticBookConfig:
    mid: float
    density: float
    """Base units per unit of price, identical on both sides."""
    depth_span: float
    """Price distance from mid covered by each side."""
    provider_weights: ProviderShares
    seed: int = 0
    n_levels: int = 100
    anchor_depths: tuple[float, ...] = ()
    """Extra cumulative base quantities at which a level boundary is placed."""

    def __post_init__(self) -> None:
        if not (self.mid > 0 and self.density > 0 and self.depth_span > 0):
            raise BadConfig("mid, density and depth_span must be positive")
        if self.depth_span >= self.mid:
            raise BadConfig("depth_span must be smaller than mid so bid prices stay positive")
        if self.n_levels < 1:
            raise BadConfig("n_levels must be positive")


def generate_synthetic_book(config: SyntheticBookConfig, token: str = "SYN", timestamp: int = 0) -> OrderBookSnapshot:
    """Constant-density ladder on both sides, every level split across all providers.

    Each level spans a cumulative-quantity interval and is priced at the
    continuous book's average price over that interval, so the walk cost
    matches the continuum exactly at every level boundary. Providers hold the
    same fraction of every level: pulling one scales the whole side.
    """
    d = config.density
    total = d * config.depth_span
    bounds = np.linspace(0.0, total, config.n_levels + 1)
    anchors = [a for a in config.anchor_depths if 0.0 < a < total]
    if anchors:
        bounds = np.unique(np.concatenate([bounds, anchors]))
    sizes = np.diff(bounds)
    offsets = (bounds[:-1] + bounds[1:]) / (2.0 * d)
    ids = [a for a, _ in config.provider_weights.shares]
    weights = config.provider_weights.weights
    rng = np.random.default_rng(config.seed)

    def side(kind: Side) -> BookSide:
        sign = -1.0 if kind is Side.BID else 1.0
        prices, qty, accounts = [], [], []
        for off, size in zip(offsets.tolist(), sizes.tolist()):
            price = config.mid + sign * off
            for j in rng.permutation(len(ids)).tolist():
                prices.append(price)
                qty.append(size * weights[j])
                accounts.append(ids[j])
        return BookSide(kind, np.array(prices), np.array(qty), tuple(accounts))

    return OrderBookSnapshot(token, timestamp, side(Side.BID), side(Side.ASK), config.mid)


@dataclass
class Market:
    token: str
    mark_price: float
    book: SyntheticBookConfig
    impact_lambda: float
    """Price move per base unit traded at full depth."""
    positions: list[Position] = field(default_factory=list)
    margin: MarginConfig = MarginConfig()

    def open_interest(self) -> float:
        return math.fsum(abs(p.quantity) for p in self.positions) * self.mark_price


@dataclass
class ExchangeState:
    markets: list[Market]
    insurance_fund: float = 0.0
    timestamp: int = 0

    def __post_init__(self) -> None:
        if self.insurance_fund < 0:
            raise InputError("insurance fund must be non-negative")
        if len({m.token for m in self.markets}) != len(self.markets):
            raise InputError("market tokens must be unique")


@dataclass(frozen=True)
class ScenarioConfig:
    eta_depth_decay: float = 0.0
    """Depth multiplier per step is exp(-eta * |return|)."""
    depth_recovery: float = 0.0
    """Fraction of the gap to baseline depth recovered each step."""
    cascade_cap: int = 10
    fee_inflow: float = 0.0
    cadence: int = 3600
    impact_feedback: bool = True
    reentry_delay: int | None = None
    """Steps after which a liquidated trader reopens the same notional and
    leverage at the prevailing mark; ``None`` disables re-entry."""


@dataclass
class ScenarioResult:
    tsar: MetricSeries
    deficits: MetricSeries
    absorbed: list[float]
    adl_residuals: list[float]
    insurance_fund: list[float]
    liquidations: list[int]
    flags: list[str]
    final_state: ExchangeState


def _liquidation_round(market: Market, impact: float) -> tuple[float, list[Position], float]:
    """Liquidate every flagged position at the current mark.

    Returns (total deficit, closed positions, net base quantity sold).
    """
    flagged = [p for p in market.positions if position_metrics(p, market.mark_price, market.margin).liquidatable]
    if not flagged:
        return 0.0, [], 0.0
    deficits, net_sold = [], 0.0
    for pos in flagged:
        deficits.append(execute_liquidation(pos, market.mark_price, impact, market.margin).deficit)
        net_sold += pos.quantity
    market.positions = [p for p in market.positions if all(p is not f for f in flagged)]
    return math.fsum(deficits), flagged, net_sold


def run_stress_scenario(
    initial: ExchangeState,
    shock_path,
    params: SaRParams = SaRParams(),
    config: ScenarioConfig = ScenarioConfig(),
    snapshot_sink: Callable[[int, list[TokenInput]], None] | None = None,
) -> ScenarioResult:
    """Step the exchange through a path of mark-price returns.

    Per step: move marks, thin books by realised move, measure TSaR on the
    resulting books, then liquidate and settle. Liquidation impact feeds back
    into the mark and triggers are rescanned, at most ``cascade_cap`` rounds.
    ``shock_path`` is ``(steps,)`` (common to all markets) or
    ``(steps, n_markets)``. The input state is not modified.
    """
    state = copy.deepcopy(initial)
    shocks = np.asarray(shock_path, dtype=float)
    if shocks.ndim == 1:
        shocks = np.repeat(shocks[:, None], len(state.markets), axis=1)
    if shocks.ndim != 2 or shocks.shape[1] != len(state.markets) or len(shocks) < 1:
        raise InputError("shock_path must be (steps,) or (steps, n_markets) with at least one step")
    if np.any(shocks <= -1.0):
        raise InputError("returns must exceed -100%")

    base_density = [m.book.density for m in state.markets]
    # the ladder covers a fixed fraction of the mark, not a fixed price range
    span_ratio = [m.book.depth_span / m.book.mid for m in state.markets]
    depth_factor = [1.0] * len(state.markets)
    ts_list, tsar_vals, deficit_vals = [], [], []
    absorbed_l, residual_l, fund_l, count_l, flags = [], [], [], [], []
    reentries: list[tuple[int, int, float, float]] = []  # (due step, market, signed notional, leverage)

    for step, returns in enumerate(shocks):
        ts = state.timestamp + step * config.cadence
        inputs = []
        for i, (market, r) in enumerate(zip(state.markets, returns.tolist())):
            market.mark_price *= 1.0 + r
            f = depth_factor[i] * math.exp(-config.eta_depth_decay * abs(r))
            depth_factor[i] = f + config.depth_recovery * (1.0 - f)
            market.book = replace(
                market.book,
                mid=market.mark_price,
                depth_span=span_ratio[i] * market.mark_price,
                density=base_density[i] * depth_factor[i],
            )
            snap = generate_synthetic_book(market.book, market.token, ts)
            inputs.append(TokenInput(snap, market.open_interest()))
        if snapshot_sink is not None:
            snapshot_sink(ts, inputs)
        report, _ = run_pipeline(inputs, params)

        step_deficits, n_liq, capped = [], 0, False
        for i, market in enumerate(state.markets):
            impact = market.impact_lambda / depth_factor[i]
            for round_ in range(config.cascade_cap + 1):
                if round_ == config.cascade_cap:
                    capped = capped or any(
                        position_metrics(p, market.mark_price, market.margin).liquidatable for p in market.positions
                    )
                    break
                deficit, closed, net_sold = _liquidation_round(market, impact)
                if not closed:
                    break
                step_deficits.append(deficit)
                n_liq += len(closed)
                if config.reentry_delay is not None:
                    for pos in closed:
                        notional = pos.quantity * pos.entry_price
                        leverage = abs(notional) / pos.collateral
                        reentries.append((step + config.reentry_delay, i, notional, leverage))
                if config.impact_feedback:
                    market.mark_price = max(market.mark_price - impact * net_sold, 1e-12)
        total = math.fsum(step_deficits)
        state.insurance_fund, residual = settle_insurance(state.insurance_fund, total)
        absorbed = total - residual
        state.insurance_fund += config.fee_inflow
        due = [e for e in reentries if e[0] <= step]
        reentries = [e for e in reentries if e[0] > step]
        for _, i, notional, leverage in due:
            market = state.markets[i]
            market.positions.append(
                Position(notional / market.mark_price, abs(notional) / leverage, market.mark_price, ts)
            )

        ts_list.append(ts)
        tsar_vals.append(report.tsar_dollars)
        deficit_vals.append(total)
        absorbed_l.append(absorbed)
        residual_l.append(residual)
        fund_l.append(state.insurance_fund)
        count_l.append(n_liq)
        if capped:
            flags.append(f"cascade-cap:{ts}")
            break

    return ScenarioResult(
        tsar=MetricSeries(ts_list, tsar_vals, "tsar_usd"),
        deficits=MetricSeries(ts_list, deficit_vals, "deficit_usd"),
        absorbed=absorbed_l,
        adl_residuals=residual_l,
        insurance_fund=fund_l,
        liquidations=count_l,
        flags=flags,
        final_state=state,
    )


# -- scenario generators -----------------------------------------------------


def make_stress_exchange(
    seed: int,
    n_markets: int = 10,
    positions_per_market: int = 10,
    insurance_fund: float = 5e5,
) -> ExchangeState:
    """Random multi-market exchange with heterogeneous depth and leverage."""
    rng = np.random.default_rng(seed)
    markets = []
    for i in range(n_markets):
        mid = float(rng.uniform(10.0, 200.0))
        n_prov = int(rng.integers(2, 12))
        shares = ProviderShares.from_amounts({f"mm{j}": float(rng.uniform(0.2, 1.0)) for j in range(n_prov)})
        oi_base = float(rng.lognormal(mean=np.log(2e6), sigma=0.8))
        span = 0.2 * mid
        # depth relative to OI varies across markets: this drives cross-sectional slippage
        density = oi_base / mid * float(rng.uniform(0.3, 3.0)) / span
        book = SyntheticBookConfig(mid, density, span, shares, seed=seed * 1000 + i, n_levels=40)
        margin = MarginConfig(max_leverage=25.0, maintenance_fraction=0.5)
        positions = []
        for _ in range(positions_per_market):
            notional = oi_base / positions_per_market * float(rng.uniform(0.5, 1.5))
            leverage = float(rng.uniform(3.0, 24.0))
            qty = notional / mid * (1.0 if rng.random() < 0.7 else -1.0)
            positions.append(Position(qty, notional / leverage, mid))
        markets.append(Market(f"T{i:02d}", mid, book, impact_lambda=1.0 / density, positions=positions, margin=margin))
    return ExchangeState(markets, insurance_fund=insurance_fund)


def make_shock_path(
    seed: int,
    steps: int = 120,
    n_markets: int = 10,
    calm_vol: float = 0.01,
    stress_vol: float = 0.04,
    stress_prob: float = 0.05,
    stress_len: int = 8,
) -> np.ndarray:
    """Market-wide returns alternating calm and stress regimes, plus idiosyncratic noise.

    Stress episodes carry higher volatility and a negative drift.
    """
    rng = np.random.default_rng(seed)
    vol = np.full(steps, calm_vol)
    drift = np.zeros(steps)
    t = 0
    while t < steps:
        if rng.random() < stress_prob:
            end = min(steps, t + int(rng.integers(stress_len // 2, stress_len * 2)))
            vol[t:end] = stress_vol
            drift[t:end] = -0.5 * stress_vol
            t = end
        else:
            t += 1
    common = drift + vol * rng.standard_normal(steps)
    idio = 0.5 * vol[:, None] * rng.standard_normal((steps, n_markets))
    return np.clip(common[:, None] + idio, -0.5, 0.5)
