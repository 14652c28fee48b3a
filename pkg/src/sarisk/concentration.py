"""Liquidity-provider concentration: HHI, effective provider count, top-k
ratios, withdrawal scenarios and the parametric concentration haircut."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import InputError, Unattributed, UnknownProvider
from .orderbook import (
    EXHAUSTED,
    BookSide,
    Direction,
    OrderBookSnapshot,
    Side,
    directional_slippage,
)

__all__ = [
    "ProviderShares",
    "ConcentrationStats",
    "HaircutParams",
    "STRICT_DOMINANCE_THRESHOLD",
    "provider_shares",
    "concentration_stats",
    "withdrawal_slippage",
    "withdrawal_haircut",
    "concentration_haircut",
    "adjusted_slippage",
]

_SHARE_TOL = 1e-9

# Dominance threshold used by the reference pipeline's hard-coded haircut;
# the recommended-parameters default is 0.25.
STRICT_DOMINANCE_THRESHOLD = 0.5


@dataclass(frozen=True)
class ProviderShares:
    """Normalised liquidity shares keyed by provider account id."""

    shares: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        shares = tuple((str(a), float(w)) for a, w in self.shares)
        if not shares:
            raise InputError("at least one provider is required")
        ids = [a for a, _ in shares]
        if len(set(ids)) != len(ids):
            raise InputError("provider ids must be unique")
        weights = [w for _, w in shares]
        if any(not (0.0 < w <= 1.0) for w in weights):
            raise InputError("each share must lie in (0, 1]")
        if abs(math.fsum(weights) - 1.0) > _SHARE_TOL:
            raise InputError(f"shares sum to {math.fsum(weights)!r}, expected 1")
        object.__setattr__(self, "shares", shares)

    @classmethod
    def from_amounts(cls, amounts: Mapping[str, float] | Iterable[tuple[str, float]]) -> "ProviderShares":
        items = list(amounts.items()) if isinstance(amounts, Mapping) else list(amounts)
        total = math.fsum(v for _, v in items)
        if not total > 0:
            raise InputError("provider amounts must sum to a positive value")
        return cls(tuple((a, v / total) for a, v in items if v > 0))

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.shares])

    def as_dict(self) -> dict[str, float]:
        return dict(self.shares)

    def __len__(self) -> int:
        return len(self.shares)


@dataclass(frozen=True)
class ConcentrationStats:
    hhi: float
    n_eff: float
    cr_1: float
    cr_k: tuple[float, ...] = ()
    provider_count: int | None = None

    def __post_init__(self) -> None:
        if not (0.0 < self.hhi <= 1.0 + _SHARE_TOL):
            raise InputError("hhi must lie in (0, 1]")
        if abs(self.n_eff * self.hhi - 1.0) > 1e-9:
            raise InputError("n_eff must equal 1/hhi")
        if not (0.0 < self.cr_1 <= 1.0 + _SHARE_TOL):
            raise InputError("cr_1 must lie in (0, 1]")
        if self.cr_1 < self.hhi - _SHARE_TOL:
            raise InputError("cr_1 cannot be below hhi")
        if self.provider_count is not None and self.hhi < 1.0 / self.provider_count - _SHARE_TOL:
            raise InputError("hhi below the uniform floor 1/provider_count")

    @classmethod
    def from_summary(cls, n_eff: float, cr_1: float) -> "ConcentrationStats":
        """Stats known only through their summary values (e.g. published tables)."""
        return cls(hhi=1.0 / n_eff, n_eff=n_eff, cr_1=cr_1)


@dataclass(frozen=True)
class HaircutParams:
    n_target: float = 15.0
    cr1_thresh: float = 0.25
    lambda_conc: float = 0.5
    mu_dom: float = 0.3

    def __post_init__(self) -> None:
        vals = (self.n_target, self.cr1_thresh, self.lambda_conc, self.mu_dom)
        if not all(math.isfinite(v) for v in vals):
            raise InputError("haircut parameters must be finite")
        if self.n_target <= 0:
            raise InputError("n_target must be positive")
        if not 0.0 < self.cr1_thresh < 1.0:
            raise InputError("cr1_thresh must lie in (0, 1)")
        if self.lambda_conc < 0 or self.mu_dom < 0:
            raise InputError("haircut sensitivities must be non-negative")


def _in_band(side: BookSide, mid: float, within_bps: float | None) -> np.ndarray:
    if within_bps is None:
        return np.ones(len(side), dtype=bool)
    if side.side is Side.BID:
        return side.prices >= mid * (1.0 - within_bps / 1e4)
    return side.prices <= mid * (1.0 + within_bps / 1e4)


def provider_shares(
    side: BookSide,
    mid: float,
    within_bps: float | None = None,
    basis: str = "notional",
) -> ProviderShares:
    """Aggregate the side's liquidity per provider and normalise to shares.

    ``basis`` is ``"notional"`` (price x size, the default) or ``"size"``.
    Raises :class:`Unattributed` if any level in scope has no account id.
    """
    if len(side) == 0:
        raise InputError("cannot compute shares of an empty book side")
    if basis not in ("notional", "size"):
        raise InputError(f"unknown share basis {basis!r}")
    mask = _in_band(side, mid, within_bps)
    if not mask.any():
        raise InputError("no levels inside the requested band")
    amounts = side.sizes * side.prices if basis == "notional" else side.sizes
    totals: dict[str, list[float]] = {}
    for account, amount, keep in zip(side.account_ids, amounts.tolist(), mask.tolist()):
        if not keep:
            continue
        if account is None:
            raise Unattributed("level without provider attribution")
        totals.setdefault(account, []).append(amount)
    return ProviderShares.from_amounts((a, math.fsum(v)) for a, v in totals.items())


def concentration_stats(shares: ProviderShares, k: int = 1) -> ConcentrationStats:
    if k < 1:
        raise InputError("k must be a positive integer")
    w = np.sort(shares.weights)[::-1]
    hhi = math.fsum((w * w).tolist())
    cr = np.cumsum(w)[: min(k, len(w))]
    return ConcentrationStats(
        hhi=hhi,
        n_eff=1.0 / hhi,
        cr_1=float(w[0]),
        cr_k=tuple(float(c) for c in cr),
        provider_count=len(w),
    )


def _all_providers(snapshot: OrderBookSnapshot) -> set[str]:
    return {a for a in snapshot.bids.account_ids + snapshot.asks.account_ids if a is not None}


def withdrawal_slippage(
    snapshot: OrderBookSnapshot,
    provider: str,
    direction: Direction | str,
    quantity: float,
):
    """Slippage on the book left after every level of ``provider`` is pulled."""
    if provider not in _all_providers(snapshot):
        raise UnknownProvider(provider)
    side = snapshot.side(Direction(direction).side)
    residual = snapshot.replace_side(side.without_provider(provider)) if provider in side.account_ids else snapshot
    return directional_slippage(residual, direction, quantity)


def withdrawal_haircut(snapshot: OrderBookSnapshot, direction: Direction | str, quantity: float):
    """Relative slippage increase when the largest provider on the walked side withdraws."""
    direction = Direction(direction)
    side = snapshot.side(direction.side)
    shares = provider_shares(side, snapshot.mid_price)
    largest = max(shares.shares, key=lambda s: s[1])[0]
    base = directional_slippage(snapshot, direction, quantity)
    after = withdrawal_slippage(snapshot, largest, direction, quantity)
    if base is EXHAUSTED or after is EXHAUSTED:
        return EXHAUSTED
    if base <= 0:
        raise InputError("baseline slippage must be positive to form a ratio")
    return after / base - 1.0


def concentration_haircut(stats: ConcentrationStats, params: HaircutParams = HaircutParams()) -> float:
    provider_term = params.lambda_conc * max(0.0, params.n_target / stats.n_eff - 1.0)
    dominance_term = params.mu_dom * max(0.0, stats.cr_1 - params.cr1_thresh)
    return provider_term + dominance_term


def adjusted_slippage(raw: float, haircut: float) -> float:
    if raw < 0 or haircut < 0:
        raise InputError("raw slippage and haircut must be non-negative")
    return raw * (1.0 + haircut)
