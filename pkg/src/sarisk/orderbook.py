"""Order-book snapshots, depth queries and book-walk slippage.

Book sides are stored column-wise (numpy arrays for price and size, a tuple
of provider ids) so that deep books can be walked without per-level Python
overhead. Levels are ordered best-to-worst.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import InputError

__all__ = [
    "Side",
    "Direction",
    "PriceLevel",
    "BookSide",
    "OrderBookSnapshot",
    "WalkResult",
    "Exhausted",
    "EXHAUSTED",
    "cumulative_depth",
    "depth_at_bps",
    "book_walk",
    "walk_book_slippage",
    "directional_slippage",
]

# Relative slack when comparing walked quantity against total depth, so that
# a quantity equal to the exact book depth is not reported as exhausted
# because of cumulative-sum rounding.
_DEPTH_RTOL = 1e-12


class Side(str, enum.Enum):
    BID = "bid"
    ASK = "ask"


class Direction(str, enum.Enum):
    LONG_LIQUIDATION = "long_liquidation"
    SHORT_LIQUIDATION = "short_liquidation"

    @property
    def side(self) -> Side:
        # longs are closed by selling into bids, shorts by buying from asks
        return Side.BID if self is Direction.LONG_LIQUIDATION else Side.ASK


class _ExhaustedType:
    """Marker returned when the book cannot absorb the requested quantity."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "EXHAUSTED"

    def __bool__(self) -> bool:
        return False

    def __reduce__(self):
        return (_ExhaustedType, ())


Exhausted = _ExhaustedType
EXHAUSTED = _ExhaustedType()


class PriceLevel(NamedTuple):
    price: float
    size: float
    account_id: str | None = None


@dataclass(frozen=True, eq=False)
class BookSide:
    """One side of a book, best level first.

    Duplicate prices are allowed (several providers quoting the same price);
    they keep their input order.
    """

    side: Side
    prices: np.ndarray
    sizes: np.ndarray
    account_ids: tuple[str | None, ...] = ()

    def __post_init__(self) -> None:
        side = Side(self.side)
        prices = np.ascontiguousarray(self.prices, dtype=float)
        sizes = np.ascontiguousarray(self.sizes, dtype=float)
        if prices.ndim != 1 or prices.shape != sizes.shape:
            raise InputError("prices and sizes must be 1-D arrays of equal length")
        accounts = tuple(self.account_ids) if len(self.account_ids) else (None,) * len(prices)
        if len(accounts) != len(prices):
            raise InputError("account_ids length does not match the number of levels")
        if len(prices):
            if not (np.all(np.isfinite(prices)) and np.all(np.isfinite(sizes))):
                raise InputError("prices and sizes must be finite")
            if np.any(prices <= 0) or np.any(sizes <= 0):
                raise InputError("prices and sizes must be positive")
            steps = np.diff(prices)
            if side is Side.BID and np.any(steps > 0):
                raise InputError("bid levels must be ordered by decreasing price")
            if side is Side.ASK and np.any(steps < 0):
                raise InputError("ask levels must be ordered by increasing price")
        prices.flags.writeable = False
        sizes.flags.writeable = False
        object.__setattr__(self, "side", side)
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "account_ids", accounts)

    @classmethod
    def from_levels(cls, side: Side | str, levels: Iterable[PriceLevel | Sequence]) -> "BookSide":
        levels = [PriceLevel(*lvl) for lvl in levels]
        return cls(
            side,
            np.array([lvl.price for lvl in levels], dtype=float),
            np.array([lvl.size for lvl in levels], dtype=float),
            tuple(lvl.account_id for lvl in levels),
        )

    @classmethod
    def from_unsorted(cls, side: Side | str, levels: Iterable[PriceLevel | Sequence]) -> "BookSide":
        """Sort levels best-to-worst (stable, so equal prices keep input order)."""
        levels = [PriceLevel(*lvl) for lvl in levels]
        descending = Side(side) is Side.BID
        levels.sort(key=lambda lvl: -lvl.price if descending else lvl.price)
        return cls.from_levels(side, levels)

    def __len__(self) -> int:
        return len(self.prices)

    def __iter__(self):
        for p, q, a in zip(self.prices.tolist(), self.sizes.tolist(), self.account_ids):
            yield PriceLevel(p, q, a)

    @property
    def best(self) -> float | None:
        return float(self.prices[0]) if len(self.prices) else None

    @property
    def attributed(self) -> bool:
        return all(a is not None for a in self.account_ids)

    def total_size(self) -> float:
        return float(self.sizes.sum())

    def without_provider(self, account_id: str) -> "BookSide":
        keep = np.array([a != account_id for a in self.account_ids], dtype=bool)
        return BookSide(
            self.side,
            self.prices[keep],
            self.sizes[keep],
            tuple(a for a, k in zip(self.account_ids, keep) if k),
        )

    def scaled(self, price_factor: float = 1.0, size_factor: float = 1.0) -> "BookSide":
        return BookSide(self.side, self.prices * price_factor, self.sizes * size_factor, self.account_ids)


@dataclass(frozen=True, eq=False)
class OrderBookSnapshot:
    token: str
    timestamp: int
    bids: BookSide
    asks: BookSide
    mid_price: float | None = None
    attributed: bool = field(init=False)

    def __post_init__(self) -> None:
        if self.bids.side is not Side.BID or self.asks.side is not Side.ASK:
            raise InputError("bids/asks sides are swapped")
        best_bid, best_ask = self.bids.best, self.asks.best
        mid = self.mid_price
        if mid is None:
            if best_bid is None or best_ask is None:
                raise InputError(f"{self.token}: mid price needs both sides of the book")
            mid = 0.5 * (best_bid + best_ask)
        mid = float(mid)
        if not np.isfinite(mid) or mid <= 0:
            raise InputError(f"{self.token}: mid price must be positive")
        if best_bid is not None and best_ask is not None:
            if best_bid > best_ask:
                raise InputError(f"{self.token}: crossed book (bid {best_bid} > ask {best_ask})")
            if not best_bid <= mid <= best_ask:
                raise InputError(f"{self.token}: mid {mid} outside the touch [{best_bid}, {best_ask}]")
        object.__setattr__(self, "mid_price", mid)
        object.__setattr__(self, "timestamp", int(self.timestamp))
        object.__setattr__(self, "attributed", self.bids.attributed and self.asks.attributed)

    def side(self, side: Side | str) -> BookSide:
        return self.bids if Side(side) is Side.BID else self.asks

    def replace_side(self, new_side: BookSide) -> "OrderBookSnapshot":
        bids, asks = (new_side, self.asks) if new_side.side is Side.BID else (self.bids, new_side)
        return OrderBookSnapshot(self.token, self.timestamp, bids, asks, self.mid_price)


def cumulative_depth(side: BookSide, price_bound: float) -> float:
    """Base-asset size quoted at or better than ``price_bound``."""
    if side.side is Side.BID:
        mask = side.prices >= price_bound
    else:
        mask = side.prices <= price_bound
    return float(side.sizes[mask].sum())


def depth_at_bps(snapshot: OrderBookSnapshot, side: Side | str, bps: float) -> float:
    """Quote notional (price x size) resting within ``bps`` basis points of mid."""
    if bps < 0:
        raise InputError("bps must be non-negative")
    book = snapshot.side(side)
    mid = snapshot.mid_price
    if book.side is Side.BID:
        mask = book.prices >= mid * (1.0 - bps / 1e4)
    else:
        mask = book.prices <= mid * (1.0 + bps / 1e4)
    return float(np.dot(book.prices[mask], book.sizes[mask]))


class WalkResult(NamedTuple):
    cost: float
    """Sum of fill x per-unit shortfall versus mid, in quote units."""
    quantity: float
    levels_used: int


def _shortfall(side: BookSide, mid: float) -> np.ndarray:
    # positive when the fill is worse than mid for the liquidating party
    return mid - side.prices if side.side is Side.BID else side.prices - mid


def book_walk(side: BookSide, quantity: float, mid_price: float) -> WalkResult | _ExhaustedType:
    """Consume ``quantity`` from the best level down; EXHAUSTED if depth runs out."""
    if not quantity > 0:
        raise InputError("quantity must be positive")
    if not mid_price > 0:
        raise InputError("mid_price must be positive")
    if len(side) == 0:
        return EXHAUSTED
    cum = np.cumsum(side.sizes)
    if cum[-1] < quantity * (1.0 - _DEPTH_RTOL):
        return EXHAUSTED
    last = min(int(np.searchsorted(cum, quantity, side="left")), len(cum) - 1)
    fills = side.sizes[: last + 1].copy()
    fills[last] = quantity - (cum[last - 1] if last else 0.0)
    cost = float(np.dot(fills, _shortfall(side, mid_price)[: last + 1]))
    return WalkResult(cost, float(quantity), last + 1)


def walk_book_slippage(side: BookSide, quantity: float, mid_price: float) -> float | _ExhaustedType:
    """Volume-weighted execution shortfall of a market order, as a fraction of mid.

    Fills better than mid (crossed data) count negatively, so the result can
    be negative; risk aggregation clamps at zero.
    """
    walk = book_walk(side, quantity, mid_price)
    if walk is EXHAUSTED:
        return EXHAUSTED
    return walk.cost / (quantity * mid_price)


def directional_slippage(
    snapshot: OrderBookSnapshot, direction: Direction | str, quantity: float
) -> float | _ExhaustedType:
    direction = Direction(direction)
    return walk_book_slippage(snapshot.side(direction.side), quantity, snapshot.mid_price)
