"""
Walking a book, then charging for concentration
===============================================

A single bid level 3% below mid absorbs a 100 BTC liquidation, so the walk
costs exactly 3%. We then build a thinner, concentrated book and see how the
haircut and a provider withdrawal change the picture.
"""

from __future__ import annotations

from sarisk.concentration import (
    HaircutParams,
    ProviderShares,
    concentration_haircut,
    concentration_stats,
    provider_shares,
    withdrawal_slippage,
)
from sarisk.orderbook import BookSide, Direction, Side, directional_slippage, walk_book_slippage
from sarisk.simulator import SyntheticBookConfig, generate_synthetic_book

# one level at 58,200 against a 60,000 mid
bids = BookSide.from_levels(Side.BID, [(58200.0, 100.0)])
print("slippage for 100 BTC:", walk_book_slippage(bids, 100.0, 60000.0))

# a constant-density book quoted by three makers, one of them dominant
weights = ProviderShares.from_amounts({"alpha": 6.0, "beta": 3.0, "gamma": 1.0})
book = generate_synthetic_book(SyntheticBookConfig(mid=100.0, density=50.0, depth_span=20.0, provider_weights=weights))

stats = concentration_stats(provider_shares(book.bids, book.mid_price))
print(f"HHI {stats.hhi:.3f}  N_eff {stats.n_eff:.2f}  CR1 {stats.cr_1:.2f}")
haircut = concentration_haircut(stats, HaircutParams())
print(f"concentration haircut: {haircut:.3f}")

# what happens if the largest maker pulls its quotes?
qty = 200.0
before = directional_slippage(book, Direction.LONG_LIQUIDATION, qty)
after = withdrawal_slippage(book, "alpha", Direction.LONG_LIQUIDATION, qty)
print(f"raw {before:.4f} -> without alpha {after:.4f} (x{after / before:.2f}, 1/(1-w) = {1 / (1 - 0.6):.2f})")
