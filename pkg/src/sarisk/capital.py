"""Insurance-fund sizing from deficit samples or from tail dollar slippage."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import EmptySamples, InputError
from .metrics import nearest_rank_quantile

__all__ = ["CapitalParams", "FundSizing", "optimal_if_from_deficits", "sar_implied_if"]


@dataclass(frozen=True)
class CapitalParams:
    opportunity_cost_r: float = 0.05
    social_cost_kappa: float = 1.0
    c_deficit: float = 2.0

    def __post_init__(self) -> None:
        if not self.opportunity_cost_r > 0 or not self.social_cost_kappa > 0:
            raise InputError("r and kappa must be positive")
        if not 1.0 <= self.c_deficit <= 10.0:
            raise InputError("c_deficit outside the sanity band [1, 10]")

    @property
    def cost_ratio(self) -> float:
        return self.opportunity_cost_r / self.social_cost_kappa

    @property
    def confidence(self) -> float:
        """Deficit quantile level at which holding capital breaks even."""
        return 1.0 - self.cost_ratio


@dataclass(frozen=True)
class FundSizing:
    amount: float
    level: float
    degenerate: bool = False


def optimal_if_from_deficits(deficit_samples: Sequence[float], params: CapitalParams) -> FundSizing:
    """Cost-minimising fund: the (1 - r/kappa) nearest-rank quantile of deficits.

    When capital costs at least as much as socialised losses (r >= kappa)
    the optimum is an empty fund, returned with ``degenerate=True``.
    """
    if not len(deficit_samples):
        raise EmptySamples("no deficit samples")
    if any(d < 0 for d in deficit_samples):
        raise InputError("deficits must be non-negative")
    level = params.confidence
    if level <= 0:
        return FundSizing(0.0, level, degenerate=True)
    return FundSizing(nearest_rank_quantile(deficit_samples, level), level)


def sar_implied_if(tsar_dollars: float, c_deficit: float) -> float:
    """Fund implied by scaling tail dollar slippage by the deficit multiplier.

    The caller picks the confidence at which ``tsar_dollars`` was computed.
    """
    if tsar_dollars < 0:
        raise InputError("tsar_dollars must be non-negative")
    if not c_deficit > 0:
        raise InputError("c_deficit must be positive")
    return c_deficit * tsar_dollars
