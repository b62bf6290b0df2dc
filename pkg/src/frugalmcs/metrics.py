"""Frugality of a mechanism's payment against the full-information optimum."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .baselines import offline_optimal
from .model import AuctionOutcome, UserProfile


@dataclass(frozen=True)
class FrugalityReport:
    """``None`` marks an optimum (and its ratio) that does not exist for lack of supply."""

    payment: float
    opt_cost_L: Optional[float]
    opt_cost_2L: Optional[float]
    tasks_completed: int

    @property
    def idealistic_ratio(self) -> Optional[float]:
        return _ratio(self.payment, self.opt_cost_L)

    @property
    def realistic_ratio(self) -> Optional[float]:
        return _ratio(self.payment, self.opt_cost_2L)


def _ratio(num, den):
    if den is None:
        return None
    if den == 0:
        return math.nan if num else 0.0
    return num / den


def frugality_report(outcome: AuctionOutcome, all_users: Sequence[UserProfile], L: int) -> FrugalityReport:
    opt_L = offline_optimal(all_users, L)
    opt_2L = offline_optimal(all_users, 2 * L)
    return FrugalityReport(
        payment=outcome.total_payment,
        opt_cost_L=opt_L.total_cost if opt_L.sufficient else None,
        opt_cost_2L=opt_2L.total_cost if opt_2L.sufficient else None,
        tasks_completed=outcome.total_tasks,
    )
