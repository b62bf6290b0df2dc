"""Bid-threshold rules learned from a sample of already observed users.

Stage-task-numbers may be fractional (``L / 2**k`` for large horizons), so
every count derived from one is rounded up. Budgets are carried as exact
fractions: ``floor(B / p)`` and the proportional-share test are order
decisions, and float rounding there would silently change the price.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Real
from typing import Iterable, Sequence


@dataclass(frozen=True)
class SampleEntry:
    user_id: int
    capacity: int
    bid: float


def _ascending(sample: Iterable[SampleEntry]) -> list[SampleEntry]:
    # ties broken by user id so results do not depend on input order
    return sorted(sample, key=lambda s: (s.bid, s.user_id))


def task_count(x: Real) -> int:
    """Integer number of tasks needed to cover a possibly fractional target."""
    return max(0, math.ceil(x))


def lth_lowest_bid_threshold(stage_tasks: float, sample: Sequence[SampleEntry], beta: float) -> float:
    """The ``ceil(L')``-th lowest bid of the sample, or ``beta`` if it is too small."""
    k = max(1, task_count(stage_tasks))
    if len(sample) < k:
        return beta
    return _ascending(sample)[k - 1].bid


@dataclass(frozen=True)
class GreedyAllocation:
    """Cheapest way to buy ``target`` tasks from a sample at the bid prices.

    ``cost`` is exact; ``sufficient`` is False when the sample ran out first.
    """

    counts: tuple[tuple[int, int], ...]
    cost: Fraction
    target: int
    sufficient: bool

    @property
    def tasks(self) -> int:
        return sum(f for _, f in self.counts)


def greedy_min_cost_allocation(target: Real, sample: Sequence[SampleEntry]) -> GreedyAllocation:
    if target < 0:
        raise ValueError("target must be non-negative")
    need = task_count(target)
    counts = []
    got = 0
    cost = Fraction(0)
    for s in _ascending(sample):
        if got >= need:
            break
        f = min(s.capacity, need - got)
        counts.append((s.user_id, f))
        got += f
        cost += f * Fraction(s.bid)
    return GreedyAllocation(tuple(counts), cost, need, got >= need)


def budget_feasible_selection(budget: Real, sample: Sequence[SampleEntry]):
    """Proportional-share rule: returns ``(price, counts)`` or ``(None, ())``.

    Users are taken in ascending bid order while
    ``b_i <= B / (allocated + 1)``; each accepted user gets
    ``min(tau_i, floor(B / b_i) - allocated)`` tasks.
    """
    B = Fraction(budget)
    if B < 0:
        raise ValueError("budget must be non-negative")
    price = None
    counts = []
    got = 0
    for s in _ascending(sample):
        b = Fraction(s.bid)
        if b * (got + 1) > B:
            break
        price = s.bid
        f = min(s.capacity, math.floor(B / b) - got)
        counts.append((s.user_id, f))
        got += f
    return price, tuple(counts)


def budget_feasible_price(budget: Real, sample: Sequence[SampleEntry], beta: float) -> float:
    price, _ = budget_feasible_selection(budget, sample)
    return beta if price is None else price


def get_bid_threshold2(stage_tasks: float, delta: float, beta: float, sample: Sequence[SampleEntry]) -> float:
    """Learn a budget for ``delta * L'`` tasks, then price it proportionally."""
    if not stage_tasks > 0:
        raise ValueError("stage_tasks must be positive")
    if not delta >= 1:
        raise ValueError("delta must be at least 1")
    greedy = greedy_min_cost_allocation(Fraction(delta) * Fraction(stage_tasks), sample)
    if not greedy.sufficient:
        return beta
    return budget_feasible_price(greedy.cost, sample, beta)
