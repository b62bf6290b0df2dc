"""Comparison points: the full-information optimum and a random posted price."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import AuctionOutcome, Decision, DeclaredProfile, StepLog, UserProfile
from .thresholds import SampleEntry, greedy_min_cost_allocation


@dataclass(frozen=True)
class OfflineSolution:
    counts: tuple[tuple[int, int], ...]
    total_cost: float
    target: int
    sufficient: bool

    @property
    def tasks(self) -> int:
        return sum(f for _, f in self.counts)


def offline_optimal(users: Sequence[UserProfile], target: float) -> OfflineSolution:
    """Cheapest ``target`` tasks given every true cost (exact by greedy)."""
    g = greedy_min_cost_allocation(target, [SampleEntry(u.id, u.capacity, u.unit_cost) for u in users])
    return OfflineSolution(g.counts, float(g.cost), g.target, g.sufficient)


def random_threshold_run(stream: Sequence[DeclaredProfile], L: int, T: int, threshold: float) -> AuctionOutcome:
    """Fixed posted price: accept anyone bidding at most ``threshold`` until L tasks."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    threshold = float(threshold)
    alloc = {d.user_id: 0 for d in stream}
    price = {d.user_id: 0.0 for d in stream}
    total = 0
    decisions: dict[int, list[Decision]] = {}
    for d in sorted(stream, key=lambda d: d.arrival):
        if not 1 <= d.arrival <= T:
            raise ValueError(f"user {d.user_id}: arrival outside 1..{T}")
        before = total
        if d.bid <= threshold and total < L:
            alloc[d.user_id] = min(d.capacity, L - total)
            price[d.user_id] = threshold
            total += alloc[d.user_id]
        decisions.setdefault(d.arrival, []).append(
            Decision(d.user_id, alloc[d.user_id], price[d.user_id], threshold, before, L))
    log = tuple(StepLog(t, 1, T, L, threshold,
                        decisions=tuple(decisions.get(t, ())))
                for t in range(1, T + 1))
    return AuctionOutcome(alloc, price, log, "random")


@dataclass(frozen=True)
class RandomBaselineSummary:
    trials: int
    mean_payment: float
    mean_tasks: float
    thresholds: tuple[float, ...]

    @property
    def mean_price_per_task(self) -> float:
        return self.mean_payment / self.mean_tasks if self.mean_tasks else math.nan


def random_baseline_average(stream: Sequence[DeclaredProfile], L: int, T: int, trials: int,
                            rng: np.random.Generator, low: float = 1.0, high: float = 10.0) -> RandomBaselineSummary:
    """Average of ``trials`` fixed-price runs with thresholds drawn from U[low, high]."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    thresholds = rng.uniform(low, high, size=trials)
    payments, tasks = [], []
    for th in thresholds:
        out = random_threshold_run(stream, L, T, float(th))
        payments.append(out.total_payment)
        tasks.append(out.total_tasks)
    return RandomBaselineSummary(trials, math.fsum(payments) / trials, sum(tasks) / trials,
                                 tuple(float(x) for x in thresholds))
