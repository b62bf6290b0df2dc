"""Domain types for the online crowd-sensing auctions.

Time is a discrete step in ``1..T``; currency is a plain float. Everything
here is a frozen value object so outcomes can be shared between replays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from types import MappingProxyType
from typing import Iterable, Mapping, Optional, Sequence


class ProfileError(ValueError):
    """A user profile or declaration violates the model's constraints."""


@dataclass(frozen=True)
class UserProfile:
    """True type of a user: arrival, departure, task capacity and unit cost."""

    id: int
    arrival: int
    departure: int
    capacity: int
    unit_cost: float

    @property
    def interval(self) -> int:
        return self.departure - self.arrival


@dataclass(frozen=True)
class DeclaredProfile:
    """What a user reports to the auction. Capacity is never misreported."""

    user_id: int
    arrival: int
    departure: int
    capacity: int
    bid: float

    @classmethod
    def truthful(cls, profile: UserProfile) -> "DeclaredProfile":
        return cls(profile.id, profile.arrival, profile.departure,
                   profile.capacity, profile.unit_cost)

    def check_against(self, profile: UserProfile) -> "DeclaredProfile":
        """Raise unless this declaration is reachable from ``profile``."""
        if self.user_id != profile.id:
            raise ProfileError(f"declaration for user {self.user_id} checked against user {profile.id}")
        if self.capacity != profile.capacity:
            raise ProfileError(f"user {profile.id}: capacity must be reported truthfully")
        if not profile.arrival <= self.arrival <= self.departure <= profile.departure:
            raise ProfileError(
                f"user {profile.id}: declared window [{self.arrival}, {self.departure}] "
                f"not inside true window [{profile.arrival}, {profile.departure}]")
        if not self.bid > 0:
            raise ProfileError(f"user {profile.id}: bid must be positive")
        return self


def validate_profile(p: UserProfile, T: int) -> UserProfile:
    if p.arrival < 1:
        raise ProfileError(f"user {p.id}: arrival {p.arrival} before step 1")
    if p.arrival > p.departure:
        raise ProfileError(f"user {p.id}: arrival after departure ({p.arrival} > {p.departure})")
    if p.departure > T:
        raise ProfileError(f"user {p.id}: departure {p.departure} beyond horizon {T}")
    if not isinstance(p.capacity, int) or p.capacity < 1:
        raise ProfileError(f"user {p.id}: capacity must be an integer >= 1")
    if not (p.unit_cost > 0 and math.isfinite(p.unit_cost)):
        raise ProfileError(f"user {p.id}: unit cost must be positive")
    return p


def validate_instance(users: Iterable[UserProfile], T: int) -> list[UserProfile]:
    users = [validate_profile(u, T) for u in users]
    seen: set[int] = set()
    for u in users:
        if u.id in seen:
            raise ProfileError(f"duplicate user id {u.id}")
        seen.add(u.id)
    return users


def declare_truthfully(users: Iterable[UserProfile]) -> list[DeclaredProfile]:
    return [DeclaredProfile.truthful(u) for u in users]


def utility(true_cost: float, f: int, p: float) -> float:
    """Quasi-linear utility ``f * (p - c)``; zero for a user with no tasks."""
    if f < 0 or p < 0:
        raise ValueError("allocation and price must be non-negative")
    if f == 0:
        return 0.0
    return f * (p - true_cost)


@dataclass(frozen=True)
class Decision:
    """One allocation decision (or rejection) taken for a user.

    ``allocated_before`` is the total allocation in force just before the
    decision and ``stage_tasks`` the stage-task-number it was checked against.
    """

    user_id: int
    allocation: int
    price: float
    threshold: float
    allocated_before: int
    stage_tasks: float
    phase: str = "arrival"  # "arrival" | "boundary"


@dataclass(frozen=True)
class StepLog:
    t: int
    stage: int
    stage_end: int
    stage_tasks: float
    threshold: float
    arrivals: tuple[int, ...] = ()
    departures: tuple[int, ...] = ()
    decisions: tuple[Decision, ...] = ()
    new_threshold: Optional[float] = None


@dataclass(frozen=True)
class AuctionOutcome:
    """Final allocation and per-task price of every user in the stream."""

    allocations: Mapping[int, int]
    prices: Mapping[int, float]
    log: tuple[StepLog, ...] = ()
    mechanism: str = ""

    def __post_init__(self):
        if set(self.allocations) != set(self.prices):
            raise ValueError("allocations and prices must cover the same users")
        for uid, f in self.allocations.items():
            if f < 0:
                raise ValueError(f"negative allocation for user {uid}")
            if f == 0 and self.prices[uid] != 0:
                raise ValueError(f"user {uid} has a price but no tasks")
        object.__setattr__(self, "allocations", MappingProxyType(dict(self.allocations)))
        object.__setattr__(self, "prices", MappingProxyType(dict(self.prices)))

    @property
    def user_ids(self) -> frozenset[int]:
        return frozenset(self.allocations)

    @property
    def winners(self) -> frozenset[int]:
        return frozenset(u for u, f in self.allocations.items() if f > 0)

    @property
    def total_tasks(self) -> int:
        return sum(self.allocations.values())

    @property
    def total_payment(self) -> float:
        return math.fsum(f * self.prices[u] for u, f in self.allocations.items() if f > 0)

    def payment(self, user_id: int) -> float:
        return self.allocations[user_id] * self.prices[user_id]

    def thresholds(self) -> list[float]:
        """Thresholds computed at stage boundaries, in order."""
        return [s.new_threshold for s in self.log if s.new_threshold is not None]

    def decisions_for(self, user_id: int) -> list[Decision]:
        return [d for s in self.log for d in s.decisions if d.user_id == user_id]

    def with_price(self, user_id: int, price: float) -> "AuctionOutcome":
        """Copy with one user's price overwritten; used for negative controls."""
        prices = dict(self.prices)
        prices[user_id] = price
        return replace(self, prices=prices)


def allocation_total(outcome: AuctionOutcome, subset: Iterable[int]) -> int:
    total = 0
    for uid in subset:
        if uid not in outcome.allocations:
            raise KeyError(f"unknown user id {uid}")
        total += outcome.allocations[uid]
    return total


def winner_cost(outcome: AuctionOutcome, users: Sequence[UserProfile]) -> float:
    """Social cost ``sum f_i c_i`` of the winners under their true costs."""
    costs = {u.id: u.unit_cost for u in users}
    return math.fsum(f * costs[u] for u, f in outcome.allocations.items() if f > 0)
