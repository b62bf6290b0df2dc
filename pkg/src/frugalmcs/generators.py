"""Seeded user streams for the i.i.d. and secretary (random order) models.

Each random ingredient (arrival counts, costs, capacities, windows, order)
gets its own child of a ``numpy.random.SeedSequence``, so changing the cost
distribution leaves arrival times untouched under a fixed seed.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import UserProfile

SUBSTREAMS = ("arrivals", "costs", "capacities", "intervals", "order")


@dataclass(frozen=True)
class Dist:
    """``const`` value, continuous ``uniform`` on [low, high] or ``randint`` on {low..high}."""

    kind: str
    low: float
    high: float

    @classmethod
    def const(cls, v):
        return cls("const", v, v)

    @classmethod
    def uniform(cls, low, high):
        return cls("uniform", low, high)

    @classmethod
    def randint(cls, low, high):
        return cls("randint", int(low), int(high))

    @classmethod
    def parse(cls, text: str) -> "Dist":
        """Accepts ``5``, ``U[1,10]`` (continuous) and ``U{1,10}`` (integers)."""
        s = text.replace(" ", "")
        m = re.fullmatch(r"U\[([^,\]]+),([^\]]+)\]", s)
        if m:
            return cls.uniform(float(m[1]), float(m[2])).checked()
        m = re.fullmatch(r"U\{(-?\d+),(-?\d+)\}", s)
        if m:
            return cls.randint(int(m[1]), int(m[2])).checked()
        try:
            v = float(s)
        except ValueError:
            raise ValueError(f"cannot parse distribution {text!r}") from None
        return cls.const(int(v) if v.is_integer() and "." not in s else v)

    def checked(self) -> "Dist":
        if self.low > self.high:
            raise ValueError(f"empty range in {self}")
        return self

    def __str__(self):
        if self.kind == "const":
            return str(self.low)
        if self.kind == "uniform":
            return f"U[{self.low!r},{self.high!r}]"
        return f"U{{{self.low},{self.high}}}"

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "const":
            return np.full(n, self.low)
        if self.kind == "uniform":
            return rng.uniform(self.low, self.high, size=n)
        if self.kind == "randint":
            return rng.integers(self.low, self.high, size=n, endpoint=True)
        raise ValueError(f"unknown distribution kind {self.kind!r}")


@dataclass(frozen=True)
class InstanceConfig:
    T: int = 1800
    L: int = 100
    lam: float = 0.6
    cost: Dist = Dist.uniform(1.0, 10.0)
    capacity: Dist = Dist.const(1)
    interval: Dist = Dist.const(0)
    order: str = "iid"  # "iid" | "secretary"
    omega: Optional[float] = None
    seed: int = 0
    multiset: Optional[tuple[tuple[int, float], ...]] = None

    def validate(self) -> "InstanceConfig":
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.L < 1:
            raise ValueError("L must be >= 1")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.cost.low <= 0:
            raise ValueError("costs must be positive")
        if self.capacity.low < 1 or (self.capacity.kind == "uniform"):
            raise ValueError("capacities must be integers >= 1")
        if self.interval.low < 0 or self.interval.kind == "uniform":
            raise ValueError("intervals must be integers >= 0")
        if self.order not in ("iid", "secretary"):
            raise ValueError(f"unknown order model {self.order!r}")
        if self.omega is not None and not self.omega > 0:
            raise ValueError("omega must be positive")
        return self


def substreams(seed) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(SUBSTREAMS))
    return {name: np.random.default_rng(c) for name, c in zip(SUBSTREAMS, children)}


def gen_poisson_arrivals(lam: float, T: int, rng: np.random.Generator) -> np.ndarray:
    """Number of users arriving at each step ``1..T`` (index 0 is step 1)."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if T <= 0:
        return np.zeros(0, dtype=np.int64)
    return rng.poisson(lam, size=T)


def gen_iid_users(config: InstanceConfig, rng: Optional[np.random.Generator] = None) -> list[UserProfile]:
    """i.i.d. users; ``rng`` (if given) is split into substreams, else the config seed is."""
    config.validate()
    if rng is None:
        streams = substreams(config.seed)
    else:
        streams = dict(zip(SUBSTREAMS, rng.spawn(len(SUBSTREAMS))))
    counts = gen_poisson_arrivals(config.lam, config.T, streams["arrivals"])
    arrivals = np.repeat(np.arange(1, config.T + 1), counts)
    n = len(arrivals)
    costs = config.cost.sample(streams["costs"], n)
    caps = config.capacity.sample(streams["capacities"], n)
    gaps = config.interval.sample(streams["intervals"], n)
    return [
        UserProfile(i + 1, int(a), int(min(a + g, config.T)), int(c), float(x))
        for i, (a, c, x, g) in enumerate(zip(arrivals, caps, costs, gaps))
    ]


def gen_secretary_stream(multiset: Sequence[tuple[int, float]], T: int,
                         rng: np.random.Generator) -> list[UserProfile]:
    """Adversarial (capacity, cost) values presented in uniformly random order."""
    n = len(multiset)
    if n > T:
        raise ValueError(f"{n} users do not fit in {T} distinct arrival steps")
    step_rng, order_rng = rng.spawn(2)
    steps = np.sort(step_rng.choice(T, size=n, replace=False)) + 1
    perm = order_rng.permutation(n)
    users = []
    for i, (t, j) in enumerate(zip(steps, perm)):
        cap, cost = multiset[j]
        users.append(UserProfile(i + 1, int(t), int(t), int(cap), float(cost)))
    return users


def secretary_bound_violations(users: Sequence[UserProfile], L: int, omega: float) -> list[int]:
    """Users whose capacity exceeds ``min(L, supply) / omega``."""
    bound = min(L, sum(u.capacity for u in users)) / omega
    return [u.id for u in users if u.capacity > bound]


def generate_instance(config: InstanceConfig) -> list[UserProfile]:
    config.validate()
    if config.order == "iid":
        return gen_iid_users(config)
    if config.multiset is None:
        raise ValueError("secretary order needs an explicit multiset of (capacity, cost)")
    return gen_secretary_stream(config.multiset, config.T, substreams(config.seed)["order"])


def stream_digest(users: Sequence[UserProfile]) -> str:
    """Stable text form of a stream, one user per line (the replay file format)."""
    return "".join(f"{u.id} {u.arrival} {u.departure} {u.capacity} {u.unit_cost!r}\n" for u in users)

