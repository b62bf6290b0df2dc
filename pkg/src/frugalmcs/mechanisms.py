"""Online posted-threshold mechanisms driven by a time-stepped stream.

All three mechanisms share a doubling stage schedule: stage ``i`` ends at
``floor(2**(i-1) * T / 2**k)`` with ``k = floor(log2 T)`` and may fill up
to ``2**(i-1) * L / 2**k`` tasks in total. At each stage end the threshold
for the next stage is learned from the sample of users seen so far.

Within a time step the order is fixed: decisions on online users, then
departures into the sample, then (at a stage end) the threshold update and,
for Hetero-OMG, the reconsideration of everyone still online. The update at
``t = T`` would never be used and is skipped.

Each mechanism is a small state machine (``step``/``run``) that can be
forked before a user arrives, which is what the deviation harness uses to
avoid replaying the common prefix.
"""

from __future__ import annotations

import copy
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

from .model import AuctionOutcome, Decision, DeclaredProfile, StepLog
from .thresholds import SampleEntry, get_bid_threshold2, lth_lowest_bid_threshold, task_count


@dataclass(frozen=True)
class Stage:
    index: int
    end_time: int
    stage_tasks: float


@dataclass(frozen=True)
class StageSchedule:
    T: int
    L: int
    stages: tuple[Stage, ...]

    @property
    def end_times(self) -> tuple[int, ...]:
        return tuple(s.end_time for s in self.stages)

    @property
    def stage_tasks(self) -> tuple[float, ...]:
        return tuple(s.stage_tasks for s in self.stages)

    def __len__(self):
        return len(self.stages)

    def __getitem__(self, i) -> Stage:
        return self.stages[i]


def build_stage_schedule(T: int, L: int) -> StageSchedule:
    if T < 1 or L < 1:
        raise ValueError("T and L must be positive")
    k = T.bit_length() - 1
    stages = tuple(
        # ldexp is exact: L' is L scaled by a power of two
        Stage(i, (T << (i - 1)) >> k, math.ldexp(L, i - 1 - k))
        for i in range(1, k + 2)
    )
    return StageSchedule(T, L, stages)


@dataclass(frozen=True)
class MechanismState:
    """Read-only snapshot of a machine between two time steps."""

    t: int
    stage: int
    stage_end: int
    stage_tasks: float
    threshold: float
    sample: tuple[SampleEntry, ...]
    allocations: dict
    prices: dict
    online: tuple[int, ...]
    total_allocated: int


def _check_stream(stream: Iterable[DeclaredProfile], T: int) -> list[DeclaredProfile]:
    stream = list(stream)
    seen = set()
    for d in stream:
        if d.user_id in seen:
            raise ValueError(f"duplicate user id {d.user_id}")
        seen.add(d.user_id)
        _check_declaration(d, T)
    return stream


def _check_declaration(d: DeclaredProfile, T: int):
    if not 1 <= d.arrival <= d.departure <= T:
        raise ValueError(f"user {d.user_id}: window [{d.arrival}, {d.departure}] outside 1..{T}")
    if d.capacity < 1:
        raise ValueError(f"user {d.user_id}: capacity must be >= 1")


def _by_capacity(users):
    return sorted(users, key=lambda d: (-d.capacity, d.user_id))


class OnlineMechanism:
    """Shared machinery; subclasses define the arrival phase and the stage update."""

    name = ""
    record = True  # keep a per-step log

    def __init__(self, stream: Sequence[DeclaredProfile], L: int, T: int, beta: float,
                 delta: Optional[float] = None):
        self.L, self.T, self.beta, self.delta = L, T, float(beta), delta
        self.schedule = build_stage_schedule(T, L)
        stream = _check_stream(stream, T)
        self._validate(stream)
        self.declared = {d.user_id: d for d in stream}
        self._position = {d.user_id: i for i, d in enumerate(stream)}
        self.arrivals: dict[int, list[DeclaredProfile]] = defaultdict(list)
        self.departures: dict[int, list[DeclaredProfile]] = defaultdict(list)
        # arrival order inside a step follows the stream order
        for d in stream:
            self.arrivals[d.arrival].append(d)
            self.departures[d.departure].append(d)
        self.alloc = {uid: 0 for uid in self.declared}
        self.price = {uid: 0.0 for uid in self.declared}
        self.online: dict[int, DeclaredProfile] = {}
        self.sample: list[SampleEntry] = []
        self.threshold = self.beta
        self.total = 0
        self.stage_index = 0
        self.t = 1
        self.log: list[StepLog] = []

    def _validate(self, stream):
        pass

    @property
    def stage(self) -> Stage:
        return self.schedule[self.stage_index]

    @property
    def done(self) -> bool:
        return self.t > self.T

    def step(self):
        t = self.t
        stage = self.stage
        in_force = self.threshold
        decisions: list[Decision] = []
        arriving = self.arrivals.get(t, ())
        leaving = self.departures.get(t, ())
        self._arrival_phase(arriving, stage.stage_tasks, decisions)
        for d in leaving:
            self._depart(d)
        new = None
        if t == stage.end_time and self.stage_index + 1 < len(self.schedule):
            new = float(self._learn(stage.stage_tasks))
            self.threshold = new
            self.stage_index += 1
            self._after_update(decisions)
        if self.record:
            self.log.append(StepLog(
                t, stage.index, stage.end_time, stage.stage_tasks, in_force,
                tuple(d.user_id for d in arriving), tuple(d.user_id for d in leaving),
                tuple(decisions), new))
        self.t += 1

    def run(self, until: Optional[int] = None) -> "OnlineMechanism":
        stop = self.T if until is None else min(until, self.T)
        while self.t <= stop:
            self.step()
        return self

    def outcome(self) -> AuctionOutcome:
        return AuctionOutcome(self.alloc, self.price, tuple(self.log), self.name)

    def state(self) -> MechanismState:
        stage = self.stage
        return MechanismState(self.t, stage.index, stage.end_time, stage.stage_tasks,
                              self.threshold, tuple(self.sample), dict(self.alloc),
                              dict(self.price), tuple(self.online), self.total)

    def fork(self, *declarations: DeclaredProfile, record: bool = True) -> "OnlineMechanism":
        """Copy of this machine with some users' declarations replaced.

        Only users that have not arrived yet (under both the old and the new
        declaration) may be replaced, so the shared prefix is unaffected.
        """
        new = copy.copy(self)
        new.alloc = dict(self.alloc)
        new.price = dict(self.price)
        new.online = dict(self.online)
        new.sample = list(self.sample)
        new.record = record
        new.log = list(self.log) if record else []
        new.declared = dict(self.declared)
        new.arrivals = copy.copy(self.arrivals)
        new.departures = copy.copy(self.departures)
        for d in declarations:
            old = self.declared.get(d.user_id)
            if old is None:
                raise KeyError(f"unknown user id {d.user_id}")
            _check_declaration(d, self.T)
            if min(old.arrival, d.arrival) < self.t:
                raise ValueError(f"user {d.user_id} has already arrived at step {self.t}")
            new._validate([d])
            new.declared[d.user_id] = d
            new.arrivals[old.arrival] = [x for x in new.arrivals[old.arrival] if x.user_id != d.user_id]
            new.departures[old.departure] = [x for x in new.departures[old.departure]
                                             if x.user_id != d.user_id]
            new.arrivals[d.arrival] = self._in_stream_order(new.arrivals.get(d.arrival, []) + [d])
            new.departures[d.departure] = self._in_stream_order(new.departures.get(d.departure, []) + [d])
        return new

    def _in_stream_order(self, users):
        return sorted(users, key=lambda x: self._position[x.user_id])

    def _allocate(self, d: DeclaredProfile, stage_tasks: float, decisions, log_rejection=True):
        before = self.total
        if d.bid <= self.threshold and self.total < stage_tasks:
            f = min(d.capacity, task_count(stage_tasks - self.total))
            self.alloc[d.user_id] = f
            self.price[d.user_id] = self.threshold
            self.total += f
        elif not log_rejection:
            return
        decisions.append(Decision(d.user_id, self.alloc[d.user_id], self.price[d.user_id],
                                  self.threshold, before, stage_tasks))

    def _arrival_phase(self, arriving, stage_tasks, decisions):
        raise NotImplementedError

    def _depart(self, d: DeclaredProfile):
        pass

    def _learn(self, stage_tasks: float) -> float:
        raise NotImplementedError

    def _after_update(self, decisions):
        pass


class _ZeroIntervalMechanism(OnlineMechanism):
    """Each user is decided at its arrival step and joins the sample at once."""

    def _arrival_phase(self, arriving, stage_tasks, decisions):
        for d in arriving:
            self._allocate(d, stage_tasks, decisions)
            self.sample.append(SampleEntry(d.user_id, d.capacity, d.bid))


class HomoOMZ(_ZeroIntervalMechanism):
    """Unit-capacity users; the threshold is the L'-th lowest sampled bid."""

    name = "homo-omz"

    def _validate(self, stream):
        for d in stream:
            if d.capacity != 1:
                raise ValueError(f"user {d.user_id}: homo-omz needs unit capacities")
            if d.arrival != d.departure:
                raise ValueError(f"user {d.user_id}: homo-omz needs zero arrival-departure intervals")

    def _learn(self, stage_tasks):
        return lth_lowest_bid_threshold(stage_tasks, self.sample, self.beta)


class HeteroOMZ(_ZeroIntervalMechanism):
    """Multi-task users decided on arrival; budget-feasible thresholds.

    With ``allow_intervals`` a user with a non-zero window is still decided
    at its declared arrival, which is how the mechanism behaves when it is
    (mis)used under the general interval model.
    """

    name = "hetero-omz"

    def __init__(self, stream, L, T, beta, delta, allow_intervals: bool = False):
        self.allow_intervals = allow_intervals
        super().__init__(stream, L, T, beta, delta)

    def _validate(self, stream):
        if self.allow_intervals:
            return
        for d in stream:
            if d.arrival != d.departure:
                raise ValueError(f"user {d.user_id}: hetero-omz needs zero arrival-departure intervals")

    def _learn(self, stage_tasks):
        return get_bid_threshold2(stage_tasks, self.delta, self.beta, self.sample)


class HeteroOMG(OnlineMechanism):
    """General interval model: users wait online and may be upgraded.

    A user enters the sample only when it departs. At stage ends every online
    user is reconsidered in descending capacity order and its (allocation,
    price) is replaced only if the payment strictly increases, so the final
    payment is the largest one seen during the user's window.
    """

    name = "hetero-omg"

    def _arrival_phase(self, arriving, stage_tasks, decisions):
        for d in arriving:
            self.online[d.user_id] = d
        new_ids = {d.user_id for d in arriving}
        # Non-winners failing the gate would be rejected again with no effect;
        # they are skipped, and only logged on their first consideration.
        if self.total < stage_tasks:
            pending = [d for d in self.online.values()
                       if self.alloc[d.user_id] == 0 and (d.bid <= self.threshold or d.user_id in new_ids)]
        else:
            pending = arriving
        for d in _by_capacity(pending):
            self._allocate(d, stage_tasks, decisions, log_rejection=d.user_id in new_ids)

    def _depart(self, d):
        del self.online[d.user_id]
        self.sample.append(SampleEntry(d.user_id, d.capacity, d.bid))

    def _learn(self, stage_tasks):
        return get_bid_threshold2(stage_tasks, self.delta, self.beta, self.sample)

    def _after_update(self, decisions):
        b = self.threshold
        stage_tasks = self.stage.stage_tasks
        for d in _by_capacity(self.online.values()):
            uid = d.user_id
            if d.bid > b:
                continue
            f = min(d.capacity, task_count(stage_tasks + self.alloc[uid] - self.total))
            if f * b > self.alloc[uid] * self.price[uid]:
                before = self.total
                self.total += f - self.alloc[uid]
                self.alloc[uid] = f
                self.price[uid] = b
                decisions.append(Decision(uid, f, b, b, before, stage_tasks, "boundary"))


def homo_omz(stream: Sequence[DeclaredProfile], L: int, T: int, beta: float) -> AuctionOutcome:
    return HomoOMZ(stream, L, T, beta).run().outcome()


def hetero_omz(stream: Sequence[DeclaredProfile], L: int, T: int, beta: float, delta: float,
               allow_intervals: bool = False) -> AuctionOutcome:
    return HeteroOMZ(stream, L, T, beta, delta, allow_intervals).run().outcome()


def hetero_omg(stream: Sequence[DeclaredProfile], L: int, T: int, beta: float, delta: float) -> AuctionOutcome:
    return HeteroOMG(stream, L, T, beta, delta).run().outcome()


MACHINES = {"homo-omz": HomoOMZ, "hetero-omz": HeteroOMZ, "hetero-omg": HeteroOMG}


@dataclass(frozen=True)
class MechanismSpec:
    """A mechanism with its parameters bound; call it on a declared stream."""

    name: str
    L: int
    T: int
    beta: float = 10.0
    delta: float = 2.0
    allow_intervals: bool = False

    def __post_init__(self):
        if self.name not in MACHINES:
            raise KeyError(f"unknown mechanism {self.name!r}; choose from {sorted(MACHINES)}")

    def machine(self, stream: Sequence[DeclaredProfile]) -> OnlineMechanism:
        if self.name == "homo-omz":
            return HomoOMZ(stream, self.L, self.T, self.beta)
        if self.name == "hetero-omz":
            return HeteroOMZ(stream, self.L, self.T, self.beta, self.delta, self.allow_intervals)
        return HeteroOMG(stream, self.L, self.T, self.beta, self.delta)

    def __call__(self, stream: Sequence[DeclaredProfile]) -> AuctionOutcome:
        return self.machine(stream).run().outcome()

    @property
    def decides_on_arrival(self) -> bool:
        return self.name != "hetero-omg"


Mechanism = Callable[[Sequence[DeclaredProfile]], AuctionOutcome]


def make_mechanism(name: str, L: int, T: int, beta: float = 10.0, delta: float = 2.0,
                   allow_intervals: bool = False) -> MechanismSpec:
    return MechanismSpec(name, L, T, beta, delta, allow_intervals)
