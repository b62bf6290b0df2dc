"""Verification of the mechanisms' game-theoretic properties and experiments.

Truthfulness is checked by replaying an auction with one user's declaration
changed and comparing that user's utility under its *true* cost. Outcomes
are piecewise constant in the bid with breakpoints at the thresholds, so
the default grids straddle every threshold seen in the truthful run; that
makes them complete for bids, but it is a property of these mechanisms
rather than a general guarantee.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .baselines import offline_optimal, random_baseline_average
from .generators import InstanceConfig, generate_instance
from .mechanisms import MechanismSpec, build_stage_schedule
from .model import AuctionOutcome, DeclaredProfile, UserProfile, declare_truthfully, utility, winner_cost
from .thresholds import SampleEntry, budget_feasible_selection

BID_FACTORS = (0.25, 0.5, 0.9, 0.99, 1.01, 1.1, 2.0, 4.0)


@dataclass(frozen=True)
class Deviation:
    declared: DeclaredProfile
    utility: float
    delta: float


@dataclass(frozen=True)
class DeviationReport:
    user_id: int
    truthful_utility: float
    deviations: tuple[Deviation, ...] = ()

    @property
    def max_gain(self) -> float:
        return max((d.delta for d in self.deviations), default=0.0)

    @property
    def profitable(self) -> list[Deviation]:
        return [d for d in self.deviations if d.delta > 0]


def default_bid_grid(true_cost: float, thresholds: Iterable[float]) -> list[float]:
    grid = {true_cost * f for f in BID_FACTORS}
    for th in thresholds:
        grid.update((math.nextafter(th, 0.0), th, math.nextafter(th, math.inf)))
    return sorted(b for b in grid if b > 0)


def default_time_grid(profile: UserProfile, T: int, L: int = 1) -> list[tuple[int, int]]:
    """Reported windows inside the true one, straddling every stage end in it."""
    a, d = profile.arrival, profile.departure
    ends = [e for e in build_stage_schedule(T, L).end_times if a <= e <= d]
    starts = {a, min(a + 1, d), d} | {e for e in ends} | {e + 1 for e in ends if e < d}
    grid = set()
    for s in starts:
        stops = {s, d, max(s, d - 1)} | {e for e in ends if e >= s} | {e - 1 for e in ends if e - 1 >= s}
        grid.update((s, x) for x in stops)
    return sorted(grid)


def _declarations(instance: Sequence[UserProfile], declared) -> list[DeclaredProfile]:
    if declared is None:
        return declare_truthfully(instance)
    by_id = {d.user_id: d for d in declared}
    return [by_id.get(u.id, DeclaredProfile.truthful(u)) for u in instance]


def _find(instance, user_id) -> int:
    for k, u in enumerate(instance):
        if u.id == user_id:
            return k
    raise KeyError(f"unknown user id {user_id}")


def _replay_report(mechanism, instance, user_id, deviations, declared) -> DeviationReport:
    k = _find(instance, user_id)
    user = instance[k]
    stream = _declarations(instance, declared)
    stream[k] = DeclaredProfile.truthful(user)
    base = mechanism(stream)
    u0 = utility(user.unit_cost, base.allocations[user_id], base.prices[user_id])
    out = []
    for dev in deviations:
        dev.check_against(user)
        s = list(stream)
        s[k] = dev
        o = mechanism(s)
        u = utility(user.unit_cost, o.allocations[user_id], o.prices[user_id])
        out.append(Deviation(dev, u, u - u0))
    return DeviationReport(user_id, u0, tuple(out))


def test_cost_truthfulness(mechanism: Callable[[Sequence[DeclaredProfile]], AuctionOutcome],
                           instance: Sequence[UserProfile], user_id: int,
                           bid_grid: Optional[Iterable[float]] = None,
                           declared: Optional[Sequence[DeclaredProfile]] = None) -> DeviationReport:
    """Replay the whole auction once per alternative bid of ``user_id``.

    ``declared`` fixes the other users' reports (truthful by default).
    """
    k = _find(instance, user_id)
    user = instance[k]
    if bid_grid is None:
        stream = _declarations(instance, declared)
        stream[k] = DeclaredProfile.truthful(user)
        base = mechanism(stream)
        bid_grid = default_bid_grid(user.unit_cost, [base.log[0].threshold] + base.thresholds())
    truth = DeclaredProfile.truthful(user)
    devs = [replace(truth, bid=float(b)) for b in bid_grid]
    return _replay_report(mechanism, instance, user_id, devs, declared)


def test_time_truthfulness(instance: Sequence[UserProfile], user_id: int,
                           time_grid: Optional[Iterable[tuple[int, int]]] = None,
                           mechanism: Optional[MechanismSpec] = None, L: int = 8, T: int = 8,
                           beta: float = 5.0, delta: float = 2.0,
                           declared: Optional[Sequence[DeclaredProfile]] = None) -> DeviationReport:
    """Replay with ``user_id`` reporting each window in ``time_grid`` and its true cost.

    Defaults to Hetero-OMG; pass another mechanism for negative controls.
    """
    if mechanism is None:
        mechanism = MechanismSpec("hetero-omg", L, T, beta, delta)
    user = instance[_find(instance, user_id)]
    if time_grid is None:
        time_grid = default_time_grid(user, mechanism.T, mechanism.L)
    devs = []
    for a, d in time_grid:
        if not user.arrival <= a <= d <= user.departure:
            raise ValueError(f"window ({a}, {d}) is not inside the true window "
                             f"[{user.arrival}, {user.departure}]")
        devs.append(DeclaredProfile(user.id, a, d, user.capacity, user.unit_cost))
    return _replay_report(mechanism, instance, user_id, devs, declared)


test_cost_truthfulness.__test__ = False
test_time_truthfulness.__test__ = False


def deviation_sweep(mechanism: MechanismSpec, instance: Sequence[UserProfile],
                    users: Optional[Iterable[int]] = None, cost: bool = True, time: bool = False,
                    declared: Optional[Sequence[DeclaredProfile]] = None) -> list[DeviationReport]:
    """Cost (and optionally time) deviations for many users in one pass.

    The machine is forked just before each user's true arrival, so only the
    part of the auction that can depend on the user is replayed. Others'
    reports are ``declared`` (truthful by default); the swept users' own
    baseline reports are truthful.
    """
    stream = _declarations(instance, declared)
    wanted = set(u.id for u in instance) if users is None else set(users)
    by_id = {u.id: u for u in instance}
    for k, u in enumerate(instance):
        if u.id in wanted:
            stream[k] = DeclaredProfile.truthful(u)
    truth_run = mechanism.machine(stream).run().outcome()
    thresholds = [truth_run.log[0].threshold] + truth_run.thresholds()
    starts = defaultdict(list)
    for uid in sorted(wanted):
        starts[by_id[uid].arrival].append(by_id[uid])
    reports = {}
    m = mechanism.machine(stream)
    while not m.done:
        for user in starts.get(m.t, ()):
            truth = DeclaredProfile.truthful(user)
            u0 = utility(user.unit_cost, truth_run.allocations[user.id], truth_run.prices[user.id])
            devs = []
            if cost:
                devs += [replace(truth, bid=b) for b in default_bid_grid(user.unit_cost, thresholds)]
            if time and user.departure > user.arrival:
                devs += [replace(truth, arrival=a, departure=d)
                         for a, d in default_time_grid(user, mechanism.T, mechanism.L)]
            out = []
            for dev in devs:
                f = m.fork(dev, record=False).run(until=dev.departure)
                u = utility(user.unit_cost, f.alloc[user.id], f.price[user.id])
                out.append(Deviation(dev, u, u - u0))
            reports[user.id] = DeviationReport(user.id, u0, tuple(out))
        m.step()
    return [reports[uid] for uid in sorted(reports)]


@dataclass(frozen=True)
class CheckResult:
    passed: bool
    violations: tuple[str, ...] = ()
    detail: dict = field(default_factory=dict)

    def __bool__(self):
        return self.passed


def check_individual_rationality(outcome: AuctionOutcome, profiles: Sequence[UserProfile],
                                 declared: Optional[Sequence[DeclaredProfile]] = None,
                                 L: Optional[int] = None) -> CheckResult:
    """Utility >= 0, price >= bid for winners, f <= capacity and (if given) total <= L."""
    bids = {d.user_id: d.bid for d in (declared or declare_truthfully(profiles))}
    bad = []
    for u in profiles:
        f, p = outcome.allocations[u.id], outcome.prices[u.id]
        if utility(u.unit_cost, f, p) < 0:
            bad.append(f"user {u.id}: negative utility {utility(u.unit_cost, f, p)}")
        if f > 0 and p < bids[u.id]:
            bad.append(f"user {u.id}: price {p} below bid {bids[u.id]}")
        if f > u.capacity:
            bad.append(f"user {u.id}: allocation {f} exceeds capacity {u.capacity}")
    if L is not None and outcome.total_tasks > L:
        bad.append(f"total allocation {outcome.total_tasks} exceeds L={L}")
    return CheckResult(not bad, tuple(bad))


def probe_consumer_sovereignty(mechanism: Callable[[Sequence[DeclaredProfile]], AuctionOutcome],
                               instance: Sequence[UserProfile], user_id: int) -> CheckResult:
    """Lower the user's bid to the threshold it faced on arrival; it must then win.

    ``detail['status']`` is ``pass``, ``fail`` or ``vacuous`` (no residual
    stage capacity when the user was decided).
    """
    k = _find(instance, user_id)
    stream = declare_truthfully(instance)
    first = mechanism(stream).decisions_for(user_id)[0]
    if first.allocated_before >= first.stage_tasks:
        return CheckResult(True, (), {"status": "vacuous", "threshold": first.threshold})
    stream[k] = replace(stream[k], bid=first.threshold)
    f = mechanism(stream).allocations[user_id]
    status = "pass" if f >= 1 else "fail"
    viol = () if f >= 1 else (f"user {user_id} bid {first.threshold} at threshold and lost",)
    return CheckResult(f >= 1, viol, {"status": status, "threshold": first.threshold, "allocation": f})


def max_tasks_under_budget(budget, sample: Sequence[SampleEntry]) -> int:
    """Most tasks buyable when each task is paid its own bid (task-by-task oracle)."""
    remaining = Fraction(budget)
    costs = sorted(Fraction(s.bid) for s in sample for _ in range(s.capacity))
    n = 0
    for c in costs:
        if c > remaining:
            break
        remaining -= c
        n += 1
    return n


def check_bfm_half_supply(budget, sample: Sequence[SampleEntry]) -> CheckResult:
    """The proportional-share price buys at least half of the most tasks the budget allows."""
    B = Fraction(budget)
    best = max_tasks_under_budget(B, sample)
    price, counts = budget_feasible_selection(B, sample)
    if price is None:
        ok = best == 0
        return CheckResult(ok, () if ok else (f"no price although {best} tasks are affordable",),
                           {"price": None, "purchasable": 0, "oracle": best})
    p = Fraction(price)
    supply = sum(s.capacity for s in sample if s.bid <= price)
    purchasable = min(supply, math.floor(B / p))
    accepted = sum(f for _, f in counts)
    bad = []
    if purchasable < math.ceil(best / 2):
        bad.append(f"price {price} buys {purchasable} < ceil({best}/2)")
    if p * accepted > B:
        bad.append(f"price {price} x {accepted} tasks exceeds budget {float(B)}")
    return CheckResult(not bad, tuple(bad),
                       {"price": price, "purchasable": purchasable, "accepted": accepted, "oracle": best})


# --- experiments -----------------------------------------------------------

CSV_COLUMNS = ("mechanism", "seed", "T", "L", "lambda", "delta", "beta", "total_payment",
               "tasks_completed", "price_per_task", "opt_cost_L", "opt_cost_2L",
               "idealistic_ratio", "realistic_ratio")


@dataclass(frozen=True)
class ResultRow:
    mechanism: str
    seed: int
    T: int
    L: int
    lam: float
    delta: float
    beta: float
    total_payment: float
    tasks_completed: float
    opt_cost_L: Optional[float]
    opt_cost_2L: Optional[float]
    winner_cost: Optional[float] = None
    users: int = 0

    @property
    def price_per_task(self) -> float:
        return self.total_payment / self.tasks_completed if self.tasks_completed else math.nan

    @property
    def idealistic_ratio(self) -> Optional[float]:
        return self.total_payment / self.opt_cost_L if self.opt_cost_L else None

    @property
    def realistic_ratio(self) -> Optional[float]:
        return self.total_payment / self.opt_cost_2L if self.opt_cost_2L else None

    def as_record(self) -> dict:
        return {
            "mechanism": self.mechanism, "seed": self.seed, "T": self.T, "L": self.L,
            "lambda": self.lam, "delta": self.delta, "beta": self.beta,
            "total_payment": self.total_payment, "tasks_completed": self.tasks_completed,
            "price_per_task": self.price_per_task, "opt_cost_L": self.opt_cost_L,
            "opt_cost_2L": self.opt_cost_2L, "idealistic_ratio": self.idealistic_ratio,
            "realistic_ratio": self.realistic_ratio,
        }


@dataclass(frozen=True)
class Aggregate:
    mechanism: str
    L: int
    lam: float
    delta: float
    seeds: int
    mean_payment: float
    mean_tasks: float
    mean_opt_L: Optional[float]
    mean_opt_2L: Optional[float]
    completion_rate: float
    mean_winner_cost: Optional[float]

    @property
    def idealistic_ratio(self):
        return self.mean_payment / self.mean_opt_L if self.mean_opt_L else None

    @property
    def realistic_ratio(self):
        return self.mean_payment / self.mean_opt_2L if self.mean_opt_2L else None

    @property
    def price_per_task(self):
        return self.mean_payment / self.mean_tasks if self.mean_tasks else math.nan


def _mean(xs):
    xs = list(xs)
    if not xs or any(x is None for x in xs):
        return None
    return math.fsum(xs) / len(xs)


@dataclass(frozen=True)
class ExperimentResult:
    rows: tuple[ResultRow, ...] = ()

    def aggregate(self) -> list[Aggregate]:
        groups: dict = defaultdict(list)
        for r in self.rows:
            groups[(r.mechanism, r.L, r.lam, r.delta)].append(r)
        out = []
        for (mech, L, lam, delta), rs in groups.items():
            out.append(Aggregate(
                mech, L, lam, delta, len(rs),
                _mean(r.total_payment for r in rs), _mean(r.tasks_completed for r in rs),
                _mean(r.opt_cost_L for r in rs), _mean(r.opt_cost_2L for r in rs),
                sum(r.tasks_completed >= L for r in rs) / len(rs),
                _mean(r.winner_cost for r in rs)))
        return out

    def by_mechanism(self, name: str) -> list[ResultRow]:
        return [r for r in self.rows if r.mechanism == name]

    def __add__(self, other: "ExperimentResult") -> "ExperimentResult":
        return ExperimentResult(self.rows + other.rows)


def parse_mechanism_name(entry: str, delta: float) -> tuple[str, float]:
    """``hetero-omz`` or ``hetero-omz:1`` (delta override)."""
    name, _, d = entry.partition(":")
    return name, (float(d) if d else delta)


def run_experiment(config: InstanceConfig, mechanisms: Sequence[str], seeds: Iterable[int],
                   delta: float = 2.0, beta: float = 10.0, random_trials: int = 50) -> ExperimentResult:
    """One row per (mechanism, seed), plus a ``random`` row when ``random_trials`` > 0."""
    rows = []
    for seed in seeds:
        cfg = replace(config, seed=seed)
        users = generate_instance(cfg)
        stream = declare_truthfully(users)
        opt_L = offline_optimal(users, cfg.L)
        opt_2L = offline_optimal(users, 2 * cfg.L)
        common = dict(seed=seed, T=cfg.T, L=cfg.L, lam=cfg.lam, beta=beta,
                      opt_cost_L=opt_L.total_cost if opt_L.sufficient else None,
                      opt_cost_2L=opt_2L.total_cost if opt_2L.sufficient else None,
                      users=len(users))
        for entry in mechanisms:
            name, d = parse_mechanism_name(entry, delta)
            spec = MechanismSpec(name, cfg.L, cfg.T, beta, d)
            out = spec(stream)
            rows.append(ResultRow(mechanism=entry, delta=d,
                                  total_payment=out.total_payment, tasks_completed=out.total_tasks,
                                  winner_cost=winner_cost(out, users), **common))
        if random_trials:
            rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
            rb = random_baseline_average(stream, cfg.L, cfg.T, random_trials, rng)
            rows.append(ResultRow(mechanism="random", delta=delta,
                                  total_payment=rb.mean_payment, tasks_completed=rb.mean_tasks, **common))
    return ExperimentResult(tuple(rows))
