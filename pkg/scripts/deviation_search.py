"""Random search for profitable deviations on small instances.

Each instance has a handful of users on a short horizon, where stage
boundaries are frequent and residual capacity is tight. Prints the number
of profitable cost and window deviations per mechanism and the first few
witnesses, as replayable instance files.

    python scripts/deviation_search.py --instances 2000
"""

import argparse
import random

from frugalmcs.cli import dump_instance
from frugalmcs.harness import deviation_sweep
from frugalmcs.mechanisms import MechanismSpec
from frugalmcs.model import UserProfile


def random_instance(rng):
    T = rng.choice([8, 16])
    L = rng.choice([4, 8, 12])
    users = []
    for i in range(rng.randint(2, 7)):
        a = rng.randint(1, T)
        users.append(UserProfile(i + 1, a, min(T, a + rng.randint(0, T // 2)), rng.randint(1, 6),
                                 float(rng.randint(1, 9))))
    return T, L, users


def zero_windows(users, unit=False):
    return [UserProfile(u.id, u.arrival, u.arrival, 1 if unit else u.capacity, u.unit_cost) for u in users]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--show", type=int, default=3)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    counts = {"homo-omz cost": 0, "hetero-omz cost": 0, "hetero-omg cost": 0, "hetero-omg time": 0}
    shown = 0
    for _ in range(args.instances):
        T, L, users = random_instance(rng)
        cases = [("homo-omz", zero_windows(users, unit=True)), ("hetero-omz", zero_windows(users)),
                 ("hetero-omg", users)]
        for name, inst in cases:
            spec = MechanismSpec(name, L, T, 5.0, 2.0)
            by_id = {u.id: u for u in inst}
            for rep in deviation_sweep(spec, inst, cost=True, time=name == "hetero-omg"):
                u = by_id[rep.user_id]
                for dv in rep.profitable:
                    moved = (dv.declared.arrival, dv.declared.departure) != (u.arrival, u.departure)
                    counts[f"{name} {'time' if moved else 'cost'}"] += 1
                    if shown < args.show:
                        shown += 1
                        print(f"# {name} T={T} L={L} beta=5 delta=2: user {u.id} gains {dv.delta:g} "
                              f"by declaring {dv.declared}")
                        print(dump_instance(inst))
    for k, v in counts.items():
        print(f"{k}: {v} profitable deviations")


if __name__ == "__main__":
    main()
