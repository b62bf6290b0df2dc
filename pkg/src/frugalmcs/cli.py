"""Command line front end: run, verify-examples, sweep and deviations.

Configuration is flat ``key = value`` text, one pair per line, with the
prefixes ``instance.``, ``mechanism.``, ``sweep.`` and ``output.``::

    command = sweep
    instance.T = 1800
    sweep.L = 100:400:100      # start:stop:step, inclusive
    sweep.lambda = 0.6
    sweep.seeds = 50
    mechanism.names = hetero-omz, hetero-omz:1, homo-omz

Exit codes: 0 success, 1 verification mismatch (or a profitable deviation),
2 configuration error, 3 I/O or golden-file integrity error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from .generators import Dist, InstanceConfig, generate_instance, stream_digest
from .harness import CSV_COLUMNS, ExperimentResult, deviation_sweep, parse_mechanism_name, run_experiment
from .mechanisms import MACHINES, MechanismSpec
from .model import AuctionOutcome, DeclaredProfile, ProfileError, UserProfile, declare_truthfully, validate_instance

EXIT_OK, EXIT_MISMATCH, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
COMMANDS = ("run", "verify-examples", "sweep", "deviations")
FORMATS = ("csv", "json")


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class IntegrityError(Exception):
    """The golden file does not match its recorded checksum."""


@dataclass(frozen=True)
class RunSpec:
    command: str = "run"
    instance: InstanceConfig = field(default_factory=InstanceConfig)
    instance_file: Optional[str] = None
    mechanisms: tuple[str, ...] = ("hetero-omz",)
    delta: float = 2.0
    beta: float = 10.0
    random_trials: int = 50
    seeds: tuple[int, ...] = (0,)
    sweep_L: tuple[int, ...] = ()
    sweep_lam: tuple[float, ...] = ()
    out: Optional[str] = None
    format: str = "csv"
    workers: int = 1

    def cells(self) -> list[tuple[int, float]]:
        Ls = self.sweep_L or (self.instance.L,)
        lams = self.sweep_lam or (self.instance.lam,)
        return [(L, lam) for L in Ls for lam in lams]


# --- config text -------------------------------------------------------------

def _int(v: str) -> int:
    x = float(v)
    if not x.is_integer():
        raise ValueError(f"{v!r} is not an integer")
    return int(x)


def _int_list(v: str) -> tuple[int, ...]:
    """``100,200`` or an inclusive range ``100:400:100``."""
    if ":" in v:
        parts = [_int(p) for p in v.split(":")]
        if len(parts) not in (2, 3):
            raise ValueError(f"bad range {v!r}")
        start, stop, step = parts[0], parts[1], parts[2] if len(parts) == 3 else 1
        if step <= 0 or stop < start:
            raise ValueError(f"empty range {v!r}")
        return tuple(range(start, stop + 1, step))
    return tuple(_int(p) for p in v.split(",") if p.strip())


def _float_list(v: str) -> tuple[float, ...]:
    if ":" in v:
        parts = [float(p) for p in v.split(":")]
        if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
            raise ValueError(f"bad range {v!r}")
        n = int(math.floor((parts[1] - parts[0]) / parts[2] + 1e-9)) + 1
        # rounded so 0.2:1:0.2 yields 0.6 rather than 0.6000000000000001
        return tuple(round(parts[0] + i * parts[2], 12) for i in range(n))
    return tuple(float(p) for p in v.split(",") if p.strip())


def _names(v: str) -> tuple[str, ...]:
    names = tuple(p.strip() for p in v.split(",") if p.strip())
    for n in names:
        _check_mechanism(n)
    return names


def _check_mechanism(entry: str):
    name, _, d = entry.partition(":")
    if name not in MACHINES:
        raise ValueError(f"unknown mechanism {name!r}; choose from {', '.join(sorted(MACHINES))}")
    if d and not float(d) >= 1:
        raise ValueError(f"delta in {entry!r} must be at least 1")


def _multiset(v: str):
    out = []
    for item in v.split(","):
        cap, _, cost = item.strip().partition(":")
        out.append((_int(cap), float(cost)))
    return tuple(out)


# key -> (target, converter); targets starting with "instance." land in InstanceConfig
_KEYS = {
    "command": ("command", str),
    "instance.T": ("instance.T", _int),
    "instance.L": ("instance.L", _int),
    "instance.lambda": ("instance.lam", float),
    "instance.cost": ("instance.cost", Dist.parse),
    "instance.capacity": ("instance.capacity", Dist.parse),
    "instance.interval": ("instance.interval", Dist.parse),
    "instance.order": ("instance.order", str),
    "instance.omega": ("instance.omega", float),
    "instance.multiset": ("instance.multiset", _multiset),
    "instance.file": ("instance_file", str),
    "mechanism.names": ("mechanisms", _names),
    "mechanism.delta": ("delta", float),
    "mechanism.beta": ("beta", float),
    "mechanism.random_trials": ("random_trials", _int),
    "sweep.L": ("sweep_L", _int_list),
    "sweep.lambda": ("sweep_lam", _float_list),
    "sweep.seeds": ("seeds", lambda v: tuple(range(_int(v)))),
    "sweep.seed_list": ("seeds", _int_list),
    "sweep.workers": ("workers", _int),
    "output.dir": ("out", str),
    "output.format": ("format", str),
}


def parse_config(text: str) -> RunSpec:
    """Parse config text into a RunSpec with defaults filled in."""
    values: dict = {}
    lines: dict = {}
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", no)
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key!r}", no)
        if key in lines:
            raise ConfigError(f"{key!r} already set on line {lines[key]}", no)
        target, conv = _KEYS[key]
        try:
            values[target] = conv(val)
        except (ValueError, TypeError) as e:
            raise ConfigError(f"{key}: {e}", no) from None
        lines[key] = no
        lines[target] = no
    return _resolve(values, lines)


def _resolve(values: dict, lines: dict) -> RunSpec:
    inst = {k.split(".", 1)[1]: v for k, v in values.items() if k.startswith("instance.")}
    top = {k: v for k, v in values.items() if not k.startswith("instance.")}
    if "L" not in inst:
        if not top.get("sweep_L"):
            raise ConfigError("instance.L (or sweep.L) is required")
        inst["L"] = top["sweep_L"][0]
    try:
        cfg = InstanceConfig(**inst).validate()
    except ValueError as e:
        raise ConfigError(str(e)) from None
    spec = RunSpec(instance=cfg, **top)
    return validate_spec(spec, lines)


def validate_spec(spec: RunSpec, lines: Optional[dict] = None) -> RunSpec:
    lines = lines or {}

    def fail(msg, target):
        raise ConfigError(msg, lines.get(target))

    if spec.command not in COMMANDS:
        fail(f"unknown command {spec.command!r}; choose from {', '.join(COMMANDS)}", "command")
    if not spec.delta >= 1:
        fail(f"delta must be at least 1, got {spec.delta}", "delta")
    if not spec.beta > 0:
        fail(f"beta must be positive, got {spec.beta}", "beta")
    if spec.random_trials < 0:
        fail("random_trials must be >= 0", "random_trials")
    if spec.format not in FORMATS:
        fail(f"format must be csv or json, got {spec.format!r}", "format")
    if spec.workers < 1:
        fail("workers must be >= 1", "workers")
    if not spec.mechanisms:
        fail("at least one mechanism is required", "mechanisms")
    for m in spec.mechanisms:
        try:
            _check_mechanism(m)
        except ValueError as e:
            fail(str(e), "mechanisms")
    if not spec.seeds:
        fail("at least one seed is required", "seeds")
    if any(L < 1 for L in spec.sweep_L):
        fail("sweep.L values must be >= 1", "sweep_L")
    if any(not lam > 0 for lam in spec.sweep_lam):
        fail("sweep.lambda values must be positive", "sweep_lam")
    if spec.instance_file is not None and not os.path.isfile(spec.instance_file):
        fail(f"instance file {spec.instance_file!r} does not exist", "instance_file")
    return spec


def _fmt(v) -> str:
    if isinstance(v, Dist):
        return str(v)
    return repr(v) if isinstance(v, float) else str(v)


def serialize_config(spec: RunSpec) -> str:
    """Inverse of ``parse_config`` for resolved specs."""
    c = spec.instance
    out = [
        f"command = {spec.command}",
        f"instance.T = {c.T}",
        f"instance.L = {c.L}",
        f"instance.lambda = {c.lam!r}",
        f"instance.cost = {c.cost}",
        f"instance.capacity = {c.capacity}",
        f"instance.interval = {c.interval}",
        f"instance.order = {c.order}",
    ]
    if c.omega is not None:
        out.append(f"instance.omega = {c.omega!r}")
    if c.multiset is not None:
        out.append("instance.multiset = " + ", ".join(f"{a}:{b!r}" for a, b in c.multiset))
    if spec.instance_file is not None:
        out.append(f"instance.file = {spec.instance_file}")
    out += [
        "mechanism.names = " + ", ".join(spec.mechanisms),
        f"mechanism.delta = {spec.delta!r}",
        f"mechanism.beta = {spec.beta!r}",
        f"mechanism.random_trials = {spec.random_trials}",
        "sweep.seed_list = " + ",".join(map(str, spec.seeds)),
        f"sweep.workers = {spec.workers}",
    ]
    if spec.sweep_L:
        out.append("sweep.L = " + ",".join(map(str, spec.sweep_L)))
    if spec.sweep_lam:
        out.append("sweep.lambda = " + ",".join(map(repr, spec.sweep_lam)))
    if spec.out is not None:
        out.append(f"output.dir = {spec.out}")
    out.append(f"output.format = {spec.format}")
    return "\n".join(out) + "\n"


# --- instance files ----------------------------------------------------------

def parse_instance(text: str, T: Optional[int] = None) -> list[UserProfile]:
    """Lines of ``id arrival departure capacity cost``; ``#`` starts a comment."""
    users = []
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ConfigError(f"expected 5 fields, got {len(parts)}", no)
        try:
            uid, a, d, cap = (_int(p) for p in parts[:4])
            users.append(UserProfile(uid, a, d, cap, float(parts[4])))
        except ValueError as e:
            raise ConfigError(str(e), no) from None
    try:
        validate_instance(users, T if T is not None else max((u.departure for u in users), default=1))
    except (ProfileError, ValueError) as e:
        raise ConfigError(f"invalid instance: {e}") from None
    return users


def load_instance(path, T: Optional[int] = None) -> list[UserProfile]:
    return parse_instance(Path(path).read_text(encoding="utf-8"), T)


def dump_instance(users: Sequence[UserProfile]) -> str:
    return stream_digest(users)


# --- output ------------------------------------------------------------------

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def render_records(records: Sequence[dict], columns: Sequence[str], fmt: str) -> str:
    if fmt == "json":
        rows = [{c: _json_safe(r[c]) for c in columns} for r in records]
        return json.dumps(rows, indent=1) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in records:
        w.writerow([_cell(r[c]) for c in columns])
    return buf.getvalue()


def results_text(result: ExperimentResult, fmt: str = "csv") -> str:
    return render_records([r.as_record() for r in result.rows], CSV_COLUMNS, fmt)


LOG_COLUMNS = ("mechanism", "seed", "t", "stage", "threshold", "new_threshold", "user_id",
               "allocation", "price", "phase")


def log_records(outcome: AuctionOutcome, seed) -> list[dict]:
    out = []
    for s in outcome.log:
        for d in s.decisions:
            out.append({"mechanism": outcome.mechanism, "seed": seed, "t": s.t, "stage": s.stage,
                        "threshold": s.threshold, "new_threshold": s.new_threshold,
                        "user_id": d.user_id, "allocation": d.allocation, "price": d.price,
                        "phase": d.phase})
    return out


def _write(out_dir: Optional[str], name: str, text: str):
    if out_dir is None:
        sys.stdout.write(text)
        return
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# --- commands ----------------------------------------------------------------

def _instances(spec: RunSpec, cfg: InstanceConfig):
    if spec.instance_file is not None:
        users = load_instance(spec.instance_file, cfg.T)
        return [(None, users)]
    return [(s, generate_instance(replace(cfg, seed=s))) for s in spec.seeds]


def cmd_run(spec: RunSpec) -> int:
    """Run each mechanism on each instance; write results and decision logs."""
    cfg = spec.instance
    rows, logs = [], []
    for seed, users in _instances(spec, cfg):
        stream = declare_truthfully(users)
        if seed is None:
            result = _file_rows(spec, users)
        else:
            result = run_experiment(replace(cfg, seed=seed), spec.mechanisms, [seed], spec.delta,
                                    spec.beta, spec.random_trials)
        rows += result.rows
        for entry in spec.mechanisms:
            name, d = parse_mechanism_name(entry, spec.delta)
            logs += log_records(MechanismSpec(name, cfg.L, cfg.T, spec.beta, d)(stream), seed)
    ext = spec.format
    _write(spec.out, f"results.{ext}", results_text(ExperimentResult(tuple(rows)), ext))
    if spec.out is not None:
        _write(spec.out, f"decisions.{ext}", render_records(logs, LOG_COLUMNS, ext))
    return EXIT_OK


def _file_rows(spec: RunSpec, users) -> ExperimentResult:
    from .baselines import offline_optimal
    from .harness import ResultRow
    from .model import winner_cost

    cfg = spec.instance
    stream = declare_truthfully(users)
    opt_L, opt_2L = offline_optimal(users, cfg.L), offline_optimal(users, 2 * cfg.L)
    rows = []
    for entry in spec.mechanisms:
        name, d = parse_mechanism_name(entry, spec.delta)
        o = MechanismSpec(name, cfg.L, cfg.T, spec.beta, d, allow_intervals=True)(stream)
        rows.append(ResultRow(entry, -1, cfg.T, cfg.L, cfg.lam, d, spec.beta, o.total_payment,
                              o.total_tasks, opt_L.total_cost if opt_L.sufficient else None,
                              opt_2L.total_cost if opt_2L.sufficient else None,
                              winner_cost(o, users), len(users)))
    return ExperimentResult(tuple(rows))


def _sweep_cell(args):
    spec, L, lam, seed = args
    cfg = replace(spec.instance, L=L, lam=lam)
    return run_experiment(cfg, spec.mechanisms, [seed], spec.delta, spec.beta, spec.random_trials).rows


def sweep(spec: RunSpec) -> ExperimentResult:
    """All (L, lambda, seed) cells; rows ordered by L, lambda, mechanism, seed."""
    jobs = [(spec, L, lam, s) for L, lam in spec.cells() for s in spec.seeds]
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as ex:
            chunks = list(ex.map(_sweep_cell, jobs))
    else:
        chunks = [_sweep_cell(j) for j in jobs]
    rows = [r for c in chunks for r in c]
    order = {m: i for i, m in enumerate(list(spec.mechanisms) + ["random"])}
    rows.sort(key=lambda r: (r.L, r.lam, order[r.mechanism], r.seed))
    return ExperimentResult(tuple(rows))


def cmd_sweep(spec: RunSpec) -> int:
    _write(spec.out, f"sweep.{spec.format}", results_text(sweep(spec), spec.format))
    return EXIT_OK


DEVIATION_COLUMNS = ("mechanism", "seed", "user_id", "truthful_utility", "deviations",
                     "max_gain", "worst_declaration")


def cmd_deviations(spec: RunSpec) -> int:
    """Cost deviations for every mechanism, plus window deviations for Hetero-OMG."""
    cfg = spec.instance
    records, bad = [], 0
    for seed, users in _instances(spec, cfg):
        for entry in spec.mechanisms:
            name, d = parse_mechanism_name(entry, spec.delta)
            mech = MechanismSpec(name, cfg.L, cfg.T, spec.beta, d)
            for rep in deviation_sweep(mech, users, cost=True, time=name == "hetero-omg"):
                worst = max(rep.deviations, key=lambda x: x.delta, default=None)
                bad += rep.max_gain > 0
                records.append({
                    "mechanism": entry, "seed": seed, "user_id": rep.user_id,
                    "truthful_utility": rep.truthful_utility, "deviations": len(rep.deviations),
                    "max_gain": rep.max_gain,
                    "worst_declaration": "" if worst is None or worst.delta <= 0 else
                    f"{worst.declared.arrival} {worst.declared.departure} {worst.declared.bid!r}",
                })
    _write(spec.out, f"deviations.{spec.format}", render_records(records, DEVIATION_COLUMNS, spec.format))
    if bad:
        print(f"{bad} user(s) with a profitable deviation", file=sys.stderr)
    return EXIT_MISMATCH if bad else EXIT_OK


# --- golden examples -----------------------------------------------------------

def _golden_payload(examples: dict) -> bytes:
    return json.dumps(examples, sort_keys=True, separators=(",", ":")).encode()


def load_golden(path=None) -> dict:
    if path is None:
        raw = resources.files("frugalmcs").joinpath("golden/examples.json").read_text(encoding="utf-8")
    else:
        raw = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(raw)
        examples, digest = doc["examples"], doc["sha256"]
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise IntegrityError(f"golden file is malformed: {e}") from None
    if hashlib.sha256(_golden_payload(examples)).hexdigest() != digest:
        raise IntegrityError("golden file checksum mismatch")
    return examples


def example_runs() -> dict[str, AuctionOutcome]:
    """The two hand-traced eight-step examples, replayed with the library."""
    ex1 = [DeclaredProfile(i, a, d, cap, b) for i, (a, d, cap, b) in
           enumerate([(1, 1, 4, 2.0), (2, 2, 4, 4.0), (4, 4, 4, 5.0), (6, 6, 4, 1.0), (7, 7, 4, 3.0)], 1)]
    ex2 = [DeclaredProfile(1, 1, 5, 4, 2.0)] + ex1[1:]
    return {
        "example1": MechanismSpec("hetero-omz", 8, 8, 5.0, 2.0)(ex1),
        "example2": MechanismSpec("hetero-omg", 8, 8, 5.0, 2.0)(ex2),
    }


def golden_record(outcome: AuctionOutcome) -> dict:
    steps = []
    for s in outcome.log:
        steps.append({
            "t": s.t, "threshold": s.threshold, "new_threshold": s.new_threshold,
            "decisions": [[d.user_id, d.allocation, d.price, d.phase] for d in s.decisions],
        })
    return {
        "mechanism": outcome.mechanism,
        "steps": steps,
        "allocations": {str(k): v for k, v in sorted(outcome.allocations.items())},
        "prices": {str(k): v for k, v in sorted(outcome.prices.items())},
    }


def first_divergence(expected: dict, actual: dict) -> Optional[tuple]:
    """``(t, field, expected, actual)`` of the first difference, ``t`` None for totals."""
    for e, a in zip(expected["steps"], actual["steps"]):
        for key in ("threshold", "decisions", "new_threshold"):
            if e[key] != a[key]:
                return (e["t"], key, e[key], a[key])
    if len(expected["steps"]) != len(actual["steps"]):
        return (None, "steps", len(expected["steps"]), len(actual["steps"]))
    for key in ("mechanism", "allocations", "prices"):
        if expected[key] != actual[key]:
            return (None, key, expected[key], actual[key])
    return None


def cmd_verify_examples(golden_path=None, runs: Optional[dict] = None, out=sys.stdout) -> int:
    try:
        golden = load_golden(golden_path)
    except IntegrityError as e:
        print(f"integrity error: {e}", file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        print(f"cannot read golden file: {e}", file=sys.stderr)
        return EXIT_IO
    runs = example_runs() if runs is None else runs
    status = EXIT_OK
    for name in sorted(golden):
        diff = first_divergence(golden[name], golden_record(runs[name]))
        if diff is None:
            print(f"{name}: ok", file=out)
        else:
            t, key, e, a = diff
            print(f"{name}: MISMATCH at t={t} field={key}: expected {e!r}, got {a!r}", file=out)
            status = EXIT_MISMATCH
    return status


def write_golden(path) -> None:
    """Regenerate the golden file from the current build (maintainers only)."""
    examples = {k: golden_record(v) for k, v in example_runs().items()}
    doc = {"sha256": hashlib.sha256(_golden_payload(examples)).hexdigest(), "examples": examples}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


# --- argument handling ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="frugalmcs", description="Frugal online incentive mechanism simulator")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--out", help="output directory (stdout if omitted)")
    p.add_argument("--format", choices=FORMATS)
    seeds = p.add_mutually_exclusive_group()
    seeds.add_argument("--seeds", type=int, metavar="N", help="use seeds 0..N-1")
    seeds.add_argument("--seed-list", help="comma separated seeds")
    p.add_argument("--mechanism", action="append", metavar="NAME",
                   help="mechanism (repeatable); NAME:delta overrides delta")
    p.add_argument("--instance", help="replay file: 'id arrival departure capacity cost' per line")
    p.add_argument("--L", type=int, help="number of tasks")
    p.add_argument("--workers", type=int, help="processes for sweep cells")
    p.add_argument("--golden", help="alternative golden file for verify-examples")
    return p


def spec_from_args(args) -> RunSpec:
    text = ""
    if args.config:
        text = Path(args.config).read_text(encoding="utf-8")
    if args.command == "verify-examples" and not text:
        return RunSpec(command="verify-examples")
    overrides = [f"command = {args.command}"]
    if args.L is not None:
        overrides.append(f"instance.L = {args.L}")
    body = "\n".join(l for l in text.splitlines()
                     if not l.split("#", 1)[0].strip().startswith("command")
                     and not (args.L is not None and l.split("#", 1)[0].strip().startswith("instance.L")))
    spec = parse_config(body + "\n" + "\n".join(overrides))
    changes = {}
    if args.out is not None:
        changes["out"] = args.out
    if args.format is not None:
        changes["format"] = args.format
    if args.seeds is not None:
        changes["seeds"] = tuple(range(args.seeds))
    if args.seed_list is not None:
        try:
            changes["seeds"] = _int_list(args.seed_list)
        except ValueError as e:
            raise ConfigError(f"--seed-list: {e}") from None
    if args.mechanism:
        changes["mechanisms"] = tuple(args.mechanism)
    if args.instance is not None:
        changes["instance_file"] = args.instance
    if args.workers is not None:
        changes["workers"] = args.workers
    return validate_spec(replace(spec, **changes))


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = spec_from_args(args)
        if spec.command == "verify-examples":
            return cmd_verify_examples(args.golden)
        return {"run": cmd_run, "sweep": cmd_sweep, "deviations": cmd_deviations}[spec.command](spec)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
