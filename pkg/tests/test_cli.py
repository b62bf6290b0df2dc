import io
import json
from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from frugalmcs import cli
from frugalmcs.cli import (ConfigError, RunSpec, cmd_verify_examples, dump_instance, example_runs, main,
                           parse_config, parse_instance, serialize_config, sweep)
from frugalmcs.generators import Dist, InstanceConfig
from frugalmcs.mechanisms import MechanismSpec
from frugalmcs.model import DeclaredProfile as D


def test_minimal_config_gets_experiment_defaults():
    spec = parse_config("instance.L = 100\n")
    c = spec.instance
    assert (c.T, c.L, c.lam, c.cost) == (1800, 100, 0.6, Dist.uniform(1, 10))
    assert (spec.delta, spec.beta) == (2.0, 10.0)


def test_empty_config_needs_L():
    with pytest.raises(ConfigError, match="L"):
        parse_config("")


def test_delta_below_one_rejected_with_line():
    with pytest.raises(ConfigError) as e:
        parse_config("instance.L = 5\nmechanism.delta = 0.5\n")
    assert e.value.line == 2


@pytest.mark.parametrize("text,line", [
    ("instance.L = 5\nbogus = 1\n", 2),
    ("instance.L = 5\ninstance.T 9\n", 2),
    ("instance.L = 5.5\n", 1),
    ("instance.L = 5\ninstance.L = 6\n", 2),
    ("instance.L = 5\nmechanism.names = homo\n", 2),
    ("instance.L = 5\noutput.format = xml\n", 2),
    ("instance.L = 5\nsweep.L = 9:3:1\n", 2),
])
def test_config_errors_carry_lines(text, line):
    with pytest.raises(ConfigError) as e:
        parse_config(text)
    assert e.value.line == line


def test_sweep_L_alone_is_enough():
    spec = parse_config("sweep.L = 100:400:100\nsweep.lambda = 0.2:1:0.2\n")
    assert spec.sweep_L == (100, 200, 300, 400)
    assert spec.sweep_lam == (0.2, 0.4, 0.6, 0.8, 1.0)
    assert len(spec.cells()) == 20


def test_missing_instance_file():
    with pytest.raises(ConfigError, match="does not exist"):
        parse_config("instance.L = 5\ninstance.file = /no/such/file\n")


specs = st.builds(
    lambda T, L, lam, mechs, delta, seeds, Ls, fmt, order: RunSpec(
        command="sweep", instance=InstanceConfig(T=T, L=L, lam=lam, capacity=Dist.randint(1, 10), order=order,
                                                 multiset=((1, 2.5), (3, 1.0)) if order == "secretary" else None),
        mechanisms=tuple(mechs), delta=delta, seeds=tuple(seeds), sweep_L=tuple(Ls), format=fmt),
    st.integers(1, 5000), st.integers(1, 500), st.floats(0.01, 5),
    st.lists(st.sampled_from(["homo-omz", "hetero-omz", "hetero-omz:1", "hetero-omg"]), min_size=1, max_size=3),
    st.floats(1, 8), st.lists(st.integers(0, 999), min_size=1, max_size=4),
    st.lists(st.integers(1, 500), max_size=3), st.sampled_from(["csv", "json"]),
    st.sampled_from(["iid", "secretary"]))


@given(specs)
def test_config_round_trip(spec):
    text = serialize_config(spec)
    again = parse_config(text)
    assert again == spec
    assert serialize_config(again) == text


def test_verify_examples_pass():
    out = io.StringIO()
    assert cmd_verify_examples(out=out) == 0
    assert out.getvalue() == "example1: ok\nexample2: ok\n"


def test_verify_examples_localizes_regressions():
    runs = example_runs()
    ex1 = [D(1, 1, 1, 4, 2.0), D(2, 2, 2, 4, 4.0), D(3, 4, 4, 4, 5.0), D(4, 6, 6, 4, 1.0), D(5, 7, 7, 4, 3.0)]
    # delta=1 agrees at t=1,2 (B=2 buys at 2) and first differs at t=4 (B=4 -> price 2)
    runs["example1"] = MechanismSpec("hetero-omz", 8, 8, 5.0, 1.0)(ex1)
    out = io.StringIO()
    assert cmd_verify_examples(runs=runs, out=out) == 1
    assert "example1: MISMATCH at t=4 field=new_threshold: expected 4.0, got 2.0" in out.getvalue()
    assert "example2: ok" in out.getvalue()


def test_verify_examples_detects_corruption(tmp_path):
    src = json.loads((cli.resources.files("frugalmcs") / "golden/examples.json").read_text())
    src["examples"]["example1"]["prices"]["4"] = 5.0
    bad = tmp_path / "golden.json"
    bad.write_text(json.dumps(src))
    assert cmd_verify_examples(bad) == 3
    bad.write_text("{not json")
    assert cmd_verify_examples(bad) == 3
    assert cmd_verify_examples(tmp_path / "missing.json") == 3


def test_golden_file_is_consistent(tmp_path):
    fresh = tmp_path / "g.json"
    cli.write_golden(fresh)
    shipped = (cli.resources.files("frugalmcs") / "golden/examples.json").read_text()
    assert fresh.read_text() == shipped


def test_sweep_rows_per_L():
    spec = parse_config("sweep.L = 100:400:100\nmechanism.names = hetero-omz, homo-omz\n"
                        "mechanism.random_trials = 0\nsweep.seed_list = 7\n")
    rows = sweep(spec).rows
    assert [(r.L, r.mechanism) for r in rows] == [(L, m) for L in (100, 200, 300, 400)
                                                  for m in ("hetero-omz", "homo-omz")]


def test_single_cell_single_row():
    spec = parse_config("instance.L = 20\ninstance.T = 100\nmechanism.random_trials = 0\n")
    assert len(sweep(spec).rows) == 1


def test_lambda_axis():
    spec = parse_config("instance.T = 200\nsweep.L = 500\nsweep.lambda = 0.2:1:0.2\n"
                        "mechanism.random_trials = 0\n")
    rows = sweep(spec).rows
    assert [r.lam for r in rows] == [0.2, 0.4, 0.6, 0.8, 1.0]


def test_instance_file_round_trip():
    text = "# example 2\n1 1 5 4 2\n2 2 2 4 4\n3 4 4 4 5\n4 6 6 4 1\n5 7 7 4 3\n"
    users = parse_instance(text, 8)
    assert users[0].departure == 5 and users[4].unit_cost == 3.0
    assert parse_instance(dump_instance(users), 8) == users
    with pytest.raises(ConfigError) as e:
        parse_instance("1 1 1 1 1\n2 2 1\n")
    assert e.value.line == 2
    with pytest.raises(ConfigError):
        parse_instance("1 3 2 1 1\n", 8)


def test_main_run_on_instance_file(tmp_path, capsys):
    f = tmp_path / "ex2.txt"
    f.write_text("1 1 5 4 2\n2 2 2 4 4\n3 4 4 4 5\n4 6 6 4 1\n5 7 7 4 3\n")
    cfg = tmp_path / "c.txt"
    cfg.write_text("instance.T = 8\ninstance.L = 8\nmechanism.beta = 5\n")
    rc = main(["run", "--config", str(cfg), "--instance", str(f), "--mechanism", "hetero-omg",
               "--out", str(tmp_path / "o")])
    assert rc == 0
    rows = (tmp_path / "o" / "results.csv").read_text().splitlines()
    assert rows[1].startswith("hetero-omg,-1,8,8,0.6,2.0,5.0,40.0,8,")
    log = (tmp_path / "o" / "decisions.csv").read_text()
    assert "hetero-omg,,4,3,4.0,5.0,1,4,5.0,boundary" in log


def test_main_json_and_exit_codes(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("instance.T = 100\ninstance.L = 10\nmechanism.random_trials = 2\n")
    assert main(["run", "--config", str(cfg), "--format", "json", "--seeds", "2", "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "results.json").read_text())
    assert len(data) == 4 and set(data[0]) == set(cli.CSV_COLUMNS)
    assert main(["run", "--config", str(cfg), "--mechanism", "nope"]) == 2
    assert main(["run", "--config", str(tmp_path / "absent")]) == 3
    assert main(["verify-examples"]) == 0


def test_deviations_command(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("instance.T = 40\ninstance.L = 10\n")
    assert main(["deviations", "--config", str(cfg), "--mechanism", "hetero-omz", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "deviations.csv").read_text().splitlines()
    assert text[0] == ",".join(cli.DEVIATION_COLUMNS) and len(text) > 1
    ex = tmp_path / "gap.txt"
    ex.write_text("1 4 4 5 7\n2 5 7 4 4\n3 3 5 5 6\n4 8 8 4 6\n5 8 8 2 4\n6 2 3 4 8\n7 4 6 6 1\n")
    cfg.write_text("instance.T = 8\ninstance.L = 8\nmechanism.beta = 5\n")
    assert main(["deviations", "--config", str(cfg), "--instance", str(ex), "--mechanism", "hetero-omg",
                 "--out", str(tmp_path)]) == 1


def test_seed_flags_override(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("instance.L = 10\nsweep.seeds = 9\n")
    args = cli.build_parser().parse_args(["sweep", "--config", str(cfg), "--seed-list", "4,2"])
    assert cli.spec_from_args(args).seeds == (4, 2)
    args = cli.build_parser().parse_args(["sweep", "--config", str(cfg), "--L", "30"])
    spec = cli.spec_from_args(args)
    assert spec.seeds == tuple(range(9)) and spec.instance.L == 30 and spec.command == "sweep"
