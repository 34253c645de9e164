import csv
import io
import json

import numpy as np
import pytest

from asymq.cli import main
from asymq.experiments import (
    CSV_HEADER,
    STREAMS,
    ExperimentConfig,
    Results,
    derive_seed,
    evaluate_pair,
    run_compare,
    run_train,
)
from asymq.errors import ValidationError
from asymq.game import MarkovGame, random_game
from asymq.specfile import dumps, game_to_spec, parse_spec

FAST = ["--steps", "2000", "--samples", "40", "--horizon", "60"]


def write_spec(path, doc):
    path.write_text(dumps(doc))
    return str(path)


def one_state_doc(beta=0.5):
    r = [[[1.0, 1.0], [1.0, 1.0]]]
    return {"schema_version": 1, "game": {
        "reward_lo": r, "reward_gl": r, "transition": [[[[1.0], [1.0]], [[1.0], [1.0]]]],
        "beta_lo": beta, "beta_gl": beta}}


def random_doc(seed=1, dims=(3, 2, 2)):
    return {"schema_version": 1, "generator": {"kind": "random", "seed": seed, "dims": list(dims)}}


def read_rows(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_solve_one_state_geometric_series(tmp_path):
    spec = write_spec(tmp_path / "s.json", one_state_doc(0.5))
    assert main(["solve", "--spec", spec, "--out-dir", str(tmp_path / "out")]) == 0
    tables = json.loads((tmp_path / "out" / "tables.json").read_text())["runs"]["solve-r00"]
    np.testing.assert_allclose(tables["q_lo"], 2.0, atol=1e-9)
    np.testing.assert_allclose(tables["q_gl"], 2.0, atol=1e-9)
    rows = read_rows(tmp_path / "out" / "results.csv")
    assert tuple(rows[0].keys()) == CSV_HEADER
    values = [float(r["value"]) for r in rows if r["metric"] == "value_lo"]
    assert values == pytest.approx([2.0], abs=1e-9)


def test_analyze_on_solved_tables_is_unexploitable(tmp_path):
    spec = write_spec(tmp_path / "s.json", random_doc())
    assert main(["solve", "--spec", spec, "--out-dir", str(tmp_path / "solve")]) == 0
    assert main(["analyze", "--spec", spec, "--out-dir", str(tmp_path / "an"),
                 "--tables", str(tmp_path / "solve" / "tables.json"), "--tau", "1.0"]) == 0
    summary = json.loads((tmp_path / "an" / "summary.json").read_text())
    assert summary["exploitability"]["la_gap"] <= 1e-8
    assert summary["exploitability"]["ga_gap"] <= 1e-8
    assert summary["rbe_residual"]["residual_opt"] <= 1e-8


def test_train_output_is_byte_identical(tmp_path):
    spec = write_spec(tmp_path / "s.json", random_doc())
    outs = []
    for name in ("a", "b"):
        assert main(["train", "--spec", spec, "--out-dir", str(tmp_path / name), "--seed", "7", *FAST]) == 0
        outs.append((tmp_path / name / "results.csv").read_bytes())
    assert outs[0] == outs[1]
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    block = summary["runs"]["as-r00"]
    assert block["train_seed"] == derive_seed(7, STREAMS["as"], 0)
    assert block["config"]["steps"] == 2000
    assert block["spec"] == random_doc()
    assert set(block["final"]) == {"greedy/greedy", "greedy/boltzmann", "boltzmann/greedy", "boltzmann/boltzmann"}


def test_seed_changes_output(tmp_path):
    spec = write_spec(tmp_path / "s.json", random_doc())
    for seed in ("1", "2"):
        assert main(["train", "--spec", spec, "--out-dir", str(tmp_path / seed), "--seed", seed, *FAST]) == 0
    assert (tmp_path / "1" / "results.csv").read_bytes() != (tmp_path / "2" / "results.csv").read_bytes()


def test_zero_steps_emits_only_first_round(tmp_path):
    spec = write_spec(tmp_path / "s.json", random_doc())
    assert main(["train", "--spec", spec, "--out-dir", str(tmp_path / "o"),
                 "--steps", "0", "--samples", "20", "--horizon", "30"]) == 0
    rows = read_rows(tmp_path / "o" / "results.csv")
    curve = [r for r in rows if r["metric"].startswith("partial_return")]
    assert curve and {r["t"] for r in curve} == {"0"}
    assert all(r["t"] == "" for r in rows if r["metric"].startswith("final_return"))


def test_exit_codes(tmp_path):
    good = write_spec(tmp_path / "s.json", random_doc())
    out = str(tmp_path / "o")
    assert main(["solve", "--out-dir", out]) == 1
    assert main(["bogus"]) == 1
    assert main(["train", "--spec", good, "--out-dir", out, "--mode", "xx"]) == 1
    (tmp_path / "bad.json").write_text('{"schema_version": 1,\n "game": ')
    assert main(["solve", "--spec", str(tmp_path / "bad.json"), "--out-dir", out]) == 2
    unknown = write_spec(tmp_path / "u.json", {**random_doc(), "foo": 1})
    assert main(["solve", "--spec", unknown, "--out-dir", out]) == 2
    assert main(["solve", "--spec", str(tmp_path / "missing.json"), "--out-dir", out]) == 2
    assert main(["train", "--spec", good, "--out-dir", out, "--steps", "-3"]) == 2


def test_cooperative_mode_needs_shared_reward(tmp_path, capsys):
    spec = write_spec(tmp_path / "s.json", random_doc())
    assert main(["train", "--spec", spec, "--out-dir", str(tmp_path / "o"), "--mode", "jc", *FAST]) == 2
    assert "invalid input" in capsys.readouterr().err


def test_analyze_dimension_mismatch(tmp_path):
    small = write_spec(tmp_path / "small.json", random_doc(dims=(2, 2, 2)))
    big = write_spec(tmp_path / "big.json", random_doc(dims=(3, 2, 2)))
    assert main(["solve", "--spec", small, "--out-dir", str(tmp_path / "solve")]) == 0
    assert main(["analyze", "--spec", big, "--out-dir", str(tmp_path / "an"),
                 "--tables", str(tmp_path / "solve" / "tables.json"), "--tau", "1.0"]) == 2


def test_analyze_requires_run_choice(tmp_path):
    spec = write_spec(tmp_path / "s.json", random_doc())
    assert main(["train", "--spec", spec, "--out-dir", str(tmp_path / "t"), "--repeats", "2", *FAST]) == 0
    tables = str(tmp_path / "t" / "tables.json")
    args = ["analyze", "--spec", spec, "--out-dir", str(tmp_path / "an"), "--tables", tables, "--tau", "1.3"]
    assert main(args) == 2
    assert main([*args, "--run", "as-r00"]) == 0


def test_derive_seed_streams_are_distinct():
    seeds = {derive_seed(0, s, r) for s in STREAMS.values() for r in range(5)}
    assert len(seeds) == len(STREAMS) * 5
    assert derive_seed(3, 1, 2) == derive_seed(3, 1, 2)
    assert derive_seed(3, 1, 2) != derive_seed(4, 1, 2)


def test_config_validation():
    with pytest.raises(ValidationError):
        ExperimentConfig(mode="as", steps=-1, tau=1.0)
    with pytest.raises(ValidationError):
        ExperimentConfig(mode="as", steps=10, tau=0.0)
    with pytest.raises(ValidationError):
        ExperimentConfig(mode="as", steps=10, tau=1.0, samples=0)


def test_results_csv_format():
    res = Results.empty()
    res.add("r", 3, "as", "greedy/greedy", 0, "m", 0.1)
    res.add("r", 3, "as", "greedy/greedy", None, "n", 1 / 3)
    lines = res.csv_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert lines[1] == "r,3,as,greedy/greedy,0,m,0.10000000000000001"
    assert float(lines[2].split(",")[-1]) == 1 / 3
    assert lines[2].split(",")[4] == ""


def test_evaluation_matches_exact_value():
    game, pi_lo = random_game(2, 3, 2, 2)
    pi_gl = np.full((3, 2, 2), 0.5)
    ev = evaluate_pair(game, pi_lo, pi_gl, samples=4000, horizon=60, seed=0)
    assert ev.curve_lo.shape == ev.curve_gl.shape
    assert abs(ev.final_lo - ev.value_lo) <= 4 * ev.final_lo_hw + 1e-6


def test_compare_predictive_emits_deltas():
    spec = parse_spec(random_doc())
    cfg = ExperimentConfig(mode="predictive", steps=2000, tau=1.6, samples=40, horizon=60, repeats=2)
    res, summary = run_compare(spec, cfg)
    metrics = {row[5] for row in res.rows if row[2] == "delta"}
    assert {"final_return_gl_delta", "value_gl_delta"} <= metrics
    assert summary["deltas"]


def test_train_fixed_la_modes_use_spec_policy():
    game, pi_lo = random_game(0, 2, 2, 2)
    spec = game_to_spec(game, pi_lo)
    for mode in ("gaql", "eigaql"):
        cfg = ExperimentConfig(mode=mode, steps=500, tau=1.0, samples=10, horizon=20)
        _, summary, tables = run_train(spec, cfg)
        block = summary["runs"][f"{mode}-r00"]
        assert list(block["final"]) == ["fixed/greedy"]
        assert np.asarray(tables[f"{mode}-r00"]["q_gl"]).shape == (2, 2, 2)


def test_cooperative_training_on_shared_reward():
    r = np.random.default_rng(0).standard_normal((2, 2, 2))
    p = np.full((2, 2, 2, 2), 0.5)
    spec = game_to_spec(MarkovGame(r, r, p, 0.7, 0.7))
    cfg = ExperimentConfig(mode="strategies", steps=1000, tau=1.0, samples=10, horizon=20)
    _, summary = run_compare(spec, cfg)
    assert "jc" in json.dumps(summary)
