"""End-to-end acceptance checks.

Each test prints one ``PASS``/``FAIL criterion N`` line (visible with ``-s`` or in
the captured-output section) and then asserts the criterion at its stated tolerance.
"""
import itertools
import time

import numpy as np
import pytest

from asymq.analysis import (
    almost_nash_bound,
    ga_best_response,
    ga_exploitability,
    gaql_oracle,
    induced_lipschitz_check,
    la_exploitability,
    laqgi_oracle,
    value_perturbation_bound,
)
from asymq.cli import main
from asymq.experiments import ExperimentConfig, ga_greedy, run_compare, run_train, train
from asymq.game import ga_value, random_game
from asymq.learning import (
    TrainerConfig,
    run_eigaql_training,
    run_gaql_training,
    run_joint_training,
    run_laqgi_training,
)
from asymq.mdp import DiscountedMDP, bellman_optimal_operator, bellman_policy_operator, greedy_policy
from asymq.policies import PolicyGenerator, boltzmann_argmax_gap, generate_ga
from asymq.specfile import dumps, parse_spec

from conftest import random_mdp_tables, random_stochastic

pytestmark = pytest.mark.acceptance


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")


def wireless(seed):
    return parse_spec({"schema_version": 1, "generator": {"kind": "wireless", "seed": seed}})


def boltzmann_cfg(steps, tau, seed, q_init=0.0):
    gen = PolicyGenerator.boltzmann(tau)
    return TrainerConfig(steps, seed=seed, gen_lo=gen, gen_gl=gen, q_init=q_init)


SMALL_SEEDS = range(10)
SMALL_STEPS, SMALL_TAU = 200_000, 1.5


def small_game(seed):
    return random_game(seed, 4, 3, 3, beta=0.8)


def test_contraction_suite(capsys):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    violations = 0
    for _ in range(1000):
        n_s, n_a = rng.integers(1, 8), rng.integers(1, 6)
        r, p = random_mdp_tables(rng, n_s, n_a)
        mdp = DiscountedMDP(r, p, rng.uniform(0.01, 0.99))
        q1, q2 = rng.standard_normal((2, n_s, n_a)) * rng.uniform(0.1, 100)
        pi = random_stochastic(rng, (n_s, n_a))
        dist = np.max(np.abs(q1 - q2))
        slack = 1e-12 * max(1.0, np.max(np.abs(q1)), np.max(np.abs(q2)), np.max(np.abs(r)))
        for lhs in (np.max(np.abs(bellman_optimal_operator(mdp, q1) - bellman_optimal_operator(mdp, q2))),
                    np.max(np.abs(bellman_policy_operator(mdp, pi, q1) - bellman_policy_operator(mdp, pi, q2)))):
            violations += lhs > mdp.beta * dist + slack
    elapsed = time.perf_counter() - start
    ok = violations == 0 and elapsed < 10
    report(capsys, 1, ok, f"{violations} contraction violations in 1000 triples, {elapsed:.2f}s")
    assert ok


def test_ga_learning_converges(capsys):
    start = time.perf_counter()
    errors = []
    for seed in SMALL_SEEDS:
        game, pi_lo = small_game(seed)
        q, _ = run_gaql_training(game, pi_lo, boltzmann_cfg(SMALL_STEPS, SMALL_TAU, seed))
        errors.append(np.max(np.abs(q - gaql_oracle(game))) / game.value_scale("gl"))
    elapsed = time.perf_counter() - start
    hits = sum(e <= 0.05 for e in errors)
    ok = hits >= 9 and elapsed < 60
    report(capsys, 2, ok, f"{hits}/10 within 0.05 scale (max {max(errors):.4f}), {elapsed:.1f}s")
    assert ok


def test_la_learning_against_frozen_ga(capsys):
    errors = []
    for seed in SMALL_SEEDS:
        game, _ = small_game(seed)
        eta = random_stochastic(np.random.default_rng(seed + 100), (4, 3, 3))
        q, _ = run_laqgi_training(game, eta, boltzmann_cfg(SMALL_STEPS, SMALL_TAU, seed))
        errors.append(np.max(np.abs(q - laqgi_oracle(game, eta))) / game.value_scale("lo"))
    hits = sum(e <= 0.05 for e in errors)
    report(capsys, 3, hits >= 9, f"{hits}/10 within 0.05 scale (max {max(errors):.4f})")
    assert hits >= 9


def test_joint_learning_converges(capsys):
    errors = []
    for seed in SMALL_SEEDS:
        game, _ = small_game(seed)
        q_lo, _, _ = run_joint_training(game, boltzmann_cfg(SMALL_STEPS, SMALL_TAU, seed))
        eta = generate_ga(PolicyGenerator.boltzmann(SMALL_TAU), gaql_oracle(game))
        errors.append(np.max(np.abs(q_lo - laqgi_oracle(game, eta))) / game.value_scale("lo"))
    hits = sum(e <= 0.07 for e in errors)
    report(capsys, 4, hits >= 8, f"{hits}/10 within 0.07 scale (max {max(errors):.4f})")
    assert hits >= 8


def test_oracle_greedy_policies_are_unexploitable(capsys):
    worst_la = worst_ga = worst_disagree = 0.0
    ga_failures = []
    for seed in range(20):
        n_s = 1 + seed % 3
        game, _ = random_game(seed, n_s, 3, 3)
        eta = random_stochastic(np.random.default_rng(seed), (n_s, 3, 3))
        pi_lo = greedy_policy(laqgi_oracle(game, eta))
        fast, slow = la_exploitability(game, pi_lo, eta), la_exploitability(game, pi_lo, eta, method="enumerate")
        worst_la = max(worst_la, fast, slow)
        worst_disagree = max(worst_disagree, abs(fast - slow))
        pi_gl = ga_greedy(gaql_oracle(game))
        for choice in itertools.product(range(3), repeat=n_s):
            det = np.eye(3)[list(choice)]
            fast = ga_exploitability(game, det, pi_gl)
            slow = ga_exploitability(game, det, pi_gl, method="enumerate")
            worst_ga = max(worst_ga, fast, slow)
            worst_disagree = max(worst_disagree, abs(fast - slow))
            if max(fast, slow) > 1e-6:
                ga_failures.append((seed, choice, len(set(choice)) == 1))
    constant_failures = sum(c for *_, c in ga_failures)
    ok = worst_la <= 1e-6 and worst_ga <= 1e-6 and worst_disagree <= 1e-8
    report(capsys, 5, ok,
           f"LA max {worst_la:.2e}; GA max {worst_ga:.3g} with {len(ga_failures)} exploitable "
           f"(game, deterministic LA) pairs, {constant_failures} of them state-independent; "
           f"shortcut/enumeration disagreement {worst_disagree:.2e}")
    assert ok


@pytest.mark.parametrize("tau", [0.5, 1.3])
def test_near_equilibrium_bound(capsys, tau):
    cfg = ExperimentConfig(mode="as", steps=40_000, tau=tau)
    la_hits, ga_worst, ga_trained_hits = 0, 0.0, 0
    for seed in range(20):
        spec = wireless(seed)
        game = spec.game
        run = train(spec, cfg, "as", seed)
        q_lo, q_gl = run.tables["q_lo"], run.tables["q_gl"]
        pi_lo, pi_gl = greedy_policy(q_lo), ga_greedy(q_gl)
        eps = almost_nash_bound(game, q_gl, tau).eps_lemma
        la_hits += la_exploitability(game, pi_lo, pi_gl) <= eps
        ga_worst = max(ga_worst, ga_exploitability(game, pi_lo, ga_greedy(gaql_oracle(game))))
        ga_trained_hits += ga_exploitability(game, pi_lo, pi_gl) <= 1e-6
    ok = la_hits >= 18 and ga_worst <= 1e-6
    report(capsys, 6, ok,
           f"tau={tau}: LA within bound on {la_hits}/20; GA limit-table max gap {ga_worst:.2e} "
           f"(trained GA tables unexploitable on {ga_trained_hits}/20, informational)")
    assert ok


def test_predictive_learning_oracle(capsys):
    dominated = 0
    for seed in range(20):
        game, pi_lo = random_game(seed)
        _, v, _ = ga_best_response(game, pi_lo)
        rng = np.random.default_rng(seed)
        dominated += all(np.all(v >= ga_value(game, pi_lo, random_stochastic(rng, (7, 4, 5))) - 1e-9)
                         for _ in range(100))
    errors = []
    for seed in range(10):
        game, pi_lo = random_game(seed)
        q_star, _, _ = ga_best_response(game, pi_lo)
        scale = game.value_scale("gl")
        q, _ = run_eigaql_training(game, pi_lo, boltzmann_cfg(300_000, 1.6, seed, q_init=scale))
        errors.append(np.max(np.abs(q - q_star)) / scale)
    hits = sum(e <= 0.05 for e in errors)
    ok = dominated == 20 and hits >= 9
    report(capsys, 7, ok, f"dominance on {dominated}/20 games; EIGAQL {hits}/10 within 0.05 scale "
                          f"(max {max(errors):.4f})")
    assert ok


def test_strategy_ordering(capsys):
    spec = wireless(0)
    cfg = ExperimentConfig(mode="strategies", steps=40_000, tau=1.3, samples=100, horizon=200, repeats=20)
    _, summary = run_compare(spec, cfg)
    mean = summary["mean_value"]
    delta = summary["deltas"]["as-nc"]
    ok = mean["jc"] >= mean["as"] >= mean["nc"] and delta["mean_value_delta"] - delta["ci95_value_delta"] > 0
    report(capsys, 8, ok, f"JC {mean['jc']:.3f} AS {mean['as']:.3f} NC {mean['nc']:.3f}; "
                          f"AS-NC {delta['mean_value_delta']:.3f} +/- {delta['ci95_value_delta']:.3f}")
    assert ok


def _pair_means(tau):
    cfg = ExperimentConfig(mode="as", steps=40_000, tau=tau, samples=100, horizon=200, repeats=20)
    _, summary, _ = run_train(wireless(0), cfg)
    pairs = next(iter(summary["runs"].values()))["final"].keys()
    return {p: float(np.mean([run["final"][p]["value_lo"] for run in summary["runs"].values()]))
            for p in pairs}


def test_temperature_ordering(capsys):
    warm, cold = _pair_means(1.3), _pair_means(0.1)
    gg = warm.pop("greedy/greedy")
    warm_ok = all(gg >= v for v in warm.values())
    values = list(cold.values())
    spread = (max(values) - min(values)) / abs(cold["greedy/greedy"])
    ok = warm_ok and spread <= 0.05
    others = ", ".join(f"{k} {v:.3f}" for k, v in warm.items())
    report(capsys, 9, ok, f"tau=1.3 greedy/greedy {gg:.3f} vs {others}; "
                          f"tau=0.1 max gap {100 * spread:.2f}% of greedy/greedy")
    assert ok


def test_predictive_ordering(capsys):
    spec = parse_spec({"schema_version": 1, "generator": {"kind": "random", "seed": 0}})
    cfg = ExperimentConfig(mode="predictive", steps=300_000, tau=1.6, samples=100, horizon=200, repeats=20)
    _, summary = run_compare(spec, cfg)
    delta = summary["deltas"]["eigaql-gaql"]
    ok = delta["mean_value_delta"] >= 0
    report(capsys, 10, ok, f"mean V_EIGAQL - V_GAQL = {delta['mean_value_delta']:.4f} "
                           f"+/- {delta['ci95_value_delta']:.4f} over 20 games")
    assert ok


def test_appendix_bound_suites(capsys):
    rng = np.random.default_rng(11)
    start = time.perf_counter()
    violations = {"perturbation": 0, "lipschitz": 0, "argmax_gap": 0}
    for i in range(200):
        n_s, n_a = rng.integers(1, 6), rng.integers(1, 5)
        beta = rng.uniform(0.05, 0.95)
        r1, p1 = random_mdp_tables(rng, n_s, n_a)
        r2, p2 = random_mdp_tables(rng, n_s, n_a)
        mix = rng.uniform(0, 1, size=2)
        m1 = DiscountedMDP(r1, p1, beta)
        m2 = DiscountedMDP((1 - mix[0]) * r1 + mix[0] * r2, (1 - mix[1]) * p1 + mix[1] * p2, beta)
        lhs, rhs = value_perturbation_bound(m1, m2, random_stochastic(rng, (n_s, n_a)))
        violations["perturbation"] += lhs > rhs + 1e-9

        dims = rng.integers(1, 4, size=3)
        game, pi = random_game(i, *map(int, dims), beta=float(rng.uniform(0.05, 0.95)))
        e1, e2 = random_stochastic(rng, tuple(dims)), random_stochastic(rng, tuple(dims))
        violations["lipschitz"] += not all(c.ok for c in induced_lipschitz_check(game, e1, e2, pi))

        f = rng.standard_normal(rng.integers(1, 9)) * rng.uniform(0.1, 5)
        rep = boltzmann_argmax_gap(np.round(f) if i % 3 == 0 else f, rng.uniform(0.05, 5))
        violations["argmax_gap"] += rep.exact_tv > rep.bound + 1e-12
    elapsed = time.perf_counter() - start
    ok = not any(violations.values()) and elapsed < 10
    report(capsys, 11, ok, f"violations {violations} over 200 instances each, {elapsed:.2f}s")
    assert ok


def test_commands_are_deterministic(capsys, tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(dumps({"schema_version": 1, "generator": {"kind": "random", "seed": 3, "dims": [3, 2, 2]}}))
    fast = ["--steps", "3000", "--samples", "50", "--horizon", "80", "--seed", "5"]
    commands = {
        "solve": ["solve"],
        "train": ["train", *fast],
        "compare": ["compare", "--mode", "predictive", "--repeats", "2", *fast],
    }
    identical = {}
    for name, args in commands.items():
        outputs = []
        for k in range(2):
            out = tmp_path / f"{name}{k}"
            assert main([*args, "--spec", str(spec), "--out-dir", str(out)]) == 0
            outputs.append((out / "results.csv").read_bytes())
        identical[name] = outputs[0] == outputs[1]
    outputs = []
    for k in range(2):
        out = tmp_path / f"analyze{k}"
        assert main(["analyze", "--spec", str(spec), "--out-dir", str(out), "--tau", "1.0",
                     "--tables", str(tmp_path / "train0" / "tables.json")]) == 0
        outputs.append((out / "results.csv").read_bytes())
    identical["analyze"] = outputs[0] == outputs[1]
    ok = all(identical.values())
    report(capsys, 12, ok, f"byte-identical results.csv: {identical}")
    assert ok
