"""Seeded training/evaluation campaigns and their long-format results.

Seed fan-out: every random stream is derived from the master seed with
``numpy.random.SeedSequence(master, spawn_key=(stream, repeat))``, so adding a
mode never perturbs another mode's stream. Stream ids are listed in ``STREAMS``.

Evaluation curve: for a frozen policy pair, ``samples`` rollouts of length
``horizon`` start from uniformly drawn states; row ``t = k`` of the curve is the
mean of the partial discounted sum over rounds ``0..k`` for ``k < CURVE_POINTS``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .analysis import (
    almost_nash_bound,
    exploitability_report,
    ga_best_response,
    gaql_oracle,
    laqgi_oracle,
    rbe_residual,
)
from .errors import ShapeError, ValidationError
from .game import MarkovGame, compose_joint_policy, flatten_joint, ga_value, la_value
from .learning import (
    TrainerConfig,
    run_cooperative_training,
    run_eigaql_training,
    run_gaql_training,
    run_independent_training,
    run_joint_training,
    visitation_diagnostics,
)
from .mdp import discounted_rollouts, greedy_policy
from .policies import PolicyGenerator, generate, generate_ga
from .specfile import GameSpec, with_generator_seed

CSV_HEADER = ("run_id", "seed", "mode", "policy_pair", "t", "metric", "value")
CURVE_POINTS = 50

TRAIN_MODES = ("as", "nc", "jc", "gaql", "eigaql")
COMPARE_MODES = ("strategies", "predictive")

STREAMS = {"as": 0, "nc": 1, "jc": 2, "gaql": 3, "eigaql": 4, "eval": 100}

# Defaults per generator kind: (training steps, temperature, evaluation horizon).
DEFAULTS = {
    "wireless": (40_000, 1.3, 5_000),
    "random": (300_000, 1.6, 5_000),
    "explicit": (40_000, 1.3, 5_000),
}


def derive_seed(master: int, stream: int, repeat: int = 0) -> int:
    """64-bit seed for ``(stream, repeat)`` under ``master``."""
    ss = np.random.SeedSequence(master, spawn_key=(stream, repeat))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    steps: int
    tau: float
    seed: int = 0
    omega: float = 0.85
    samples: int = 1000
    horizon: int = 5000
    repeats: int = 1
    tol: float = 1e-10

    def __post_init__(self):
        if self.steps < 0:
            raise ValidationError("steps must be non-negative")
        if not self.tau > 0:
            raise ValidationError("tau must be positive")
        if self.samples < 1:
            raise ValidationError("samples must be positive")
        if self.horizon < 1:
            raise ValidationError("horizon must be positive")
        if self.repeats < 1:
            raise ValidationError("repeats must be positive")
        if not self.tol > 0:
            raise ValidationError("tol must be positive")
        if not 0.5 < self.omega <= 1.0:
            raise ValidationError("omega must lie in (0.5, 1]")

    def trainer(self, stream: str, repeat: int = 0) -> TrainerConfig:
        gen = PolicyGenerator.boltzmann(self.tau)
        return TrainerConfig(
            self.steps, seed=derive_seed(self.seed, STREAMS[stream], repeat),
            omega=self.omega, gen_lo=gen, gen_gl=gen,
        )


@dataclass
class Results:
    """Long-format result rows; ``t`` is ``None`` for scalar metrics."""

    rows: list

    @classmethod
    def empty(cls) -> Results:
        return cls([])

    def add(self, run_id, seed, mode, pair, t, metric, value):
        self.rows.append((run_id, seed, mode, pair, t, metric, float(value)))

    def csv_text(self) -> str:
        lines = [",".join(CSV_HEADER)]
        for run_id, seed, mode, pair, t, metric, value in self.rows:
            t_text = "" if t is None else str(t)
            lines.append(f"{run_id},{seed},{mode},{pair},{t_text},{metric},{value:.17g}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# policy pairs


def ga_greedy(q_gl) -> np.ndarray:
    return generate_ga(PolicyGenerator.greedy(), q_gl)


def joint_greedy_pair(game: MarkovGame, q_joint) -> tuple[np.ndarray, np.ndarray]:
    """Split a greedy joint-action policy into an LA policy and a GA response.

    GA plays the jointly chosen action whatever LA action it observes.
    """
    n_s, n_l, n_g = game.n_states, game.n_actions_lo, game.n_actions_gl
    best = np.argmax(np.asarray(q_joint), axis=1)
    pi_lo = np.zeros((n_s, n_l))
    pi_gl = np.zeros((n_s, n_l, n_g))
    for s, a in enumerate(best):
        lo, gl = divmod(int(a), n_g)
        pi_lo[s, lo] = 1.0
        pi_gl[s, :, gl] = 1.0
    return pi_lo, pi_gl


def independent_pair(game: MarkovGame, q_lo, q_gl_marginal) -> tuple[np.ndarray, np.ndarray]:
    pi_gl = np.repeat(greedy_policy(q_gl_marginal)[:, None, :], game.n_actions_lo, axis=1)
    return greedy_policy(q_lo), pi_gl


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True, eq=False)
class Evaluation:
    curve_lo: np.ndarray
    curve_gl: np.ndarray
    final_lo: float
    final_lo_hw: float
    final_gl: float
    final_gl_hw: float
    value_lo: float
    value_gl: float


def _half_width(x: np.ndarray) -> float:
    if x.size < 2 or np.all(x == x[0]):
        return 0.0
    return 1.96 * float(x.std(ddof=1)) / math.sqrt(x.size)


def evaluate_pair(game: MarkovGame, pi_lo, pi_gl, samples: int, horizon: int, seed: int,
                  curve_points: int = CURVE_POINTS, tol: float = 1e-10) -> Evaluation:
    """Monte Carlo curves and final returns, plus exact values from a uniform start."""
    joint = compose_joint_policy(pi_lo, pi_gl)
    record = min(curve_points, horizon)
    out = []
    for agent in ("lo", "gl"):
        # Identical seeds give identical trajectories for both agents.
        rng = np.random.default_rng(seed)
        s0 = rng.integers(game.n_states, size=samples)
        returns, steps = discounted_rollouts(
            flatten_joint(game, agent), joint, s0, horizon, samples, rng, record=record
        )
        curve = np.cumsum(steps[0], axis=0).mean(axis=1)
        out.append((curve, float(returns[0].mean()), _half_width(returns[0])))
    v_lo = float(la_value(game, pi_lo, pi_gl, tol).mean())
    v_gl = float(ga_value(game, pi_lo, pi_gl, tol).mean())
    (c_lo, f_lo, h_lo), (c_gl, f_gl, h_gl) = out
    return Evaluation(c_lo, c_gl, f_lo, h_lo, f_gl, h_gl, v_lo, v_gl)


def record_evaluation(res: Results, run_id, seed, mode, pair, ev: Evaluation,
                      curve_rows: int | None = None):
    n = len(ev.curve_lo) if curve_rows is None else min(curve_rows, len(ev.curve_lo))
    for agent, curve in (("lo", ev.curve_lo), ("gl", ev.curve_gl)):
        for t in range(n):
            res.add(run_id, seed, mode, pair, t, f"partial_return_{agent}", curve[t])
    res.add(run_id, seed, mode, pair, None, "final_return_lo", ev.final_lo)
    res.add(run_id, seed, mode, pair, None, "final_return_lo_hw", ev.final_lo_hw)
    res.add(run_id, seed, mode, pair, None, "final_return_gl", ev.final_gl)
    res.add(run_id, seed, mode, pair, None, "final_return_gl_hw", ev.final_gl_hw)
    res.add(run_id, seed, mode, pair, None, "value_lo", ev.value_lo)
    res.add(run_id, seed, mode, pair, None, "value_gl", ev.value_gl)


# ---------------------------------------------------------------------------
# training runs


@dataclass(frozen=True, eq=False)
class TrainedRun:
    mode: str
    tables: dict
    pairs: dict
    diagnostics: dict


def _diagnostics(trace, omega) -> dict:
    report = visitation_diagnostics(trace, omega)
    return {
        "n_steps": len(trace),
        "peak_abs_q": trace.peak_abs_q,
        "min_visits": report.min_visits,
        "max_visits": report.max_visits,
        "min_lr_sum": float(report.lr_sum_joint.min()),
        "max_lr_sq_sum": float(report.lr_sq_sum_joint.max()),
        "n_under_visited": len(report.warnings),
        "under_visited": report.warnings[:20],
    }


def train(spec: GameSpec, cfg: ExperimentConfig, mode: str, repeat: int = 0) -> TrainedRun:
    """Train one mode and return its tables and the policy pairs to evaluate."""
    game = spec.game
    tc = cfg.trainer(mode, repeat)
    boltz = PolicyGenerator.boltzmann(cfg.tau)
    if mode == "as":
        q_lo, q_gl, trace = run_joint_training(game, tc)
        g_lo, g_gl = greedy_policy(q_lo), ga_greedy(q_gl)
        b_lo, b_gl = generate(boltz, q_lo), generate_ga(boltz, q_gl)
        pairs = {
            "greedy/greedy": (g_lo, g_gl),
            "greedy/boltzmann": (g_lo, b_gl),
            "boltzmann/greedy": (b_lo, g_gl),
            "boltzmann/boltzmann": (b_lo, b_gl),
        }
        tables = {"q_lo": q_lo, "q_gl": q_gl}
    elif mode == "nc":
        q_lo, q_gl, trace = run_independent_training(game, tc)
        pairs = {"greedy/greedy": independent_pair(game, q_lo, q_gl)}
        tables = {"q_lo": q_lo, "q_gl_marginal": q_gl}
    elif mode == "jc":
        if not game.shared_reward():
            raise ValidationError("mode jc requires identical LA and GA rewards")
        q, trace = run_cooperative_training(game, tc)
        pairs = {"greedy/greedy": joint_greedy_pair(game, q)}
        tables = {"q_joint": q}
    elif mode in ("gaql", "eigaql"):
        runner = run_gaql_training if mode == "gaql" else run_eigaql_training
        q_gl, trace = runner(game, spec.la_policy, tc)
        pairs = {"fixed/greedy": (spec.la_policy, ga_greedy(q_gl))}
        tables = {"q_gl": q_gl, "la_policy": spec.la_policy}
    else:
        raise ValidationError(f"unknown training mode {mode!r}")
    return TrainedRun(mode, tables, pairs, _diagnostics(trace, cfg.omega))


def repeat_spec(spec: GameSpec, repeat: int) -> GameSpec:
    """Generator specs advance their seed by ``repeat``; explicit specs are reused."""
    if repeat == 0 or spec.kind == "explicit":
        return spec
    return with_generator_seed(spec, spec.source["generator"]["seed"] + repeat)


def _config_block(spec: GameSpec, cfg: ExperimentConfig, mode: str, repeat: int) -> dict:
    return {
        "spec": spec.to_dict(),
        "config": asdict(cfg),
        "mode": mode,
        "repeat": repeat,
        "train_seed": derive_seed(cfg.seed, STREAMS[mode], repeat),
        "eval_seed": derive_seed(cfg.seed, STREAMS["eval"], repeat),
    }


def run_train(spec: GameSpec, cfg: ExperimentConfig) -> tuple[Results, dict, dict]:
    """Train ``cfg.mode`` once per repeat and evaluate every policy pair it yields."""
    if cfg.mode not in TRAIN_MODES:
        raise ValidationError(f"train mode must be one of {', '.join(TRAIN_MODES)}")
    res = Results.empty()
    summary = {"command": "train", "runs": {}}
    tables = {}
    for r in range(cfg.repeats):
        rspec = repeat_spec(spec, r)
        run_id = f"{cfg.mode}-r{r:02d}"
        run = train(rspec, cfg, cfg.mode, r)
        eval_seed = derive_seed(cfg.seed, STREAMS["eval"], r)
        finals = {}
        for pair, (pi_lo, pi_gl) in run.pairs.items():
            ev = evaluate_pair(rspec.game, pi_lo, pi_gl, cfg.samples, cfg.horizon, eval_seed, tol=cfg.tol)
            # An untrained run has no learned policy to roll out beyond its first round.
            record_evaluation(res, run_id, cfg.seed, cfg.mode, pair, ev,
                              curve_rows=1 if cfg.steps == 0 else None)
            finals[pair] = _final_block(ev)
        block = _config_block(rspec, cfg, cfg.mode, r)
        block.update(final=finals, diagnostics=run.diagnostics)
        summary["runs"][run_id] = block
        tables[run_id] = run.tables
    return res, summary, tables


def _final_block(ev: Evaluation) -> dict:
    return {
        "final_return_lo": ev.final_lo, "final_return_lo_hw": ev.final_lo_hw,
        "final_return_gl": ev.final_gl, "final_return_gl_hw": ev.final_gl_hw,
        "value_lo": ev.value_lo, "value_gl": ev.value_gl,
    }


# ---------------------------------------------------------------------------
# comparisons


def _mean_ci(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    return float(x.mean()), _half_width(x)


def run_compare(spec: GameSpec, cfg: ExperimentConfig) -> tuple[Results, dict]:
    """AS/NC/JC (``strategies``) or GAQL/EIGAQL (``predictive``) under matched seeds.

    Repeat ``r`` of a generator spec uses generator seed ``seed + r``; every
    mode in a repeat is trained on the same game and evaluated with the same
    evaluation stream.
    """
    if cfg.mode == "strategies":
        modes = ("jc", "as", "nc") if spec.game.shared_reward() else ("as", "nc")
        metric = "lo"
        deltas = [("jc", "as"), ("as", "nc")] if "jc" in modes else [("as", "nc")]
    elif cfg.mode == "predictive":
        modes = ("eigaql", "gaql")
        metric = "gl"
        deltas = [("eigaql", "gaql")]
    else:
        raise ValidationError(f"compare mode must be one of {', '.join(COMPARE_MODES)}")
    res = Results.empty()
    summary = {"command": "compare", "mode": cfg.mode, "runs": {}, "deltas": {}}
    finals = {m: [] for m in modes}
    values = {m: [] for m in modes}
    hws = {m: [] for m in modes}
    for r in range(cfg.repeats):
        rspec = repeat_spec(spec, r)
        eval_seed = derive_seed(cfg.seed, STREAMS["eval"], r)
        for mode in modes:
            run = train(rspec, cfg, mode, r)
            pair = "fixed/greedy" if mode in ("gaql", "eigaql") else "greedy/greedy"
            pi_lo, pi_gl = run.pairs[pair]
            ev = evaluate_pair(rspec.game, pi_lo, pi_gl, cfg.samples, cfg.horizon, eval_seed, tol=cfg.tol)
            run_id = f"{mode}-r{r:02d}"
            record_evaluation(res, run_id, cfg.seed, mode, pair, ev)
            block = _config_block(rspec, cfg, mode, r)
            block.update(final={pair: _final_block(ev)}, diagnostics=run.diagnostics)
            summary["runs"][run_id] = block
            final = ev.final_lo if metric == "lo" else ev.final_gl
            hw = ev.final_lo_hw if metric == "lo" else ev.final_gl_hw
            finals[mode].append(final)
            hws[mode].append(hw)
            values[mode].append(ev.value_lo if metric == "lo" else ev.value_gl)
        for a, b in deltas:
            delta = finals[a][r] - finals[b][r]
            hw = math.hypot(hws[a][r], hws[b][r])
            run_id = f"delta-r{r:02d}"
            res.add(run_id, cfg.seed, "delta", f"{a}-{b}", None, f"final_return_{metric}_delta", delta)
            res.add(run_id, cfg.seed, "delta", f"{a}-{b}", None, f"final_return_{metric}_delta_hw", hw)
            res.add(run_id, cfg.seed, "delta", f"{a}-{b}", None, f"value_{metric}_delta",
                    values[a][r] - values[b][r])
    for a, b in deltas:
        mc_mean, mc_ci = _mean_ci(np.subtract(finals[a], finals[b]))
        ex_mean, ex_ci = _mean_ci(np.subtract(values[a], values[b]))
        summary["deltas"][f"{a}-{b}"] = {
            "mean_final_return_delta": mc_mean, "ci95_final_return_delta": mc_ci,
            "mean_value_delta": ex_mean, "ci95_value_delta": ex_ci,
        }
    summary["mean_final_return"] = {m: float(np.mean(finals[m])) for m in modes}
    summary["mean_value"] = {m: float(np.mean(values[m])) for m in modes}
    return res, summary


# ---------------------------------------------------------------------------
# oracles and analysis


def run_solve(spec: GameSpec, tol: float) -> tuple[Results, dict, dict]:
    """Exact limit tables: GA per-LA-action optima, LA against GA's greedy profile,
    and GA's best response to the fixed LA policy of the spec."""
    game = spec.game
    q_gl = gaql_oracle(game, tol)
    pi_gl = ga_greedy(q_gl)
    q_lo = laqgi_oracle(game, pi_gl, tol)
    pi_lo = greedy_policy(q_lo)
    q_br, v_br, pi_br = ga_best_response(game, spec.la_policy, tol)
    report = exploitability_report(game, pi_lo, pi_gl, tol)
    tables = {
        "q_lo": q_lo, "q_gl": q_gl, "pi_lo": pi_lo, "pi_gl": pi_gl,
        "q_gl_best_response": q_br, "v_gl_best_response": v_br, "pi_gl_best_response": pi_br,
    }
    res = Results.empty()
    run_id = "solve-r00"
    v_lo = la_value(game, pi_lo, pi_gl, tol)
    v_gl = ga_value(game, pi_lo, pi_gl, tol)
    for s in range(game.n_states):
        res.add(run_id, "", "solve", "greedy/greedy", s, "value_lo", v_lo[s])
        res.add(run_id, "", "solve", "greedy/greedy", s, "value_gl", v_gl[s])
        res.add(run_id, "", "solve", "fixed/best_response", s, "value_gl", v_br[s])
    res.add(run_id, "", "solve", "greedy/greedy", None, "la_exploitability", report.la_gap)
    res.add(run_id, "", "solve", "greedy/greedy", None, "ga_exploitability", report.ga_gap)
    summary = {
        "command": "solve",
        "runs": {run_id: {"spec": spec.to_dict(), "config": {"tol": tol}}},
        "la_exploitability": report.la_gap,
        "ga_exploitability": report.ga_gap,
    }
    return res, summary, {run_id: tables}


def run_analyze(spec: GameSpec, tables: dict, tau: float, tol: float) -> tuple[Results, dict]:
    """Near-equilibrium report for the greedy pair of trained or oracle tables."""
    game = spec.game
    if "q_lo" not in tables or "q_gl" not in tables:
        raise ShapeError("analysis needs both 'q_lo' and 'q_gl' tables")
    q_lo = np.asarray(tables["q_lo"], dtype=float)
    q_gl = np.asarray(tables["q_gl"], dtype=float)
    n_s, n_l, n_g = game.n_states, game.n_actions_lo, game.n_actions_gl
    if q_lo.shape != (n_s, n_l):
        raise ShapeError(f"q_lo shape {q_lo.shape} does not match the game ({n_s}, {n_l})")
    if q_gl.shape != (n_l, n_s, n_g):
        raise ShapeError(f"q_gl shape {q_gl.shape} does not match the game ({n_l}, {n_s}, {n_g})")
    pi_lo, pi_gl = greedy_policy(q_lo), ga_greedy(q_gl)
    expl = exploitability_report(game, pi_lo, pi_gl, tol)
    bound = almost_nash_bound(game, q_gl, tau)
    rbe = rbe_residual(game, la_value(game, pi_lo, pi_gl, tol), ga_value(game, pi_lo, pi_gl, tol),
                       pi_lo, pi_gl)
    scalars = {
        "la_exploitability": expl.la_gap,
        "ga_exploitability": expl.ga_gap,
        "gap": bound.gap,
        "gap_max": bound.gap_max,
        "spread": bound.spread,
        "eps_theorem": bound.eps_theorem,
        "eps_lemma": bound.eps_lemma,
        "rbe_residual_fixed": rbe.residual_fixed,
        "rbe_residual_opt": rbe.residual_opt,
    }
    res = Results.empty()
    run_id = "analyze-r00"
    for name, value in scalars.items():
        res.add(run_id, "", "analyze", "greedy/greedy", None, name, value)
    summary = {
        "command": "analyze",
        "runs": {run_id: {"spec": spec.to_dict(), "config": {"tau": tau, "tol": tol}}},
        "exploitability": {"la_gap": expl.la_gap, "ga_gap": expl.ga_gap,
                           "la_state_gaps": expl.la_state_gaps, "ga_state_gaps": expl.ga_state_gaps},
        "nash_bound": {k: scalars[k] for k in ("gap", "gap_max", "spread", "eps_theorem", "eps_lemma")}
        | {"tau": tau, "cell_gap": bound.cell_gap, "cell_spread": bound.cell_spread},
        "rbe_residual": {"residual_fixed": rbe.residual_fixed, "residual_opt": rbe.residual_opt},
    }
    return res, summary
