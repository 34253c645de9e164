"""Exact post-training analysis: learning targets, best responses and bound checks."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, ShapeError
from .game import (
    MarkovGame,
    check_ga_policy,
    check_la_policy,
    ga_value,
    induced_ga_mdp,
    induced_la_mdp,
    la_value,
)
from .mdp import DiscountedMDP, greedy_policy, solve_q_optimal, solve_q_policy, value_from_q
from .policies import gap_constants

EXACT_TOL = 1e-10
TIE_TOL = 1e-9
ENUMERATION_BUDGET = 10**6


def laqgi_oracle(game: MarkovGame, eta_gl_limit, tol: float = EXACT_TOL) -> np.ndarray:
    """Optimal Q of LA's MDP induced by the limiting GA policy."""
    return solve_q_optimal(induced_la_mdp(game, eta_gl_limit), tol)


def gaql_oracle(game: MarkovGame, tol: float = EXACT_TOL) -> np.ndarray:
    """Per-LA-action optimal Q of GA's slice MDPs, shape ``(n_a_lo, n_states, n_a_gl)``."""
    return np.stack([solve_q_optimal(induced_ga_mdp(game, a), tol) for a in range(game.n_actions_lo)])


# ---------------------------------------------------------------------------
# GA best response against a stationary LA policy


def ga_continuation(game: MarkovGame, pi_lo, q_gl) -> np.ndarray:
    """w(s) = E_{a_lo ~ pi_lo(.|s)} max_{a_gl} Q_{a_lo}(s, a_gl)."""
    return np.sum(np.asarray(pi_lo) * np.asarray(q_gl).max(axis=2).T, axis=1)


def ga_optimal_operator(game: MarkovGame, pi_lo, q_gl) -> np.ndarray:
    """GA Bellman operator under a stationary LA policy, on ``(n_a_lo, n_states, n_a_gl)`` tables."""
    q_gl = np.asarray(q_gl, dtype=float)
    shape = (game.n_actions_lo, game.n_states, game.n_actions_gl)
    if q_gl.shape != shape:
        raise ShapeError(f"GA Q-table shape {q_gl.shape} != {shape}")
    w = ga_continuation(game, pi_lo, q_gl)
    out = game.reward_gl + game.beta_gl * (game.transition @ w)
    return out.transpose(1, 0, 2)


def ga_best_response(game: MarkovGame, pi_lo, tol: float = EXACT_TOL, max_iter: int = 100_000):
    """Fixed point of the GA operator, GA's optimal value and a greedy optimal GA policy.

    Returns ``(q, v, pi_gl)`` with ``q`` of shape ``(n_a_lo, n_states, n_a_gl)``,
    ``v[s] = E_{a_lo ~ pi_lo} max_{a_gl} q[a_lo, s, a_gl]`` and ``pi_gl`` greedy
    (lowest index) within every ``(s, a_lo)`` slice.
    """
    pi_lo = check_la_policy(game, pi_lo)
    beta = game.beta_gl
    threshold = tol * (1.0 - beta) / (2.0 * beta)
    q = np.zeros((game.n_actions_lo, game.n_states, game.n_actions_gl))
    for _ in range(max_iter):
        q_next = ga_optimal_operator(game, pi_lo, q)
        if not np.all(np.isfinite(q_next)):
            raise ConvergenceError("non-finite value in GA best-response iteration")
        done = np.max(np.abs(q_next - q)) <= threshold
        q = q_next
        if done:
            v = ga_continuation(game, pi_lo, q)
            pi_gl = greedy_policy(q).transpose(1, 0, 2)
            return q, v, np.ascontiguousarray(pi_gl)
    raise ConvergenceError(f"GA best response did not converge within {max_iter} iterations")


# ---------------------------------------------------------------------------
# exhaustive enumeration of deterministic deviations


def _enumerate_best(option_r, option_p, beta: float, budget: int) -> np.ndarray:
    """Per-state best value over all ways of picking one option per state.

    ``option_r`` has shape ``(S, K)`` and ``option_p`` shape ``(S, K, S)``;
    each combination is evaluated by a direct linear solve.
    """
    n, k = option_r.shape
    total = k**n
    if total > budget:
        raise ValueError(f"{total} deterministic policies exceed the enumeration budget {budget}")
    best = np.full(n, -np.inf)
    rows = np.arange(n)
    eye = np.eye(n)
    combos = itertools.product(range(k), repeat=n)
    chunk = 50_000
    while True:
        block = np.array(list(itertools.islice(combos, chunk)), dtype=np.int64)
        if block.size == 0:
            break
        r = option_r[rows, block]
        p = option_p[rows, block]
        v = np.linalg.solve(eye - beta * p, r[..., None])[..., 0]
        best = np.maximum(best, v.max(axis=0))
    return best


def la_best_deterministic_values(game: MarkovGame, pi_gl, method: str = "shortcut",
                                 tol: float = EXACT_TOL, budget: int = ENUMERATION_BUDGET) -> np.ndarray:
    """Best per-state LA value over deterministic LA policies against ``pi_gl``."""
    mdp = induced_la_mdp(game, pi_gl)
    if method == "shortcut":
        return solve_q_optimal(mdp, tol).max(axis=1)
    if method == "enumerate":
        return _enumerate_best(mdp.reward, mdp.transition, mdp.beta, budget)
    raise ValueError(f"unknown method {method!r}")


def ga_best_deterministic_values(game: MarkovGame, pi_lo, method: str = "shortcut",
                                 tol: float = EXACT_TOL, budget: int = ENUMERATION_BUDGET) -> np.ndarray:
    """Best per-state GA value over GA policies against a stationary ``pi_lo``."""
    pi_lo = check_la_policy(game, pi_lo)
    if method == "shortcut":
        return ga_best_response(game, pi_lo, tol)[1]
    if method != "enumerate":
        raise ValueError(f"unknown method {method!r}")
    # An option at state s assigns one GA action to every LA action.
    n_l, n_g = game.n_actions_lo, game.n_actions_gl
    choices = np.array(list(itertools.product(range(n_g), repeat=n_l)), dtype=np.int64)
    lo_idx = np.arange(n_l)
    # Fancy indexing yields (S, K, n_l) and (S, K, n_l, S').
    r_opt = np.einsum("sl,skl->sk", pi_lo, game.reward_gl[:, lo_idx, choices])
    p_opt = np.einsum("sl,sklt->skt", pi_lo, game.transition[:, lo_idx, choices])
    return _enumerate_best(r_opt, p_opt, game.beta_gl, budget)


def la_exploitability(game: MarkovGame, pi_lo, pi_gl, tol: float = EXACT_TOL,
                      method: str = "shortcut", budget: int = ENUMERATION_BUDGET) -> float:
    """Largest LA value gain from switching to a deterministic policy, maximised over states."""
    best = la_best_deterministic_values(game, pi_gl, method, tol, budget)
    return float(np.max(best - la_value(game, pi_lo, pi_gl, tol)))


def ga_exploitability(game: MarkovGame, pi_lo, pi_gl, tol: float = EXACT_TOL,
                      method: str = "shortcut", budget: int = ENUMERATION_BUDGET) -> float:
    """Largest GA value gain from any deviation, maximised over states."""
    best = ga_best_deterministic_values(game, pi_lo, method, tol, budget)
    return float(np.max(best - ga_value(game, pi_lo, pi_gl, tol)))


@dataclass(frozen=True, eq=False)
class ExploitabilityReport:
    la_gap: float
    ga_gap: float
    la_state_gaps: np.ndarray
    ga_state_gaps: np.ndarray


def exploitability_report(game: MarkovGame, pi_lo, pi_gl, tol: float = EXACT_TOL) -> ExploitabilityReport:
    la_gaps = la_best_deterministic_values(game, pi_gl, tol=tol) - la_value(game, pi_lo, pi_gl, tol)
    ga_gaps = ga_best_deterministic_values(game, pi_lo, tol=tol) - ga_value(game, pi_lo, pi_gl, tol)
    return ExploitabilityReport(float(la_gaps.max()), float(ga_gaps.max()), la_gaps, ga_gaps)


# ---------------------------------------------------------------------------
# near-equilibrium bound for Boltzmann-trained GA tables


@dataclass(frozen=True, eq=False)
class NashBoundReport:
    """Constants of the exploitability bound for a GA table trained with temperature ``tau``.

    ``cell_gap[s, a_lo]`` is the smallest gap between the best and a
    non-maximising GA action (``inf`` when every action ties) and
    ``cell_spread[s, a_lo]`` is sqrt(2 (|A_gl| - |argmax|) / |argmax|).
    ``gap`` is the smallest finite cell gap, ``gap_max`` the largest, ``spread``
    the largest spread. ``eps_theorem`` uses ``gap_max`` with exp(-gap/tau);
    ``eps_lemma`` uses ``gap`` with exp(-gap/(2 tau)).
    """

    gap: float
    gap_max: float
    spread: float
    eps_theorem: float
    eps_lemma: float
    tau: float
    cell_gap: np.ndarray
    cell_spread: np.ndarray

    @property
    def eps(self) -> float:
        return max(self.eps_theorem, self.eps_lemma)


def almost_nash_bound(game: MarkovGame, q_gl, tau: float, tie_tol: float = TIE_TOL) -> NashBoundReport:
    q_gl = np.asarray(q_gl, dtype=float)
    n_s, n_l = game.n_states, game.n_actions_lo
    if q_gl.shape != (n_l, n_s, game.n_actions_gl):
        raise ShapeError(f"GA Q-table shape {q_gl.shape} does not match the game")
    cell_gap = np.empty((n_s, n_l))
    cell_spread = np.empty((n_s, n_l))
    for s in range(n_s):
        for a in range(n_l):
            cell_gap[s, a], cell_spread[s, a], _ = gap_constants(q_gl[a, s], tie_tol)
    finite = cell_gap[np.isfinite(cell_gap)]
    gap = float(finite.min()) if finite.size else math.inf
    gap_max = float(finite.max()) if finite.size else math.inf
    spread = float(cell_spread.max())
    if spread == 0.0:
        return NashBoundReport(gap, gap_max, 0.0, 0.0, 0.0, tau, cell_gap, cell_spread)
    scale = 2.0 * game.reward_bound("lo") * spread / (1.0 - game.beta_lo) ** 2
    return NashBoundReport(
        gap, gap_max, spread,
        scale * math.exp(-gap_max / tau),
        scale * math.exp(-gap / (2.0 * tau)),
        tau, cell_gap, cell_spread,
    )


# ---------------------------------------------------------------------------
# coupled Bellman residuals


@dataclass(frozen=True)
class RBEResidual:
    residual_fixed: float
    residual_opt: float


def _agent_backup(game: MarkovGame, agent: str, v) -> np.ndarray:
    """r_i(s, a_lo, a_gl) + beta_i E[v(s')] for every joint action."""
    return game.reward(agent) + game.beta(agent) * (game.transition @ np.asarray(v, dtype=float))


def rbe_residual(game: MarkovGame, v_lo, v_gl, pi_lo, pi_gl) -> RBEResidual:
    """Sup-norm residuals of the policy-evaluation and best-response coupled Bellman systems."""
    pi_lo = check_la_policy(game, pi_lo)
    pi_gl = check_ga_policy(game, pi_gl)
    b_lo = _agent_backup(game, "lo", v_lo)
    b_gl = _agent_backup(game, "gl", v_gl)
    h_lo = np.einsum("sl,slg,slg->s", pi_lo, pi_gl, b_lo)
    h_gl = np.einsum("sl,slg,slg->s", pi_lo, pi_gl, b_gl)
    h_lo_opt = np.sum(pi_gl * b_lo, axis=2).max(axis=1)
    h_gl_opt = np.sum(pi_lo * b_gl.max(axis=2), axis=1)
    fixed = max(np.max(np.abs(v_lo - h_lo)), np.max(np.abs(v_gl - h_gl)))
    opt = max(np.max(np.abs(v_lo - h_lo_opt)), np.max(np.abs(v_gl - h_gl_opt)))
    return RBEResidual(float(fixed), float(opt))


# ---------------------------------------------------------------------------
# appendix perturbation bounds


def value_perturbation_bound(mdp1: DiscountedMDP, mdp2: DiscountedMDP, pi,
                             tol: float = EXACT_TOL) -> tuple[float, float]:
    """(exact ||V1 - V2||_inf, its reward/transition perturbation bound) for one policy."""
    if mdp1.reward.shape != mdp2.reward.shape:
        raise ShapeError("MDPs have different shapes")
    if mdp1.beta != mdp2.beta:
        raise ValueError("MDPs must share the discount factor")
    beta = mdp1.beta
    v1 = value_from_q(solve_q_policy(mdp1, pi, tol), pi)
    v2 = value_from_q(solve_q_policy(mdp2, pi, tol), pi)
    lhs = float(np.max(np.abs(v1 - v2)))
    dr = float(np.max(np.abs(mdp1.reward - mdp2.reward)))
    dp = float(np.max(np.sum(np.abs(mdp1.transition - mdp2.transition), axis=-1)))
    rhs = (dr + beta * mdp2.reward_bound / (1.0 - beta) * dp) / (1.0 - beta)
    return lhs, rhs


@dataclass(frozen=True)
class BoundCheck:
    name: str
    lhs: float
    rhs: float
    slack: float = 1e-9

    @property
    def ok(self) -> bool:
        return self.lhs <= self.rhs + self.slack


def induced_lipschitz_check(game: MarkovGame, eta1, eta2, pi, q=None,
                            tol: float = EXACT_TOL) -> list[BoundCheck]:
    """Sensitivity of LA's induced MDP to the GA policy, checked term by term.

    The GA-policy distance is the largest per-(s, a_lo) L1 distance. ``q`` is
    the table the operator bounds are evaluated on (defaults to LA's Q under
    ``pi`` in the first induced MDP).
    """
    eta1 = check_ga_policy(game, eta1)
    eta2 = check_ga_policy(game, eta2)
    pi = check_la_policy(game, pi)
    m1, m2 = induced_la_mdp(game, eta1), induced_la_mdp(game, eta2)
    beta = game.beta_lo
    r_bound = game.reward_bound("lo")
    dist = float(np.max(np.sum(np.abs(eta1 - eta2), axis=-1)))
    if q is None:
        q = solve_q_policy(m1, pi, tol)
    q = np.asarray(q, dtype=float)
    q_norm = float(np.max(np.abs(q)))

    v_pol = [value_from_q(solve_q_policy(m, pi, tol), pi) for m in (m1, m2)]
    v_opt = [solve_q_optimal(m, tol).max(axis=1) for m in (m1, m2)]
    t_pol = [m.reward + beta * (m.transition @ np.sum(pi * q, axis=1)) for m in (m1, m2)]
    t_opt = [m.reward + beta * (m.transition @ q.max(axis=1)) for m in (m1, m2)]
    op_rhs = (r_bound + beta * q_norm) * dist
    value_rhs = r_bound / (1.0 - beta) ** 2 * dist
    # Value solves are accurate to tol each, hence the 2*tol slack on value checks.
    return [
        BoundCheck("reward", float(np.max(np.abs(m1.reward - m2.reward))), r_bound * dist),
        BoundCheck("transition",
                   float(np.max(np.sum(np.abs(m1.transition - m2.transition), axis=-1))), dist),
        BoundCheck("policy_operator", float(np.max(np.abs(t_pol[0] - t_pol[1]))), op_rhs),
        BoundCheck("optimal_operator", float(np.max(np.abs(t_opt[0] - t_opt[1]))), op_rhs),
        BoundCheck("policy_value", float(np.max(np.abs(v_pol[0] - v_pol[1]))), value_rhs, 2 * tol + 1e-9),
        BoundCheck("optimal_value", float(np.max(np.abs(v_opt[0] - v_opt[1]))), value_rhs, 2 * tol + 1e-9),
    ]
