"""Finite discounted MDPs: Bellman operators, fixed-point solvers, greedy policies.

Q-tables are ``(n_states, n_actions)`` float arrays, value tables are
``(n_states,)`` arrays and stationary policies are row-stochastic
``(n_states, n_actions)`` arrays. States and actions are dense 0-based indices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, ShapeError

ROW_SUM_TOL = 1e-9
DEFAULT_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class DiscountedMDP:
    """Tuple (S, A, r, P, beta) with dense reward and transition tables."""

    reward: np.ndarray
    transition: np.ndarray
    beta: float

    def __post_init__(self):
        reward = np.array(self.reward, dtype=float)
        transition = np.array(self.transition, dtype=float)
        if reward.ndim != 2:
            raise ShapeError(f"reward must be 2-d (states, actions), got shape {reward.shape}")
        if transition.shape != reward.shape + (reward.shape[0],):
            raise ShapeError(
                f"transition shape {transition.shape} does not match reward shape {reward.shape}"
            )
        reward.setflags(write=False)
        transition.setflags(write=False)
        object.__setattr__(self, "reward", reward)
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def n_states(self) -> int:
        return self.reward.shape[0]

    @property
    def n_actions(self) -> int:
        return self.reward.shape[1]

    @property
    def reward_bound(self) -> float:
        return float(np.max(np.abs(self.reward)))


def validate_mdp(mdp: DiscountedMDP) -> list[str]:
    """Return the list of violated invariants; an empty list means the MDP is valid."""
    problems = []
    if not (0.0 < mdp.beta < 1.0):
        problems.append(f"discount {mdp.beta!r} not in (0,1)")
    if not np.all(np.isfinite(mdp.reward)):
        problems.append("reward table has non-finite entries")
    if np.any(mdp.transition < 0):
        s, a, t = np.argwhere(mdp.transition < 0)[0]
        problems.append(f"negative transition probability at (s={s}, a={a}, s'={t})")
    sums = mdp.transition.sum(axis=-1)
    for s, a in np.argwhere(~(np.abs(sums - 1.0) <= ROW_SUM_TOL)):
        problems.append(f"row sum {sums[s, a]:.12g} ≠ 1 at (s={s}, a={a})")
    return problems


def _check_q(mdp: DiscountedMDP, q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != mdp.reward.shape:
        raise ShapeError(f"Q-table shape {q.shape} != {mdp.reward.shape}")
    return q


def _check_policy(mdp: DiscountedMDP, pi: np.ndarray) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    if pi.shape != mdp.reward.shape:
        raise ShapeError(f"policy shape {pi.shape} != {mdp.reward.shape}")
    return pi


def bellman_policy_operator(mdp: DiscountedMDP, pi: np.ndarray, q: np.ndarray) -> np.ndarray:
    """(T_pi Q)(s, a) = r(s, a) + beta * E_{s'}[ E_{a' ~ pi(.|s')} Q(s', a') ]."""
    q = _check_q(mdp, q)
    pi = _check_policy(mdp, pi)
    v = np.sum(pi * q, axis=1)
    return mdp.reward + mdp.beta * (mdp.transition @ v)


def bellman_optimal_operator(mdp: DiscountedMDP, q: np.ndarray) -> np.ndarray:
    """(T_* Q)(s, a) = r(s, a) + beta * E_{s'}[ max_{a'} Q(s', a') ]."""
    q = _check_q(mdp, q)
    return mdp.reward + mdp.beta * (mdp.transition @ q.max(axis=1))


def _fixed_point(op, q0: np.ndarray, beta: float, tol: float, max_iter: int) -> np.ndarray:
    if tol <= 0:
        raise ValueError("tol must be positive")
    # Stopping at this step size bounds the distance to the fixed point by tol.
    threshold = tol * (1.0 - beta) / (2.0 * beta)
    q = q0
    for _ in range(max_iter):
        q_next = op(q)
        if not np.all(np.isfinite(q_next)):
            raise ConvergenceError("non-finite value during fixed-point iteration")
        if np.max(np.abs(q_next - q)) <= threshold:
            return q_next
        q = q_next
    raise ConvergenceError(f"no convergence within {max_iter} iterations")


def solve_q_policy(
    mdp: DiscountedMDP, pi: np.ndarray, tol: float = DEFAULT_TOL, max_iter: int = 100_000
) -> np.ndarray:
    """Q-function of ``pi`` by iterating T_pi from zero."""
    pi = _check_policy(mdp, pi)
    return _fixed_point(
        lambda q: bellman_policy_operator(mdp, pi, q),
        np.zeros_like(mdp.reward), mdp.beta, tol, max_iter,
    )


def solve_q_optimal(mdp: DiscountedMDP, tol: float = DEFAULT_TOL, max_iter: int = 100_000) -> np.ndarray:
    """Optimal Q-function by value iteration on T_*."""
    return _fixed_point(
        lambda q: bellman_optimal_operator(mdp, q),
        np.zeros_like(mdp.reward), mdp.beta, tol, max_iter,
    )


def value_from_q(q: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """V(s) = E_{a ~ pi(.|s)} Q(s, a)."""
    q = np.asarray(q, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if q.shape != pi.shape:
        raise ShapeError(f"Q-table shape {q.shape} != policy shape {pi.shape}")
    return np.sum(pi * q, axis=-1)


def argmax_mask(q: np.ndarray, tie_tol: float = 0.0) -> np.ndarray:
    """Boolean mask of entries within ``tie_tol * (1 + |max|)`` of the row maximum (last axis)."""
    q = np.asarray(q, dtype=float)
    top = q.max(axis=-1, keepdims=True)
    return q >= top - tie_tol * (1.0 + np.abs(top))


def greedy_policy(q: np.ndarray, tie_rule: str = "lowest-index", tie_tol: float = 0.0) -> np.ndarray:
    """Greedy policy along the last axis of ``q``.

    ``"lowest-index"`` puts all mass on the first maximiser; ``"uniform"``
    spreads it evenly over the argmax set. Works for any leading shape, so a
    GA table ``(n_a_lo, n_states, n_a_gl)`` yields per-slice greedy rows.
    """
    q = np.asarray(q, dtype=float)
    mask = argmax_mask(q, tie_tol)
    if tie_rule == "uniform":
        return mask / mask.sum(axis=-1, keepdims=True)
    if tie_rule == "lowest-index":
        first = np.argmax(mask, axis=-1)
        out = np.zeros_like(q)
        np.put_along_axis(out, first[..., None], 1.0, axis=-1)
        return out
    raise ValueError(f"unknown tie rule {tie_rule!r}")


def is_deterministic(pi: np.ndarray) -> bool:
    pi = np.asarray(pi)
    return bool(np.all(np.sum(pi == 1.0, axis=-1) == 1))


def default_horizon(mdp: DiscountedMDP, tail_tol: float = 1e-4) -> int:
    """Smallest T with beta^T * ||r||_inf / (1 - beta) <= tail_tol."""
    scale = mdp.reward_bound / (1.0 - mdp.beta)
    if scale <= tail_tol:
        return 1
    return max(1, math.ceil(math.log(tail_tol / scale) / math.log(mdp.beta)))


def sample_rows(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling: one index per row of ``probs`` using uniforms ``u``."""
    cdf = np.cumsum(probs, axis=-1)
    idx = np.sum(cdf <= u[..., None], axis=-1)
    # Guards against cumulative sums that round to slightly below one.
    return np.minimum(idx, probs.shape[-1] - 1)


def discounted_rollouts(
    mdp: DiscountedMDP,
    pi: np.ndarray,
    s0,
    horizon: int,
    n_samples: int,
    rng: np.random.Generator,
    extra_rewards: tuple[np.ndarray, ...] = (),
    record: int = 0,
):
    """Simulate ``n_samples`` trajectories of ``pi`` for ``horizon`` steps.

    ``s0`` is either a state index or an array of per-sample initial states.
    Returns discounted returns with shape ``(1 + len(extra_rewards), n_samples)``
    (the MDP's own reward first, then each extra reward table evaluated on the
    same trajectories) and, if ``record > 0``, the per-step discounted rewards
    of the first ``record`` steps with shape ``(1 + len(extra_rewards), record, n_samples)``.
    """
    pi = _check_policy(mdp, pi)
    tables = (mdp.reward,) + tuple(np.asarray(t, dtype=float) for t in extra_rewards)
    states = np.broadcast_to(np.asarray(s0, dtype=np.int64), (n_samples,)).copy()
    returns = np.zeros((len(tables), n_samples))
    steps = np.zeros((len(tables), record, n_samples)) if record else None
    discount = 1.0
    for t in range(horizon):
        actions = sample_rows(pi[states], rng.random(n_samples))
        for k, table in enumerate(tables):
            r = discount * table[states, actions]
            returns[k] += r
            if t < record:
                steps[k, t] = r
        states = sample_rows(mdp.transition[states, actions], rng.random(n_samples))
        discount *= mdp.beta
    return returns, steps


def mc_value_estimate(
    mdp: DiscountedMDP,
    pi: np.ndarray,
    s0: int,
    horizon: int | None = None,
    n_samples: int = 1000,
    seed: int = 0,
) -> tuple[float, float]:
    """Monte Carlo mean of truncated discounted returns and its 95% half-width."""
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    if horizon is None:
        horizon = default_horizon(mdp)
    returns, _ = discounted_rollouts(mdp, pi, s0, horizon, n_samples, np.random.default_rng(seed))
    g = returns[0]
    if n_samples == 1 or np.all(g == g[0]):
        half = 0.0
    else:
        half = 1.96 * g.std(ddof=1) / math.sqrt(n_samples)
    return float(g.mean()), float(half)
