"""Stochastic Q-learning loops for the LA/GA game.

Every trainer owns one ``numpy.random.Generator`` (PCG64) seeded from
``TrainerConfig.seed``. Before the loop it draws a ``(n_steps, 4)`` block of
uniforms; column ``k`` of row ``t`` drives, in order, the LA action, the GA
action, the next state and the predictive next LA action of step ``t``.
Unused columns are still drawn, so every trainer consumes the same stream.
Discrete draws use inverse-CDF sampling on the row's cumulative sums.

Learning rates are per cell: the update that sees a cell for the ``n``-th time
(``n = 0, 1, ...`` counting earlier visits) uses ``1 / (1 + n) ** omega``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numba import njit

from .game import MarkovGame, check_ga_policy, check_la_policy
from .policies import PolicyGenerator

MODE_JOINT, MODE_LAQGI, MODE_GAQL, MODE_EIGAQL, MODE_NC, MODE_JC = range(6)

_GEN_BOLTZMANN, _GEN_EPS, _GEN_GREEDY, _GEN_GREEDY_UNIFORM = range(4)


def _encode(gen: PolicyGenerator) -> tuple[int, float]:
    if gen.kind == "boltzmann":
        return _GEN_BOLTZMANN, gen.tau
    if gen.kind == "eps_greedy":
        return _GEN_EPS, gen.eps
    if gen.tie_rule == "uniform":
        return _GEN_GREEDY_UNIFORM, 0.0
    return _GEN_GREEDY, 0.0


@dataclass(frozen=True)
class TrainerConfig:
    n_steps: int
    seed: int = 0
    omega: float = 0.85
    gen_lo: PolicyGenerator = field(default_factory=lambda: PolicyGenerator.boltzmann(1.0))
    gen_gl: PolicyGenerator = field(default_factory=lambda: PolicyGenerator.boltzmann(1.0))
    initial_state: int = 0
    q_init: float = 0.0

    def __post_init__(self):
        if self.n_steps < 0:
            raise ValueError("n_steps must be non-negative")
        if not 0.5 < self.omega <= 1.0:
            raise ValueError(f"omega must lie in (0.5, 1], got {self.omega!r}")


def learning_rate(visits, omega: float):
    """Rate used by the update that follows ``visits`` earlier visits of a cell."""
    return 1.0 / (1.0 + np.asarray(visits, dtype=float)) ** omega


# ---------------------------------------------------------------------------
# jitted kernels


@njit(cache=True)
def _sample(probs, u):
    acc = 0.0
    n = probs.shape[0]
    for i in range(n - 1):
        acc += probs[i]
        if u < acc:
            return i
    return n - 1


@njit(cache=True)
def _policy_row(q_row, kind, param, out):
    n = q_row.shape[0]
    top = q_row[0]
    for i in range(1, n):
        if q_row[i] > top:
            top = q_row[i]
    if kind == _GEN_BOLTZMANN:
        total = 0.0
        for i in range(n):
            out[i] = np.exp((q_row[i] - top) / param)
            total += out[i]
        for i in range(n):
            out[i] /= total
        return
    if kind == _GEN_GREEDY:
        first = True
        for i in range(n):
            if first and q_row[i] == top:
                out[i] = 1.0
                first = False
            else:
                out[i] = 0.0
        return
    n_top = 0
    for i in range(n):
        if q_row[i] == top:
            n_top += 1
    eps = param if kind == _GEN_EPS else 0.0
    for i in range(n):
        out[i] = eps / n
        if q_row[i] == top:
            out[i] += (1.0 - eps) / n_top


@njit(cache=True)
def _row_max(row):
    m = row[0]
    for i in range(1, row.shape[0]):
        if row[i] > m:
            m = row[i]
    return m


@njit(cache=True)
def _laqgi_update(q, s, a, r, s_next, beta, gamma):
    q[s, a] = (1.0 - gamma) * q[s, a] + gamma * (r + beta * _row_max(q[s_next]))


@njit(cache=True)
def _gaql_update(q, a_lo, s, a_gl, r, s_next, beta, gamma):
    q[a_lo, s, a_gl] = (1.0 - gamma) * q[a_lo, s, a_gl] + gamma * (
        r + beta * _row_max(q[a_lo, s_next])
    )


@njit(cache=True)
def _eigaql_update(q, a_lo, s, a_gl, r, s_next, a_lo_next, beta, gamma):
    q[a_lo, s, a_gl] = (1.0 - gamma) * q[a_lo, s, a_gl] + gamma * (
        r + beta * _row_max(q[a_lo_next, s_next])
    )


@njit(cache=True)
def _train_kernel(
    mode, r_lo, r_gl, p, beta_lo, beta_gl, q_lo, q_gl, n_lo, n_gl,
    pi_lo_fixed, eta_gl_fixed, gen_lo, par_lo, gen_gl, par_gl, omega, s0, u,
    tr_s, tr_lo, tr_gl, tr_rlo, tr_rgl, tr_next, tr_lo_next,
):
    n_steps = u.shape[0]
    n_gl_actions = r_lo.shape[2]
    row_lo = np.empty(q_lo.shape[1])
    row_gl = np.empty(n_gl_actions)
    peak = 0.0
    s = s0
    a_carry = -1
    for t in range(n_steps):
        j = -1
        if mode == MODE_JC:
            _policy_row(q_lo[s], gen_lo, par_lo, row_lo)
            j = _sample(row_lo, u[t, 0])
            a_lo = j // n_gl_actions
            a_gl = j % n_gl_actions
        else:
            if mode == MODE_EIGAQL and a_carry >= 0:
                a_lo = a_carry
            elif mode == MODE_GAQL or mode == MODE_EIGAQL:
                a_lo = _sample(pi_lo_fixed[s], u[t, 0])
            else:
                _policy_row(q_lo[s], gen_lo, par_lo, row_lo)
                a_lo = _sample(row_lo, u[t, 0])
            if mode == MODE_LAQGI:
                a_gl = _sample(eta_gl_fixed[s, a_lo], u[t, 1])
            else:
                sl = 0 if mode == MODE_NC else a_lo
                _policy_row(q_gl[sl, s], gen_gl, par_gl, row_gl)
                a_gl = _sample(row_gl, u[t, 1])
        rew_lo = r_lo[s, a_lo, a_gl]
        rew_gl = r_gl[s, a_lo, a_gl]
        s_next = _sample(p[s, a_lo, a_gl], u[t, 2])
        a_next = -1

        if mode == MODE_JOINT or mode == MODE_LAQGI or mode == MODE_NC:
            g = 1.0 / (1.0 + n_lo[s, a_lo]) ** omega
            n_lo[s, a_lo] += 1
            _laqgi_update(q_lo, s, a_lo, rew_lo, s_next, beta_lo, g)
            peak = max(peak, abs(q_lo[s, a_lo]))
        elif mode == MODE_JC:
            g = 1.0 / (1.0 + n_lo[s, j]) ** omega
            n_lo[s, j] += 1
            _laqgi_update(q_lo, s, j, rew_lo, s_next, beta_lo, g)
            peak = max(peak, abs(q_lo[s, j]))

        if mode == MODE_JOINT or mode == MODE_GAQL or mode == MODE_NC:
            sl = 0 if mode == MODE_NC else a_lo
            g = 1.0 / (1.0 + n_gl[sl, s, a_gl]) ** omega
            n_gl[sl, s, a_gl] += 1
            _gaql_update(q_gl, sl, s, a_gl, rew_gl, s_next, beta_gl, g)
            peak = max(peak, abs(q_gl[sl, s, a_gl]))
        elif mode == MODE_EIGAQL:
            a_next = _sample(pi_lo_fixed[s_next], u[t, 3])
            g = 1.0 / (1.0 + n_gl[a_lo, s, a_gl]) ** omega
            n_gl[a_lo, s, a_gl] += 1
            _eigaql_update(q_gl, a_lo, s, a_gl, rew_gl, s_next, a_next, beta_gl, g)
            peak = max(peak, abs(q_gl[a_lo, s, a_gl]))
            a_carry = a_next

        tr_s[t] = s
        tr_lo[t] = a_lo
        tr_gl[t] = a_gl
        tr_rlo[t] = rew_lo
        tr_rgl[t] = rew_gl
        tr_next[t] = s_next
        tr_lo_next[t] = a_next
        s = s_next
    return peak


# ---------------------------------------------------------------------------
# public single-step updates (pure: they return a new table)


def laqgi_step(q, s: int, a_lo: int, r_lo: float, s_next: int, gamma: float, beta: float) -> np.ndarray:
    """One LA update; the continuation value maxes over LA's own row at ``s_next``."""
    q = np.array(q, dtype=float)
    _laqgi_update(q, s, a_lo, float(r_lo), s_next, float(beta), float(gamma))
    return q


def gaql_step(q, s: int, a_lo: int, a_gl: int, r_gl: float, s_next: int, gamma: float, beta: float) -> np.ndarray:
    """One GA update on slice ``a_lo``; the continuation max stays in the same slice."""
    q = np.array(q, dtype=float)
    _gaql_update(q, a_lo, s, a_gl, float(r_gl), s_next, float(beta), float(gamma))
    return q


def eigaql_step(
    q, s: int, a_lo: int, a_gl: int, r_gl: float, s_next: int, a_lo_next: int,
    gamma: float, beta: float,
) -> np.ndarray:
    """One GA update whose continuation max uses the next LA action's slice."""
    q = np.array(q, dtype=float)
    _eigaql_update(q, a_lo, s, a_gl, float(r_gl), s_next, a_lo_next, float(beta), float(gamma))
    return q


def env_step(game: MarkovGame, s: int, a_lo: int, a_gl: int, rng: np.random.Generator):
    """Rewards of both agents and a sampled next state."""
    n = game.n_states
    if not (0 <= s < n and 0 <= a_lo < game.n_actions_lo and 0 <= a_gl < game.n_actions_gl):
        raise IndexError(f"indices (s={s}, a_lo={a_lo}, a_gl={a_gl}) out of range")
    s_next = _sample(game.transition[s, a_lo, a_gl], rng.random())
    return float(game.reward_lo[s, a_lo, a_gl]), float(game.reward_gl[s, a_lo, a_gl]), int(s_next)


# ---------------------------------------------------------------------------
# trainers


@dataclass(frozen=True, eq=False)
class TrainingTrace:
    """Time-ordered samples; ``a_lo_next`` is -1 except for predictive (EIGAQL) runs."""

    s: np.ndarray
    a_lo: np.ndarray
    a_gl: np.ndarray
    r_lo: np.ndarray
    r_gl: np.ndarray
    s_next: np.ndarray
    a_lo_next: np.ndarray
    n_states: int
    n_actions_lo: int
    n_actions_gl: int
    peak_abs_q: float = 0.0

    def __len__(self):
        return len(self.s)

    @property
    def counts_lo(self) -> np.ndarray:
        """Visits per (s, a_lo)."""
        idx = self.s * self.n_actions_lo + self.a_lo
        return np.bincount(idx, minlength=self.n_states * self.n_actions_lo).reshape(
            self.n_states, self.n_actions_lo
        )

    @property
    def counts_joint(self) -> np.ndarray:
        """Visits per (s, a_lo, a_gl)."""
        idx = (self.s * self.n_actions_lo + self.a_lo) * self.n_actions_gl + self.a_gl
        size = self.n_states * self.n_actions_lo * self.n_actions_gl
        return np.bincount(idx, minlength=size).reshape(
            self.n_states, self.n_actions_lo, self.n_actions_gl
        )


class JointResult(NamedTuple):
    q_lo: np.ndarray
    q_gl: np.ndarray
    trace: TrainingTrace


class SingleResult(NamedTuple):
    q: np.ndarray
    trace: TrainingTrace


def _run(mode, game: MarkovGame, config: TrainerConfig, q_lo_shape, q_gl_shape,
         pi_lo=None, eta_gl=None):
    n_s, n_l, n_g = game.n_states, game.n_actions_lo, game.n_actions_gl
    if not 0 <= config.initial_state < n_s:
        raise IndexError(f"initial state {config.initial_state} out of range")
    rng = np.random.default_rng(config.seed)
    u = rng.random((config.n_steps, 4))
    q_lo = np.full(q_lo_shape, float(config.q_init))
    q_gl = np.full(q_gl_shape, float(config.q_init))
    n_lo = np.zeros(q_lo_shape, dtype=np.int64)
    n_gl = np.zeros(q_gl_shape, dtype=np.int64)
    pi_lo = np.zeros((n_s, n_l)) if pi_lo is None else np.ascontiguousarray(pi_lo, dtype=float)
    eta_gl = np.zeros((n_s, n_l, n_g)) if eta_gl is None else np.ascontiguousarray(eta_gl, dtype=float)
    gl_code, gl_par = _encode(config.gen_gl)
    lo_code, lo_par = _encode(config.gen_lo)
    steps = config.n_steps
    cols = [np.zeros(steps, dtype=np.int64) for _ in range(3)]
    r_cols = [np.zeros(steps) for _ in range(2)]
    s_next = np.zeros(steps, dtype=np.int64)
    a_next = np.zeros(steps, dtype=np.int64)
    peak = _train_kernel(
        mode, game.reward_lo, game.reward_gl, game.transition, game.beta_lo, game.beta_gl,
        q_lo, q_gl, n_lo, n_gl, pi_lo, eta_gl, lo_code, lo_par, gl_code, gl_par,
        float(config.omega), int(config.initial_state), u,
        cols[0], cols[1], cols[2], r_cols[0], r_cols[1], s_next, a_next,
    )
    trace = TrainingTrace(cols[0], cols[1], cols[2], r_cols[0], r_cols[1], s_next, a_next,
                          n_s, n_l, n_g, float(peak))
    return q_lo, q_gl, trace


def run_joint_training(game: MarkovGame, config: TrainerConfig) -> JointResult:
    """LAQGI and GAQL coupled: each agent's behaviour policy comes from its own table.

    Per step LA draws from ``gen_lo(Q_lo)(.|s)``, GA observes the LA action and
    draws from ``gen_gl(Q_gl[a_lo])(.|s)``, then both tables are updated.
    """
    q_lo, q_gl, trace = _run(
        MODE_JOINT, game, config,
        (game.n_states, game.n_actions_lo),
        (game.n_actions_lo, game.n_states, game.n_actions_gl),
    )
    return JointResult(q_lo, q_gl, trace)


def run_laqgi_training(game: MarkovGame, eta_gl, config: TrainerConfig) -> SingleResult:
    """LAQGI against a fixed stationary GA policy ``eta_gl``."""
    eta_gl = check_ga_policy(game, eta_gl)
    q_lo, _, trace = _run(
        MODE_LAQGI, game, config,
        (game.n_states, game.n_actions_lo),
        (game.n_actions_lo, game.n_states, game.n_actions_gl),
        eta_gl=eta_gl,
    )
    return SingleResult(q_lo, trace)


def run_gaql_training(game: MarkovGame, pi_lo, config: TrainerConfig) -> SingleResult:
    """GAQL against a fixed stationary LA policy ``pi_lo``."""
    pi_lo = check_la_policy(game, pi_lo)
    _, q_gl, trace = _run(
        MODE_GAQL, game, config,
        (game.n_states, game.n_actions_lo),
        (game.n_actions_lo, game.n_states, game.n_actions_gl),
        pi_lo=pi_lo,
    )
    return SingleResult(q_gl, trace)


def run_eigaql_training(game: MarkovGame, pi_lo, config: TrainerConfig) -> SingleResult:
    """Predictive GA learning against a fixed stationary LA policy.

    The LA action drawn for the next state is used both in the current update
    and as the LA action actually executed at the next step.
    """
    pi_lo = check_la_policy(game, pi_lo)
    _, q_gl, trace = _run(
        MODE_EIGAQL, game, config,
        (game.n_states, game.n_actions_lo),
        (game.n_actions_lo, game.n_states, game.n_actions_gl),
        pi_lo=pi_lo,
    )
    return SingleResult(q_gl, trace)


def run_independent_training(game: MarkovGame, config: TrainerConfig) -> JointResult:
    """Both agents learn on their own marginal tables; GA ignores the LA action.

    Returns ``q_lo`` of shape ``(n_states, n_a_lo)`` and ``q_gl`` of shape
    ``(n_states, n_a_gl)``.
    """
    q_lo, q_gl, trace = _run(
        MODE_NC, game, config,
        (game.n_states, game.n_actions_lo),
        (1, game.n_states, game.n_actions_gl),
    )
    return JointResult(q_lo, q_gl[0], trace)


def run_cooperative_training(game: MarkovGame, config: TrainerConfig) -> SingleResult:
    """Single-agent Q-learning over joint actions; requires a shared reward.

    Uses ``config.gen_lo`` as the joint behaviour generator. The table has
    shape ``(n_states, n_a_lo * n_a_gl)``.
    """
    if not game.shared_reward():
        raise ValueError("cooperative training requires identical LA and GA rewards")
    q, _, trace = _run(
        MODE_JC, game, config,
        (game.n_states, game.n_actions_lo * game.n_actions_gl),
        (game.n_actions_lo, game.n_states, game.n_actions_gl),
    )
    return SingleResult(q, trace)


# ---------------------------------------------------------------------------
# Robbins-Monro diagnostics


@dataclass(frozen=True, eq=False)
class VisitationReport:
    counts_lo: np.ndarray
    counts_joint: np.ndarray
    lr_sum_lo: np.ndarray
    lr_sq_sum_lo: np.ndarray
    lr_sum_joint: np.ndarray
    lr_sq_sum_joint: np.ndarray
    warnings: list[str]

    @property
    def min_visits(self) -> int:
        return int(self.counts_joint.min())

    @property
    def max_visits(self) -> int:
        return int(self.counts_joint.max())


def lr_partial_sums(counts, omega: float, power: int = 1) -> np.ndarray:
    """sum_{k < n} (1 + k) ** (-omega * power) for each entry ``n`` of ``counts``."""
    counts = np.asarray(counts, dtype=np.int64)
    top = int(counts.max()) if counts.size else 0
    cumulative = np.concatenate([[0.0], np.cumsum(learning_rate(np.arange(top), omega) ** power)])
    return cumulative[counts]


def visitation_diagnostics(trace: TrainingTrace, omega: float = 0.85, floor: int = 100) -> VisitationReport:
    """Per-cell visit counts and realised learning-rate sums, with under-visited cells flagged."""
    c_lo = trace.counts_lo
    c_joint = trace.counts_joint
    warnings = [
        f"cell (s={s}, a_lo={l}, a_gl={g}) visited {c_joint[s, l, g]} times < {floor}"
        for s, l, g in np.argwhere(c_joint < floor)
    ]
    return VisitationReport(
        c_lo, c_joint,
        lr_partial_sums(c_lo, omega), lr_partial_sums(c_lo, omega, 2),
        lr_partial_sums(c_joint, omega), lr_partial_sums(c_joint, omega, 2),
        warnings,
    )
