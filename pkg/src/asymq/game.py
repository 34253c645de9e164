"""Two-agent Markov games with a localized (LA) and a globalized (GA) agent.

Table layouts used throughout the package:

* rewards ``reward_lo``, ``reward_gl``: ``(n_states, n_a_lo, n_a_gl)``
* transition: ``(n_states, n_a_lo, n_a_gl, n_states)``
* LA policy: ``(n_states, n_a_lo)``
* GA policy: ``(n_states, n_a_lo, n_a_gl)``, i.e. GA conditions on the LA action
* GA Q-table: ``(n_a_lo, n_states, n_a_gl)``, one slice per observed LA action

Flattened joint actions are numbered row-major: ``a_lo * n_a_gl + a_gl``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .errors import ShapeError, ValidationError
from .mdp import ROW_SUM_TOL, DEFAULT_TOL, DiscountedMDP, solve_q_policy, value_from_q

AGENTS = ("lo", "gl")


@dataclass(frozen=True, eq=False)
class MarkovGame:
    reward_lo: np.ndarray
    reward_gl: np.ndarray
    transition: np.ndarray
    beta_lo: float
    beta_gl: float

    def __post_init__(self):
        r_lo = np.array(self.reward_lo, dtype=float)
        r_gl = np.array(self.reward_gl, dtype=float)
        p = np.array(self.transition, dtype=float)
        if r_lo.ndim != 3:
            raise ShapeError(f"rewards must be 3-d (s, a_lo, a_gl), got shape {r_lo.shape}")
        if r_gl.shape != r_lo.shape:
            raise ShapeError(f"reward_gl shape {r_gl.shape} != reward_lo shape {r_lo.shape}")
        if p.shape != r_lo.shape + (r_lo.shape[0],):
            raise ShapeError(f"transition shape {p.shape} does not match rewards {r_lo.shape}")
        for arr in (r_lo, r_gl, p):
            arr.setflags(write=False)
        object.__setattr__(self, "reward_lo", r_lo)
        object.__setattr__(self, "reward_gl", r_gl)
        object.__setattr__(self, "transition", p)
        object.__setattr__(self, "beta_lo", float(self.beta_lo))
        object.__setattr__(self, "beta_gl", float(self.beta_gl))

    @property
    def n_states(self) -> int:
        return self.reward_lo.shape[0]

    @property
    def n_actions_lo(self) -> int:
        return self.reward_lo.shape[1]

    @property
    def n_actions_gl(self) -> int:
        return self.reward_lo.shape[2]

    def reward(self, agent: str) -> np.ndarray:
        return {"lo": self.reward_lo, "gl": self.reward_gl}[agent]

    def beta(self, agent: str) -> float:
        return {"lo": self.beta_lo, "gl": self.beta_gl}[agent]

    def reward_bound(self, agent: str | None = None) -> float:
        if agent is None:
            return max(self.reward_bound("lo"), self.reward_bound("gl"))
        return float(np.max(np.abs(self.reward(agent))))

    def value_scale(self, agent: str) -> float:
        """||r||_inf / (1 - beta) for the given agent."""
        return self.reward_bound(agent) / (1.0 - self.beta(agent))

    def shared_reward(self) -> bool:
        return bool(np.array_equal(self.reward_lo, self.reward_gl))

    def __eq__(self, other):
        if not isinstance(other, MarkovGame):
            return NotImplemented
        return (
            self.beta_lo == other.beta_lo
            and self.beta_gl == other.beta_gl
            and np.array_equal(self.reward_lo, other.reward_lo)
            and np.array_equal(self.reward_gl, other.reward_gl)
            and np.array_equal(self.transition, other.transition)
        )

    __hash__ = None


def validate_game(game: MarkovGame) -> list[str]:
    problems = []
    for name, beta in (("beta_lo", game.beta_lo), ("beta_gl", game.beta_gl)):
        if not 0.0 < beta < 1.0:
            problems.append(f"{name} = {beta!r} not in (0,1)")
    for name in ("reward_lo", "reward_gl"):
        if not np.all(np.isfinite(getattr(game, name))):
            problems.append(f"{name} has non-finite entries")
    if np.any(game.transition < 0):
        problems.append("negative transition probability")
    sums = game.transition.sum(axis=-1)
    for s, l, g in np.argwhere(~(np.abs(sums - 1.0) <= ROW_SUM_TOL)):
        problems.append(f"row sum {sums[s, l, g]:.12g} ≠ 1 at (s={s}, a_lo={l}, a_gl={g})")
    return problems


def check_game(game: MarkovGame) -> MarkovGame:
    problems = validate_game(game)
    if problems:
        raise ValidationError("; ".join(problems))
    return game


def _check_kernel(probs, shape, what: str) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.shape != shape:
        raise ShapeError(f"{what} shape {probs.shape} != expected {shape}")
    if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=-1) - 1.0) > ROW_SUM_TOL):
        raise ValidationError(f"{what} is not row-stochastic")
    return probs


def check_la_policy(game: MarkovGame, pi_lo) -> np.ndarray:
    return _check_kernel(pi_lo, (game.n_states, game.n_actions_lo), "LA policy")


def check_ga_policy(game: MarkovGame, pi_gl) -> np.ndarray:
    return _check_kernel(
        pi_gl, (game.n_states, game.n_actions_lo, game.n_actions_gl), "GA policy"
    )


def induced_la_mdp(game: MarkovGame, eta_gl) -> DiscountedMDP:
    """LA's MDP with reward and transition averaged over the GA policy ``eta_gl``."""
    eta = check_ga_policy(game, eta_gl)
    reward = np.einsum("slg,slg->sl", eta, game.reward_lo)
    transition = np.einsum("slg,slgt->slt", eta, game.transition)
    return DiscountedMDP(reward, transition, game.beta_lo)


def induced_ga_mdp(game: MarkovGame, a_lo: int) -> DiscountedMDP:
    """GA's MDP when LA always plays ``a_lo``."""
    if not 0 <= a_lo < game.n_actions_lo:
        raise IndexError(f"LA action {a_lo} out of range [0, {game.n_actions_lo})")
    return DiscountedMDP(game.reward_gl[:, a_lo, :], game.transition[:, a_lo], game.beta_gl)


def compose_joint_policy(pi_lo, pi_gl) -> np.ndarray:
    """pi(a_lo, a_gl | s) = pi_lo(a_lo | s) * pi_gl(a_gl | s, a_lo), flattened row-major."""
    pi_lo = np.asarray(pi_lo, dtype=float)
    pi_gl = np.asarray(pi_gl, dtype=float)
    if pi_gl.ndim != 3 or pi_gl.shape[:2] != pi_lo.shape:
        raise ShapeError(f"LA policy {pi_lo.shape} and GA policy {pi_gl.shape} do not match")
    joint = pi_lo[:, :, None] * pi_gl
    return joint.reshape(pi_lo.shape[0], -1)


def flatten_joint(game: MarkovGame, agent: str) -> DiscountedMDP:
    """Single-agent MDP over the product action set with ``agent``'s reward and discount."""
    n = game.n_states
    return DiscountedMDP(
        game.reward(agent).reshape(n, -1),
        game.transition.reshape(n, -1, n),
        game.beta(agent),
    )


def joint_value(game: MarkovGame, agent: str, pi_lo, pi_gl, tol: float = 1e-10) -> np.ndarray:
    joint = compose_joint_policy(check_la_policy(game, pi_lo), check_ga_policy(game, pi_gl))
    q = solve_q_policy(flatten_joint(game, agent), joint, tol)
    return value_from_q(q, joint)


def la_value(game: MarkovGame, pi_lo, pi_gl, tol: float = 1e-10) -> np.ndarray:
    """LA's value function when the agents play (pi_lo, pi_gl)."""
    return joint_value(game, "lo", pi_lo, pi_gl, tol)


def ga_value(game: MarkovGame, pi_lo, pi_gl, tol: float = 1e-10) -> np.ndarray:
    """GA's value function when the agents play (pi_lo, pi_gl)."""
    return joint_value(game, "gl", pi_lo, pi_gl, tol)


@dataclass(frozen=True, eq=False)
class WirelessParams:
    """Parameters of the three-state power-allocation game.

    ``gains`` is drawn from the seed (i.i.d. standard normal, one scalar per
    state) when left as ``None``.
    """

    power: tuple[float, ...] = (2.0, 5.0, 3.0)
    noise: tuple[float, ...] = (2.2, 9.0, 4.5)
    penalty: float = 0.25
    beta: float = 0.8
    n_actions_lo: int = 3
    n_actions_gl: int = 4
    gains: tuple[float, ...] | None = field(default=None)

    def __post_init__(self):
        if len(self.power) != len(self.noise):
            raise ValidationError("power and noise must have one entry per state")
        if any(n <= 0 for n in self.noise):
            raise ValidationError("noise power must be strictly positive")
        if self.gains is not None and len(self.gains) != len(self.noise):
            raise ValidationError("gains must have one entry per state")


def wireless_snr(params: WirelessParams) -> np.ndarray:
    """rho(s, a_lo, a_gl) = (total power) / N(s), with 1-based power levels."""
    lo = np.arange(1, params.n_actions_lo + 1, dtype=float)
    gl = np.arange(1, params.n_actions_gl + 1, dtype=float)
    power = lo[:, None] + gl[None, :]
    return power[None, :, :] / np.asarray(params.noise, dtype=float)[:, None, None]


def wireless_example(seed: int, params: WirelessParams | None = None) -> MarkovGame:
    """Capacity-maximisation game; both agents receive the same reward."""
    params = params or WirelessParams()
    n = len(params.noise)
    if params.gains is None:
        gains = np.random.default_rng(seed).standard_normal(n)
    else:
        gains = np.asarray(params.gains, dtype=float)
    rho = wireless_snr(params)
    lo = np.arange(1, params.n_actions_lo + 1, dtype=float)
    gl = np.arange(1, params.n_actions_gl + 1, dtype=float)
    total = lo[:, None] + gl[None, :]
    # log2 det(I + rho h h^T) = log2(1 + rho |h|^2) for a rank-one gain.
    capacity = np.log2(1.0 + rho * (gains**2)[:, None, None])
    penalty = params.penalty * np.abs(np.asarray(params.power, dtype=float)[:, None, None] - total[None])
    reward = capacity - penalty

    stay = np.clip(erfc(np.sqrt(rho / 2.0)), 0.0, 1.0)
    transition = np.empty(rho.shape + (n,))
    if n == 1:
        transition[...] = 1.0
    else:
        transition[...] = ((1.0 - stay) / (n - 1))[..., None]
        for s in range(n):
            transition[s, :, :, s] = stay[s]
    return MarkovGame(reward, reward.copy(), transition, params.beta, params.beta)


def random_game(
    seed: int,
    n_states: int = 7,
    n_a_lo: int = 4,
    n_a_gl: int = 5,
    beta: float = 0.8,
) -> tuple[MarkovGame, np.ndarray]:
    """Random game plus a random stationary LA policy.

    Draw order from ``default_rng(seed)``: LA rewards, GA rewards (both i.i.d.
    standard normal), transition rows (uniform, row-normalised), LA policy rows
    (uniform, row-normalised).
    """
    if min(n_states, n_a_lo, n_a_gl) < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    shape = (n_states, n_a_lo, n_a_gl)
    r_lo = rng.standard_normal(shape)
    r_gl = rng.standard_normal(shape)
    p = rng.random(shape + (n_states,))
    p /= p.sum(axis=-1, keepdims=True)
    pi_lo = rng.random((n_states, n_a_lo))
    pi_lo /= pi_lo.sum(axis=-1, keepdims=True)
    return MarkovGame(r_lo, r_gl, p, beta, beta), pi_lo
