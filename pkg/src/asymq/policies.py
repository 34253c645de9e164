"""Policy generators (Boltzmann, epsilon-greedy, greedy) and softmax-vs-argmax distances."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .mdp import argmax_mask, greedy_policy


def softmax(f, tau: float) -> np.ndarray:
    """Boltzmann distribution exp(f/tau) / sum exp(f/tau) along the last axis."""
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau!r}")
    f = np.asarray(f, dtype=float)
    z = np.exp((f - f.max(axis=-1, keepdims=True)) / tau)
    return z / z.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class PolicyGenerator:
    """Maps a Q-table to a behaviour policy, row by row along the last axis.

    Use the ``boltzmann``, ``eps_greedy`` and ``greedy`` constructors.
    The epsilon-greedy rows mix ``1 - eps`` of uniform-over-argmax with
    ``eps`` of uniform-over-all-actions.
    """

    kind: str
    tau: float = 1.0
    eps: float = 0.0
    tie_rule: str = "lowest-index"

    def __post_init__(self):
        if self.kind == "boltzmann":
            if not self.tau > 0:
                raise ValueError(f"temperature must be positive, got {self.tau!r}")
        elif self.kind == "eps_greedy":
            if not 0.0 <= self.eps <= 1.0:
                raise ValueError(f"eps must lie in [0, 1], got {self.eps!r}")
        elif self.kind == "greedy":
            if self.tie_rule not in ("lowest-index", "uniform"):
                raise ValueError(f"unknown tie rule {self.tie_rule!r}")
        else:
            raise ValueError(f"unknown generator kind {self.kind!r}")

    @classmethod
    def boltzmann(cls, tau: float) -> PolicyGenerator:
        return cls("boltzmann", tau=tau)

    @classmethod
    def eps_greedy(cls, eps: float) -> PolicyGenerator:
        return cls("eps_greedy", eps=eps)

    @classmethod
    def greedy(cls, tie_rule: str = "lowest-index") -> PolicyGenerator:
        return cls("greedy", tie_rule=tie_rule)

    def __call__(self, q: np.ndarray) -> np.ndarray:
        return generate(self, q)


def generate(gen: PolicyGenerator, q) -> np.ndarray:
    """Apply ``gen`` to every row of ``q`` (last axis = actions)."""
    q = np.asarray(q, dtype=float)
    if gen.kind == "boltzmann":
        return softmax(q, gen.tau)
    if gen.kind == "eps_greedy":
        n = q.shape[-1]
        return (1.0 - gen.eps) * greedy_policy(q, "uniform") + gen.eps / n
    return greedy_policy(q, gen.tie_rule)


def generate_ga(gen: PolicyGenerator, q_ga) -> np.ndarray:
    """GA policy ``(n_states, n_a_lo, n_a_gl)`` from a GA table ``(n_a_lo, n_states, n_a_gl)``."""
    q_ga = np.asarray(q_ga, dtype=float)
    if q_ga.ndim != 3:
        raise ShapeError(f"GA Q-table must be 3-d (a_lo, s, a_gl), got shape {q_ga.shape}")
    return np.ascontiguousarray(generate(gen, q_ga).transpose(1, 0, 2))


def tv_distance(p, q) -> float:
    """L1 distance sum_i |p_i - q_i| (twice the total-variation distance)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ShapeError(f"length mismatch: {p.shape} vs {q.shape}")
    return float(np.sum(np.abs(p - q)))


@dataclass(frozen=True)
class TVBoundReport:
    """Distance between softmax(f, tau) and the uniform distribution on argmax f.

    ``gap`` is the smallest optimality gap over non-maximisers (infinite when
    every entry is a maximiser), ``spread`` is sqrt(2 (|X| - |X*|) / |X*|).
    ``bound`` uses the exponent -gap/(2 tau); ``bound_tight`` the stronger -gap/tau.
    """

    gap: float
    spread: float
    bound: float
    bound_tight: float
    exact_tv: float

    # Short aliases matching the usual constant names.
    @property
    def C(self) -> float:
        return self.gap

    @property
    def D(self) -> float:
        return self.spread


def gap_constants(f, tie_tol: float = 0.0) -> tuple[float, float, np.ndarray]:
    """Return (C, D, argmax mask) for a potential ``f``."""
    f = np.asarray(f, dtype=float)
    mask = argmax_mask(f, tie_tol)
    n_star = int(mask.sum())
    n = f.size
    d = math.sqrt(2.0 * (n - n_star) / n_star)
    if n_star == n:
        return math.inf, d, mask
    c = float(np.min(f.max() - f[~mask]))
    return c, d, mask


def boltzmann_argmax_gap(f, tau: float, tie_tol: float = 0.0) -> TVBoundReport:
    f = np.asarray(f, dtype=float)
    c, d, mask = gap_constants(f, tie_tol)
    uniform = mask / mask.sum()
    exact = tv_distance(softmax(f, tau), uniform)
    if d == 0.0:
        return TVBoundReport(c, d, 0.0, 0.0, exact)
    return TVBoundReport(c, d, d * math.exp(-c / (2 * tau)), d * math.exp(-c / tau), exact)
