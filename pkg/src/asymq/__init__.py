"""Q-learning for two-agent Markov games where one agent sees the other's action."""
from .analysis import (
    almost_nash_bound,
    exploitability_report,
    ga_best_response,
    ga_exploitability,
    gaql_oracle,
    la_exploitability,
    laqgi_oracle,
    rbe_residual,
)
from .errors import ConvergenceError, ShapeError, ValidationError
from .game import MarkovGame, WirelessParams, random_game, wireless_example
from .learning import (
    TrainerConfig,
    run_cooperative_training,
    run_eigaql_training,
    run_gaql_training,
    run_independent_training,
    run_joint_training,
    run_laqgi_training,
)
from .mdp import DiscountedMDP, solve_q_optimal, solve_q_policy
from .policies import PolicyGenerator

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "DiscountedMDP",
    "MarkovGame",
    "PolicyGenerator",
    "ShapeError",
    "TrainerConfig",
    "ValidationError",
    "WirelessParams",
    "almost_nash_bound",
    "exploitability_report",
    "ga_best_response",
    "ga_exploitability",
    "gaql_oracle",
    "la_exploitability",
    "laqgi_oracle",
    "random_game",
    "rbe_residual",
    "run_cooperative_training",
    "run_eigaql_training",
    "run_gaql_training",
    "run_independent_training",
    "run_joint_training",
    "run_laqgi_training",
    "solve_q_optimal",
    "solve_q_policy",
    "wireless_example",
]
