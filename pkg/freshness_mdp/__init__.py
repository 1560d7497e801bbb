"""
freshness_mdp - freshness-optimal update scheduling

Average-cost MDP solvers, token-bucket and Lagrangian models for keeping
a remote monitor fresh under update-rate limits, and a Monte Carlo
simulator to evaluate the resulting policies.
"""

__version__ = "0.1.0"

from .aoii import build_aoii_token_mdp, derive_chain_params, solve_aoii_cmdp
from .lagrangian import solve_two_rate_cmdp
from .mdp import FiniteMdp, long_run_average, rvia
from .models import AoiiParams, SimConfig, SolverConfig, TokenParams, TwoRateParams
from .simulation import simulate
from .two_rate import build_two_rate_lagrangian_mdp, build_two_rate_token_mdp
