"""Reward-free exploration and planning for linear MDPs.

Exploration collects a dataset without looking at rewards; planning then
turns that dataset into a near-optimal policy for any reward function.
Lower-bound instances and a simulator-based planner live alongside.
"""

from .errors import *  # noqa: F401,F403
from .explorer import ExplorationConfig, ExplorationResult, backward_pass, paper_beta, run_exploration
from .generative import BasisProbe, Simulator, find_feature_basis, generative_explore, generative_plan
from .hardness import HardInstance, build_hard_instance, run_adversary_game
from .harness import ExperimentConfig, run_hardness, run_sweep, validate_instance
from .linalg import CovarianceAccumulator, elliptical_potential, ridge_solve
from .mdp import (
    Dynamics,
    ExplorationDataset,
    FeatureMap,
    LinearMdpSpec,
    PolicyTable,
    RewardFreeEnv,
    RewardFunctionSet,
    TabularMdp,
    make_random_anchor_instance,
    make_rng,
    make_tabular_embedding,
    random_tabular_mdp,
)
from .oracle import evaluate_policy, solve_exact, suboptimality
from .planner import PlanningResult, plan

__version__ = "0.1.0"
