"""Decentralized team control of mean-field coupled Markov chains."""
from .dp import (
    DecentralizedSolution,
    SharingSolution,
    brute_force_sharing_value,
    evaluate_strategy_exact,
    next_meanfield_distribution,
    optimality_gap,
    solve_decentralized_grid,
    solve_decentralized_tree,
    solve_sharing,
)
from .lift import LocalPolicy, enumerate_policies, factorized_update, lift_cost, lift_dynamics
from .model import (
    FunctionalModel,
    LipschitzConstants,
    ModelSpec,
    cost_eval,
    kernel_eval,
    kernel_from_functional,
    lipschitz_constants,
    load_model,
    validate_model,
)
from .simplex import enumerate_empirical, enumerate_grid, linf, mean_field_of, quantize

__version__ = "0.1.0"
