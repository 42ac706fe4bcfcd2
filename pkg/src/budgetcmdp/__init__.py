"""Budget-augmented planning for constrained finite-horizon MDPs."""
from .bellman import RoundingScheme, approximate_backward_induction
from .bicriteria import SolveReport, choose_ell_additive, choose_ell_relative, solve_bicriteria
from .criteria import (SrCriterion, make_almost_sure, make_chance, make_custom, make_expectation)
from .errors import CmdpError, ValidationError
from .model import AugmentedPolicy, ExtendedValue, TabularCaMDP, evaluate_policy, rollout, validate_camdp
from .oracle import brute_force_optimum
from .reduction import enumerate_budget_space, solve_exact

__all__ = [
    "AugmentedPolicy", "CmdpError", "ExtendedValue", "RoundingScheme", "SolveReport", "SrCriterion",
    "TabularCaMDP", "ValidationError", "approximate_backward_induction", "brute_force_optimum",
    "choose_ell_additive", "choose_ell_relative", "enumerate_budget_space", "evaluate_policy",
    "make_almost_sure", "make_chance", "make_custom", "make_expectation", "rollout", "solve_bicriteria",
    "solve_exact", "validate_camdp",
]
__version__ = "0.1.0"
