"""MAP and relaxed-MAP inference over factor graphs."""
from .ad3 import Ad3Config, RelaxedSolution, ad3_solve
from .arborescence import InfeasibleError, arborescence_score, max_arborescence
from .exact import MapResult, NodeBudgetExceeded, branch_and_bound, brute_force_map
from .qp import FactorQP, solve_factor_qp

__all__ = [
    "Ad3Config", "RelaxedSolution", "ad3_solve", "InfeasibleError", "arborescence_score",
    "max_arborescence", "MapResult", "NodeBudgetExceeded", "branch_and_bound",
    "brute_force_map", "FactorQP", "solve_factor_qp",
]
