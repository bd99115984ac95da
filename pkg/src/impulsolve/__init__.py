"""Delayed impulse control on finite scenario trees.

Backward solvers for the expected-value and exponential criteria with a
fixed lag between deciding an impulse and its execution, strategy
extraction and forward pricing, an exhaustive small-tree oracle, and a
counter-mode sampler whose draws match bit-for-bit across the compiled
and pure backends.
"""

from ._backend import BACKEND, backend_name
from .errors import (BudgetExceededError, ImpulsolveError,
                     InadmissibleStrategyError, NumericalGuardError,
                     SpecFormatError, SpecValidationError, StrategyFormatError,
                     TreeFormatError, TreeValidationError)
from .fields import (EMPTY_STRATEGY, RegimeKey, SolveReport, Stage, Strategy,
                     ValueField, load_strategy, report_json, save_strategy)
from .problem import (BoundedFunction, MODE_RISK_NEUTRAL, MODE_RISK_SENSITIVE,
                      ProblemSpec, eval_expr, load_problem, save_problem)
from .scenario import (Node, PathSample, ScenarioTree, generate_walk_tree,
                       load_tree, save_tree, tree_from_dict, tree_to_dict,
                       validate_tree)
from .snell import AdaptedProcess, StoppingRegion, backward_envelope, hitting_region

__version__ = "0.1.0"

__all__ = [
    "AdaptedProcess", "BACKEND", "BoundedFunction", "BudgetExceededError",
    "EMPTY_STRATEGY", "ImpulsolveError", "InadmissibleStrategyError",
    "MODE_RISK_NEUTRAL", "MODE_RISK_SENSITIVE", "Node", "NumericalGuardError",
    "PathSample", "ProblemSpec", "RegimeKey", "ScenarioTree", "SolveReport",
    "SpecFormatError", "SpecValidationError", "Stage", "StoppingRegion",
    "Strategy", "StrategyFormatError", "TreeFormatError", "TreeValidationError",
    "ValueField", "backend_name", "backward_envelope", "eval_expr",
    "generate_walk_tree", "hitting_region", "load_problem", "load_strategy",
    "load_tree", "report_json", "save_problem", "save_strategy", "save_tree",
    "tree_from_dict", "tree_to_dict", "validate_tree",
    "__version__",
]
