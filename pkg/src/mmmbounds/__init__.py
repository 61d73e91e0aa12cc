"""Device-independent bounds on measurement incompatibility from measurement moment matrices."""
from .algebra import Effect, HierarchyLevel, Monomial, Scenario, generate_word_list
from .bell import BellFunctional, get_functional, load_registry
from .moment import InvalidDistribution, validate_distribution
from .oracle import Realization, born_rule, tilted_chsh_realization
from .solve import Solution, SolverError, SolverSettings, solve, validate

__version__ = "0.1.0"

__all__ = [
    "Effect", "HierarchyLevel", "Monomial", "Scenario", "generate_word_list",
    "BellFunctional", "get_functional", "load_registry",
    "InvalidDistribution", "validate_distribution",
    "Realization", "born_rule", "tilted_chsh_realization",
    "Solution", "SolverError", "SolverSettings", "solve", "validate",
    "__version__",
]
