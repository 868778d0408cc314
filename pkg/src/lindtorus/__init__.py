"""Lindstedt series, tree expansions and resummation for lower-dimensional
tori of a perturbed system with ``d`` fast angles and one slow coordinate."""
from .errors import BudgetError, ConfigError, PropertyOneViolation
from .fourier import BetaPoly, Jet2, TrigPoly
from .lindstedt import CoeffTable, assemble_fields, compute_series
from .resum import build_resum, resummed_coeffs
from .smalldiv import GOLDEN, Frequency, ScaleSystem, build_scales
from .torus import (Regime, TorusSolution, assemble, classify_condition, solve_bifurcation,
                    verify_ode, verify_residual)
from .trees import ClusterEnumerator, TreeEnumerator, enumerate_trees, tree_value

__all__ = [
    "BudgetError", "ConfigError", "PropertyOneViolation", "BetaPoly", "Jet2", "TrigPoly",
    "CoeffTable", "assemble_fields", "compute_series", "build_resum", "resummed_coeffs",
    "GOLDEN", "Frequency", "ScaleSystem", "build_scales", "Regime", "TorusSolution", "assemble",
    "classify_condition", "solve_bifurcation", "verify_ode", "verify_residual",
    "ClusterEnumerator", "TreeEnumerator", "enumerate_trees", "tree_value",
]
__version__ = "0.1.0"
