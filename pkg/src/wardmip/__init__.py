"""Nurse rostering as a 0-1 integer program with a built-in exact solver."""

from .compile import IlpModel, compile, index_of
from .model import (
    ProblemInstance,
    builtin_general_ward,
    builtin_li2003,
    capacity_screen,
    validate_instance,
)
from .roster import Roster, decode, fairness, validate
from .solve import SolverConfig, SolveResult, brute_force, solve_ilp, solve_lp

__all__ = [
    "IlpModel", "ProblemInstance", "Roster", "SolveResult", "SolverConfig",
    "brute_force", "builtin_general_ward", "builtin_li2003", "capacity_screen",
    "compile", "decode", "fairness", "index_of", "solve_ilp", "solve_lp",
    "validate", "validate_instance",
]

__version__ = "0.1.0"
