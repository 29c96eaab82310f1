"""Stochastic Euler-Poincare reduction: finite-dimensional and fluid solvers."""
from .lie import LEFT, RIGHT, Connection, ContractError, LieAlgebra
from .reduced import ALL_VARIANTS, EPVariant, ReducedSystem

__version__ = "0.1.0"
__all__ = ["LEFT", "RIGHT", "Connection", "ContractError", "LieAlgebra",
           "ALL_VARIANTS", "EPVariant", "ReducedSystem"]
