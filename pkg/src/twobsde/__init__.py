"""Numerical schemes for second-order BSDEs under volatility uncertainty."""

from .core import (
    CflViolation,
    ControlSet,
    DiscreteState,
    DomainViolation,
    Generator,
    MonotonicityViolation,
    NoContraction,
    RankDeficientBasis,
    Scheme,
    SchemeError,
    SolveResult,
    TerminalCondition,
    TimeGrid,
    TreeTooLarge,
    ZDependentGenerator,
    make_control_grid,
)

__all__ = [
    "CflViolation",
    "ControlSet",
    "DiscreteState",
    "DomainViolation",
    "Generator",
    "MonotonicityViolation",
    "NoContraction",
    "RankDeficientBasis",
    "Scheme",
    "SchemeError",
    "SolveResult",
    "TerminalCondition",
    "TimeGrid",
    "TreeTooLarge",
    "ZDependentGenerator",
    "make_control_grid",
]

__version__ = "0.1.0"
