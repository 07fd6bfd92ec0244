"""Domain types shared by every solver.

All types are frozen dataclasses. Generators and terminal conditions wrap
plain callables that must accept numpy arrays (they are evaluated on whole
lattices and path ensembles at once).
"""

from __future__ import annotations

import enum
import math
import types
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np


class SchemeError(ValueError):
    """A numerical precondition of a scheme does not hold."""


class CflViolation(SchemeError):
    pass


class MonotonicityViolation(SchemeError):
    pass


class DomainViolation(SchemeError):
    pass


class NoContraction(SchemeError):
    pass


class TreeTooLarge(SchemeError):
    pass


class ZDependentGenerator(SchemeError):
    pass


class RankDeficientBasis(UserWarning):
    """Regression design matrix lost rank; the basis degree was reduced."""


class Scheme(str, enum.Enum):
    TREE_DP = "TreeDP"
    FINITE_DIFFERENCE = "FiniteDifference"
    PROBABILISTIC = "Probabilistic"
    PDE_SPLITTING = "PdeSplitting"


@dataclass(frozen=True)
class DiscreteState:
    x: float
    m: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.m)):
            raise ValueError(f"non-finite state ({self.x}, {self.m})")


@dataclass(frozen=True)
class ControlSet:
    """Interval ``[a_lo, a_hi]`` of squared volatilities searched on a uniform grid."""

    a_lo: float
    a_hi: float
    grid_size: int = 11

    def __post_init__(self) -> None:
        if not (0.0 < self.a_lo <= self.a_hi):
            raise ValueError(f"need 0 < a_lo <= a_hi, got [{self.a_lo}, {self.a_hi}]")
        if self.grid_size < 1:
            raise ValueError("grid_size must be positive")
        if self.a_lo < self.a_hi and self.grid_size < 2:
            raise ValueError("a non-degenerate control interval needs grid_size >= 2")

    @property
    def grid(self) -> np.ndarray:
        if self.grid_size == 1:
            return np.array([self.a_lo])
        return np.linspace(self.a_lo, self.a_hi, self.grid_size)

    @classmethod
    def singleton(cls, a: float) -> "ControlSet":
        return cls(a, a, 1)


def make_control_grid(cs: ControlSet) -> list[float]:
    """Ascending control grid with both endpoints included."""
    return [float(a) for a in cs.grid]


@dataclass(frozen=True)
class Generator:
    """Driver ``f(t, x, m, y, z, a)`` of the backward equation.

    ``bound0`` is a bound on ``|f(t, x, m, 0, 0, a)|`` over the control set;
    together with ``lip_y`` it gives the a-priori bound on solutions.
    """

    eval: Callable[..., Any]
    lip_y: float = 0.0
    lip_z: float = 0.0
    depends_on_z: bool = False
    bound0: float = 0.0
    name: str = "custom"

    def __post_init__(self) -> None:
        if self.lip_y < 0 or self.lip_z < 0 or self.bound0 < 0:
            raise ValueError("Lipschitz constants and bounds must be nonnegative")

    def __call__(self, t, x, m, y, z, a):
        return self.eval(t, x, m, y, z, a)


@dataclass(frozen=True)
class TerminalCondition:
    eval: Callable[..., Any]
    lip: float
    bound: float = math.inf
    name: str = "custom"

    def __call__(self, x, m):
        return self.eval(x, m)


@dataclass(frozen=True)
class TimeGrid:
    T: float
    n: int

    def __post_init__(self) -> None:
        if not self.T > 0:
            raise ValueError("horizon must be positive")
        if self.n < 1:
            raise ValueError("need at least one time step")

    @property
    def dt(self) -> float:
        return self.T / self.n

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n + 1)

    @classmethod
    def from_dt(cls, T: float, dt: float) -> "TimeGrid":
        n = round(T / dt)
        if n < 1 or abs(n * dt - T) > 1e-9 * T:
            raise ValueError(f"dt={dt} does not divide T={T}")
        return cls(T, n)


def _freeze(d: Mapping[str, Any] | None) -> Mapping[str, Any]:
    return types.MappingProxyType(dict(d or {}))


@dataclass(frozen=True)
class SolveResult:
    y0: float
    scheme: Scheme
    n_steps: int
    runtime_s: float
    diagnostics: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not math.isfinite(self.y0):
            raise ValueError("solver produced a non-finite value")
        if self.runtime_s < 0:
            raise ValueError("negative runtime")
        object.__setattr__(self, "diagnostics", _freeze(self.diagnostics))


def apriori_bound(gen: Generator, term: TerminalCondition, T: float, dt: float = 0.0) -> float:
    """``e^{L T} (|xi|_inf + C T)`` for a z-independent generator.

    With ``dt > 0`` the implicit-step amplification ``1 / (1 - L dt)`` is used
    instead of ``1 + L dt``.
    """
    lip = gen.lip_y
    if dt > 0 and lip * dt < 1:
        lip = lip / (1.0 - lip * dt)
    return math.exp(lip * T) * (term.bound + gen.bound0 * T)
