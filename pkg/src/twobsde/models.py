"""Example generators and terminal payoffs.

The two example problems are posed through the degenerate PDE

    d_t v + x d_m v + sup_a ( a d_xx v / 2 + f(t, x, v, d_x v, a) ) = 0

so ``f`` enters with a plus sign, whereas every backward scheme in this
package steps ``y = E[y_next] - driver * dt``. The example generators
returned here therefore carry ``driver = -f``; the raw formulas are exposed
as ``f1`` and ``f2``.

The terminal payoff is a call spread on the running integral ``m``, i.e.
``clip(m, K1, K2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ControlSet, Generator, TerminalCondition


def zero_generator() -> Generator:
    def f(t, x, m, y, z, a):
        return np.zeros(np.broadcast(np.asarray(y), np.asarray(a)).shape)

    return Generator(f, 0.0, 0.0, False, 0.0, "zero")


def constant_generator(c: float) -> Generator:
    def f(t, x, m, y, z, a):
        return np.full(np.broadcast(np.asarray(y), np.asarray(a)).shape, float(c))

    return Generator(f, 0.0, 0.0, False, abs(c), f"const({c})")


def f1(y, a, K_lo: float = -1.0, K_hi: float = 1.0):
    """``inf_{r in [K_lo, K_hi]} r y a``, attained at an endpoint."""
    ya = np.asarray(y) * np.asarray(a)
    return np.minimum(K_lo * ya, K_hi * ya)


def f2(z, a, b: float = 0.0):
    """``1/2 ((sqrt(a) z + b/sqrt(a))^-)^2 - z b - b^2 / (2 a)``."""
    a = np.asarray(a, dtype=float)
    z = np.asarray(z, dtype=float)
    sa = np.sqrt(a)
    neg = np.maximum(0.0, -(sa * z + b / sa))
    return 0.5 * neg * neg - z * b - 0.5 * b * b / a


def f1_generator(K_lo: float, K_hi: float, a_hi: float) -> Generator:
    """Driver ``-f1``; Lipschitz in ``y`` with constant ``max|K| a_hi``."""
    if K_lo > K_hi:
        raise ValueError("need K_lo <= K_hi")

    def driver(t, x, m, y, z, a):
        return -f1(y, a, K_lo, K_hi)

    return Generator(driver, max(abs(K_lo), abs(K_hi)) * a_hi, 0.0, False, 0.0, "f1")


def f2_generator(b: float = 0.0, a_lo: float = 0.04, a_hi: float = 0.09, z_max: float = 1.0) -> Generator:
    """Driver ``-f2``.

    ``f2`` is quadratic in ``z``; ``lip_z`` is its Lipschitz constant on
    ``|z| <= z_max``, ``a <= a_hi``, which is all the monotonicity check needs.
    """
    if not 0 < a_lo <= a_hi:
        raise ValueError("need 0 < a_lo <= a_hi")

    def driver(t, x, m, y, z, a):
        return -f2(z, a, b)

    lip_z = a_hi * z_max + 2.0 * abs(b)
    bound0 = 0.5 * b * b / a_lo if b > 0 else 0.0
    return Generator(driver, 0.0, lip_z, True, bound0, "f2")


def asian_spread_terminal(K1: float, K2: float) -> TerminalCondition:
    """``K1 + (m - K1)^+ - (m - K2)^+``, independent of ``x``."""
    if K1 > K2:
        raise ValueError("need K1 <= K2")

    def xi(x, m):
        # identical to clip(m, K1, K2), which also keeps the bound exact in floating point
        return np.clip(np.asarray(m, dtype=float), K1, K2) + 0.0 * np.asarray(x)

    return TerminalCondition(xi, 1.0, max(abs(K1), abs(K2)), "asian_spread")


def constant_terminal(c: float) -> TerminalCondition:
    def xi(x, m):
        return np.full(np.broadcast(np.asarray(x), np.asarray(m)).shape, float(c))

    return TerminalCondition(xi, 0.0, abs(c), f"const({c})")


def abs_x_terminal(cap: float = 10.0) -> TerminalCondition:
    """``clip(|x|, 0, cap)`` -- convex in ``x`` wherever the cap is inactive."""

    def xi(x, m):
        return np.clip(np.abs(np.asarray(x, dtype=float)), 0.0, cap) + 0.0 * np.asarray(m)

    return TerminalCondition(xi, 1.0, cap, "abs_x")


def linear_x_terminal() -> TerminalCondition:
    def xi(x, m):
        return np.asarray(x, dtype=float) + 0.0 * np.asarray(m)

    return TerminalCondition(xi, 1.0, math.inf, "x")


def linear_m_terminal() -> TerminalCondition:
    def xi(x, m):
        return np.asarray(m, dtype=float) + 0.0 * np.asarray(x)

    return TerminalCondition(xi, 1.0, math.inf, "m")


@dataclass(frozen=True)
class ModelConfig:
    """Parameters of one example problem.

    ``payoff`` selects the terminal condition (``asian_spread`` by default,
    ``constant`` uses ``payoff_const``, ``abs_x`` the capped ``|x|``).
    """

    model: str = "f1"
    X0: float = 0.2
    T: float = 1.0
    a_lo: float = 0.04
    a_hi: float = 0.09
    control_grid: int = 6
    K_lo: float = -1.0
    K_hi: float = 1.0
    K1: float = -0.2
    K2: float = 0.2
    b: float = 0.0
    z_max: float | None = None
    payoff: str = "asian_spread"
    payoff_const: float = 0.0

    def __post_init__(self) -> None:
        if self.model not in ("f1", "f2", "zero"):
            raise ValueError(f"unknown model id {self.model!r}")
        if self.payoff not in ("asian_spread", "constant", "abs_x"):
            raise ValueError(f"unknown payoff {self.payoff!r}")
        if self.K_lo > self.K_hi:
            raise ValueError("need K_lo <= K_hi")
        if self.K1 > self.K2:
            raise ValueError("need K1 <= K2")
        if not self.T > 0:
            raise ValueError("T must be positive")
        # also validates the control interval
        self.control_set()

    def control_set(self) -> ControlSet:
        return ControlSet(self.a_lo, self.a_hi, self.control_grid)

    def generator(self) -> Generator:
        if self.model == "f1":
            return f1_generator(self.K_lo, self.K_hi, self.a_hi)
        if self.model == "f2":
            # |d_x v| <= (T - t) |d_m v| and the payoff is 1-Lipschitz in m
            z_max = self.T * self.terminal().lip if self.z_max is None else self.z_max
            return f2_generator(self.b, self.a_lo, self.a_hi, z_max)
        return zero_generator()

    def terminal(self) -> TerminalCondition:
        if self.payoff == "constant":
            return constant_terminal(self.payoff_const)
        if self.payoff == "abs_x":
            return abs_x_terminal()
        return asian_spread_terminal(self.K1, self.K2)


def convexity_in_a(gen: Generator, cs: ControlSet, y_box=(-1.0, 1.0), z_box=(-1.0, 1.0), n: int = 9) -> float:
    """Largest violation of midpoint convexity of ``a -> f`` over a sample box.

    Returns ``max(f((a1+a2)/2) - (f(a1)+f(a2))/2)``; a value ``<= 0`` (up to
    rounding) means no violation was found.
    """
    a = np.linspace(cs.a_lo, cs.a_hi, n)
    ys = np.linspace(*y_box, n)
    zs = np.linspace(*z_box, n)
    worst = -math.inf
    for y in ys:
        for z in zs:
            fa = np.asarray(gen(0.0, 0.0, 0.0, y, z, a), dtype=float)
            mid = np.asarray(gen(0.0, 0.0, 0.0, y, z, 0.5 * (a[:-1] + a[1:])), dtype=float)
            worst = max(worst, float(np.max(mid - 0.5 * (fa[:-1] + fa[1:]))))
    return worst
