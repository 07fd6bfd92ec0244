"""Exact dynamic programming on the non-recombining trinomial path tree.

This is the ground-truth oracle for small ``n``: every path ``(x_0, ..., x_k)``
is its own node, so no state reduction or interpolation is involved. The
scalar ``implicit_step`` / ``explicit_step`` functions state one backward step
literally; ``solve_tree`` runs the same recursion level-by-level on arrays.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .core import (
    ControlSet,
    Generator,
    NoContraction,
    Scheme,
    SolveResult,
    TerminalCondition,
    TimeGrid,
    TreeTooLarge,
    apriori_bound,
)
from .increments import IncrementFamily, IncrementKind

MAX_TREE_STEPS = 12
PICARD_TOL = 1e-12
PICARD_MAX_ITER = 100


@dataclass(frozen=True)
class PathNode:
    k: int
    path: tuple[float, ...]
    m: float

    @property
    def x(self) -> float:
        return self.path[-1]

    def child(self, h: float, dt: float, m_rule: str = "left") -> "PathNode":
        x_next = self.x + h
        return PathNode(self.k + 1, self.path + (x_next,), _advance_m(self.m, self.x, x_next, dt, m_rule))


@dataclass(frozen=True)
class StepOutput:
    y: float
    z: float
    dN2: float = 0.0


def _advance_m(m, x, x_next, dt, m_rule):
    if m_rule == "left":
        return m + x * dt
    if m_rule == "trapezoid":
        return m + 0.5 * (x + x_next) * dt
    raise ValueError(f"unknown m_rule {m_rule!r}")


def _child_moments(values_next: Mapping[tuple, float], node: PathNode, a: float, fam: IncrementFamily, dt: float):
    hs, ps = fam.outcomes(a)
    v = np.array([values_next[node.path + (node.x + h,)] for h in hs])
    mean = float(ps @ v)
    z = float(ps @ (v * hs)) / (a * dt)
    dN2 = float(ps @ (v - mean - z * hs) ** 2)
    return mean, z, dN2


def implicit_step(
    values_next: Mapping[tuple, float],
    node: PathNode,
    a: float,
    gen: Generator,
    fam: IncrementFamily,
    dt: float,
) -> StepOutput:
    """Solve ``y = E[Y_next] - f(t, x, m, y, z, a) dt`` at one node by Picard iteration."""
    if gen.lip_y * dt >= 1:
        raise NoContraction(f"lip_y * dt = {gen.lip_y * dt} >= 1")
    mean, z, dN2 = _child_moments(values_next, node, a, fam, dt)
    t = node.k * dt
    y = mean
    for _ in range(PICARD_MAX_ITER):
        y_new = mean - float(gen(t, node.x, node.m, y, z, a)) * dt
        if abs(y_new - y) <= PICARD_TOL:
            y = y_new
            break
        y = y_new
    return StepOutput(y, z, dN2)


def explicit_step(
    values_next: Mapping[tuple, float],
    node: PathNode,
    a: float,
    gen: Generator,
    fam: IncrementFamily,
    dt: float,
) -> StepOutput:
    """``y = E[Y_next] - f(t, x, m, E[Y_next], z, a) dt``."""
    mean, z, dN2 = _child_moments(values_next, node, a, fam, dt)
    y = mean - float(gen(node.k * dt, node.x, node.m, mean, z, a)) * dt
    return StepOutput(y, z, dN2)


def check_monotonicity(gen: Generator, cs: ControlSet, fam: IncrementFamily, dt: float | None = None) -> float:
    """Smallest one-step weight ``1 + L_z a^{-1} dM`` over grid controls and support points.

    A nonnegative margin certifies that the backward step is monotone.
    Increments with unbounded support give ``-inf`` as soon as ``f`` depends
    on ``z``.
    """
    if not gen.depends_on_z or gen.lip_z == 0:
        return 1.0
    if fam.kind is not IncrementKind.TRINOMIAL:
        return -math.inf
    return min(1.0 - gen.lip_z * fam.dx / float(a) for a in cs.grid)


def _level_states(x0: float, hs: np.ndarray, dt: float, n: int, m_rule: str):
    xs, ms = [np.array([x0])], [np.array([0.0])]
    for _ in range(n):
        x, m = xs[-1], ms[-1]
        x_rep = np.repeat(x, 3)
        x_next = x_rep + np.tile(hs, x.size)
        m_next = _advance_m(np.repeat(m, 3), x_rep, x_next, dt, m_rule)
        xs.append(x_next)
        ms.append(m_next)
    return xs, ms


def solve_tree(
    gen: Generator,
    term: TerminalCondition,
    cs: ControlSet,
    fam: IncrementFamily,
    grid: TimeGrid,
    x0: float = 0.0,
    mode: str = "explicit",
    m_rule: str = "left",
    record_controls: bool = False,
) -> SolveResult:
    """Backward induction over every path with a per-node sup over the control grid."""
    if grid.n > MAX_TREE_STEPS:
        raise TreeTooLarge(f"n={grid.n} exceeds the tree cap of {MAX_TREE_STEPS}")
    if mode not in ("implicit", "explicit"):
        raise ValueError(f"unknown mode {mode!r}")
    dt = grid.dt
    if abs(fam.dt - dt) > 1e-12 * dt:
        raise ValueError(f"increment family built for dt={fam.dt}, grid has dt={dt}")
    if mode == "implicit" and gen.lip_y * dt >= 1:
        raise NoContraction(f"lip_y * dt = {gen.lip_y * dt} >= 1")
    start = time.perf_counter()
    controls = cs.grid
    laws = [fam.outcomes(float(a)) for a in controls]
    hs = laws[0][0]
    xs, ms = _level_states(x0, hs, dt, grid.n, m_rule)

    values = np.asarray(term(xs[-1], ms[-1]), dtype=float)
    sup_abs = float(np.max(np.abs(values)))
    max_dN2 = 0.0
    argmax_levels = []
    for k in range(grid.n - 1, -1, -1):
        t = k * dt
        x, m = xs[k], ms[k]
        V = values.reshape(-1, 3)
        best = np.full(x.size, -np.inf)
        best_idx = np.zeros(x.size, dtype=int)
        best_dN2 = np.zeros(x.size)
        for j, (a, (_, ps)) in enumerate(zip(controls, laws)):
            a = float(a)
            mean = V @ ps
            z = (V @ (ps * hs)) / (a * dt)
            if mode == "explicit":
                y = mean - np.asarray(gen(t, x, m, mean, z, a), dtype=float) * dt
            else:
                y = mean.copy()
                for _ in range(PICARD_MAX_ITER):
                    y_new = mean - np.asarray(gen(t, x, m, y, z, a), dtype=float) * dt
                    done = np.max(np.abs(y_new - y)) <= PICARD_TOL
                    y = y_new
                    if done:
                        break
            resid = V - mean[:, None] - z[:, None] * hs[None, :]
            dN2 = (resid**2) @ ps
            better = y > best
            best = np.where(better, y, best)
            best_idx = np.where(better, j, best_idx)
            best_dN2 = np.where(better, dN2, best_dN2)
        values = best
        sup_abs = max(sup_abs, float(np.max(np.abs(values))))
        max_dN2 = max(max_dN2, float(np.max(best_dN2)))
        if record_controls:
            argmax_levels.append((x, m, controls[best_idx]))

    diagnostics = {
        "mode": mode,
        "m_rule": m_rule,
        "dx": fam.dx,
        "leaves": 3**grid.n,
        "sup_abs_y": sup_abs,
        "max_dN2": max_dN2,
        "monotonicity_margin": check_monotonicity(gen, cs, fam, dt),
    }
    if not gen.depends_on_z:
        bound = apriori_bound(gen, term, grid.T, dt if mode == "implicit" else 0.0)
        diagnostics["apriori_bound"] = bound
        diagnostics["bound_ok"] = sup_abs <= bound * (1 + 1e-12)
    if record_controls:
        # (x, m, optimal control) per node, one triple of arrays per level k = 0..n-1
        diagnostics["controls"] = tuple(reversed(argmax_levels))
    return SolveResult(float(values[0]), Scheme.TREE_DP, grid.n, time.perf_counter() - start, diagnostics)


def solve_tree_scalar(
    gen: Generator,
    term: TerminalCondition,
    cs: ControlSet,
    fam: IncrementFamily,
    grid: TimeGrid,
    x0: float = 0.0,
    mode: str = "explicit",
    m_rule: str = "left",
) -> float:
    """Node-by-node recursion through ``implicit_step``/``explicit_step``.

    Slow; used to cross-check the array version on very small trees.
    """
    step = implicit_step if mode == "implicit" else explicit_step
    dt = grid.dt
    hs, _ = fam.outcomes(float(cs.grid[0]))

    def value(node: PathNode) -> float:
        if node.k == grid.n:
            return float(term(node.x, node.m))
        kids = [node.child(float(h), dt, m_rule) for h in hs]
        values_next = {kid.path: value(kid) for kid in kids}
        return max(step(values_next, node, float(a), gen, fam, dt).y for a in cs.grid)

    return value(PathNode(0, (x0,), 0.0))
