"""Explicit finite-difference scheme on the reduced state ``(x, m)``.

One backward step at node ``(x_i, m_j)`` reads the next values at the three
lattice neighbours ``x_i + {-dx, 0, dx}`` after shifting ``m`` by the running
integral increment, then takes

    u = sup_a { u_a - f(t, x, m, u_a, Du, a) dt },   u_a = u0 + a dt D2u / 2

with ``D2u`` and ``Du`` the central second and first differences.

The lattice couples ``dx`` to ``dt`` through ``dx >= sqrt(2 a_hi dt)`` and
uses ``dm = dx dt`` (left-endpoint rule), so when ``X0`` sits on a multiple
of ``dx`` every ``m``-shift lands exactly on a lattice node.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .core import (
    ControlSet,
    Generator,
    MonotonicityViolation,
    Scheme,
    SolveResult,
    TerminalCondition,
    TimeGrid,
)
from .increments import trinomial_increment
from .tree_dp import check_monotonicity

M_RULES = ("left", "trapezoid")


@dataclass(frozen=True)
class LatticeConfig:
    """Overrides for the ``(x, m)`` lattice; ``None`` means use the default rule."""

    dx: float | None = None
    width_sd: float = 6.0
    dm: float | None = None
    m_lo: float | None = None
    m_hi: float | None = None
    align_x0: bool = True
    m_rule: str = "left"

    def __post_init__(self) -> None:
        if self.m_rule not in M_RULES:
            raise ValueError(f"m_rule must be one of {M_RULES}")
        if self.width_sd <= 0:
            raise ValueError("width_sd must be positive")


@dataclass(frozen=True)
class ValueGrid:
    """Values on the uniform lattice ``x_min + i dx`` by ``m_min + j dm``."""

    x_min: float
    dx: float
    m_min: float
    dm: float
    values: np.ndarray

    def __post_init__(self) -> None:
        if not (self.dx > 0 and self.dm > 0):
            raise ValueError("lattice steps must be positive")
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("values must be a count_x x count_m matrix")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite lattice values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def x_nodes(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.shape[0])

    @property
    def m_nodes(self) -> np.ndarray:
        return self.m_min + self.dm * np.arange(self.shape[1])

    def with_values(self, values: np.ndarray) -> "ValueGrid":
        return ValueGrid(self.x_min, self.dx, self.m_min, self.dm, values)

    def value_at(self, x: float, m: float) -> float:
        """Value at a lattice row ``x``, linearly interpolated in ``m``."""
        i = round((x - self.x_min) / self.dx)
        if not 0 <= i < self.shape[0] or abs(self.x_min + i * self.dx - x) > 1e-9 * max(1.0, self.dx):
            raise ValueError(f"x={x} is not on the lattice")
        row = self.values[i : i + 1]
        pos = np.array([(m - self.m_min) / self.dm])
        return float(_interp_rows(row, pos, start=0)[0, 0])


def _interp_rows(values: np.ndarray, shifts: np.ndarray, start: int | None = None) -> np.ndarray:
    """Read ``values[r, j + shifts[r]]`` with linear interpolation and clamping.

    ``shifts`` are in units of the ``m`` step, one per row. By default ``j``
    runs over every column; ``start=j0`` evaluates the single column ``j0``.
    """
    nx, nm = values.shape
    if start is None:
        k = np.rint(shifts)
        if np.all(np.abs(shifts - k) < 1e-9):
            return _shift_rows_exact(values, k.astype(np.int64))
    j = np.arange(nm, dtype=float) if start is None else np.array([float(start)])
    pos = j[None, :] + shifts[:, None]
    near = np.rint(pos)
    pos = np.where(np.abs(pos - near) < 1e-9, near, pos)
    lo = np.floor(pos)
    w = pos - lo
    lo = lo.astype(np.int64)
    i0 = np.clip(lo, 0, nm - 1)
    i1 = np.clip(lo + 1, 0, nm - 1)
    rows = np.arange(nx)[:, None]
    out = values[rows, i0]
    mask = w > 0
    if np.any(mask):
        out = np.where(mask, (1.0 - w) * out + w * values[rows, i1], out)
    return out


def _shift_rows_exact(values: np.ndarray, k: np.ndarray) -> np.ndarray:
    nx, nm = values.shape
    pad = int(min(np.max(np.abs(k)), nm))
    padded = np.pad(values, ((0, 0), (pad, pad)), mode="edge")
    out = np.empty_like(values)
    for r in range(nx):
        s = int(np.clip(k[r], -pad, pad)) + pad
        out[r] = padded[r, s : s + nm]
    return out


def lattice_dx(x0: float, a_hi: float, dt: float, cfg: LatticeConfig = LatticeConfig()) -> float:
    """Smallest CFL-admissible ``dx``, enlarged so that ``X0`` is a multiple of it."""
    if cfg.dx is not None:
        return cfg.dx
    dx_min = math.sqrt(2.0 * a_hi * dt)
    if cfg.align_x0 and x0 != 0.0:
        k = math.floor(abs(x0) / dx_min * (1 + 1e-12))
        if k >= 1:
            return abs(x0) / k
    return dx_min


def build_lattice(x0: float, T: float, dt: float, a_hi: float, cfg: LatticeConfig = LatticeConfig()) -> ValueGrid:
    """Zero-valued lattice covering ``X0 +- width_sd sqrt(a_hi T)`` in ``x``.

    The ``m`` axis contains 0 and ``X0 T``, widened by ``width_sd`` standard
    deviations of ``int_0^T sqrt(a_hi) W dt`` (variance ``a_hi T^3 / 3``).
    Reads beyond it are clamped.
    """
    dx = lattice_dx(x0, a_hi, dt, cfg)
    half = math.ceil(cfg.width_sd * math.sqrt(a_hi * T) / dx)
    x_min = x0 - half * dx
    count_x = 2 * half + 1
    if cfg.dm is not None:
        dm = cfg.dm
    else:
        dm = dx * dt if cfg.m_rule == "left" else 0.5 * dx * dt
    m_sd = math.sqrt(a_hi * T**3 / 3.0)
    m_lo = min(0.0, x0 * T) - cfg.width_sd * m_sd if cfg.m_lo is None else cfg.m_lo
    m_hi = max(0.0, x0 * T) + cfg.width_sd * m_sd if cfg.m_hi is None else cfg.m_hi
    if not m_lo <= 0.0 <= m_hi:
        raise ValueError("the m-range must contain 0")
    j_lo = math.floor(m_lo / dm)
    j_hi = math.ceil(m_hi / dm)
    return ValueGrid(x_min, dx, j_lo * dm, dm, np.zeros((count_x, j_hi - j_lo + 1)))


def _neighbour_values(nxt: ValueGrid, dt: float, m_rule: str) -> list[np.ndarray]:
    """Next-step values at ``x - dx``, ``x``, ``x + dx`` after the ``m``-shift."""
    nx = nxt.shape[0]
    x = nxt.x_nodes
    rows = np.arange(nx)
    out = []
    for s in (-1, 0, 1):
        src = nxt.values[np.clip(rows + s, 0, nx - 1)]  # Neumann copy-out at the x-edges
        shift = x * dt
        if m_rule == "trapezoid":
            shift = shift + 0.5 * s * nxt.dx * dt
        out.append(_interp_rows(src, shift / nxt.dm))
    return out


def check_fd_preconditions(gen: Generator, cs: ControlSet, dt: float, dx: float) -> float:
    """Raise on a CFL or monotonicity breach; return the monotonicity margin."""
    fam = trinomial_increment(dt, dx, a_max=cs.a_hi)  # raises CflViolation
    margin = check_monotonicity(gen, cs, fam, dt)
    if margin < 0:
        raise MonotonicityViolation(
            f"margin {margin:.6g} < 0: L_z dx = {gen.lip_z * dx:.6g} exceeds a_lo = {cs.a_lo}"
        )
    return margin


def fd_step(
    nxt: ValueGrid,
    t_k: float,
    gen: Generator,
    cs: ControlSet,
    dt: float,
    m_rule: str = "left",
    check: bool = True,
) -> ValueGrid:
    if check:
        check_fd_preconditions(gen, cs, dt, nxt.dx)
    um, u0, up = _neighbour_values(nxt, dt, m_rule)
    d2 = (up - 2.0 * u0 + um) / nxt.dx**2
    d1 = (up - um) / (2.0 * nxt.dx)
    x = nxt.x_nodes[:, None]
    m = nxt.m_nodes[None, :]
    best = None
    for a in cs.grid:
        a = float(a)
        ua = u0 + 0.5 * a * dt * d2
        val = ua - np.asarray(gen(t_k, x, m, ua, d1, a), dtype=float) * dt
        best = val if best is None else np.maximum(best, val)
    return nxt.with_values(best)


def fd_value_grid(
    gen: Generator,
    term: TerminalCondition,
    cs: ControlSet,
    grid: TimeGrid,
    x0: float,
    lattice: LatticeConfig = LatticeConfig(),
) -> ValueGrid:
    """Run the full backward induction and return the lattice at ``t = 0``."""
    dt = grid.dt
    vg = build_lattice(x0, grid.T, dt, cs.a_hi, lattice)
    check_fd_preconditions(gen, cs, dt, vg.dx)
    vg = vg.with_values(term(vg.x_nodes[:, None], vg.m_nodes[None, :]))
    for k in range(grid.n - 1, -1, -1):
        vg = fd_step(vg, k * dt, gen, cs, dt, lattice.m_rule, check=False)
    return vg


def fd_solve(
    gen: Generator,
    term: TerminalCondition,
    cs: ControlSet,
    grid: TimeGrid,
    x0: float,
    lattice: LatticeConfig = LatticeConfig(),
) -> SolveResult:
    start = time.perf_counter()
    dx = lattice_dx(x0, cs.a_hi, grid.dt, lattice)
    margin = check_fd_preconditions(gen, cs, grid.dt, dx)
    vg = fd_value_grid(gen, term, cs, grid, x0, lattice)
    y0 = vg.value_at(x0, 0.0)
    diagnostics = {
        "dx": vg.dx,
        "dm": vg.dm,
        "count_x": vg.shape[0],
        "count_m": vg.shape[1],
        "cfl_ratio": cs.a_hi * grid.dt / vg.dx**2,
        "monotonicity_margin": margin,
        "m_rule": lattice.m_rule,
    }
    return SolveResult(y0, Scheme.FINITE_DIFFERENCE, grid.n, time.perf_counter() - start, diagnostics)
