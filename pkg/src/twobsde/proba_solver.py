"""Monte-Carlo regression scheme with second-order weights.

Paths are simulated once under the base volatility ``sigma0 = sqrt(a0)``.
Going backward, conditional expectations are least-squares regressions on
monomials of the state ``(x, m)``, and the control enters only through the
Hamiltonian

    G(t, x, m, y, gamma) = sup_a ( a gamma / 2 - f(t, x, m, y + a gamma dt / 2, 0, a) )

where ``gamma`` is the regression of ``Y_next (dW^2 - dt) / (dt^2 a0)``.
The reweighting of the base Gaussian only stays a probability law for
``a0 <= a <= 3 a0``; ``a0`` is taken as the lower end of the control set.
"""

from __future__ import annotations

import logging
import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import (
    ControlSet,
    DomainViolation,
    Generator,
    RankDeficientBasis,
    Scheme,
    SolveResult,
    TerminalCondition,
    TimeGrid,
    ZDependentGenerator,
    apriori_bound,
)

logger = logging.getLogger(__name__)

CHUNK_PATHS = 1 << 14
THREADS_ENV = "TWOBSDE_THREADS"


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class SimulatedEnsemble:
    """Paths of ``x = X0 + sigma0 W`` and its left-endpoint running integral ``m``.

    Arrays are indexed ``[k, path]``; ``dW[k]`` is the increment from ``t_k``
    to ``t_{k+1}``.
    """

    n_paths: int
    seed: int
    x: np.ndarray
    m: np.ndarray
    dW: np.ndarray


def _chunk_normals(seed: int, chunk: int, n_steps: int, size: int) -> np.ndarray:
    # one counter-based stream per (seed, chunk) so the draw never depends on scheduling
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, chunk])))
    return rng.standard_normal((n_steps, size))


def simulate_ensemble(
    x0: float, grid: TimeGrid, a0: float, n_paths: int, seed: int, workers: int | None = None
) -> SimulatedEnsemble:
    if n_paths < 1:
        raise ValueError("need at least one path")
    dt = grid.dt
    workers = default_workers() if workers is None else workers
    dW = np.empty((grid.n, n_paths))
    starts = list(range(0, n_paths, CHUNK_PATHS))

    def fill(ci_start):
        ci, s = ci_start
        size = min(CHUNK_PATHS, n_paths - s)
        dW[:, s : s + size] = math.sqrt(dt) * _chunk_normals(seed, ci, grid.n, size)

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(fill, enumerate(starts)))
    else:
        for item in enumerate(starts):
            fill(item)

    x = np.empty((grid.n + 1, n_paths))
    x[0] = x0
    np.cumsum(math.sqrt(a0) * dW, axis=0, out=x[1:])
    x[1:] += x0
    m = np.empty_like(x)
    m[0] = 0.0
    np.cumsum(x[:-1] * dt, axis=0, out=m[1:])
    return SimulatedEnsemble(n_paths, seed, x, m, dW)


@dataclass(frozen=True)
class RegressionBasis:
    """Monomials ``x^i m^j`` with ``i + j <= degree``, constant first."""

    degree: int = 2

    def __post_init__(self) -> None:
        if self.degree < 1:
            raise ValueError("degree must be at least 1")

    @property
    def exponents(self) -> list[tuple[int, int]]:
        return [(i, d - i) for d in range(self.degree + 1) for i in range(d, -1, -1)]

    @property
    def size(self) -> int:
        return (self.degree + 1) * (self.degree + 2) // 2

    def design(self, x: np.ndarray, m: np.ndarray) -> np.ndarray:
        """Design matrix on standardized ``(x, m)``; degenerate coordinates are dropped."""
        cols = []
        zx = _standardize(x)
        zm = _standardize(m)
        for i, j in self.exponents:
            if (i and zx is None) or (j and zm is None):
                continue
            col = np.ones_like(x)
            if i:
                col = col * zx**i
            if j:
                col = col * zm**j
            cols.append(col)
        return np.column_stack(cols)


def _standardize(v: np.ndarray):
    sd = float(np.std(v))
    if sd <= 1e-12 * max(1.0, float(np.max(np.abs(v)))):
        return None
    return (v - float(np.mean(v))) / sd


def gamma_weight(dW, dt: float, a0: float):
    """``(dW^2 - dt) / (dt^2 a0)``: unbiased weight for the second derivative."""
    dW = np.asarray(dW, dtype=float)
    return (dW * dW - dt) / (dt * dt * a0)


def g_function(t, x, m, y, gamma, gen: Generator, cs: ControlSet, dt: float, a0: float = 0.0):
    """``sup_a ( b gamma / 2 - f(t, x, m, y + b gamma dt / 2, 0, a) )`` with ``b = a - a0``.

    With the default ``a0 = 0`` this is the plain Hamiltonian. The regression
    scheme passes its base level: paths simulated at variance ``a0`` already
    carry ``a0 gamma / 2`` inside the conditional expectation.
    """
    if gen.depends_on_z:
        raise ZDependentGenerator("the regression scheme needs a z-independent generator")
    y = np.asarray(y, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    best = None
    for a in cs.grid:
        a = float(a)
        half = 0.5 * (a - a0) * gamma
        val = half - np.asarray(gen(t, x, m, y + half * dt, 0.0, a), dtype=float)
        best = val if best is None else np.maximum(best, val)
    return best if best.ndim else float(best)


def _regress(design: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, float, int]:
    coef, _, rank, sv = np.linalg.lstsq(design, targets, rcond=None)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    return design @ coef, cond, int(rank)


def proba_solve(
    gen: Generator,
    term: TerminalCondition,
    cs: ControlSet,
    grid: TimeGrid,
    x0: float,
    n_paths: int = 200_000,
    basis: RegressionBasis = RegressionBasis(),
    seed: int = 0,
    workers: int | None = None,
    truncate: bool = True,
) -> SolveResult:
    """Backward regression sweep; ``truncate`` clips values to the a-priori bound."""
    if gen.depends_on_z:
        raise ZDependentGenerator("the regression scheme needs a z-independent generator")
    a0 = cs.a_lo
    if cs.a_hi > 3.0 * a0 * (1 + 1e-12):
        raise DomainViolation(f"a_hi={cs.a_hi} exceeds 3 a0 = {3 * a0}; the reweighted law is not a density")
    if n_paths < 10 * basis.size:
        raise ValueError(f"need at least {10 * basis.size} paths for a basis of size {basis.size}")
    start = time.perf_counter()
    dt = grid.dt
    ens = simulate_ensemble(x0, grid, a0, n_paths, seed, workers)
    cap = apriori_bound(gen, term, grid.T)

    y = np.asarray(term(ens.x[-1], ens.m[-1]), dtype=float)
    if truncate:
        y = np.clip(y, -cap, cap)
    max_cond = 1.0
    degree = basis.degree
    worst_weight_z = 0.0
    for k in range(grid.n - 1, -1, -1):
        w = gamma_weight(ens.dW[k], dt, a0)
        w_se = float(np.std(w)) / math.sqrt(n_paths)
        if w_se > 0:
            worst_weight_z = max(worst_weight_z, abs(float(np.mean(w))) / w_se)
        cur = RegressionBasis(degree)
        design = cur.design(ens.x[k], ens.m[k])
        while True:
            cond_y, cond, rank = _regress(design, y)
            if rank == design.shape[1] or cur.degree == 1:
                break
            warnings.warn(
                f"design matrix rank {rank} < {design.shape[1]} at step {k}; "
                f"reducing degree to {cur.degree - 1}",
                RankDeficientBasis,
                stacklevel=2,
            )
            cur = RegressionBasis(cur.degree - 1)
            degree = min(degree, cur.degree)
            design = cur.design(ens.x[k], ens.m[k])
        max_cond = max(max_cond, cond)
        # E[c(x_k) w | x_k] = 0, so centring by the fitted mean leaves Gamma unbiased
        gam, _, _ = _regress(design, (y - cond_y) * w)
        y = cond_y + dt * g_function(k * dt, ens.x[k], ens.m[k], cond_y, gam, gen, cs, dt, a0)
        if truncate:
            y = np.clip(y, -cap, cap)

    diagnostics = {
        "paths": n_paths,
        "seed": seed,
        "degree": degree,
        "a0": a0,
        "max_condition_number": max_cond,
        "max_weight_mean_z": worst_weight_z,
        "truncation": cap if truncate else math.inf,
        "monotonicity_margin": 1.0,
    }
    return SolveResult(float(np.mean(y)), Scheme.PROBABILISTIC, grid.n, time.perf_counter() - start, diagnostics)
