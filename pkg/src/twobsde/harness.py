"""Convergence sweeps, calibration and the bundled validation suite."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .config import RunConfig
from .core import (
    ControlSet,
    DomainViolation,
    SchemeError,
    SolveResult,
    TimeGrid,
    ZDependentGenerator,
)
from .fd_solver import LatticeConfig, check_fd_preconditions, fd_solve, lattice_dx
from .increments import (
    ftw_density,
    ftw_increment,
    gaussian_increment,
    trinomial_increment,
    validate_moments,
)
from .models import ModelConfig, zero_generator
from .pde_benchmark import pde_split_solve
from .proba_solver import RegressionBasis, default_workers, g_function, proba_solve
from .tree_dp import MAX_TREE_STEPS, check_monotonicity, solve_tree

SCHEMES = ("fd", "proba", "pde", "tree")
CSV_HEADER = "scheme,dt,dx,paths,seed,y0,runtime_s,monotonicity_margin"


class SweepError(SchemeError):
    """A scheme precondition failed for one sweep cell."""


# -- single solves --------------------------------------------------------


def precheck(scheme: str, model: ModelConfig, dt: float, lattice: LatticeConfig = LatticeConfig()) -> None:
    """Raise the scheme's own precondition error before any work is done."""
    gen, cs = model.generator(), model.control_set()
    if scheme in ("fd", "pde", "tree"):
        check_fd_preconditions(gen, cs, dt, lattice_dx(model.X0, cs.a_hi, dt, lattice))
    if scheme == "tree" and round(model.T / dt) > MAX_TREE_STEPS:
        raise SchemeError(f"tree needs T/dt <= {MAX_TREE_STEPS}")
    if scheme == "proba":
        if gen.depends_on_z:
            raise ZDependentGenerator(f"model {model.model} depends on z")
        if cs.a_hi > 3 * cs.a_lo * (1 + 1e-12):
            raise DomainViolation(f"a_hi={cs.a_hi} exceeds 3 a_lo")


def solve(scheme: str, cfg: RunConfig, dt: float | None = None, seed: int | None = None, workers: int | None = None) -> SolveResult:
    model = cfg.model
    grid = TimeGrid(model.T, cfg.n) if dt is None else TimeGrid.from_dt(model.T, dt)
    gen, term, cs = model.generator(), model.terminal(), model.control_set()
    if scheme == "fd":
        return fd_solve(gen, term, cs, grid, model.X0, cfg.lattice)
    if scheme == "pde":
        return pde_split_solve(gen, term, cs, grid, model.X0, cfg.lattice, cfg.pde_order)
    if scheme == "proba":
        return proba_solve(
            gen,
            term,
            cs,
            grid,
            model.X0,
            cfg.proba.paths,
            RegressionBasis(cfg.proba.degree),
            cfg.proba.seed if seed is None else seed,
            workers,
        )
    if scheme == "tree":
        dx = lattice_dx(model.X0, cs.a_hi, grid.dt, cfg.lattice)
        fam = trinomial_increment(grid.dt, dx, cs.a_hi)
        return solve_tree(gen, term, cs, fam, grid, model.X0, cfg.tree.mode, cfg.tree.m_rule)
    raise ValueError(f"unknown scheme {scheme!r}")


# -- sweeps ---------------------------------------------------------------


@dataclass(frozen=True)
class SweepSpec:
    dt_list: tuple[float, ...]
    schemes: tuple[str, ...]
    model: ModelConfig = field(default_factory=ModelConfig)
    seeds: tuple[int, ...] = (0,)
    output: Path | None = None
    settings: RunConfig = field(default_factory=RunConfig)

    def __post_init__(self) -> None:
        if not self.dt_list:
            raise ValueError("empty dt_list")
        if any(b >= a for a, b in zip(self.dt_list, self.dt_list[1:])):
            raise ValueError("dt_list must be strictly decreasing")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown:
            raise ValueError(f"unknown schemes {sorted(unknown)}")
        if "tree" in self.schemes:
            worst = max(round(self.model.T / dt) for dt in self.dt_list)
            if worst > MAX_TREE_STEPS:
                raise ValueError(f"tree scheme needs T/dt <= {MAX_TREE_STEPS}, got {worst}")
        if not self.seeds:
            raise ValueError("need at least one seed")

    @classmethod
    def from_config(cls, cfg: RunConfig, output: Path | None = None) -> "SweepSpec":
        return cls(cfg.sweep.dt_list, cfg.sweep.schemes, cfg.model, cfg.sweep.seeds, output, cfg)

    def cells(self) -> list[tuple[str, float, int | None]]:
        out = []
        for scheme in self.schemes:
            for dt in self.dt_list:
                if scheme == "proba":
                    out.extend((scheme, dt, s) for s in self.seeds)
                else:
                    out.append((scheme, dt, None))
        return out


@dataclass(frozen=True)
class SweepRow:
    scheme: str
    dt: float
    result: SolveResult
    seed: int | None = None

    def csv(self, timing: bool = True) -> str:
        d = self.result.diagnostics
        dx = d.get("dx")
        paths = d.get("paths")
        fields = [
            self.scheme,
            repr(self.dt),
            "" if dx is None else repr(float(dx)),
            "" if paths is None else str(paths),
            "" if self.seed is None else str(self.seed),
            repr(self.result.y0),
            repr(self.result.runtime_s) if timing else "0.0",
            repr(float(d.get("monotonicity_margin", math.nan))),
        ]
        return ",".join(fields)


def run_sweep(spec: SweepSpec, workers: int | None = None) -> list[SweepRow]:
    """Solve every (scheme, dt, seed) cell; rows come back in that order."""
    settings = replace(spec.settings, model=spec.model)
    for scheme, dt, _ in spec.cells():
        try:
            precheck(scheme, spec.model, dt, settings.lattice)
        except SchemeError as exc:
            raise SweepError(f"scheme={scheme} dt={dt}: {type(exc).__name__}: {exc}") from exc
    workers = default_workers() if workers is None else workers

    def run(cell):
        scheme, dt, seed = cell
        # proba draws its own streams per (seed, chunk); nested pools are not needed
        return SweepRow(scheme, dt, solve(scheme, settings, dt, seed, workers=1), seed)

    cells = spec.cells()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(run, cells))
    return [run(c) for c in cells]


def sweep_csv(rows: Iterable[SweepRow], timing: bool = True) -> str:
    return "\n".join([CSV_HEADER] + [r.csv(timing) for r in rows]) + "\n"


def sweep_gnuplot(rows: Sequence[SweepRow]) -> str:
    """One data block per scheme (``dt y0 [std]``), separated for ``index`` selection."""
    blocks = []
    for scheme in dict.fromkeys(r.scheme for r in rows):
        sub = [r for r in rows if r.scheme == scheme]
        lines = [f"# scheme {scheme}", "# dt y0 y0_std"]
        for dt in dict.fromkeys(r.dt for r in sub):
            ys = np.array([r.result.y0 for r in sub if r.dt == dt])
            lines.append(f"{dt!r} {float(ys.mean())!r} {float(ys.std()):.17g}")
        blocks.append("\n".join(lines))
    return "\n\n\n".join(blocks) + "\n"


def write_sweep(rows: Sequence[SweepRow], output: Path, timing: bool = True) -> Path:
    output = Path(output)
    output.write_text(sweep_csv(rows, timing))
    dat = output.with_suffix(".dat")
    dat.write_text(sweep_gnuplot(rows))
    return dat


# -- f2 calibration -------------------------------------------------------


@dataclass(frozen=True)
class Calibration:
    b: float
    y0: float
    scanned: tuple[tuple[float, float], ...]


def calibrate_f2_b(
    model: ModelConfig,
    dt: float,
    target: float,
    tol: float,
    b_grid: Sequence[float] = tuple(np.round(np.arange(0.0, 0.2001, 0.01), 10)),
    lattice: LatticeConfig = LatticeConfig(),
) -> Calibration:
    """Try ``b = 0``; if ``fd_solve`` misses ``target +- tol``, scan ``b_grid`` for the closest value."""
    grid = TimeGrid.from_dt(model.T, dt)

    def y_of(b):
        m = replace(model, model="f2", b=float(b))
        return fd_solve(m.generator(), m.terminal(), m.control_set(), grid, m.X0, lattice).y0

    y0 = y_of(0.0)
    scanned = [(0.0, y0)]
    if abs(y0 - target) <= tol:
        return Calibration(0.0, y0, tuple(scanned))
    scanned += [(float(b), y_of(b)) for b in b_grid if b != 0.0]
    b, y = min(scanned, key=lambda by: abs(by[1] - target))
    return Calibration(b, y, tuple(scanned))


# -- validation suite -----------------------------------------------------


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[Check, ...]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list[str]:
        return [f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}" for c in self.checks]


def run_validation(inject: str | None = None) -> ValidationReport:
    """Moment contracts, tree/lattice equivalence and closed-form G-expectations.

    ``inject`` in {"variance", "cfl"} plants a fault to prove the suite can fail.
    """
    if inject not in (None, "variance", "cfl"):
        raise ValueError(f"unknown fault {inject!r}")
    checks: list[Check] = []
    cs = ControlSet(0.04, 0.09, 6)
    dt = 0.02

    families = [
        trinomial_increment(dt, math.sqrt(2 * cs.a_hi * dt), cs.a_hi),
        gaussian_increment(dt, cs.a_hi),
        ftw_increment(dt, cs.a_lo, cs.a_hi),
    ]
    for fam in families:
        rep = validate_moments(fam, cs, tol=1e-10, var_scale=1.01 if inject == "variance" else 1.0)
        detail = "; ".join(f"{f.check} a={f.a:g} residual={f.residual:.3e}" for f in rep.failures)
        checks.append(Check(f"moments[{fam.kind.value}]", rep.ok, detail or f"{len(rep.rows)} controls"))

    for a in (0.04, 0.06, 0.09):
        z, w = hermegauss(40)
        s0 = math.sqrt(cs.a_lo * dt)
        rho = ftw_density(a, cs.a_lo, dt, s0 * z) * s0 * math.sqrt(2 * math.pi) * np.exp(0.5 * z * z)
        mass = float(w @ rho) / math.sqrt(2 * math.pi)
        second = float(w @ (rho * (s0 * z) ** 2)) / math.sqrt(2 * math.pi)
        ok = abs(mass - 1) <= 1e-10 and abs(second - a * dt) <= 1e-10
        checks.append(Check(f"ftw_density[a={a}]", ok, f"mass-1={mass - 1:.2e} second-a*dt={second - a * dt:.2e}"))

    for model_id in ("f1", "zero"):
        model = ModelConfig(model=model_id, T=0.3)
        grid = TimeGrid(0.3, 3)
        gen, term, mcs = model.generator(), model.terminal(), model.control_set()
        dx = lattice_dx(model.X0, mcs.a_hi, grid.dt)
        lattice = LatticeConfig(dx=0.5 * dx) if inject == "cfl" else LatticeConfig()
        try:
            fam = trinomial_increment(grid.dt, dx, mcs.a_hi)
            y_tree = solve_tree(gen, term, mcs, fam, grid, model.X0, "explicit").y0
            y_fd = fd_solve(gen, term, mcs, grid, model.X0, lattice).y0
        except SchemeError as exc:
            checks.append(Check(f"tree_vs_fd[{model_id}]", False, f"scheme=fd dt={grid.dt:g}: {type(exc).__name__}: {exc}"))
            continue
        diff = abs(y_tree - y_fd)
        checks.append(Check(f"tree_vs_fd[{model_id}]", diff <= 1e-12, f"|tree-fd|={diff:.2e}"))

    T = 1.0
    grid = TimeGrid.from_dt(T, 0.01)
    flat_m = LatticeConfig(m_lo=0.0, m_hi=0.0)
    payoff = ModelConfig(model="zero", X0=0.0, payoff="abs_x").terminal()
    for label, ccs in (("a_lo", ControlSet.singleton(0.04)), ("a_hi", ControlSet.singleton(0.09)), ("A", cs)):
        res = fd_solve(zero_generator(), payoff, ccs, grid, 0.0, flat_m)
        target = math.sqrt(ccs.a_hi) * math.sqrt(2 * T / math.pi)
        err = abs(res.y0 - target)
        tol = 2 * res.diagnostics["dx"]
        checks.append(Check(f"g_expectation[{label}]", err <= tol, f"|y0-closed form|={err:.2e} tol={tol:.2e}"))

    zero = zero_generator()
    g_cases = [(0.0, 0.0), (2.0, 0.09), (-2.0, -0.04)]
    two = ControlSet(0.04, 0.09, 2)
    g_ok = all(abs(g_function(0.0, 0.0, 0.0, 0.3, gam, zero, two, dt) - want) <= 1e-15 for gam, want in g_cases)
    checks.append(Check("g_function[f=0]", g_ok, "sup of a*gamma/2 over {0.04, 0.09}"))

    margin = check_monotonicity(ModelConfig(model="f1").generator(), cs, families[0], dt)
    checks.append(Check("monotonicity[z-independent]", margin == 1.0, f"margin={margin}"))
    return ValidationReport(tuple(checks))
