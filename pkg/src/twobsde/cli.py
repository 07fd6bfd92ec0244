"""``twobsde`` command-line front end.

Exit codes: 0 success, 2 configuration error, 3 numerical precondition
violation, 4 validation failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from .core import ControlSet, SchemeError, TimeGrid
from .fd_solver import lattice_dx
from .harness import (
    SweepRow,
    SweepSpec,
    calibrate_f2_b,
    run_sweep,
    run_validation,
    solve,
    sweep_csv,
    write_sweep,
)
from .increments import ftw_increment, gaussian_increment, trinomial_increment, validate_moments
from .tree_dp import solve_tree

EXIT_OK, EXIT_CONFIG, EXIT_SCHEME, EXIT_VALIDATION = 0, 2, 3, 4


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value run configuration")
    p.add_argument("--output", type=Path, help="write CSV here instead of stdout")
    p.add_argument("--no-timing", action="store_true", help="write runtime_s as 0.0 for byte-stable output")


def _add_steps(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--n", type=int, help="number of time steps")
    g.add_argument("--dt", type=float, help="time step (must divide T)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twobsde", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("solve-fd", "solve-pde"):
        p = sub.add_parser(name)
        _add_common(p)
        _add_steps(p)

    p = sub.add_parser("solve-proba")
    _add_common(p)
    _add_steps(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--paths", type=int)
    p.add_argument("--degree", type=int)

    p = sub.add_parser("solve-tree")
    _add_common(p)
    _add_steps(p)
    p.add_argument("--mode", choices=("explicit", "implicit"))
    p.add_argument("--debug", action="store_true", help="append the optimal control at every node")

    p = sub.add_parser("sweep")
    _add_common(p)
    p.add_argument("--seed", type=int, action="append", help="proba seed (repeatable)")
    p.add_argument("--workers", type=int, help="parallel sweep cells")

    p = sub.add_parser("validate-increments")
    p.add_argument("--config", type=Path)
    p.add_argument("--output", type=Path)
    p.add_argument("--family", choices=("trinomial", "gaussian", "ftw", "all"), default="all")
    p.add_argument("--dt", type=float, default=0.02)
    p.add_argument("--dx", type=float, help="trinomial space step (default sqrt(2 a_hi dt))")
    p.add_argument("--tol", type=float, default=1e-10)

    p = sub.add_parser("validate")
    p.add_argument("--output", type=Path)
    p.add_argument("--inject", choices=("variance", "cfl"), help=argparse.SUPPRESS)

    p = sub.add_parser("calibrate-f2", help="scan the f2 parameter b against a target value")
    p.add_argument("--config", type=Path)
    p.add_argument("--dt", type=float, default=0.02)
    p.add_argument("--target", type=float, required=True)
    p.add_argument("--tol", type=float, default=0.01)
    return parser


def _with_steps(cfg: RunConfig, args) -> RunConfig:
    n = getattr(args, "n", None)
    dt = getattr(args, "dt", None)
    if dt is not None:
        n = round(cfg.model.T / dt)
        if n < 1 or abs(n * dt - cfg.model.T) > 1e-9 * cfg.model.T:
            raise ConfigError(f"dt={dt} does not divide T={cfg.model.T}")
    if n is not None:
        if n < 1:
            raise ConfigError("n must be positive")
        cfg = replace(cfg, n=n)
    return cfg


def _emit(text: str, output: Path | None) -> None:
    if output is None:
        sys.stdout.write(text)
    else:
        output.write_text(text)


def _solve_command(args, cfg: RunConfig) -> int:
    scheme = args.command.removeprefix("solve-")
    if scheme == "proba":
        overrides = {k: getattr(args, k) for k in ("seed", "paths", "degree") if getattr(args, k) is not None}
        cfg = replace(cfg, proba=replace(cfg.proba, **overrides))
    if scheme == "tree" and args.mode:
        cfg = replace(cfg, tree=replace(cfg.tree, mode=args.mode))
    if scheme == "tree" and args.debug:
        m = cfg.model
        grid = TimeGrid(m.T, cfg.n)
        cs = m.control_set()
        fam = trinomial_increment(grid.dt, lattice_dx(m.X0, cs.a_hi, grid.dt, cfg.lattice), cs.a_hi)
        res = solve_tree(m.generator(), m.terminal(), cs, fam, grid, m.X0, cfg.tree.mode, cfg.tree.m_rule, True)
    else:
        res = solve(scheme, cfg)
    seed = cfg.proba.seed if scheme == "proba" else None
    text = sweep_csv([SweepRow(scheme, cfg.dt, res, seed)], not args.no_timing)
    if scheme == "tree" and args.debug:
        lines = ["k,node,x,m,control"]
        for k, (x, mm, a) in enumerate(res.diagnostics["controls"]):
            lines += [f"{k},{i},{float(x[i])!r},{float(mm[i])!r},{float(a[i])!r}" for i in range(x.size)]
        text += "\n" + "\n".join(lines) + "\n"
    _emit(text, args.output)
    return EXIT_OK


def _sweep_command(args, cfg: RunConfig) -> int:
    if args.seed:
        cfg = replace(cfg, sweep=replace(cfg.sweep, seeds=tuple(args.seed)))
    try:
        spec = SweepSpec.from_config(cfg, args.output)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rows = run_sweep(spec, args.workers)
    if args.output is None:
        sys.stdout.write(sweep_csv(rows, not args.no_timing))
    else:
        dat = write_sweep(rows, args.output, not args.no_timing)
        logging.getLogger(__name__).info("wrote %s and %s", args.output, dat)
    return EXIT_OK


def _validate_increments(args, cfg: RunConfig) -> int:
    cs: ControlSet = cfg.model.control_set()
    dt = args.dt
    families = []
    if args.family in ("trinomial", "all"):
        dx = args.dx if args.dx is not None else lattice_dx(cfg.model.X0, cs.a_hi, dt, replace(cfg.lattice, align_x0=False))
        families.append(trinomial_increment(dt, dx, cs.a_hi))
    if args.family in ("gaussian", "all"):
        families.append(gaussian_increment(dt, cs.a_hi))
    if args.family in ("ftw", "all"):
        families.append(ftw_increment(dt, cs.a_lo, cs.a_hi))
    out, ok = [], True
    for fam in families:
        rep = validate_moments(fam, cs, tol=args.tol)
        ok &= rep.ok
        out.append(f"# family {fam.kind.value}")
        out += rep.csv_lines()
        out += [f"# FAIL {f.check} a={f.a!r} residual={f.residual!r} {f.detail}" for f in rep.failures]
    _emit("\n".join(out) + "\n", args.output)
    return EXIT_OK if ok else EXIT_VALIDATION


def _validate(args) -> int:
    report = run_validation(args.inject)
    _emit("\n".join(report.lines()) + "\n", args.output)
    return EXIT_OK if report.ok else EXIT_VALIDATION


def _calibrate(args, cfg: RunConfig) -> int:
    cal = calibrate_f2_b(cfg.model, args.dt, args.target, args.tol, lattice=cfg.lattice)
    lines = ["b,y0"] + [f"{b!r},{y!r}" for b, y in cal.scanned]
    lines.append(f"# selected b={cal.b!r} y0={cal.y0!r}")
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK if abs(cal.y0 - args.target) <= args.tol else EXIT_VALIDATION


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "validate":
            return _validate(args)
        cfg = load_config(getattr(args, "config", None))
        if args.command.startswith("solve-"):
            return _solve_command(args, _with_steps(cfg, args))
        if args.command == "sweep":
            return _sweep_command(args, cfg)
        if args.command == "validate-increments":
            return _validate_increments(args, cfg)
        return _calibrate(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SchemeError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SCHEME


if __name__ == "__main__":
    sys.exit(main())
