"""Run configuration: flat ``key = value`` files with one section per concern.

Example::

    [model]
    model = f1
    X0 = 0.2
    T = 1.0
    n = 100

    [fd]
    m_rule = left

    [proba]
    paths = 200000
    seed = 0

Unknown sections and keys are errors.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .fd_solver import LatticeConfig
from .models import ModelConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ProbaConfig:
    paths: int = 200_000
    seed: int = 0
    degree: int = 2


@dataclass(frozen=True)
class TreeConfig:
    mode: str = "explicit"
    m_rule: str = "left"


@dataclass(frozen=True)
class SweepConfig:
    dt_list: tuple[float, ...] = (0.05, 0.02, 0.01)
    schemes: tuple[str, ...] = ("fd", "pde")
    seeds: tuple[int, ...] = (0,)


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    n: int = 50
    lattice: LatticeConfig = field(default_factory=LatticeConfig)
    pde_order: str = "hjb_first"
    proba: ProbaConfig = field(default_factory=ProbaConfig)
    tree: TreeConfig = field(default_factory=TreeConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    @property
    def dt(self) -> float:
        return self.model.T / self.n


def _float_tuple(s: str) -> tuple[float, ...]:
    return tuple(float(v) for v in s.replace(",", " ").split())


def _int_tuple(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.replace(",", " ").split())


def _str_tuple(s: str) -> tuple[str, ...]:
    return tuple(v for v in s.replace(",", " ").split())


def _optional_float(s: str):
    return None if s.strip().lower() in ("", "none", "auto") else float(s)


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


_MODEL_TYPES = {
    "model": str,
    "X0": float,
    "T": float,
    "a_lo": float,
    "a_hi": float,
    "control_grid": int,
    "K_lo": float,
    "K_hi": float,
    "K1": float,
    "K2": float,
    "b": float,
    "z_max": _optional_float,
    "payoff": str,
    "payoff_const": float,
}
_LATTICE_TYPES = {
    "dx": _optional_float,
    "width_sd": float,
    "dm": _optional_float,
    "m_lo": _optional_float,
    "m_hi": _optional_float,
    "align_x0": _bool,
    "m_rule": str,
}
_SECTIONS = {
    "model": {**_MODEL_TYPES, "n": int, "dt": float},
    "fd": _LATTICE_TYPES,
    "pde": {"order": str},
    "proba": {"paths": int, "seed": int, "degree": int},
    "tree": {"mode": str, "m_rule": str},
    "sweep": {"dt_list": _float_tuple, "schemes": _str_tuple, "seeds": _int_tuple},
}


def _parse_section(name: str, items) -> dict:
    types = _SECTIONS[name]
    lookup = {k.lower(): k for k in types}
    out = {}
    for raw_key, raw_val in items:
        key = lookup.get(raw_key.lower())
        if key is None:
            raise ConfigError(f"unknown key {raw_key!r} in [{name}]")
        try:
            out[key] = types[key](raw_val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {name}.{key}: {raw_val!r} ({exc})") from exc
    return out


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    parsed = {}
    for section in cp.sections():
        if section.lower() not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        parsed[section.lower()] = _parse_section(section.lower(), cp.items(section))

    model_kw = dict(parsed.get("model", {}))
    n = model_kw.pop("n", None)
    dt = model_kw.pop("dt", None)
    try:
        model = ModelConfig(**model_kw)
        lattice = LatticeConfig(**parsed.get("fd", {}))
        cfg = RunConfig(
            model=model,
            lattice=lattice,
            pde_order=parsed.get("pde", {}).get("order", "hjb_first"),
            proba=ProbaConfig(**parsed.get("proba", {})),
            tree=TreeConfig(**parsed.get("tree", {})),
            sweep=SweepConfig(**parsed.get("sweep", {})),
        )
        if n is not None and dt is not None:
            raise ConfigError("give either n or dt, not both")
        if dt is not None:
            n = round(model.T / dt)
            if n < 1 or abs(n * dt - model.T) > 1e-9 * model.T:
                raise ConfigError(f"dt={dt} does not divide T={model.T}")
        if n is not None:
            if n < 1:
                raise ConfigError("n must be positive")
            cfg = replace(cfg, n=n)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def dump_config(cfg: RunConfig) -> str:
    """Inverse of ``parse_config`` for every explicitly representable field."""
    lines = ["[model]"]
    for f in fields(ModelConfig):
        v = getattr(cfg.model, f.name)
        lines.append(f"{f.name} = {'auto' if v is None else v}")
    lines.append(f"n = {cfg.n}")
    lines.append("")
    lines.append("[fd]")
    for f in fields(LatticeConfig):
        v = getattr(cfg.lattice, f.name)
        lines.append(f"{f.name} = {'auto' if v is None else v}")
    lines += ["", "[pde]", f"order = {cfg.pde_order}", "", "[proba]"]
    lines += [f"{f.name} = {getattr(cfg.proba, f.name)}" for f in fields(ProbaConfig)]
    lines += ["", "[tree]"]
    lines += [f"{f.name} = {getattr(cfg.tree, f.name)}" for f in fields(TreeConfig)]
    lines += ["", "[sweep]"]
    lines.append("dt_list = " + ", ".join(repr(v) for v in cfg.sweep.dt_list))
    lines.append("schemes = " + ", ".join(cfg.sweep.schemes))
    lines.append("seeds = " + ", ".join(str(v) for v in cfg.sweep.seeds))
    return "\n".join(lines) + "\n"
