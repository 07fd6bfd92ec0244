"""One-step martingale increments ``H(a, u)`` and their moment contract.

Every family must satisfy, for each control ``a``::

    E[H] = 0,   Var(H) = a dt,   E|H|^(2+delta) <= C dt^(1 + delta/2)

Three families are provided: Gaussian, trinomial (lattice neighbours at
``{-dx, 0, dx}``) and the weighted-Gaussian density used by the regression
scheme, whose base law is ``N(0, a0 dt)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special, stats

from .core import CflViolation, ControlSet, DomainViolation


class IncrementKind(str, enum.Enum):
    GAUSSIAN = "Gaussian"
    TRINOMIAL = "Trinomial"
    FTW_DENSITY = "FtwDensity"


def _abs_normal_moment(p: float) -> float:
    """E|N(0,1)|^p."""
    return 2.0 ** (p / 2) * special.gamma((p + 1) / 2) / math.sqrt(math.pi)


@dataclass(frozen=True)
class IncrementFamily:
    """A family of increment laws indexed by the control ``a``.

    ``C`` is the declared constant of the (2+delta)-moment bound, valid for
    all controls up to ``a_max``.
    """

    kind: IncrementKind
    dt: float
    C: float
    delta: float = 1.0
    a_max: float = math.inf
    dx: float | None = None
    a0: float | None = None

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.delta <= 0:
            raise ValueError("delta must be positive")

    # trinomial ------------------------------------------------------------

    def cfl_ratio(self, a: float) -> float:
        """``a dt / dx^2``; the lattice is admissible while this is <= 1/2."""
        if self.kind is not IncrementKind.TRINOMIAL:
            raise TypeError("cfl_ratio is defined for trinomial families only")
        return a * self.dt / self.dx**2

    def outcomes(self, a: float) -> tuple[np.ndarray, np.ndarray]:
        """Support points ``(-dx, 0, dx)`` and their probabilities."""
        if self.kind is not IncrementKind.TRINOMIAL:
            raise TypeError(f"{self.kind.value} increments have no finite support")
        p = self.cfl_ratio(a)
        if p > 0.5 + 1e-12:
            raise CflViolation(
                f"a dt/dx^2 = {p:.6g} > 1/2 (a={a}, dt={self.dt}, dx={self.dx})"
            )
        # each jump carries half the ratio so that Var = 2 (p/2) dx^2 = a dt
        q = 0.5 * p
        return np.array([-self.dx, 0.0, self.dx]), np.array([q, 1.0 - 2.0 * q, q])

    # densities ------------------------------------------------------------

    def density(self, a: float, x):
        if self.kind is IncrementKind.GAUSSIAN:
            return stats.norm.pdf(x, scale=math.sqrt(a * self.dt))
        if self.kind is IncrementKind.FTW_DENSITY:
            return ftw_density(a, self.a0, self.dt, x)
        raise TypeError("trinomial increments have no density")

    # sampling -------------------------------------------------------------

    def sample(self, a: float, u):
        """Deterministic map from uniforms ``u`` to increments under control ``a``."""
        u = np.asarray(u, dtype=float)
        if self.kind is IncrementKind.GAUSSIAN:
            _check_positive(a)
            return math.sqrt(a * self.dt) * special.ndtri(u)
        if self.kind is IncrementKind.TRINOMIAL:
            vals, probs = self.outcomes(a)
            out = np.where(u < probs[0], vals[0], np.where(u < probs[0] + probs[1], vals[1], vals[2]))
            return out
        return _ftw_inverse_cdf(a, self.a0, self.dt, u)

    # moments --------------------------------------------------------------

    def exact_moments(self, a: float) -> tuple[float, float, float]:
        """(mean, variance, E|H|^(2+delta)) in closed form."""
        p = 2.0 + self.delta
        if self.kind is IncrementKind.TRINOMIAL:
            _, probs = self.outcomes(a)
            # symmetric law: odd moments vanish identically
            jump = 2.0 * float(probs[0])
            return 0.0, jump * self.dx**2, jump * self.dx**p
        if self.kind is IncrementKind.GAUSSIAN:
            s = math.sqrt(a * self.dt)
            return 0.0, s * s, s**p * _abs_normal_moment(p)
        _ftw_domain(a, self.a0)
        s0 = math.sqrt(self.a0 * self.dt)
        c = (a - self.a0) / (2.0 * self.a0)
        return 0.0, a * self.dt, s0**p * _abs_normal_moment(p) * (1.0 + c * p)

    def quadrature_moments(self, a: float) -> tuple[float, float, float]:
        """(mean, variance, E|H|^(2+delta)) by adaptive quadrature of the density."""
        if self.kind is IncrementKind.TRINOMIAL:
            return self.exact_moments(a)
        p = 2.0 + self.delta
        if self.kind is IncrementKind.GAUSSIAN:
            s = math.sqrt(a * self.dt)

            def w(z):
                return 1.0

        else:
            _ftw_domain(a, self.a0)
            s = math.sqrt(self.a0 * self.dt)
            c = (a - self.a0) / (2.0 * self.a0)

            def w(z):
                return 1.0 - c + c * z * z

        def integral(g):
            val, _ = integrate.quad(
                lambda z: g(z) * w(z) * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi),
                -np.inf,
                np.inf,
                epsabs=1e-15,
                epsrel=1e-13,
                limit=200,
            )
            return val

        def half_integral(g):
            val, _ = integrate.quad(
                lambda z: g(z) * w(z) * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi),
                0.0,
                np.inf,
                epsabs=1e-15,
                epsrel=1e-13,
                limit=200,
            )
            return val

        mean = s * integral(lambda z: z)
        second = s * s * integral(lambda z: z * z)
        absp = 2.0 * s**p * half_integral(lambda z: z**p)
        return mean, second - mean * mean, absp


def _check_positive(a: float) -> None:
    if not a > 0:
        raise ValueError(f"control must be positive, got {a}")


def gaussian_increment(dt: float, a_max: float = 1.0, delta: float = 1.0) -> IncrementFamily:
    """``H(a, u) = sqrt(a dt) * Phi^{-1}(u)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    _check_positive(a_max)
    C = a_max ** (1 + delta / 2) * _abs_normal_moment(2 + delta)
    return IncrementFamily(IncrementKind.GAUSSIAN, dt, C, delta, a_max)


def trinomial_increment(
    dt: float, dx: float, a_max: float | None = None, delta: float = 1.0
) -> IncrementFamily:
    """Lattice increments on ``{-dx, 0, dx}``.

    When ``a_max`` is given the CFL condition ``a_max dt / dx^2 <= 1/2`` is
    checked up front.
    """
    if not (dt > 0 and dx > 0):
        raise ValueError("dt and dx must be positive")
    if a_max is not None:
        ratio = a_max * dt / dx**2
        if ratio > 0.5 + 1e-12:
            raise CflViolation(f"a dt/dx^2 = {ratio:.6g} > 1/2 (a={a_max}, dt={dt}, dx={dx})")
    c = dx / math.sqrt(dt)
    C = (a_max if a_max is not None else 0.5 * dx**2 / dt) * c**delta
    return IncrementFamily(
        IncrementKind.TRINOMIAL, dt, C, delta, a_max if a_max is not None else math.inf, dx=dx
    )


def ftw_increment(dt: float, a0: float, a_max: float | None = None, delta: float = 1.0) -> IncrementFamily:
    """Weighted-Gaussian family with base variance ``a0 dt``; controls in ``[a0, 3 a0]``."""
    if not (dt > 0 and a0 > 0):
        raise ValueError("dt and a0 must be positive")
    a_max = 3.0 * a0 if a_max is None else a_max
    _ftw_domain(a_max, a0)
    p = 2.0 + delta
    C = a0 ** (p / 2) * _abs_normal_moment(p) * (1.0 + p * (a_max - a0) / (2.0 * a0))
    return IncrementFamily(IncrementKind.FTW_DENSITY, dt, C, delta, a_max, a0=a0)


def _ftw_domain(a: float, a0: float) -> None:
    if a < a0 * (1 - 1e-12) or a > 3.0 * a0 * (1 + 1e-12):
        raise DomainViolation(f"control a={a} outside [a0, 3 a0] = [{a0}, {3 * a0}]")


def ftw_weight(a: float, a0: float, dt: float, x):
    """``1 - (a - a0)/(2 a0) + (a - a0) x^2 / (2 dt a0^2)``.

    Mean one under ``N(0, a0 dt)`` and lifts the second moment from
    ``a0 dt`` to ``a dt``; nonnegative everywhere iff ``a <= 3 a0``.
    """
    x = np.asarray(x, dtype=float)
    b = a - a0
    return 1.0 - 0.5 * b / a0 + 0.5 * b * x * x / (dt * a0 * a0)


def ftw_density(a: float, a0: float, dt: float, x):
    """Density of ``N(0, a0 dt)`` reweighted so that its variance becomes ``a dt``."""
    _ftw_domain(a, a0)
    if not dt > 0:
        raise ValueError("dt must be positive")
    return stats.norm.pdf(x, scale=math.sqrt(a0 * dt)) * ftw_weight(a, a0, dt, x)


def _ftw_inverse_cdf(a: float, a0: float, dt: float, u) -> np.ndarray:
    # CDF in standardized units: Phi(z) - c z phi(z), c = (a - a0) / (2 a0);
    # coarse bisection, then Newton steps kept inside the bracket (the density
    # vanishes at z = 0 when a = 3 a0)
    _ftw_domain(a, a0)
    c = (a - a0) / (2.0 * a0)
    u = np.clip(np.asarray(u, dtype=float), 1e-300, 1.0 - 1e-16)

    def cdf(z):
        return special.ndtr(z) - c * z * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)

    lo = np.full(u.shape, -40.0)
    hi = np.full(u.shape, 40.0)
    for _ in range(24):
        mid = 0.5 * (lo + hi)
        below = cdf(mid) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    z = 0.5 * (lo + hi)
    for _ in range(8):
        resid = cdf(z) - u
        lo = np.where(resid < 0, z, lo)
        hi = np.where(resid < 0, hi, z)
        pdf = np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi) * (1.0 - c + c * z * z)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = z - resid / pdf
        inside = np.isfinite(step) & (step >= lo) & (step <= hi)
        z = np.where(inside, step, 0.5 * (lo + hi))
    return math.sqrt(a0 * dt) * z


# -- validation -----------------------------------------------------------


@dataclass(frozen=True)
class MomentRow:
    a: float
    mean: float
    var: float
    var_target: float
    moment: float
    bound: float
    passed: bool


@dataclass(frozen=True)
class MomentFailure:
    check: str
    a: float
    residual: float
    detail: str = ""


@dataclass(frozen=True)
class MomentReport:
    kind: IncrementKind
    rows: tuple[MomentRow, ...]
    failures: tuple[MomentFailure, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.failures

    def csv_lines(self) -> list[str]:
        out = ["a,mean,var,var_target,moment_2plus_delta,bound,pass"]
        for r in self.rows:
            out.append(
                f"{r.a!r},{r.mean!r},{r.var!r},{r.var_target!r},{r.moment!r},{r.bound!r},"
                f"{'true' if r.passed else 'false'}"
            )
        return out


def validate_moments(
    fam: IncrementFamily, cs: ControlSet, tol: float = 1e-10, var_scale: float = 1.0
) -> MomentReport:
    """Check the moment contract at every grid control.

    Trinomial moments are analytic; Gaussian and weighted-Gaussian moments
    come from quadrature. ``var_scale`` rescales the variance target and
    exists for fault-injection checks.
    """
    rows: list[MomentRow] = []
    failures: list[MomentFailure] = []
    bound = float(fam.C * fam.dt ** (1 + fam.delta / 2))
    for a in cs.grid:
        a = float(a)
        try:
            mean, var, mom = fam.quadrature_moments(a)
        except CflViolation as exc:
            failures.append(MomentFailure("cfl", a, fam.cfl_ratio(a) - 0.5, str(exc)))
            continue
        except DomainViolation as exc:
            failures.append(MomentFailure("domain", a, math.nan, str(exc)))
            continue
        target = a * fam.dt * var_scale
        ok = True
        if abs(mean) > tol:
            failures.append(MomentFailure("mean", a, mean))
            ok = False
        if abs(var - target) > tol:
            failures.append(MomentFailure("variance", a, var - target))
            ok = False
        if mom > bound + tol:
            failures.append(MomentFailure("moment_bound", a, mom - bound))
            ok = False
        rows.append(MomentRow(a, mean, var, target, mom, bound, ok))
    return MomentReport(fam.kind, tuple(rows), tuple(failures))
