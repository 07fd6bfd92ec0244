import math

import numpy as np
import pytest

from twobsde.core import (
    ControlSet,
    DomainViolation,
    RankDeficientBasis,
    Scheme,
    TimeGrid,
    ZDependentGenerator,
)
from twobsde.models import ModelConfig, abs_x_terminal, constant_terminal, f2_generator, zero_generator
from twobsde.proba_solver import (
    RegressionBasis,
    SimulatedEnsemble,
    g_function,
    gamma_weight,
    proba_solve,
    simulate_ensemble,
)
import twobsde.proba_solver as ps

TWO = ControlSet(0.04, 0.09, 2)


@pytest.mark.parametrize("gamma, want", [(0.0, 0.0), (2.0, 0.09), (-2.0, -0.04)])
def test_g_function_zero_driver(gamma, want):
    assert g_function(0.0, 0.0, 0.0, 0.3, gamma, zero_generator(), TWO, 0.02) == pytest.approx(want, abs=1e-15)


def test_g_function_shifted_base():
    # with the base variance removed, gamma > 0 only pays the excess a_hi - a0
    g = g_function(0.0, 0.0, 0.0, 0.3, np.array([2.0, -2.0]), zero_generator(), TWO, 0.02, a0=0.04)
    np.testing.assert_allclose(g, [0.05, 0.0], atol=1e-15)


def test_g_function_rejects_z_dependence():
    with pytest.raises(ZDependentGenerator):
        g_function(0.0, 0.0, 0.0, 0.0, 1.0, f2_generator(0.04), TWO, 0.02)


def test_gamma_weight_examples():
    assert gamma_weight(0.0, 0.02, 0.04) == pytest.approx(-1250.0)
    assert gamma_weight(math.sqrt(0.02), 0.02, 0.04) == pytest.approx(0.0, abs=1e-9)


def test_gamma_weight_has_mean_zero():
    dt, a0 = 0.02, 0.04
    dW = math.sqrt(dt) * np.random.default_rng(5).standard_normal(400_000)
    w = gamma_weight(dW, dt, a0)
    assert abs(w.mean()) / (w.std() / math.sqrt(w.size)) <= 4.0


def test_basis_layout():
    b = RegressionBasis(2)
    assert b.exponents == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    assert b.size == 6
    x = np.linspace(-1, 1, 50)
    assert b.design(x, np.zeros(50)).shape == (50, 3)
    with pytest.raises(ValueError):
        RegressionBasis(0)


def test_ensemble_is_worker_invariant():
    grid = TimeGrid(1.0, 4)
    a = simulate_ensemble(0.2, grid, 0.04, 40_000, 3, workers=1)
    b = simulate_ensemble(0.2, grid, 0.04, 40_000, 3, workers=4)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_allclose(a.m[1], 0.2 * 0.25)


def test_constant_terminal_is_reproduced():
    res = proba_solve(zero_generator(), constant_terminal(0.37), ControlSet(0.04, 0.09, 6), TimeGrid(1.0, 10), 0.2, n_paths=5000)
    assert res.scheme is Scheme.PROBABILISTIC
    assert abs(res.y0 - 0.37) <= 1e-10


def test_singleton_base_control_matches_closed_form():
    T, a0, n = 1.0, 0.04, 100_000
    res = proba_solve(zero_generator(), abs_x_terminal(), ControlSet.singleton(a0), TimeGrid(T, 10), 0.0, n_paths=n, seed=1)
    target = math.sqrt(a0) * math.sqrt(2 * T / math.pi)
    se = math.sqrt(a0 * T * (1 - 2 / math.pi) / n)
    assert abs(res.y0 - target) <= 3 * se


def test_seed_determinism_and_worker_invariance():
    mc = ModelConfig()
    args = (mc.generator(), mc.terminal(), mc.control_set(), TimeGrid(1.0, 10), mc.X0)
    a = proba_solve(*args, n_paths=40_000, seed=7, workers=1)
    b = proba_solve(*args, n_paths=40_000, seed=7, workers=3)
    c = proba_solve(*args, n_paths=40_000, seed=8, workers=1)
    assert a.y0 == b.y0
    assert a.y0 != c.y0
    assert a.diagnostics["seed"] == 7 and a.diagnostics["paths"] == 40_000


def test_standard_error_scales_like_inverse_sqrt_paths():
    mc = ModelConfig()
    args = (mc.generator(), mc.terminal(), mc.control_set(), TimeGrid(1.0, 5), mc.X0)
    sizes = [1_000, 10_000, 100_000]
    sd = [np.std([proba_solve(*args, n_paths=p, seed=s).y0 for s in range(20)], ddof=1) for p in sizes]
    slope = np.polyfit(np.log(sizes), np.log(sd), 1)[0]
    assert -0.6 <= slope <= -0.4


def test_preconditions():
    grid = TimeGrid(1.0, 5)
    with pytest.raises(DomainViolation):
        proba_solve(zero_generator(), constant_terminal(0.0), ControlSet(0.02, 0.09, 3), grid, 0.2, n_paths=1000)
    with pytest.raises(ValueError):
        proba_solve(zero_generator(), constant_terminal(0.0), TWO, grid, 0.2, n_paths=59)
    with pytest.raises(ZDependentGenerator):
        proba_solve(f2_generator(0.04), constant_terminal(0.0), TWO, grid, 0.2, n_paths=1000)


def test_rank_deficiency_reduces_degree(monkeypatch):
    # two-valued states make x^2 collinear with (1, x)
    def two_point(x0, grid, a0, n_paths, seed, workers=None):
        sign = np.where(np.arange(n_paths) % 2 == 0, 1.0, -1.0)
        dW = np.tile(sign * math.sqrt(grid.dt), (grid.n, 1))
        x = np.vstack([np.full(n_paths, x0)] + [x0 + 0.2 * sign * (k + 1) * math.sqrt(grid.dt) for k in range(grid.n)])
        m = np.vstack([np.zeros(n_paths)] + [np.full(n_paths, 1e-3 * (k + 1)) for k in range(grid.n)])
        return SimulatedEnsemble(n_paths, seed, x, m, dW)

    monkeypatch.setattr(ps, "simulate_ensemble", two_point)
    with pytest.warns(RankDeficientBasis):
        res = proba_solve(zero_generator(), abs_x_terminal(), TWO, TimeGrid(1.0, 2), 0.0, n_paths=100)
    assert res.diagnostics["degree"] == 1


def test_truncation_switch():
    mc = ModelConfig()
    args = (mc.generator(), mc.terminal(), mc.control_set(), TimeGrid(1.0, 5), mc.X0)
    on = proba_solve(*args, n_paths=20_000)
    off = proba_solve(*args, n_paths=20_000, truncate=False)
    assert math.isfinite(on.diagnostics["truncation"])
    assert off.diagnostics["truncation"] == math.inf
    assert abs(on.y0 - off.y0) <= 0.01
