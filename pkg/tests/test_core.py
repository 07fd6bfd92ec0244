import dataclasses
import math

import numpy as np
import pytest

from twobsde.core import (
    ControlSet,
    DiscreteState,
    Generator,
    Scheme,
    SolveResult,
    TerminalCondition,
    TimeGrid,
    apriori_bound,
    make_control_grid,
)


def test_control_grid_endpoints_only():
    assert make_control_grid(ControlSet(0.04, 0.09, 2)) == [0.04, 0.09]


def test_control_grid_uniform_spacing():
    np.testing.assert_allclose(make_control_grid(ControlSet(0.04, 0.09, 6)), [0.04, 0.05, 0.06, 0.07, 0.08, 0.09], atol=1e-15)


def test_control_grid_singleton():
    assert make_control_grid(ControlSet(0.05, 0.05, 1)) == [0.05]
    assert make_control_grid(ControlSet.singleton(0.05)) == [0.05]


@pytest.mark.parametrize("lo,hi,size", [(0.04, 0.09, 1), (0.0, 0.09, 3), (0.09, 0.04, 3), (-0.1, 0.1, 3)])
def test_control_set_rejects_bad_input(lo, hi, size):
    with pytest.raises(ValueError):
        ControlSet(lo, hi, size)


def test_discrete_state_rejects_non_finite():
    DiscreteState(0.1, -0.3)
    with pytest.raises(ValueError):
        DiscreteState(math.nan, 0.0)
    with pytest.raises(ValueError):
        DiscreteState(0.0, math.inf)


def test_time_grid():
    g = TimeGrid(1.0, 4)
    assert g.dt == 0.25
    np.testing.assert_allclose(g.nodes, [0, 0.25, 0.5, 0.75, 1.0])
    assert TimeGrid.from_dt(1.0, 0.02).n == 50
    with pytest.raises(ValueError):
        TimeGrid.from_dt(1.0, 0.3)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 3)


def test_values_are_immutable():
    cs = ControlSet(0.04, 0.09, 3)
    with pytest.raises(dataclasses.FrozenInstanceError):
        cs.a_lo = 0.1
    res = SolveResult(0.1, Scheme.FINITE_DIFFERENCE, 3, 0.0, {"k": 1})
    with pytest.raises(TypeError):
        res.diagnostics["k"] = 2


def test_solve_result_validates():
    with pytest.raises(ValueError):
        SolveResult(math.nan, Scheme.TREE_DP, 1, 0.0, {})
    with pytest.raises(ValueError):
        SolveResult(0.0, Scheme.TREE_DP, 1, -1.0, {})


def test_generator_call_and_apriori_bound():
    gen = Generator(lambda t, x, m, y, z, a: 0.5 * y, 0.5, 0.0, False, 0.1, "half")
    term = TerminalCondition(lambda x, m: 0 * x + 1.0, 0.0, 1.0, "one")
    assert gen(0, 0, 0, 2.0, 0, 0.04) == 1.0
    assert apriori_bound(gen, term, 2.0) == pytest.approx(math.exp(1.0) * (1.0 + 0.2))
    # implicit steps grow by 1/(1 - L dt) per step
    assert apriori_bound(gen, term, 2.0, dt=0.1) > apriori_bound(gen, term, 2.0)
