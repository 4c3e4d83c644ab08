import math

import numpy as np
import pytest

from src.utils.errors import (
    ContractViolation,
    DimensionError,
    IterationLimitError,
    NumericalBlowUpError,
    SolverError,
)
from src.utils.numerics import (
    MeasureWeights,
    TimeGrid,
    differentiate,
    integrate,
    ode_step,
    ode_step_linear,
    rk4_propagators,
    solve_dense,
    top_eigenvalue,
)


def test_time_grid():
    grid = TimeGrid(2.0, 8)
    assert grid.dt == 0.25
    assert grid.n_nodes == 9
    assert grid.nodes[-1] == 2.0
    assert grid.restrict(4) == TimeGrid(1.0, 4)
    with pytest.raises(ContractViolation):
        TimeGrid(0.0, 10)
    with pytest.raises(ContractViolation):
        TimeGrid(1.0, 1)


def test_weights_from_bracket():
    m = np.array([0.0, 0.5, 0.75, 2.0])
    w = MeasureWeights.from_bracket(m)
    assert np.all(w.weights >= 0)
    assert w.total == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(ContractViolation):
        MeasureWeights.from_bracket(np.array([0.0, 1.0, 0.5]))


def test_integrate():
    grid = TimeGrid(1.0, 100)
    w = MeasureWeights.lebesgue(grid)
    assert integrate(np.zeros(grid.n_nodes), w) == 0.0
    assert integrate(np.ones(grid.n_nodes), w) == pytest.approx(w.total, abs=1e-12)
    assert integrate(grid.nodes, w) == pytest.approx(0.5, abs=1e-3)
    with pytest.raises(DimensionError):
        integrate(np.ones(5), w)


def test_integrate_is_linear():
    grid = TimeGrid(3.0, 60)
    w = MeasureWeights.from_bracket(grid.nodes**1.4)
    rng = np.random.default_rng(3)
    f, g = rng.normal(size=(2, grid.n_nodes))
    combined = integrate(2.5 * f - 0.75 * g, w)
    assert combined == pytest.approx(2.5 * integrate(f, w) - 0.75 * integrate(g, w), rel=1e-12, abs=1e-12)


def test_differentiate():
    grid = TimeGrid(1.0, 50)
    slope = differentiate(3.0 * grid.nodes + 1.0, grid)
    np.testing.assert_allclose(slope, 3.0, atol=1e-10)
    # d/d<M> with m' = 2 halves the slope; the floor guards m' = 0
    np.testing.assert_allclose(differentiate(grid.nodes, grid, np.full(grid.n_nodes, 2.0)), 0.5, atol=1e-10)
    assert np.all(np.isfinite(differentiate(grid.nodes, grid, np.zeros(grid.n_nodes))))


def _exp_error(n: int, c: float = 1.0) -> float:
    grid = TimeGrid(1.0, n)
    traj = ode_step_linear(np.ones(1), lambda t: np.array([[-c]]), grid, np.ones(grid.n_nodes))
    return abs(traj.final[0] - math.exp(-c))


def test_ode_constant_solution():
    grid = TimeGrid(1.0, 20)
    traj = ode_step_linear(np.eye(2), lambda t: np.zeros((2, 2)), grid, np.ones(grid.n_nodes))
    for y in traj.values:
        np.testing.assert_array_equal(y, np.eye(2))


def test_ode_exponential():
    assert _exp_error(200) < 1e-8


def test_ode_order():
    assert _exp_error(10) / _exp_error(20) >= 8.0


def test_ode_preserves_determinant_of_rotation():
    # traceless generator: det Y(t) = det Y(0)
    grid = TimeGrid(2.0, 200)
    m_prime = 1.0 + 0.5 * np.sin(grid.nodes)

    def coef(t):
        omega = 1.0 + t
        return np.array([[0.0, omega], [-omega, 0.0]])

    traj = ode_step_linear(np.array([[2.0, 1.0], [0.5, 1.0]]), coef, grid, m_prime)
    np.testing.assert_allclose([np.linalg.det(y) for y in traj.values], 1.5, rtol=1e-6)


def test_ode_blow_up_names_node():
    grid = TimeGrid(1.0, 10)
    with pytest.raises(NumericalBlowUpError) as e:
        ode_step(np.ones(1), lambda t, y: np.full(1, np.inf) if t > 0.45 else y, grid, np.ones(grid.n_nodes))
    assert e.value.node is not None


def test_propagators_reproduce_rk4():
    grid = TimeGrid(2.0, 40)
    m_prime = 1.0 / (1.0 + grid.nodes)

    def coef(t):
        return np.array([[-1.0, t], [0.5, -2.0]])

    traj = ode_step_linear(np.eye(2), coef, grid, m_prime)
    props = rk4_propagators(coef, grid, m_prime)
    y = np.eye(2)
    for j, s in enumerate(props):
        y = s @ y
        np.testing.assert_allclose(y, traj.values[j + 1], rtol=1e-12, atol=1e-14)


def test_top_eigenvalue():
    assert top_eigenvalue(np.eye(3))[0] == pytest.approx(1.0)
    assert top_eigenvalue(np.diag([3.0, 1.0, 2.0]))[0] == pytest.approx(3.0, rel=1e-9)

    b = np.random.default_rng(7).standard_normal((5, 5))
    gram = b @ b.T
    lam, vec = top_eigenvalue(gram)
    assert lam == pytest.approx(np.linalg.eigvalsh(gram)[-1], rel=1e-8)
    np.testing.assert_allclose(gram @ vec, lam * vec, atol=1e-6 * lam)


def test_top_eigenvalue_errors():
    with pytest.raises(ContractViolation):
        top_eigenvalue(np.array([[1.0, 2.0], [0.0, 1.0]]))
    # +-1 never settles
    with pytest.raises(IterationLimitError):
        top_eigenvalue(np.diag([1.0, -1.0]), max_iter=50)


def test_solve_dense_reports_condition():
    with pytest.raises(SolverError) as e:
        solve_dense(np.array([[1.0, 1.0], [1.0, 1.0]]), np.ones(2))
    assert e.value.condition is not None
