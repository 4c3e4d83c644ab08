import numpy as np
import pytest

from src.model.kernel import build_kernel
from src.model.mfbm import NoisePath, sample_paths
from src.model.process import (
    InputSignal,
    accumulate_zeta,
    build_path_bundle,
    compute_q,
    extract_m,
    mean_constant_drift,
    q_from_derivative,
    q_from_zeta,
    read_paths_csv,
    reconstruct_x,
    simulate_x,
    transform_v,
    transform_z,
    write_paths_csv,
)
from src.utils.errors import DimensionError
from src.utils.numerics import TimeGrid


def _quiet(grid):
    return NoisePath(grid, np.zeros(grid.n_steps), seed=0)


def test_zero_noise_zero_input(kernel_h07):
    x = simulate_x(_quiet(kernel_h07.grid), 1.0, InputSignal.zero(kernel_h07.grid))
    np.testing.assert_array_equal(x, 0.0)


def test_zero_noise_constant_input(kernel_h07):
    grid = kernel_h07.grid
    signal = InputSignal.constant(1.0, kernel_h07)
    x = simulate_x(_quiet(grid), 1.0, signal)
    np.testing.assert_allclose(x, mean_constant_drift(grid.nodes, 1.0, 1.0), atol=grid.dt)


def test_mean_path_h07(kernel_h07):
    grid = kernel_h07.grid
    signal = InputSignal.constant(1.0, kernel_h07)
    noise = sample_paths(grid, 0.7, 2000, seed=5)
    x = simulate_x(np.stack([p.increments for p in noise]), 1.0, signal, grid=grid)
    for t in (1.0, grid.horizon):
        j = grid.index_of(t)
        se = np.std(x[:, j], ddof=1) / np.sqrt(len(x))
        # Euler bias is O(dt)
        assert abs(np.mean(x[:, j]) - mean_constant_drift(t, 1.0, 1.0)) < 3.0 * se + grid.dt


def test_zero_transforms(kernel_h03):
    zeros = np.zeros(kernel_h03.grid.n_nodes)
    np.testing.assert_array_equal(transform_z(zeros, kernel_h03), 0.0)
    np.testing.assert_array_equal(compute_q(zeros, kernel_h03), 0.0)
    np.testing.assert_array_equal(reconstruct_x(zeros, kernel_h03), 0.0)
    zero = InputSignal.zero(kernel_h03.grid)
    np.testing.assert_array_equal(extract_m(zeros, zeros, zero, 2.0, kernel_h03), 0.0)


def test_dimension_mismatch(kernel_h07):
    with pytest.raises(DimensionError):
        transform_z(np.zeros(10), kernel_h07)


@pytest.mark.parametrize("name", ["kernel_h07", "kernel_h03"])
def test_q_from_zeta(name, request):
    kernel = request.getfixturevalue(name)
    noise = sample_paths(kernel.grid, kernel.H, 3, seed=1)
    x = simulate_x(np.stack([p.increments for p in noise]), 1.0, InputSignal.zero(kernel.grid), grid=kernel.grid)
    z = transform_z(x, kernel)
    zeta = accumulate_zeta(z, kernel)
    assert np.all(zeta.zeta1[..., 0] == 0.0) and np.all(zeta.zeta2[..., 0] == 0.0)
    np.testing.assert_allclose(q_from_zeta(zeta, kernel), compute_q(z, kernel), rtol=1e-10, atol=1e-10)


def test_batch_matches_single(kernel_h07):
    noise = sample_paths(kernel_h07.grid, 0.7, 4, seed=9)
    signal = InputSignal.constant(0.5, kernel_h07)
    batch = transform_z(
        simulate_x(np.stack([p.increments for p in noise]), 1.0, signal, grid=kernel_h07.grid), kernel_h07
    )
    single = transform_z(simulate_x(noise[3], 1.0, signal), kernel_h07)
    np.testing.assert_allclose(batch[3], single, rtol=1e-12, atol=1e-12)


def test_transform_v_of_constant(kernel_h07):
    # int_0^t g(s, t) ds is <M>_t itself, so alpha maps to alpha
    v = transform_v(np.full(kernel_h07.grid.n_nodes, 0.5), kernel_h07)
    np.testing.assert_allclose(v, 0.5, rtol=1e-10)


@pytest.mark.parametrize("name", ["kernel_h07", "kernel_h03"])
def test_q_forms_agree_on_smooth_path(name, request):
    kernel = request.getfixturevalue(name)
    x = simulate_x(_quiet(kernel.grid), 1.0, InputSignal.constant(1.0, kernel))
    q = compute_q(transform_z(x, kernel), kernel)
    q_alt = q_from_derivative(x, kernel)
    inner = slice(20, -10)
    assert np.linalg.norm(q[inner] - q_alt[inner]) < 0.05 * np.linalg.norm(q[inner])


def test_paths_csv_round_trip(tmp_path, kernel_h03):
    noise = sample_paths(kernel_h03.grid, 0.3, 1, seed=4)[0]
    bundle = build_path_bundle(noise, 1.0, InputSignal.constant(1.0, kernel_h03), kernel_h03)
    path = write_paths_csv(str(tmp_path / "paths.csv"), bundle)
    grid, cols = read_paths_csv(path)
    assert grid == kernel_h03.grid
    for name in ("xi", "X", "Z", "Q", "M"):
        np.testing.assert_array_equal(cols[name], getattr(bundle, name))


@pytest.mark.slow
@pytest.mark.parametrize("H", [0.7, 0.3])
def test_realized_bracket(H):
    kernel = build_kernel(TimeGrid(1.0, 1000), H)
    noise = sample_paths(kernel.grid, H, 200, seed=12)
    zero = InputSignal.zero(kernel.grid)
    x = simulate_x(np.stack([p.increments for p in noise]), 0.0, zero, grid=kernel.grid)
    z = transform_z(x, kernel)
    q = compute_q(z, kernel)
    m = extract_m(z, q, zero, 0.0, kernel)
    target = kernel.bracket[-1]
    assert np.mean(np.sum(np.diff(z, axis=-1) ** 2, axis=-1)) == pytest.approx(target, rel=0.1)
    assert np.mean(np.sum(np.diff(m, axis=-1) ** 2, axis=-1)) == pytest.approx(target, rel=0.1)


def _round_trip_error(n_steps: int) -> float:
    kernel = build_kernel(TimeGrid(5.0, n_steps), 0.7)
    noise = sample_paths(kernel.grid, 0.7, 1, seed=31)[0]
    x = simulate_x(noise, 1.0, InputSignal.constant(1.0, kernel))
    back = reconstruct_x(transform_z(x, kernel), kernel)
    return float(np.linalg.norm(back - x) / np.linalg.norm(x))


@pytest.mark.slow
def test_round_trip_x_z():
    coarse, fine = _round_trip_error(250), _round_trip_error(500)
    assert fine < 0.01
    # first order: halving dt halves the error
    assert 1.5 <= coarse / fine <= 2.5


@pytest.mark.slow
@pytest.mark.parametrize("H", [0.7, 0.3])
def test_martingale_cross_covariance(H):
    # E[M_s M_t] = <M>_s for s < t
    kernel = build_kernel(TimeGrid(2.0, 400), H)
    grid = kernel.grid
    theta = 1.0
    signal = InputSignal.constant(1.0, kernel)
    noise = sample_paths(grid, H, 4000, seed=21)
    x = simulate_x(np.stack([p.increments for p in noise]), theta, signal, grid=grid)
    z = transform_z(x, kernel)
    m = extract_m(z, compute_q(z, kernel), signal, theta, kernel)
    for s, t in ((0.5, 1.0), (1.0, 2.0)):
        i, j = grid.index_of(s), grid.index_of(t)
        cross = np.mean(m[:, i] * m[:, j])
        assert abs(cross - kernel.bracket[i]) / kernel.bracket[i] < 0.1
