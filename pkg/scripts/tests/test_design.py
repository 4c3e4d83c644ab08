import numpy as np
import pytest

from src.inference.design import (
    asymptotic_fisher,
    build_operator,
    fisher_i1,
    fisher_i2,
    fisher_i2_operator,
    fisher_information,
    green_matrix,
    input_signal,
    j2_supremum,
    lyapunov_gamma,
    matrix_a,
    optimal_u,
    optimal_v,
    propagators,
    solve_p,
    solve_phi,
    variation_of_constants,
)
from src.model.kernel import build_kernel
from src.model.mfbm import sample_paths
from src.model.process import InputSignal, compute_q, simulate_x, transform_v, transform_z
from src.utils.errors import DomainError
from src.utils.numerics import TimeGrid


def test_calendar_time_generator_eigenvalues(kernel_h07):
    for t in (0.3, 5.0, 9.7):
        eig = np.sort(np.linalg.eigvals(kernel_h07.m_prime_at(t) * matrix_a(kernel_h07.psi_at(t))).real)
        np.testing.assert_allclose(eig, [0.0, 2.0], atol=1e-10)


@pytest.mark.parametrize("name", ["kernel_h07", "kernel_h03"])
def test_optimal_energy(name, request):
    kernel = request.getfixturevalue(name)
    signal = optimal_v(kernel)
    assert signal.kind == "optimal"
    np.testing.assert_allclose(signal.v, np.sqrt(kernel.psi_diag))
    assert signal.energy(kernel) == pytest.approx(1.0, abs=5e-3)


def test_zero_v_gives_zero_u_and_p(kernel_h07):
    zero = InputSignal.zero(kernel_h07.grid)
    np.testing.assert_array_equal(optimal_u(kernel_h07, zero).u, 0.0)
    np.testing.assert_array_equal(solve_p(zero, 1.0, kernel_h07).values, 0.0)
    assert fisher_i2(zero, 1.0, kernel_h07) == 0.0


def test_phi_identity_at_zero_theta(kernel_h03):
    phi = solve_phi(0.0, kernel_h03)
    for m in phi.phi:
        np.testing.assert_allclose(m, np.eye(2), atol=1e-14)


@pytest.mark.parametrize("name", ["kernel_h07", "kernel_h03"])
def test_liouville(name, request):
    kernel = request.getfixturevalue(name)
    phi = solve_phi(1.0, kernel)
    np.testing.assert_allclose(phi.det, np.exp(-kernel.grid.nodes), atol=1e-6)
    np.testing.assert_allclose(phi.phi[40] @ phi.phi_inv[40], np.eye(2), atol=1e-10)


def test_transition_from_propagators(kernel_h07):
    phi = solve_phi(1.5, kernel_h07)
    np.testing.assert_allclose(
        phi.transition(120, 30), phi.phi[120] @ phi.phi_inv[30], rtol=1e-8, atol=1e-10
    )
    np.testing.assert_array_equal(propagators(1.5, kernel_h07), phi.propagators)


@pytest.mark.parametrize("name", ["kernel_h07", "kernel_h03"])
def test_variation_of_constants_matches_ode(name, request):
    kernel = request.getfixturevalue(name)
    signal = optimal_v(kernel)
    p_ode = solve_p(signal, 1.0, kernel).values
    p_voc = variation_of_constants(signal, 1.0, kernel)
    scale = np.max(np.abs(p_ode))
    assert np.max(np.abs(p_voc - p_ode)) < 1e-3 * scale


def test_lyapunov_gamma_is_psd(kernel_h03):
    gamma = lyapunov_gamma(1.0, kernel_h03).values
    np.testing.assert_array_equal(gamma[0], 0.0)
    np.testing.assert_allclose(gamma, gamma.transpose(0, 2, 1), atol=1e-10)
    assert np.all(np.linalg.eigvalsh(gamma)[:, 0] > -1e-8)


def test_negative_theta_rejected(kernel_h07):
    with pytest.raises(DomainError):
        fisher_i1(-1.0, kernel_h07)


@pytest.mark.parametrize("name", ["kernel_h07", "kernel_h03"])
def test_operator_is_symmetric_psd(name, request):
    kernel = request.getfixturevalue(name)
    table = build_operator(1.0, kernel)
    np.testing.assert_array_equal(table.matrix, table.matrix.T)
    eig = table.eigenvalues()
    assert eig[-1] > -1e-8 * eig[0]
    assert table.top()[0] == pytest.approx(eig[0], rel=1e-8)


def test_green_matrix_is_causal(kernel_h03):
    green = green_matrix(1.0, kernel_h03)
    np.testing.assert_array_equal(np.triu(green, k=1), 0.0)


@pytest.mark.parametrize("name", ["kernel_h07", "kernel_h03"])
def test_i2_dual_formulas(name, request):
    kernel = request.getfixturevalue(name)
    signal = optimal_v(kernel)
    assert fisher_i2_operator(signal, 1.0, kernel) == pytest.approx(fisher_i2(signal, 1.0, kernel), rel=0.02)


@pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
def test_j2_supremum(theta, kernel_h07):
    table = build_operator(theta, kernel_h07)
    result = j2_supremum(theta, kernel_h07, table=table)
    assert result.value == pytest.approx(kernel_h07.horizon * result.nu1)
    # the maximizer attains the supremum
    assert fisher_i2_operator(result.signal, theta, kernel_h07, table=table) == pytest.approx(result.value, rel=1e-6)
    # <f, K f> <= nu_1 int f^2 ds with int v_opt^2 d<M> = T
    assert result.value >= (1.0 - 1e-8) * fisher_i2_operator(optimal_v(kernel_h07), theta, kernel_h07, table=table)


def test_fisher_report(kernel_h07):
    report = fisher_information(optimal_v(kernel_h07), 1.0, kernel_h07)
    assert report.total == report.i1 + report.i2
    assert report.rate == pytest.approx(report.total / 10.0)
    assert report.asymptotic == asymptotic_fisher(1.0) == 1.5


def test_input_signal_specs(tmp_path, kernel_h03):
    assert input_signal("zero", kernel_h03).kind == "zero"
    assert input_signal("constant", kernel_h03, alpha=2.0).alpha == 2.0
    signal = optimal_v(kernel_h03)
    path = tmp_path / "design.csv"
    with open(path, "w") as f:
        f.write("t,u,v\n")
        for row in zip(kernel_h03.grid.nodes, signal.u, signal.v):
            f.write(",".join(repr(float(x)) for x in row) + "\n")
    loaded = input_signal(f"file:{path}", kernel_h03)
    np.testing.assert_allclose(loaded.v, signal.v, rtol=1e-12)
    np.testing.assert_allclose(loaded.u, signal.u, rtol=1e-12)
    with pytest.raises(DomainError):
        input_signal("sinusoid", kernel_h03)


@pytest.mark.slow
@pytest.mark.parametrize("theta", [1.0, 2.0])
def test_i1_rate(theta, long_kernel_h07):
    assert fisher_i1(theta, long_kernel_h07) / long_kernel_h07.horizon == pytest.approx(1.0 / (2.0 * theta), rel=0.15)


@pytest.mark.slow
@pytest.mark.parametrize("name", ["long_kernel_h07", "long_kernel_h03"])
def test_i2_rate(name, request):
    kernel = request.getfixturevalue(name)
    signal = optimal_v(kernel)
    assert fisher_i2(signal, 1.0, kernel) / kernel.horizon == pytest.approx(1.0, rel=0.15)


@pytest.mark.slow
def test_optimal_fisher_rate(long_kernel_h07):
    report = fisher_information(optimal_v(long_kernel_h07), 1.0, long_kernel_h07)
    assert report.rate == pytest.approx(1.5, rel=0.2)


def test_optimal_u_drives_optimal_v(kernel_h07):
    """Simulating with u_opt and reading v back through the transform recovers sqrt(psi)"""
    kernel = kernel_h07
    signal = optimal_v(kernel)
    v_back = transform_v(signal.u, kernel)
    inner = slice(10, kernel.grid.n_steps - 10)
    err = np.linalg.norm(v_back[inner] - signal.v[inner]) / np.linalg.norm(signal.v[inner])
    assert err < 0.05
    # the same input through the full pipeline: Q picks up the optimal mean
    noise = sample_paths(kernel.grid, kernel.H, 200, seed=17)
    x = simulate_x(np.stack([p.increments for p in noise]), 1.0, signal, grid=kernel.grid)
    q = compute_q(transform_z(x, kernel), kernel)
    p = solve_p(signal, 1.0, kernel).values
    q_mean = 0.5 * (kernel.psi_diag * p[:, 0] + p[:, 1])
    late = slice(kernel.grid.n_steps // 2, None)
    assert np.linalg.norm(q.mean(axis=0)[late] - q_mean[late]) < 0.15 * np.linalg.norm(q_mean[late])


@pytest.fixture(scope="module")
def gap_kernels():
    """H=0.7 with dt=0.05 at T = 5, 10, 20"""
    kernel = build_kernel(TimeGrid(20.0, 400), 0.7)
    return {5.0: kernel.restrict(100), 10.0: kernel.restrict(200), 20.0: kernel}


@pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
def test_spectral_gap_bound(theta, gap_kernels):
    nu1 = {T: build_operator(theta, kernel).eigenvalues()[0] for T, kernel in gap_kernels.items()}
    for T, value in nu1.items():
        assert value * theta**2 <= 1.1, f"nu_1({T}) theta^2 = {value * theta**2:.4f}"
    # grows toward 1 / theta^2 with the horizon
    assert nu1[5.0] < nu1[10.0] < nu1[20.0]


@pytest.mark.slow
def test_spectral_gap_large_theta():
    theta = 50.0
    kernel = build_kernel(TimeGrid(5.0, 1000), 0.3)
    nu1 = build_operator(theta, kernel).eigenvalues()[0]
    assert 0.0 < nu1 <= 4e-4 * 1.2
    assert nu1 * theta**2 > 0.5
