import numpy as np
import pytest

from netkf.errors import NonSPD
from netkf.netmodel import AggregatedModel, aggregate
from netkf.simulate import (
    EPS1_FLOOR,
    SimConfig,
    default_five_agent_network,
    initial_covariance,
    rng_stream,
    simulate,
    simulate_measurements,
)


@pytest.fixture(scope="module")
def model():
    return aggregate(default_five_agent_network())


def test_noise_free_zero_start_stays_at_zero(model):
    Z = np.zeros((5, 5))
    quiet = AggregatedModel(A=model.A, C=model.C, Q=Z, R=Z, L=model.L, P=Z,
                            state_dims=model.state_dims, output_dims=model.output_dims, network=model.network)
    traj = simulate(quiet, 0, 20)
    assert not np.any(traj.x) and not np.any(traj.y)


def test_stored_draws_reproduce_the_trajectory_exactly(model):
    traj = simulate(model, SimConfig(horizon=50, seed=4))
    res_x, res_y = traj.residuals(model)
    assert np.all(res_x == 0) and np.all(res_y == 0)
    assert traj.x.shape == (51, 5) and traj.y.shape == (50, 5)


def test_feedback_uses_the_same_measurement_noise(model):
    traj = simulate(model, 3, 5)
    # x_{k+1} = A x_k + L y_k + w_k with the very y_k that was recorded
    for k in range(1, 5):
        expected = model.A @ traj.x[k] + model.L @ traj.y[k - 1] + traj.w[k]
        assert np.allclose(traj.x[k + 1], expected, rtol=0, atol=1e-15)


def test_same_seed_same_bits(model):
    a, b = simulate(model, 11, 30), simulate(model, 11, 30)
    assert a.x.tobytes() == b.x.tobytes() and a.y.tobytes() == b.y.tobytes()
    assert not np.array_equal(simulate(model, 12, 30).y, a.y)
    assert np.array_equal(simulate_measurements(model, 30, 11), a.y)


def test_streams_are_independent():
    a = rng_stream(5, 0).standard_normal(4)
    b = rng_stream(5, 1).standard_normal(4)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, rng_stream(5, 0).standard_normal(4))


def test_decoupled_nodes_are_uncorrelated():
    model = aggregate(default_five_agent_network(edges=()))
    runs = 400
    x = np.array([simulate(model, r, 10).x[10] for r in range(runs)])
    r = np.corrcoef(x[:, 0], x[:, 1])[0, 1]
    # sample correlation of independent Gaussians has standard deviation ~ 1/sqrt(runs)
    assert abs(r) <= 3 / np.sqrt(runs)


def test_state_covariance_matches_propagation(model):
    runs, K = 2000, 10
    x = np.array([simulate(model, r, K).x[K] for r in range(runs)])
    cov = model.A @ model.P @ model.A.T + model.Q
    for _ in range(1, K):
        cov = model.A_tilde @ cov @ model.A_tilde.T + model.Q_tilde
    sample = x.T @ x / runs
    # standard error of a Gaussian second moment: sqrt((s_ii s_jj + s_ij^2) / runs)
    se = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov**2) / runs)
    assert np.all(np.abs(sample - cov) <= 4 * se)


def test_initial_covariance_modes():
    net = default_five_agent_network()
    assert np.array_equal(initial_covariance(net, SimConfig()), np.eye(5))
    P = initial_covariance(net, SimConfig(covariance_mode="random_spd", eps0=0.1, seed=3))
    assert np.allclose(P, P.T) and np.min(np.linalg.eigvalsh(P)) >= 0.1 - 1e-12
    assert np.any(P - np.diag(np.diag(P)))
    S = initial_covariance(net, SimConfig(covariance_mode="block_diagonal_scalar", seed=3))
    assert np.array_equal(S, S[0, 0] * np.eye(5)) and EPS1_FLOOR <= S[0, 0] <= 1
    low = initial_covariance(net, SimConfig(covariance_mode="block_diagonal_scalar", eps1_range=(0.0, 1e-6)))
    assert low[0, 0] == EPS1_FLOOR
    E = initial_covariance(net, SimConfig(covariance_mode="explicit", P=2 * np.eye(5)))
    assert np.array_equal(E, 2 * np.eye(5))


def test_sim_config_validation():
    with pytest.raises(ValueError):
        SimConfig(horizon=0)
    with pytest.raises(ValueError):
        SimConfig(eps0=0.0)
    with pytest.raises(ValueError):
        SimConfig(seed=-1)
    with pytest.raises(ValueError):
        SimConfig(covariance_mode="explicit")
    with pytest.raises(ValueError):
        SimConfig(prng="MT19937")


def test_non_psd_noise_rejected(model):
    from dataclasses import replace

    with pytest.raises(NonSPD):
        simulate(replace(model, Q=-np.eye(5)), 0, 3)
