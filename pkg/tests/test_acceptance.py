"""End-to-end acceptance checks, one test per criterion.

Each test records the measured quantity; the terminal summary prints one
PASS/FAIL line per criterion.
"""

import numpy as np
import pytest

from netkf.bounds import (
    compute_bound_report,
    covariance_gap_trajectory,
    error_recursion_residuals,
    estimate_gap_monte_carlo,
    stability_check,
)
from netkf.central import central_run
from netkf.cli import main
from netkf.config import parse_config, shipped_config
from netkf.distributed import distributed_run
from netkf.experiments import build_model
from netkf.riemann import property_checks
from netkf.simulate import simulate

from oracles import conditional_moments, random_model


@pytest.fixture(scope="module")
def dense_setup():
    """Five-agent network with the dense prior P = G G^T + 0.1 I (shipped config)."""
    net, cfg = parse_config(shipped_config("five_agent.yaml"))
    assert cfg.covariance_mode == "random_spd" and cfg.eps0 == 0.1
    model = build_model(net, cfg)
    assert np.any(model.P != model.P_star)
    return net, cfg, model


@pytest.fixture(scope="module")
def dense_gaps(dense_setup):
    _, _, model = dense_setup
    report = compute_bound_report(model, eps=1.1, horizon=100)
    return report, covariance_gap_trajectory(model, 100, report)


@pytest.fixture(scope="module")
def property_rows():
    rows = property_checks(seed=20240601, trials=200, max_dim=6, pd_trials=500, grid_step=0.01, tol=1e-10)
    return {name: (trials, violations, worst) for name, trials, violations, worst in rows}


def test_criterion_01_block_diagonal_exactness(detail):
    net, cfg = parse_config(shipped_config("five_agent_fig3.yaml"))
    assert cfg.covariance_mode == "block_diagonal_scalar" and cfg.horizon == 200
    model = build_model(net, cfg)
    assert np.array_equal(model.P, model.P[0, 0] * np.eye(5))
    ys = simulate(model, cfg).y
    c = central_run(model, ys)
    d = distributed_run(net, ys, P=model.P)
    mean_gap = np.max(np.abs(c.means() - d.means()))
    cov_gap = max(np.linalg.norm(a.cov - b.cov, 2) for a, b in zip(c.updated, d.updated))
    detail(f"eps1={model.P[0, 0]:.4g} max|xhat-xhat*|={mean_gap:.3g} max||Sigma-Sigma*||={cov_gap:.3g}")
    assert mean_gap <= 1e-9
    assert cov_gap <= 1e-9


def test_criterion_02_central_filter_matches_conditioning(detail):
    rng = np.random.default_rng(7)
    worst = 0.0
    for trial in range(20):
        model = random_model(rng, n_nodes=int(rng.integers(1, 4)), max_n=2, max_p=2)
        assert model.n <= 6
        horizon = int(rng.integers(1, 6))
        ys = simulate(model, trial, horizon).y
        means, _ = conditional_moments(model, ys)
        worst = max(worst, float(np.max(np.abs(central_run(model, ys).means() - means))))
    detail(f"20 models, worst |mean error|={worst:.3g}")
    assert worst <= 1e-8


def test_criterion_03_covariance_contraction(dense_gaps, detail):
    report, g = dense_gaps
    ratio = g.delta_sigma / g.bound_delta
    detail(f"upsilon={report.upsilon:.4f} delta(P,P*)={report.delta_P:.4f} max ratio delta_k/bound_k={ratio.max():.3g}")
    assert 0 < report.upsilon < 1
    assert np.all(g.delta_sigma <= g.bound_delta)


def test_criterion_04_covariance_gap_bound(dense_gaps, detail):
    report, g = dense_gaps
    detail(
        f"kappa={report.kappa:.4g} sigma={report.sigma:.4g} omega={report.omega:.4g} "
        f"max ratios Sigma {np.max(g.sigma_gap / g.bound_sigma):.3g} Gamma {np.max(g.gamma_gap / g.bound_gamma):.3g}"
    )
    assert np.all(g.sigma_gap <= g.bound_sigma)
    assert np.all(g.gamma_gap <= g.bound_gamma)


def test_criterion_05_estimate_gap_decay(dense_setup, detail):
    _, cfg, model = dense_setup
    mc = estimate_gap_monte_carlo(model, horizon=60, n_runs=100, seed=cfg.seed, eps=1.1, slack=2.0, fit_until=15)
    d = mc.trajectory.delta_hat_norm
    ratio = d[59] / np.max(d[:10])
    env = mc.envelope
    detail(f"ratio={ratio:.3g} envelope A={env.A:.3g} B={env.B:.3g} worst held-out ratio={env.worst_ratio:.3g}")
    assert ratio <= 1e-3
    held = np.arange(16, 61)
    assert np.all(d[held - 1] <= env.slack * env(held))
    assert env.slack <= 2.0 and env.holds


def test_criterion_06_error_recursion(dense_setup, detail):
    _, cfg, model = dense_setup
    ys = simulate(model, cfg.seed, 100).y
    _, _, residual = error_recursion_residuals(model, ys)
    detail(f"99 steps, max residual={residual.max():.3g}")
    assert np.max(residual) <= 1e-8


def test_criterion_07_riemannian_distance_properties(property_rows, detail):
    names = ("distance_self_zero", "distance_symmetric", "distance_inverse_invariant", "contraction", "norm_gap_bound")
    detail(", ".join(f"{n}: {property_rows[n][1]}/{property_rows[n][0]}" for n in names))
    for name in names:
        trials, violations, _ = property_rows[name]
        assert trials == 200 and violations == 0, name


def test_criterion_08_auxiliary_inequalities(property_rows, detail):
    grid, pd = property_rows["expm1_scaling_grid"], property_rows["psd_offdiag_bound"]
    detail(f"grid points {grid[0]}, violations {grid[1]}; PD draws {pd[0]}, violations {pd[1]}")
    assert grid[0] == 1001 * 101 and grid[1] == 0
    assert pd[0] == 500 and pd[1] == 0


def test_criterion_09_stability(dense_setup, detail):
    _, _, model = dense_setup
    stab = stability_check(model)
    detail(f"detectable={stab.detectable} stabilizable={stab.stabilizable} rho(H_bar)={stab.rho_H_bar:.4g}")
    assert stab.detectable and stab.stabilizable and stab.rho_H_bar < 1


def test_criterion_10_cli_determinism(tmp_path, detail):
    runs = [
        ["fig2", "--horizon", "60", "--runs", "10"],
        ["fig3"],
        ["compare", "--seed", "5"],
        ["bounds"],
    ]
    compared = 0
    for argv in runs:
        outs = [tmp_path / f"{argv[0]}_{i}" for i in range(2)]
        for out in outs:
            assert main([*argv, "--out", str(out)]) == 0
        for csv_path in sorted(outs[0].glob("*.csv")):
            assert csv_path.read_bytes() == (outs[1] / csv_path.name).read_bytes(), csv_path.name
            compared += 1
    detail(f"{compared} CSV files byte-identical across reruns")
    assert compared >= 7
