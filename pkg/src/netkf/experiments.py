"""Experiment drivers and their CSV / manifest outputs.

Every CSV is comma separated with a header row, numbers printed with 17
significant digits via :func:`format` (locale independent), so reruns with
the same config and seed produce identical bytes.
"""

import csv
import hashlib
import json
import platform
import sys
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from .bounds import (
    BoundReport,
    GapTrajectory,
    MonteCarloGap,
    compute_bound_report,
    covariance_gap_trajectory,
    estimate_gap_monte_carlo,
)
from .central import FilterTrajectory, central_run
from .distributed import distributed_run
from .netmodel import AggregatedModel, NetworkModel, aggregate
from .simulate import PRNG, SimConfig, Trajectory, initial_covariance, simulate

DEFAULT_EPS = 1.1


@dataclass
class ExperimentResult:
    """One simulated run of both filters plus the bound analysis of its model.

    ``gap`` covers ``k = 0..K``: row ``k`` holds ``xhat_{k|k-1} - xhat*_{k|k-1}``
    (the prior means at ``k = 0``) and the ``(k|k)`` covariance gaps.
    """

    model: AggregatedModel
    config: SimConfig
    truth: Trajectory
    central: FilterTrajectory
    distributed: FilterTrajectory
    gap: GapTrajectory
    report: BoundReport
    monte_carlo: MonteCarloGap | None = None


def build_model(net: NetworkModel, cfg: SimConfig) -> AggregatedModel:
    return aggregate(net, initial_covariance(net, cfg))


def run_comparison(net: NetworkModel, cfg: SimConfig, eps=DEFAULT_EPS, n_runs=0) -> ExperimentResult:
    """Run both filters on one simulated trajectory from identical zero initial means.

    With ``n_runs > 0`` the Monte-Carlo estimate-gap study is added.
    """
    model = build_model(net, cfg)
    truth = simulate(model, cfg)
    central = central_run(model, truth.y)
    dist = distributed_run(net, truth.y, P=model.P)
    K = cfg.horizon
    report = compute_bound_report(model, eps=eps, horizon=K)
    gap = covariance_gap_trajectory(model, K, report)
    x_gap = np.zeros((K + 1, model.n))
    x_gap[0] = central.initial.mean - dist.initial.mean
    x_gap[1:] = central.means("predicted") - dist.means("predicted")
    gap.x_gap = x_gap
    gap.x_gap_norm = np.linalg.norm(x_gap, axis=1)
    mc = None
    if n_runs > 0:
        mc = estimate_gap_monte_carlo(model, K, n_runs, cfg.seed, eps=eps, report=report)
    return ExperimentResult(model, cfg, truth, central, dist, gap, report, mc)


def run_experiment_fig2(net: NetworkModel, cfg: SimConfig, eps=DEFAULT_EPS, n_runs=0) -> ExperimentResult:
    """Dense joint prior ``P = G G^T + eps0 I``: the estimate gap decays but is not zero."""
    return run_comparison(net, replace(cfg, covariance_mode="random_spd"), eps, n_runs)


def run_experiment_fig3(net: NetworkModel, cfg: SimConfig, eps=DEFAULT_EPS, n_runs=0) -> ExperimentResult:
    """Scalar prior ``P = eps1 I``: the two filters coincide up to round-off."""
    return run_comparison(net, replace(cfg, covariance_mode="block_diagonal_scalar"), eps, n_runs)


# --- output files ------------------------------------------------------------------

def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def write_gap_csv(path, gap: GapTrajectory):
    """``k, xgap_1..xgap_n, xgap_norm, sigma_gap_norm, delta_sigma, bound_sigma``."""
    n = gap.x_gap.shape[1]
    header = ["k", *[f"xgap_{i}" for i in range(1, n + 1)], "xgap_norm", "sigma_gap_norm", "delta_sigma", "bound_sigma"]
    rows = (
        [k, *gap.x_gap[t], gap.x_gap_norm[t], gap.sigma_gap[t], gap.delta_sigma[t], gap.bound_sigma[t]]
        for t, k in enumerate(gap.k)
    )
    _write_rows(path, header, rows)


def write_bound_csv(path, report: BoundReport):
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "value"])
        for name, value in report.rows():
            writer.writerow([name, fmt(value)])


def write_delta_csv(path, mc: MonteCarloGap):
    """Monte-Carlo ``||Delta_k||`` next to the exact value and the fitted envelope."""
    t = mc.trajectory
    env = mc.envelope(t.k)
    direct = [np.linalg.norm(D, 2) for D in mc.delta_hat_direct]
    header = ["k", "delta_hat_norm", "delta_hat_direct_norm", "delta_exact_norm", "envelope"]
    _write_rows(path, header, zip(t.k, t.delta_hat_norm, direct, t.delta_exact_norm, env))


def write_estimates_csv(path, truth: Trajectory, traj: FilterTrajectory):
    """``k``, true state, updated estimate and ``||Sigma_{k|k}||`` for ``k = 1..K``."""
    n = truth.x.shape[1]
    header = ["k", *[f"x_{i}" for i in range(1, n + 1)], *[f"xhat_{i}" for i in range(1, n + 1)], "sigma_norm"]
    rows = (
        [k, *truth.x[k], *b.mean, np.linalg.norm(b.cov, 2)]
        for k, b in enumerate(traj.updated, start=1)
    )
    _write_rows(path, header, rows)


def write_property_csv(path, rows):
    _write_rows(path, ["name", "trials", "violations", "worst_excess"], rows)


def versions() -> dict:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {
        "netkf": pkg,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "prng": PRNG,
    }


def write_manifest(out_dir, command, config_text, seed, files, argv=None, extra=None):
    """``manifest.json``: everything needed to reproduce the outputs, plus a timestamp."""
    record = {
        "command": command,
        "argv": list(sys.argv[1:] if argv is None else argv),
        "seed": seed,
        "config_sha256": hashlib.sha256(config_text.encode("utf-8")).hexdigest(),
        "versions": versions(),
        "files": sorted(files),
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    record.update(extra or {})
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
