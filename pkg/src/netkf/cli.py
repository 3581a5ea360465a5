"""Command-line front end: ``netkf COMMAND [--config PATH] [--out DIR] ...``."""

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiments as ex
from .bounds import compute_bound_report, stability_check
from .central import central_run
from .config import parse_config, shipped_config
from .distributed import distributed_run
from .errors import NetKFError, PropertyViolation
from .riemann import property_checks
from .simulate import simulate

EXIT_CODES = {
    0: "success",
    1: "unexpected internal error",
    2: "usage error (bad flags, missing config file)",
    3: "config parse error (malformed YAML)",
    4: "config validation error (invalid content)",
    5: "non-SPD matrix, dimension mismatch or order violation",
    6: "numerical failure (singular innovation/covariance, no convergence, broadcast error)",
    7: "property suite found violations",
}

COMMANDS = {
    "run-central": "simulate one trajectory and run the centralized filter (estimates.csv)",
    "run-distributed": "simulate one trajectory and run the distributed filter (estimates.csv)",
    "compare": "run both filters on one trajectory with the config's prior (gap_trajectory.csv, bound_report.csv)",
    "bounds": "evaluate the convergence-bound constants and stability checks (bound_report.csv)",
    "property-suite": "randomized checks of the distance inequalities and auxiliary bounds (property_report.csv)",
    "fig2": "dense prior P = G G^T + eps0 I: gap trajectory plus Monte-Carlo Delta_k (delta_trajectory.csv)",
    "fig3": "scalar prior P = eps1 I: gap trajectory at round-off level",
}


class UsageError(Exception):
    exit_code = 2


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _nonneg_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    epilog = "exit codes:\n" + "\n".join(f"  {code}  {text}" for code, text in EXIT_CODES.items())
    parser = argparse.ArgumentParser(
        prog="netkf",
        description="Centralized vs distributed Kalman filtering on coupled LTI networks.",
        epilog=epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML config (default: the bundled five-agent config)")
    common.add_argument("--out", metavar="DIR", default="out", help="output directory (default: ./out)")
    common.add_argument("--seed", metavar="N", type=_nonneg_int, help="override the config seed")
    common.add_argument("--horizon", metavar="K", type=_positive_int, help="override the config horizon")
    common.add_argument("--eps", metavar="X", type=float, default=ex.DEFAULT_EPS,
                        help="eps > 1 in psi = eps * rho(H_bar) (default 1.1)")
    common.add_argument("--runs", metavar="N", type=_nonneg_int, help="Monte-Carlo runs (fig2 default: config n_runs)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, text in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=text, description=text, epilog=epilog,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    return parser


def _load(args):
    if args.config is None:
        name = "five_agent_fig3.yaml" if args.command == "fig3" else "five_agent.yaml"
        text = shipped_config(name)
    else:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        text = path.read_text(encoding="utf-8")
    net, cfg = parse_config(text)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.horizon is not None:
        cfg = replace(cfg, horizon=args.horizon)
    if args.runs is not None and args.runs > 0:
        cfg = replace(cfg, n_runs=args.runs)
    return text, net, cfg


def execute(args) -> int:
    """Run one parsed command; returns the exit status."""
    if not args.eps > 1:
        raise UsageError(f"--eps must exceed 1, got {args.eps}")
    text, net, cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "error.json").unlink(missing_ok=True)
    files = []
    extra = {}
    status = 0

    def path(name):
        files.append(name)
        return out / name

    if args.command in ("run-central", "run-distributed"):
        model = ex.build_model(net, cfg)
        truth = simulate(model, cfg)
        traj = central_run(model, truth.y) if args.command == "run-central" else distributed_run(net, truth.y, P=model.P)
        ex.write_estimates_csv(path("estimates.csv"), truth, traj)
    elif args.command == "bounds":
        model = ex.build_model(net, cfg)
        report = compute_bound_report(model, eps=args.eps, horizon=cfg.horizon)
        stab = stability_check(model)
        ex.write_bound_csv(path("bound_report.csv"), report)
        with open(out / "bound_report.csv", "a", newline="", encoding="ascii") as fh:
            fh.write(f"detectable,{ex.fmt(stab.detectable)}\r\n")
            fh.write(f"stabilizable,{ex.fmt(stab.stabilizable)}\r\n")
    elif args.command == "property-suite":
        rows = property_checks(seed=cfg.seed)
        ex.write_property_csv(path("property_report.csv"), rows)
        failed = [name for name, _, violations, _ in rows if violations]
        extra["violations"] = failed
        if failed:
            status = PropertyViolation.exit_code
    else:
        runner = {"compare": ex.run_comparison, "fig2": ex.run_experiment_fig2, "fig3": ex.run_experiment_fig3}[args.command]
        default_runs = cfg.n_runs if args.command == "fig2" else 0
        n_runs = default_runs if args.runs is None else args.runs
        result = runner(net, cfg, eps=args.eps, n_runs=n_runs)
        ex.write_gap_csv(path("gap_trajectory.csv"), result.gap)
        ex.write_bound_csv(path("bound_report.csv"), result.report)
        if result.monte_carlo is not None:
            ex.write_delta_csv(path("delta_trajectory.csv"), result.monte_carlo)
            extra["n_runs"] = n_runs
    ex.write_manifest(out, args.command, text, cfg.seed, files, argv=getattr(args, "argv", None), extra=extra)
    if status:
        _report_error(out, PropertyViolation(f"property checks failed: {', '.join(extra['violations'])}"), status)
    return status


def _error_record(exc, code):
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    for attr in ("line", "entity", "rule", "step", "node"):
        value = getattr(exc, attr, None)
        if value is not None:
            record[attr] = value
    return record


def _report_error(out, exc, code):
    record = _error_record(exc, code)
    text = json.dumps(record, sort_keys=True)
    print(text, file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(text + "\n", encoding="utf-8")
        except OSError:
            pass


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    out = Path(args.out) if args.out else None
    try:
        with np.errstate(under="ignore"):
            return execute(args)
    except (NetKFError, UsageError) as exc:
        code = exc.exit_code
        _report_error(out, exc, code)
    except Exception as exc:  # noqa: BLE001 - anything else is an internal error
        code = 1
        _report_error(out, exc, code)
    return code

if __name__ == "__main__":
    sys.exit(main())
