"""Every constant behind the convergence bounds, plus the stability checks."""

from netkf.bounds import compute_bound_report, stability_check
from netkf.config import parse_config, shipped_config
from netkf.experiments import build_model

net, cfg = parse_config(shipped_config("five_agent.yaml"))
model = build_model(net, cfg)

report = compute_bound_report(model, eps=1.1, horizon=cfg.horizon)
for name, value in report.rows():
    print(f"{name:>16s}  {value}")

stab = stability_check(model)
print(f"\n(A, C) detectable: {stab.detectable}")
print(f"(A, Q^1/2) stabilizable: {stab.stabilizable}")
print(f"spectral radius of A (I - K_bar C): {stab.rho_H_bar:.4f}")
