"""Configs round-trip through YAML; the command-line tool writes CSV files."""

import tempfile
from pathlib import Path

from netkf.cli import main
from netkf.config import parse_config, serialize_config, shipped_config
from netkf.netmodel import networks_equal

text = shipped_config("five_agent.yaml")
net, cfg = parse_config(text)
again = serialize_config(net, cfg)
print(again.splitlines()[:8])
print("round trip preserves the network:", networks_equal(net, parse_config(again)[0]))

with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp) / "compare"
    status = main(["compare", "--out", str(out), "--horizon", "30"])
    print("exit status:", status)
    for path in sorted(out.iterdir()):
        print(f"  {path.name}: {len(path.read_text().splitlines())} lines")
    print((out / "gap_trajectory.csv").read_text().splitlines()[0])
