"""Schrodinger B=4 experiment: flow, single-observation utility map, certificate.

    python scripts/schrodinger_b4.py [output_dir] [num_iterations]
"""
import sys

from aoptflow.cli import main

out = sys.argv[1] if len(sys.argv) > 1 else "runs/schrodinger_b4"
extra = ["--set", f"flow.num_iterations={sys.argv[2]}"] if len(sys.argv) > 2 else []
for cmd in (["run"], ["landscape", "--set", "outputs.landscape_points=60"],
            ["certify", "--design", f"{out}/design.json"]):
    code = main([*cmd, "--preset", "schrodinger_b4", "--out", out, *extra])
    if code:
        sys.exit(code)
