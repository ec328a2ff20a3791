"""Poisson B=2 experiment: flow, pair landscape, certificate.

    python scripts/poisson_b2.py [output_dir]
"""
import sys

from aoptflow.cli import main

out = sys.argv[1] if len(sys.argv) > 1 else "runs/poisson_b2"
for cmd in (["run"], ["landscape"], ["certify", "--design", f"{out}/design.json"],
            ["posterior", "--design", f"{out}/design.json"]):
    code = main([*cmd, "--preset", "poisson_b2", "--out", out])
    if code:
        sys.exit(code)
