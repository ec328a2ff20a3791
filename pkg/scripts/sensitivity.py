"""Regulariser sensitivity sweeps over alpha (B=3) and beta (B=8).

Prints final per-ensemble variances and the smallest squared distance
between ensemble means for every sweep value. CSVs for plotting land in
``runs/sensitivity_alpha`` and ``runs/sensitivity_beta``.

    python scripts/sensitivity.py [alpha|beta]
"""
import json
import sys
from pathlib import Path

import numpy as np

from aoptflow.cli import main

which = sys.argv[1:] or ["alpha", "beta"]
for name in which:
    out = Path(f"runs/sensitivity_{name}")
    code = main(["run", "--preset", f"sensitivity_{name}", "--out", str(out)])
    if code:
        sys.exit(code)
    print(f"\n{name:>8s}  max variance  min sq. mean distance")
    for sub in sorted(out.iterdir()):
        d = json.loads((sub / "design.json").read_text())
        m = np.array(d["ensemble_means"])
        D = np.sum((m[:, None] - m[None]) ** 2, axis=-1)[np.triu_indices(len(m), 1)]
        print(f"{sub.name:>14s}  {max(d['ensemble_variances']):.3e}  {D.min():.3e}")
