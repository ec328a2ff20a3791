"""Worst per-step utility change of the unregularised Poisson flow versus step size.

    python scripts/step_size_study.py
"""
from aoptflow import config as C
from aoptflow import run_algorithm2
from aoptflow.certify import monotonicity_audit

print("     dt   worst step   decreases   final utility")
for dt in (4e-3, 2e-2, 5e-2, 1e-1, 1.5e-1, 3e-1):
    cfg = C.load_config(preset="poisson_b2", overrides=["regularization.alpha=0", f"flow.step_size={dt}"])
    rec = run_algorithm2(C.build_engine(cfg), C.build_flow_config(cfg))
    worst, n = monotonicity_audit(rec)
    print(f"{dt:7.3g}  {worst:11.3e}  {n:10d}  {rec.utility[-1]:.8f}")
