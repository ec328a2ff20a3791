"""
Command-line experiment runner.

    aoptflow run --preset poisson_b2 --out runs/poisson
    aoptflow landscape --preset poisson_b2 --out runs/poisson
    aoptflow certify --preset poisson_b2 --design runs/poisson/design.json --strict
    aoptflow gradcheck --preset torus
    aoptflow posterior --preset poisson_b2 --design runs/poisson/design.json

Every command accepts ``--config FILE``, ``--preset NAME`` and repeated
``--set key=value`` overrides. Exit codes: 0 success, 2 configuration
error, 3 numeric or model failure, 4 certificate violated under ``--strict``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import config as C
from .certify import gradient_check, monotonicity_audit, optimality_certificate
from .design import DesignMeasure, EnsembleProduct, cluster_atoms, ensemble_variances, pairwise_mean_distances
from .errors import ConfigError, ModelError, NumericError
from .flow import run_algorithm1, run_algorithm2

log = logging.getLogger("aoptflow")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_UNCERTIFIED = 0, 2, 3, 4
GRADCHECK_TOL = {"poisson1d": 1e-5, "torus": 1e-5, "schrodinger2d": 1e-4}
DIRECTIONAL_TOL = 1e-5
POSTERIOR_CSV_MAX = 200


# -- output helpers -------------------------------------------------------------


def write_csv(path: Path, header, rows, cfg_hash: str) -> None:
    """CSV with a config-hash comment line, a header row and numeric rows."""
    rows = np.asarray(rows, dtype=float).reshape(-1, len(header))
    with open(path, "w") as f:
        f.write(f"# config_sha256={cfg_hash}\n")
        f.write(",".join(header) + "\n")
        np.savetxt(f, rows, delimiter=",", fmt="%.17g")


def read_csv(path) -> tuple[list, np.ndarray]:
    """Inverse of :func:`write_csv`: returns ``(header, data)``."""
    with open(path) as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    header = lines[0].strip().split(",")
    data = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
    return header, data


def _coord_names(dim):
    return [f"x{d}" for d in range(dim)]


def _out_dir(cfg) -> Path:
    out = Path(cfg.outputs.directory)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_config(cfg, out: Path) -> str:
    (out / "config.txt").write_text(C.serialize(cfg))
    return C.config_hash(cfg)


def load_design(path) -> DesignMeasure:
    """Probability measure stored in a design JSON (weights are renormalised)."""
    data = json.loads(Path(path).read_text())
    pos = np.asarray(data["positions"], dtype=float)
    w = np.asarray(data.get("weights", np.full(len(pos), 1.0 / len(pos))), dtype=float)
    return DesignMeasure(pos, w).normalized()


# -- commands ---------------------------------------------------------------------


def _run_once(cfg) -> dict:
    out = _out_dir(cfg)
    h = _write_config(cfg, out)
    engine = C.build_engine(cfg)
    fcfg = C.build_flow_config(cfg)
    t0 = time.perf_counter()
    runner = run_algorithm1 if cfg.flow.algorithm == 1 else run_algorithm2
    rec = runner(engine, fcfg)
    elapsed = time.perf_counter() - t0
    dim = engine.map.dim

    traj = []
    ens_rows, dist_rows = [], []
    for it, P in sorted(rec.snapshots.items()):
        B, N, _ = P.shape
        b_idx, i_idx = np.meshgrid(np.arange(B), np.arange(N), indexing="ij")
        traj.append(np.column_stack([np.full(B * N, it), b_idx.ravel(), i_idx.ravel(), P.reshape(-1, dim)]))
        ens = EnsembleProduct(P)
        means = P.mean(axis=1)
        ens_rows.append(np.column_stack([np.full(B, it), np.arange(B), means, ensemble_variances(ens)]))
        if B > 1:
            D = pairwise_mean_distances(ens)
            j, k = np.triu_indices(B, 1)
            dist_rows.append(np.column_stack([np.full(len(j), it), j, k, D[j, k]]))
    names = _coord_names(dim)
    write_csv(out / "trajectory.csv", ["iter", "ensemble", "particle", *names], np.vstack(traj), h)
    write_csv(out / "ensembles.csv", ["iter", "ensemble", *[f"mean_{n}" for n in names], "variance"],
              np.vstack(ens_rows), h)
    if dist_rows:
        write_csv(out / "distances.csv", ["iter", "ensemble_j", "ensemble_l", "sq_distance"], np.vstack(dist_rows), h)
    T = rec.num_iterations
    write_csv(out / "metrics.csv", ["iter", "utility", "r_v", "r_r", "max_disp"],
              np.column_stack([np.arange(T + 1), rec.utility, rec.r_v, rec.r_r, rec.max_disp]), h)

    prob = rec.measure.normalized()
    centers, masses = cluster_atoms(prob, cfg.outputs.merge_radius)
    worst, ndec = monotonicity_audit(rec)
    summary = {
        "algorithm": rec.algorithm,
        "batch_size": engine.B,
        "positions": prob.positions.tolist(),
        "weights": prob.weights.tolist(),
        "utility": float(rec.utility[-1]),
        "clusters": {"merge_radius": cfg.outputs.merge_radius, "centers": centers.tolist(),
                     "masses": (engine.B * masses).tolist()},
        "ensemble_means": rec.final.particles.mean(axis=1).tolist(),
        "ensemble_variances": ensemble_variances(rec.final).tolist(),
        "monotonicity": {"worst_step": worst, "decreases": ndec},
        "runtime_seconds": elapsed,
        "config_sha256": h,
    }
    (out / "design.json").write_text(json.dumps(summary, indent=2))
    print(f"{out}: utility {rec.utility[-1]:.8g}, {len(centers)} clusters, worst step {worst:.3g}, "
          f"{elapsed:.1f} s")
    for c, m in zip(centers, masses):
        print("  center " + " ".join(f"{v:.6f}" for v in c) + f"  mass {engine.B * m:.4f}")
    return summary


def cmd_run(cfg, sweep: bool = True) -> int:
    spec = C.parse_sweep(cfg.outputs.sweep) if sweep else None
    if spec is None:
        _run_once(cfg)
        return EXIT_OK
    key, values = spec
    base = Path(cfg.outputs.directory)
    leaf = key.split(".")[-1]
    for v in values:
        sub = C.load_config(C.serialize(cfg), overrides=[(key, v), ("outputs.sweep", ""),
                                                         ("outputs.directory", str(base / f"{leaf}_{v}"))])
        _run_once(sub)
    return EXIT_OK


def landscape_pairs(engine, X) -> np.ndarray:
    """``U`` of the two-atom design ``delta_{x_i} + delta_{x_j}`` for all pairs of rows of ``X``.

    Uses the 2x2 capacitance form of the resolvent, which is symmetric in
    the two atoms by construction.
    """
    g = engine.preconditioned_features(X)
    Gm = g @ g.T
    H = g @ engine.trace_op @ g.T
    Gm, H = 0.5 * (Gm + Gm.T), 0.5 * (H + H.T)
    d = np.diag(Gm)
    h = np.diag(H)
    a, b = 1.0 + d[:, None], 1.0 + d[None, :]
    det = a * b - Gm**2
    tr = (b * h[:, None] + a * h[None, :] - 2.0 * Gm * H) / det
    return -engine.prior_trace + tr


def landscape_single(engine, X, mass: float = 1.0) -> np.ndarray:
    """``U(mass * delta_x)`` at each row of ``X`` (Sherman-Morrison)."""
    g = engine.preconditioned_features(X)
    num = np.sum((g @ engine.trace_op) * g, axis=1)
    return -engine.prior_trace + mass * num / (1.0 + mass * np.einsum("pm,pm->p", g, g))


def cmd_landscape(cfg) -> int:
    out = _out_dir(cfg)
    h = _write_config(cfg, out)
    engine = C.build_engine(cfg)
    obs = engine.map
    n = cfg.outputs.landscape_points
    if obs.dim == 1:
        x = np.linspace(obs.lower[0], obs.upper[0], n, endpoint=not obs.periodic)
        prof = landscape_single(engine, x[:, None])
        write_csv(out / "profile.csv", ["x0", "utility"], np.column_stack([x, prof]), h)
        if cfg.flow.batch_size == 2:
            S = landscape_pairs(engine, x[:, None])
            i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
            write_csv(out / "landscape.csv", ["x1", "x2", "utility"],
                      np.column_stack([x[i.ravel()], x[j.ravel()], S.ravel()]), h)
            k = np.unravel_index(np.argmax(S), S.shape)
            print(f"pair surface max {S[k]:.8g} at ({x[k[0]]:.4f}, {x[k[1]]:.4f})")
        else:
            log.warning("pair surface is only exported for batch size 2")
    else:
        axes = [np.linspace(obs.lower[d], obs.upper[d], n) for d in range(obs.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        X = np.column_stack([m.ravel() for m in mesh])
        prof = np.concatenate([landscape_single(engine, X[k:k + 2000]) for k in range(0, len(X), 2000)])
        write_csv(out / "profile.csv", [*_coord_names(obs.dim), "utility"], np.column_stack([X, prof]), h)
    k = int(np.argmax(prof))
    print(f"single-observation profile max {prof[k]:.8g} at {np.round(np.atleast_1d(x[k] if obs.dim == 1 else X[k]), 4)}")
    return EXIT_OK


def cmd_certify(cfg, design_path, strict: bool = False) -> int:
    out = _out_dir(cfg)
    h = _write_config(cfg, out)
    engine = C.build_engine(cfg)
    prob = load_design(design_path)
    rep = optimality_certificate(engine, prob, tol=cfg.outputs.certificate_tol, merge_radius=cfg.outputs.merge_radius)
    data = rep.to_dict()
    data["config_sha256"] = h
    (out / "certificate.json").write_text(json.dumps(data, indent=2))
    write_csv(out / "phi.csv", [*_coord_names(engine.map.dim), "phi", "c"],
              np.column_stack([rep.audit_points, rep.audit_phi, np.full(len(rep.audit_phi), rep.c)]), h)
    print(f"{rep.verdict}: c={rep.c:.8g} max_violation={rep.max_violation:.3g} "
          f"support_residual={rep.support_residual:.3g} grad_sup={rep.grad_sup_on_support:.3g}")
    return EXIT_UNCERTIFIED if strict and not rep.certified else EXIT_OK


def cmd_gradcheck(cfg) -> int:
    engine = C.build_engine(cfg)
    res = gradient_check(engine, seed=cfg.flow.seed)
    tol = GRADCHECK_TOL[cfg.model.type]
    limits = {"feature_jacobian": tol, "first_variation_gradient": tol, "directional_derivative": DIRECTIONAL_TOL}
    ok = True
    for name, err in res.items():
        passed = err <= limits[name]
        ok &= passed
        print(f"{name:26s} worst rel. error {err:.3e}  (tol {limits[name]:.0e})  {'ok' if passed else 'FAIL'}")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_posterior(cfg, design_path) -> int:
    out = _out_dir(cfg)
    h = _write_config(cfg, out)
    engine = C.build_engine(cfg)
    nu = load_design(design_path).scaled(engine.B)
    cov = engine.posterior_covariance(nu)
    w = engine.map.trace_weights
    result = {
        "posterior_trace": float(np.sum(w * np.diag(cov))),
        "posterior_trace_euclidean": float(np.trace(cov)),
        "prior_trace": engine.prior_trace,
        "utility": engine.expected_utility(nu),
        "config_sha256": h,
    }
    (out / "posterior.json").write_text(json.dumps(result, indent=2))
    if cov.shape[0] <= POSTERIOR_CSV_MAX:
        write_csv(out / "posterior_cov.csv", [f"c{k}" for k in range(cov.shape[0])], cov, h)
    print(f"posterior trace {result['posterior_trace']:.10g} (prior {engine.prior_trace:.10g})")
    return EXIT_OK


# -- entry point ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="configuration file with dotted keys")
    common.add_argument("--preset", choices=sorted(C.PRESETS))
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    common.add_argument("--out", help="output directory (outputs.directory)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="aoptflow", description="Relaxed batch A-optimal design by particle flows.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="run the configured flow")
    r.add_argument("--no-sweep", action="store_true", help="ignore outputs.sweep")
    sub.add_parser("landscape", parents=[common], help="utility surface and single-observation profile")
    c = sub.add_parser("certify", parents=[common], help="first-order optimality certificate of a design")
    c.add_argument("--design", required=True)
    c.add_argument("--strict", action="store_true", help="exit 4 if the certificate fails")
    sub.add_parser("gradcheck", parents=[common], help="finite-difference validation")
    q = sub.add_parser("posterior", parents=[common], help="posterior covariance of a design")
    q.add_argument("--design", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        text = Path(args.config).read_text() if args.config else None
        overrides = list(args.overrides)
        if args.out:
            overrides.append(("outputs.directory", args.out))
        cfg = C.load_config(text, args.preset, overrides)
        if args.command == "run":
            return cmd_run(cfg, sweep=not args.no_sweep)
        if args.command == "landscape":
            return cmd_landscape(cfg)
        if args.command == "certify":
            return cmd_certify(cfg, args.design, args.strict)
        if args.command == "gradcheck":
            return cmd_gradcheck(cfg)
        return cmd_posterior(cfg, args.design)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, ModelError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
