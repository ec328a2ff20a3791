import json

import numpy as np
import pytest

from aoptflow import DesignMeasure
from aoptflow import config as C
from aoptflow.cli import landscape_pairs, landscape_single, main, read_csv


def _first_line(path):
    with open(path) as f:
        return f.readline().strip()


@pytest.fixture(scope="module")
def torus_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("torus")
    code = main(["run", "--preset", "torus", "--out", str(out), "--set", "flow.num_iterations=50"])
    return code, out


def test_run_writes_outputs(torus_run):
    code, out = torus_run
    assert code == 0
    cfg = C.load_config((out / "config.txt").read_text())
    digest = C.config_hash(cfg)
    for name in ("trajectory.csv", "metrics.csv", "ensembles.csv"):
        assert _first_line(out / name) == f"# config_sha256={digest}"
    header, traj = read_csv(out / "trajectory.csv")
    assert header == ["iter", "ensemble", "particle", "x0"]
    assert traj.shape == (51 * 40, 4)
    header, met = read_csv(out / "metrics.csv")
    assert header == ["iter", "utility", "r_v", "r_r", "max_disp"]
    assert np.all(np.diff(met[:, 1]) >= -1e-8)
    design = json.loads((out / "design.json").read_text())
    assert len(design["positions"]) == 40 and design["config_sha256"] == digest


def test_run_is_deterministic(torus_run, tmp_path):
    _, out = torus_run
    main(["run", "--preset", "torus", "--out", str(tmp_path), "--set", "flow.num_iterations=50"])
    # the hash line differs because the output directory is part of the config
    strip = lambda p: p.read_text().split("\n", 1)[1]  # noqa: E731
    assert strip(tmp_path / "trajectory.csv") == strip(out / "trajectory.csv")


def test_certify_and_strict_failure(torus_run, tmp_path):
    _, out = torus_run
    assert main(["certify", "--preset", "torus", "--design", str(out / "design.json"), "--out", str(tmp_path),
                 "--strict"]) == 0
    rep = json.loads((tmp_path / "certificate.json").read_text())
    assert rep["verdict"] == "certified"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"positions": [[0.3]], "weights": [1.0]}))
    assert main(["certify", "--preset", "torus", "--design", str(bad), "--out", str(tmp_path), "--strict"]) == 4
    assert main(["certify", "--preset", "torus", "--design", str(bad), "--out", str(tmp_path)]) == 0
    header, phi = read_csv(tmp_path / "phi.csv")
    assert header == ["x0", "phi", "c"] and len(phi) == 2000


def test_config_error_exit_code(tmp_path, capsys):
    assert main(["run", "--preset", "torus", "--out", str(tmp_path), "--set", "flow.step_size=-1"]) == 2
    assert "flow.step_size" in capsys.readouterr().err
    cfg = tmp_path / "c.txt"
    cfg.write_text("model.noise_std = 0\n")
    assert main(["gradcheck", "--config", str(cfg)]) == 2
    assert main(["gradcheck", "--config", str(tmp_path / "missing.txt")]) == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_failure_exit_code(tmp_path, capsys):
    # an absurd prefactor slope overflows the prior covariance
    code = main(["run", "--out", str(tmp_path), "--set", "prior.kernel.amplitude=1e308",
                 "--set", "flow.num_iterations=2"])
    assert code == 3
    assert "NumericError" in capsys.readouterr().err


def test_gradcheck_torus(capsys):
    assert main(["gradcheck", "--preset", "torus"]) == 0
    assert capsys.readouterr().out.count(" ok") == 3


def test_landscape_symmetric_and_consistent(tmp_path):
    assert main(["landscape", "--preset", "poisson_b2", "--out", str(tmp_path),
                 "--set", "outputs.landscape_points=41"]) == 0
    header, data = read_csv(tmp_path / "landscape.csv")
    assert header == ["x1", "x2", "utility"]
    S = data[:, 2].reshape(41, 41)
    assert np.abs(S - S.T).max() <= 1e-12
    eng = C.build_engine(C.load_config(preset="poisson_b2"))
    x = np.linspace(0, 1, 41)
    for i, j in [(3, 30), (10, 10), (40, 0)]:
        ref = eng.expected_utility(DesignMeasure([x[i], x[j]], [1.0, 1.0]))
        assert S[i, j] == pytest.approx(ref, rel=1e-10)
    prof = landscape_single(eng, np.array([[0.3]]), mass=2.0)[0]
    assert prof == pytest.approx(eng.expected_utility(DesignMeasure([0.3], [2.0])), rel=1e-10)
    assert landscape_pairs(eng, x[:3, None]).shape == (3, 3)


def test_posterior_command(tmp_path):
    design = tmp_path / "d.json"
    design.write_text(json.dumps({"positions": [[0.16], [0.84]], "weights": [0.5, 0.5]}))
    assert main(["posterior", "--preset", "poisson_b2", "--design", str(design), "--out", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "posterior.json").read_text())
    assert res["posterior_trace"] == pytest.approx(-res["utility"], rel=1e-10)
    header, cov = read_csv(tmp_path / "posterior_cov.csv")
    assert cov.shape == (100, 100)
    np.testing.assert_allclose(cov, cov.T, atol=1e-12)
