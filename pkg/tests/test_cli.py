import json

import numpy as np
import pytest

from randpolytope.harness import results as R
from randpolytope.harness.cli import main


def test_sample_hull_scores_rescale(tmp_path):
    out = str(tmp_path)
    assert main(["sample", "--lam", "2000", "--seed", "4", "--out", out]) == 0
    pts = tmp_path / "points.csv"
    assert pts.exists()
    assert main(["hull", str(pts), "--out", out]) == 0
    hull = json.loads((tmp_path / "hull.json").read_text())
    assert hull["f"][0] == hull["f"][1] == len(hull["vertices"])
    assert main(["scores", str(pts), "--lam", "2000", "--out", out]) == 0
    data = np.genfromtxt(tmp_path / "scores.csv", delimiter=",", names=True)
    assert data["xi_0"].sum() == hull["f"][0]
    assert main(["rescale", str(pts), "--lam", "2000", "--out", out]) == 0
    assert (tmp_path / "rescaled.csv").exists()


def test_rescale_round_trip(tmp_path):
    d1, d2 = tmp_path / "a", tmp_path / "b"
    main(["sample", "--lam", "500", "--out", str(d1)])
    assert main(["rescale", str(d1 / "points.csv"), "--lam", "500", "--out", str(d2)]) == 0
    d3 = tmp_path / "c"
    assert main(["rescale", str(d2 / "rescaled.csv"), "--lam", "500", "--inverse", "--out", str(d3)]) == 0
    a = np.genfromtxt(d1 / "points.csv", delimiter=",", names=True)
    b = np.genfromtxt(d3 / "rescaled.csv", delimiter=",", names=True)
    np.testing.assert_allclose(b["x0"], a["x0"], rtol=1e-9)


def test_festoon_output(tmp_path):
    assert main(["festoon", "--seed", "2", "--half-width", "4", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "festoon.json").read_text())
    assert doc


def test_limit_sample(tmp_path):
    assert main(["sample", "--limit", "--half-width", "3", "--out", str(tmp_path)]) == 0
    assert main(["festoon", str(tmp_path / "points.csv"), "--out", str(tmp_path)]) == 0


def test_experiment_outputs(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("lambda = 2^8..2^10\nreps = 20\ntiming = false\n")
    out = tmp_path / "run"
    rc = main(["experiment", "variance-scan", "--config", str(cfg), "--seed", "3",
               "--threads", "2", "--out", str(out)])
    assert rc == 0
    rows = R.read_results(out / "results.csv")
    assert {r.lam for r in rows} == {256.0, 512.0, 1024.0}
    meta = (out / "meta.txt").read_text()
    assert "seed = 3" in meta and "threads = 2" in meta


@pytest.mark.parametrize("argv", [
    ["experiment", "variance-scan", "--config", "/nonexistent.cfg"],
    ["experiment", "bogus"],
    ["frobnicate"],
    ["sample", "--body", "dodecagon-of-doom"],
    ["experiment", "limit-constants", "--dim", "3"],
])
def test_config_errors_exit_2(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path)]) == 2


def test_bad_config_key_exit_2(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("reps = 0\n")
    assert main(["experiment", "variance-scan", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_numerical_failure_exit_3(tmp_path):
    pts = tmp_path / "line.csv"
    pts.write_text("x0,x1\n0,0\n1,1\n2,2\n3,3\n")
    assert main(["hull", str(pts), "--out", str(tmp_path)]) == 3
    neg = tmp_path / "neg.csv"
    neg.write_text("x0,x1\n-0.5,0.2\n0.3,0.4\n")
    assert main(["rescale", str(neg), "--lam", "100", "--out", str(tmp_path)]) == 3
