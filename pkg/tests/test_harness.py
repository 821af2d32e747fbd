import math

import numpy as np
import pytest

from randpolytope.errors import ConfigError, InsufficientPoints
from randpolytope.harness import config as C, experiments as X, results as R


def test_parse_lambda_grid():
    assert C.parse_lambdas("2^12..2^14") == (4096.0, 8192.0, 16384.0)
    assert C.parse_lambdas("2^3..5") == (8.0, 16.0, 32.0)
    assert C.parse_lambdas("100, 1e3,2^11") == (100.0, 1000.0, 2048.0)
    with pytest.raises(ConfigError):
        C.parse_lambdas("lots")


def test_parse_config_text():
    cfg = C.parse_config("""
# comment
kind = decomposition
body = triangle
lambda = 2^10..2^12
reps = 50
scores = xi0, xiV
seed = 9
threads = 2
delta = 0.1
timing = false
""")
    assert cfg.kind == "decomposition" and cfg.body == "triangle"
    assert cfg.lambdas == (1024.0, 2048.0, 4096.0)
    assert cfg.reps == 50 and cfg.seed == 9 and cfg.threads == 2
    assert cfg.scores == ("xi0", "xiV")
    assert cfg.delta == 0.1 and cfg.timing is False


@pytest.mark.parametrize("text", [
    "kind = nonsense",
    "reps = 1",
    "lambda = 2^12, 2^11",
    "lambda = 2",
    "threads = 0",
    "scores = xi9",
    "delta = 0.7",
    "seed = -1",
    "colour = blue",
    "reps = many",
    "timing = maybe",
    "d = 1",
])
def test_config_validation(text):
    with pytest.raises(ConfigError):
        C.parse_config(text)


def test_load_config_missing(tmp_path):
    with pytest.raises(ConfigError):
        C.load_config(tmp_path / "absent.cfg")


def test_fit_exact_line():
    rows = [(2.0**k, 3.0 * k * math.log(2) + 1.5) for k in range(10, 16)]
    slope, icpt, r2 = R.fit_log_power(rows, 2)
    assert slope == pytest.approx(3.0, rel=1e-12)
    assert icpt == pytest.approx(1.5, abs=1e-10)
    assert r2 == pytest.approx(1.0)
    rows = [(2.0**k, 0.5 * (k * math.log(2)) ** 2 - 2.0) for k in range(10, 16)]
    slope, icpt, _ = R.fit_log_power(rows, 3)
    assert slope == pytest.approx(0.5, rel=1e-12) and icpt == pytest.approx(-2.0, abs=1e-9)


def test_fit_noisy_within_three_se():
    r = np.random.default_rng(4)
    lam = 2.0 ** np.arange(12, 19)
    hits = 0
    for _ in range(200):
        y = 8 / 3 * np.log(lam) + 0.3 + r.normal(0, 0.05, len(lam))
        rows = [R.ResultRow("e", a, "m", b, 0.05, 1) for a, b in zip(lam, y)]
        slope, _, _ = R.fit_log_power(rows, 2)
        hits += abs(slope - 8 / 3) <= 3 * R.slope_se(rows, 2)
    assert hits >= 197


def test_fit_constant_and_short():
    slope, icpt, r2 = R.fit_log_power([(2.0**k, 7.0) for k in range(5)], 2)
    assert slope == 0.0 and icpt == pytest.approx(7.0) and r2 == 1.0
    with pytest.raises(InsufficientPoints):
        R.fit_log_power([(10.0, 1.0), (20.0, 2.0)], 2)


def test_result_row_rejects_negative_se():
    with pytest.raises(ValueError):
        R.ResultRow("e", 1.0, "s", 0.0, -1.0, 1)


def test_results_round_trip(tmp_path):
    rows = [R.ResultRow("a/b", 4096.0, "mean_f0", 1 / 3, 0.01, 10, 1.23456),
            R.ResultRow("a/b", math.inf, "F_0_2", 0.2, 0.0, 5, 0.5)]
    R.write_results(rows, tmp_path / "r.csv")
    back = R.read_results(tmp_path / "r.csv")
    assert back[0].estimate == 1 / 3 and back[1].lam == math.inf
    assert back[0].wall_time == pytest.approx(1.235)
    R.write_results(rows, tmp_path / "r0.csv", timing=False)
    assert all(r.wall_time == 0.0 for r in R.read_results(tmp_path / "r0.csv"))
    head = (tmp_path / "r.csv").read_text().splitlines()[0]
    assert head == "experiment_id,lambda,statistic,estimate,se,reps,wall_time"


def test_meta_file(tmp_path):
    cfg = C.ExperimentConfig(reps=10)
    R.write_meta(tmp_path / "meta.txt", cfg, {"total": 1.5})
    text = (tmp_path / "meta.txt").read_text()
    assert "reps = 10" in text and "numpy =" in text and "total = 1.500" in text


def small_scan(threads, seed=3, reps=60):
    X.clear_cache()
    cfg = C.ExperimentConfig(kind="variance-scan", lambdas=(256.0, 512.0, 1024.0), reps=reps,
                             seed=seed, threads=threads, timing=False)
    return X.run_variance_scan(cfg)


def test_determinism_across_threads(tmp_path):
    a, b = small_scan(1), small_scan(3)
    R.write_results(a, tmp_path / "a.csv", timing=False)
    R.write_results(b, tmp_path / "b.csv", timing=False)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    c = small_scan(1, seed=4)
    assert [r.estimate for r in c] != [r.estimate for r in a]


def test_se_shrinks_with_reps():
    lo = {(r.lam, r.statistic): r.se for r in small_scan(1, reps=400)}
    hi = {(r.lam, r.statistic): r.se for r in small_scan(1, reps=800)}
    ratios = [hi[k] / lo[k] for k in lo if k[1].startswith("mean_")]
    assert np.median(ratios) == pytest.approx(1 / math.sqrt(2), rel=0.2)


def test_batch_cache_shared():
    X.clear_cache()
    a = X.euclidean_batch("square", 2, 512.0, 20, 1)
    assert X.euclidean_batch("square", 2, 512.0, 20, 1) is a
    X.clear_cache()
    b = X.euclidean_batch("square", 2, 512.0, 20, 1)
    np.testing.assert_array_equal(a["f"], b["f"])


def test_load_body(tmp_path):
    assert X.load_body("triangle", 2).f0 == 3
    path = tmp_path / "pent.csv"
    t = np.linspace(0, 2 * np.pi, 6)[:-1]
    np.savetxt(path, np.column_stack([np.cos(t), np.sin(t)]), delimiter=",")
    assert X.load_body(str(path), 2).f0 == 5
    with pytest.raises(ConfigError):
        X.load_body("no-such-body", 2)


def test_decomposition_rows_small():
    X.clear_cache()
    cfg = C.ExperimentConfig(kind="decomposition", lambdas=(1024.0, 2048.0, 4096.0), reps=40,
                             seed=2, diag_reps=5)
    rows = X.run_decomposition(cfg)
    for lam in cfg.lambdas:
        got = {r.statistic for r in rows if r.lam == lam}
        assert {"var_Z", "sum_var_Zi", "remainder", "remainder_ratio", "cone_extreme_rate"} <= got
    ratio = R.select([r for r in rows if r.experiment.endswith("/xi0")], "remainder_ratio")
    assert all(0 <= r.estimate for r in ratio)


def test_limit_constants_small():
    cfg = C.ExperimentConfig(kind="limit-constants", reps=4, mean_reps=20, quad_reps=2,
                             window_half_width=10.0, scores=("xi0",))
    rows = X.run_limit_constants(cfg)
    names = {r.statistic for r in rows}
    assert {"mean_integral_xi0", "sigma2_xi0", "sigma2_xi0_quad", "F_0_2", "F_0_2_times_f0"} <= names
    assert all(math.isinf(r.lam) for r in rows)
    with pytest.raises(ConfigError):
        X.run_limit_constants(C.ExperimentConfig(kind="limit-constants", d=3))


def test_convergence_and_diagnostics_small():
    cfg = C.ExperimentConfig(kind="convergence", lambdas=(2.0**12, 2.0**14, 2.0**16), reps=30, seed=5)
    rows = X.run_convergence(cfg)
    assert len(R.select(rows, "ks_count_p")) == 3
    assert all(0 <= r.estimate <= 1 for r in R.select(rows, "ks_height_p"))
    cfg = C.ExperimentConfig(kind="diagnostics", lambdas=(2.0**12, 2.0**13, 2.0**14), diag_reps=10)
    rows = X.run_diagnostics(cfg)
    assert len(R.select(rows, "cone_extreme_rate")) == 3
    assert R.select(rows, "boundary_tail_0")[0].estimate >= R.select(rows, "boundary_tail_1")[0].estimate
