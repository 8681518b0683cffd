import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hardcore.cli import main, render
from hardcore.experiments import (LwcConfig, ReconConfig, identity_check,
                                  integrated_autocorr, run_lwc_experiment,
                                  run_oracle_suite, run_tree_recon_scan,
                                  stationarity_check)
from hardcore.samples_io import load_samples, rle_decode, rle_encode, save_samples


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 1), max_size=200))
def test_rle_roundtrip(bits):
    b = np.array(bits, dtype=np.uint8)
    assert np.array_equal(rle_decode(rle_encode(b), b.size), b)


def test_sample_files(tmp_path):
    rng = np.random.default_rng(0)
    s = (rng.random((30, 57)) < 0.2).astype(np.uint8)
    path = tmp_path / "s.npz"
    save_samples(path, s, {"lambda": 1.0, "seed": 0, "graph_sha256": "x", "sweeps": 10})
    back, meta = load_samples(path)
    assert np.array_equal(back, s)
    assert meta["num_samples"] == 30 and meta["lambda"] == 1.0


def test_autocorr_ar1():
    rng = np.random.default_rng(1)
    x = np.zeros(200000)
    for t in range(1, x.size):
        x[t] = 0.5 * x[t - 1] + rng.normal()
    # (1 + rho) / (1 - rho) = 3
    assert integrated_autocorr(x) == pytest.approx(3.0, rel=0.1)


def test_identity_and_stationarity():
    rng = np.random.default_rng(2)
    assert identity_check(50, rng) < 1e-10
    worst, concave = stationarity_check(50, rng)
    assert worst < 1e-8 and concave


def test_oracle_suite_passes():
    rep = run_oracle_suite()
    assert rep["passed"], rep["failed"]


def test_lwc_small():
    rep = run_lwc_experiment(LwcConfig(n=512, samples=2000, seed=3))
    assert rep.num_separated > 0
    assert rep.aggregate_tv <= rep.max_tv + 1e-12
    assert 0 <= rep.fraction_above_eps <= 1
    assert rep.bias_bound == pytest.approx(8 / 4000)
    assert rep.config["n"] == 512 and rep.version


def test_lwc_seeded():
    a = run_lwc_experiment(LwcConfig(n=256, samples=300, seed=4, second_chain=False))
    b = run_lwc_experiment(LwcConfig(n=256, samples=300, seed=4, second_chain=False))
    assert a.per_center_tv == b.per_center_tv


def test_recon_scan_small():
    out = run_tree_recon_scan(ReconConfig(lams=(0.5, 2.0), depth=4, samples=5000, seed=5))
    assert [r["lambda"] for r in out["rows"]] == [0.5, 2.0]
    assert out["monotone_within_3sigma"]
    with pytest.raises(ValueError):
        run_tree_recon_scan(ReconConfig(lams=()))


def test_recon_scan_threads_match():
    cfg = dict(lams=(1.0, 2.0, 3.0), depth=3, samples=2000, seed=6)
    a = run_tree_recon_scan(ReconConfig(**cfg, threads=1))
    b = run_tree_recon_scan(ReconConfig(**cfg, threads=3))
    assert [r["xbar"] for r in a["rows"]] == [r["xbar"] for r in b["rows"]]


def test_cli_params_json(capsys):
    assert main(["params", "--d", "3", "--alpha", "0.2"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["params"]["lambda"] == pytest.approx(16 / 27)


def test_cli_csv_and_out(tmp_path):
    path = tmp_path / "t.csv"
    assert main(["--format", "csv", "--out", str(path), "thresholds", "--d", "50"]) == 0
    head = path.read_text().splitlines()[0]
    assert "alpha_c" in head


def test_cli_exit_codes(capsys):
    assert main(["params", "--d", "3"]) == 2
    assert main(["params", "--d", "3", "--alpha", "0.7"]) == 2
    with pytest.raises(SystemExit) as e:
        main(["nosuch"])
    assert e.value.code == 2
    # a broadcast tree beyond the node budget is a resource error
    assert main(["tree-recon", "--d", "40", "--depth", "6", "--samples", "10"]) == 3


def test_cli_depth3(capsys):
    assert main(["depth3", "--d", "16"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["passes"] is True


def test_cli_moments(capsys):
    assert main(["moments", "--d", "3", "--alpha", "0.25", "--n", "4"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["first_moment_log"] == pytest.approx(np.log(32 / 11))


def test_render_rows():
    txt = render({"rows": [{"a": 1, "b": 2}, {"a": 3, "b": 4}]}, "csv")
    assert txt.splitlines() == ["a,b", "1,2", "3,4"]
