import csv
import subprocess
import sys

import numpy as np
import pytest

from merr.cli import main
from merr.harness import RATE_HEADER
from merr.outer_kernel import OUTER_FAMILIES
from merr.storage import load_model, read_manifest
from merr.regressor import predict


def read_rows(path):
    with open(path, newline="") as fh:
        return [r for r in csv.reader(fh) if r and not r[0].startswith("#")]


@pytest.fixture
def dataset(tmp_path):
    assert main(["synth", "--out-dir", str(tmp_path / "train"), "--l", "8", "--N", "6", "--seed", "2"]) == 0
    assert main(["synth", "--out-dir", str(tmp_path / "test"), "--l", "4", "--N", "6", "--seed", "2",
                 "--stream", "test"]) == 0
    return tmp_path


def write_config(tmp_path, **extra):
    cfg = {
        "experiment.l_grid": "4,6,8",
        "experiment.a_values": "threshold,0.5",
        "experiment.n_test": "5",
        "experiment.N_test": "20",
        "concentration.N_grid": "10",
        "concentration.trials": "20",
    }
    cfg.update(extra)
    path = tmp_path / "exp.cfg"
    path.write_text("# sweep\n" + "".join(f"{k}={v}\n" for k, v in cfg.items()))
    return path


class TestKernels:
    def test_lists_families(self, capsys):
        assert main(["kernels"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "family,formula,h"
        rows = {line.split(",")[0]: line.split(",")[-1] for line in lines[1:]}
        assert list(rows) == list(OUTER_FAMILIES)
        assert rows["exponential_K"] == "1/2" and rows["gaussian_K"] == "1"


class TestSynthFitPredict:
    def test_synth_layout(self, dataset):
        data, paths = read_manifest(dataset / "train" / "manifest.csv")
        assert data.size == 8 and all(b.n == 6 for b in data.bags)
        assert len(read_rows(dataset / "train" / "bayes.csv")) == 9

    def test_round_trip(self, dataset, capsys):
        model_path = dataset / "model.txt"
        assert main(["fit", "--manifest", str(dataset / "train" / "manifest.csv"), "--lambda", "0.01",
                     "--outer", "gaussian_K", "--out", str(model_path)]) == 0
        assert "l=8" in capsys.readouterr().out
        out = dataset / "pred.csv"
        assert main(["predict", "--model", str(model_path), "--manifest", str(dataset / "test" / "manifest.csv"),
                     "--out", str(out)]) == 0
        rows = read_rows(out)
        assert rows[0] == ["y_1"] and len(rows) == 5
        test, _ = read_manifest(dataset / "test" / "manifest.csv")
        want = predict(load_model(model_path), test.bags)[:, 0]
        np.testing.assert_allclose([float(r[0]) for r in rows[1:]], want, rtol=1e-12, atol=1e-12)

    def test_predict_to_stdout(self, dataset, capsys):
        model_path = dataset / "m.txt"
        main(["fit", "--manifest", str(dataset / "train" / "manifest.csv"), "--lambda", "0.1", "--out",
              str(model_path), "--bandwidth", "median"])
        capsys.readouterr()
        assert main(["predict", "--model", str(model_path), "--manifest",
                     str(dataset / "test" / "manifest.csv")]) == 0
        assert len(capsys.readouterr().out.splitlines()) == 5

    def test_cv(self, dataset, capsys):
        assert main(["cv", "--manifest", str(dataset / "train" / "manifest.csv"), "--grid", "0.001,0.1",
                     "--folds", "2"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "lambda,mean_risk" and out[-1].startswith("best_lambda=")


class TestExperiments:
    def test_rates(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        out = tmp_path / "rates.csv"
        assert main(["rates", "--config", str(cfg), "--out", str(out), "--seed", "4"]) == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("# merr 0.1.0 config_sha256=")
        assert lines[1] == ",".join(RATE_HEADER)
        assert len(lines) == 2 + 6
        assert (tmp_path / "rates.csv.slopes.csv").exists()
        assert "slope=" in capsys.readouterr().out

    def test_seed_flag_changes_output(self, tmp_path):
        cfg = write_config(tmp_path)
        main(["rates", "--config", str(cfg), "--out", str(tmp_path / "a.csv"), "--seed", "1"])
        main(["rates", "--config", str(cfg), "--out", str(tmp_path / "b.csv"), "--seed", "2"])
        assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "b.csv").read_bytes()

    def test_concentration(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        assert main(["concentration", "--config", str(cfg), "--out", str(tmp_path / "c.csv")]) == 0
        assert read_rows(tmp_path / "c.csv")[0] == ["N", "alpha", "radius", "frequency", "bound"]

    def test_theory(self, capsys):
        assert main(["theory", "--a", "1.2", "--csv"]) == 0
        rows = dict(line.split(",", 1) for line in capsys.readouterr().out.splitlines()[1:])
        assert float(rows["wellspecified_bound"]) == pytest.approx(53210.84005089627, rel=1e-12)
        assert float(rows["misspecified_bound"]) == pytest.approx(176.65780238567168, rel=1e-12)
        assert float(rows["wellspecified.risk_exponent"]) == pytest.approx(-0.8)
        assert rows["condition.lambda_le_T_norm"].startswith("ok")


class TestExitCodes:
    def test_no_command(self):
        assert main([]) == 1

    def test_unknown_subcommand(self):
        assert main(["frobnicate"]) == 1

    def test_missing_required(self):
        assert main(["fit", "--lambda", "0.1"]) == 1

    def test_bad_threads(self):
        assert main(["kernels", "--threads", "0"]) == 1

    def test_missing_manifest(self, tmp_path):
        assert main(["fit", "--manifest", str(tmp_path / "none.csv"), "--lambda", "0.1",
                     "--out", str(tmp_path / "m")]) == 2

    def test_malformed_manifest(self, tmp_path):
        (tmp_path / "m.csv").write_text("wrong,header\n")
        assert main(["fit", "--manifest", str(tmp_path / "m.csv"), "--lambda", "0.1",
                     "--out", str(tmp_path / "m")]) == 2

    def test_invalid_value(self, dataset):
        assert main(["fit", "--manifest", str(dataset / "train" / "manifest.csv"), "--lambda", "-1",
                     "--out", str(dataset / "m")]) == 2

    def test_bad_config(self, tmp_path):
        (tmp_path / "c.cfg").write_text("experiment.l_grid=4\n")
        assert main(["rates", "--config", str(tmp_path / "c.cfg"), "--out", str(tmp_path / "o.csv")]) == 2

    def test_version(self, capsys):
        assert main(["--version"]) == 0

    def test_module_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "merr", "kernels"], capture_output=True, text=True)
        assert res.returncode == 0 and res.stdout.startswith("family,formula,h")
        res = subprocess.run([sys.executable, "-m", "merr", "nope"], capture_output=True, text=True)
        assert res.returncode == 1
