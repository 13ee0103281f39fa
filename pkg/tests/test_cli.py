import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from megpd.cli import EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED, EXIT_OK, main
from megpd.dataset import Dataset
from megpd.model import MegpdParams, simulate
from megpd.nbe import PriorSpec, load_model

REF_SET1 = "3,1,0.05,10,20,0.25"


def _simulate(tmp_path, n=2000, seed=7, name="sim.csv", params=REF_SET1):
    out = tmp_path / name
    code = main(["simulate", "--params", params, "--n", str(n), "--seed", str(seed), "--out", str(out)])
    return code, out


class TestSimulate:
    def test_writes_csv_and_manifest(self, tmp_path):
        code, out = _simulate(tmp_path)
        assert code == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[0] == "y1,y2" and len(lines) == 2001
        man = json.loads((tmp_path / "sim.csv.manifest.json").read_text())
        assert man["run"]["options"]["seed"] == 7 and man["n"] == 2000

    def test_byte_identical(self, tmp_path):
        _, out = _simulate(tmp_path)
        first = out.read_bytes(), (tmp_path / "sim.csv.manifest.json").read_bytes()
        _simulate(tmp_path)
        assert (out.read_bytes(), (tmp_path / "sim.csv.manifest.json").read_bytes()) == first

    def test_missing_seed(self, tmp_path, capsys):
        assert main(["simulate", "--params", REF_SET1, "--n", "10", "--out", str(tmp_path / "x.csv")]) == EXIT_CONFIG
        assert "--seed" in capsys.readouterr().err

    def test_theta_omega_bound(self, tmp_path, capsys):
        code, _ = _simulate(tmp_path, params="3,1,0.05,10,20,0.6")
        assert code == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "theta_omega" in err and "(0, 0.5)" in err

    def test_wrong_count(self, tmp_path):
        assert _simulate(tmp_path, params="3,1,0.05")[0] == EXIT_CONFIG

    def test_config_file(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"params": [3, 1, 0.05, 10, 20, 0.25], "n": 50, "seed": 7}))
        out = tmp_path / "c.csv"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        assert len(out.read_text().splitlines()) == 51
        # explicit flags win over the file
        assert main(["simulate", "--config", str(cfg), "--n", "20", "--out", str(out)]) == EXIT_OK
        assert len(out.read_text().splitlines()) == 21

    def test_config_unknown_key(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        assert main(["simulate", "--config", str(cfg)]) == EXIT_CONFIG

    def test_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "megpd.cli", "--version"], capture_output=True, text=True)
        assert res.returncode == 0 and res.stdout.startswith("megpd ")


class TestFit:
    def test_hybrid(self, tmp_path):
        # truth strictly inside the prior ranges (theta_U = 20 would sit on the edge)
        _, data = _simulate(tmp_path, n=4000, params="3,1,0.2,4,0.5,0.25")
        out = tmp_path / "fit.json"
        assert main(["fit", "--data", str(data), "--seed", "1", "--out", str(out)]) == EXIT_OK
        doc = json.loads(out.read_text())
        est = MegpdParams.from_dict(doc["estimates"]).as_vector()
        prior = PriorSpec()
        assert np.all(est >= prior.lower) and np.all(est <= prior.upper)
        assert doc["counts"]["n_total"] == 4000

    def test_bootstrap_intervals(self, tmp_path):
        _, data = _simulate(tmp_path, n=1000)
        out = tmp_path / "fit.json"
        code = main(["fit", "--data", str(data), "--seed", "1", "--m", "20000", "--bootstrap", "3",
                     "--out", str(out)])
        assert code == EXIT_OK
        iv = json.loads(out.read_text())["bootstrap"]["intervals"]
        assert set(iv) == {"kappa", "sigma", "xi", "theta_L", "theta_U", "theta_omega"}
        assert all(lo <= hi for lo, hi in iv.values())

    def test_missing_model(self, tmp_path):
        _, data = _simulate(tmp_path, n=300)
        code = main(["fit", "--data", str(data), "--method", "nbe", "--model", str(tmp_path / "none.json"),
                     "--out", str(tmp_path / "f.json")])
        assert code == EXIT_DATA

    def test_fit_failure_names_stage(self, tmp_path, capsys):
        _, data = _simulate(tmp_path, n=400)
        code = main(["fit", "--data", str(data), "--seed", "1", "--out", str(tmp_path / "f.json")])
        assert code == EXIT_DATA
        assert "angular_upper" in capsys.readouterr().err

    def test_missing_data_file(self, tmp_path):
        assert main(["fit", "--data", str(tmp_path / "none.csv"), "--seed", "1"]) == EXIT_DATA


TINY_TRAIN = ["--K", "32", "--max-epochs", "2", "--width", "4", "--summary-dim", "4", "--batch-size", "16"]


class TestTrain:
    def test_members_loadable_and_reproducible(self, tmp_path):
        out = tmp_path / "models"
        assert main(["train", "--seed", "3", "--members", "2", "--out-dir", str(out)] + TINY_TRAIN) == EXIT_OK
        assert sorted(p.name for p in out.iterdir()) == ["manifest.json", "member_0.json", "member_1.json",
                                                          "training_log.csv"]
        first = {p.name: p.read_bytes() for p in out.iterdir()}
        model = load_model(out / "member_0.json")
        assert model.architecture.width == 4
        rows = list(csv.reader(open(out / "training_log.csv")))
        assert rows[0] == ["member", "epoch", "train_risk", "val_risk"] and len(rows) == 5
        main(["train", "--seed", "3", "--members", "2", "--out-dir", str(out)] + TINY_TRAIN)
        assert {p.name: p.read_bytes() for p in out.iterdir()} == first

    def test_member_count(self, tmp_path):
        out = tmp_path / "m"
        assert main(["train", "--seed", "4", "--members", "5", "--out-dir", str(out)] + TINY_TRAIN) == EXIT_OK
        assert len(list(out.glob("member_*.json"))) == 5

    def test_divergence_exit(self, tmp_path):
        out = tmp_path / "m"
        with np.errstate(all="ignore"):
            code = main(["train", "--seed", "5", "--members", "1", "--out-dir", str(out),
                         "--learning-rate", "1e30"] + TINY_TRAIN)
        assert code == EXIT_DIVERGED

    def test_nbe_fit_with_trained_models(self, tmp_path):
        out = tmp_path / "m"
        main(["train", "--seed", "6", "--members", "2", "--out-dir", str(out)] + TINY_TRAIN)
        _, data = _simulate(tmp_path, n=500)
        fit = tmp_path / "fit.json"
        code = main(["fit", "--data", str(data), "--method", "nbe", "--model", str(out / "member_0.json"),
                     "--model", str(out / "member_1.json"), "--aggregate", "median", "--out", str(fit)])
        assert code == EXIT_OK
        doc = json.loads(fit.read_text())
        assert doc["members"] == 2 and doc["aggregate"] == "median"


class TestDiagnose:
    def test_self_fit(self, tmp_path):
        _, data = _simulate(tmp_path, n=1500)
        fit = tmp_path / "fit.json"
        assert main(["fit", "--data", str(data), "--seed", "1", "--out", str(fit)]) == EXIT_OK
        out = tmp_path / "diag"
        assert main(["diagnose", "--data", str(data), "--fit", str(fit), "--seed", "2",
                     "--out-dir", str(out)]) == EXIT_OK
        names = sorted(p.name for p in out.iterdir())
        assert names == ["chi_lower.csv", "chi_upper.csv", "manifest.json", "qq_margin1.csv",
                         "qq_margin2.csv", "qq_sum.csv"]
        qq = np.loadtxt(out / "qq_sum.csv", delimiter=",", skiprows=1)
        assert np.all(np.diff(qq, axis=0) >= 0)
        for tail in ("upper", "lower"):
            t = np.loadtxt(out / f"chi_{tail}.csv", delimiter=",", skiprows=1)
            chi, lo, hi = t[:, 1], t[:, 5], t[:, 6]
            assert np.mean((chi >= lo) & (chi <= hi)) >= 0.9

    def test_from_fit_file(self, tmp_path):
        _, data = _simulate(tmp_path, n=300)
        fit = tmp_path / "fit.json"
        fit.write_text(json.dumps({"estimates": MegpdParams.from_vector([3, 1, 0.05, 10, 20, 0.25]).to_dict()}))
        out = tmp_path / "d"
        assert main(["diagnose", "--data", str(data), "--fit", str(fit), "--seed", "1",
                     "--out-dir", str(out)]) == EXIT_OK

    def test_missing_params(self, tmp_path):
        _, data = _simulate(tmp_path, n=300)
        assert main(["diagnose", "--data", str(data), "--seed", "1"]) == EXIT_CONFIG

    def test_insufficient_data(self, tmp_path):
        _, data = _simulate(tmp_path, n=50)
        assert main(["diagnose", "--data", str(data), "--params", REF_SET1, "--seed", "1",
                     "--out-dir", str(tmp_path / "d")]) == EXIT_DATA

    def test_byte_identical(self, tmp_path):
        _, data = _simulate(tmp_path, n=300)
        out = tmp_path / "d"
        argv = ["diagnose", "--data", str(data), "--params", REF_SET1, "--seed", "1", "--out-dir", str(out)]
        main(argv)
        first = {p.name: p.read_bytes() for p in out.iterdir()}
        main(argv)
        assert {p.name: p.read_bytes() for p in out.iterdir()} == first


class TestIngest:
    def _write(self, path, dates, values):
        path.write_text("date,value_mm\n" + "".join(f"{d},{v}\n" for d, v in zip(dates, values)))

    def test_plain(self, tmp_path, rng):
        dates = np.arange(np.datetime64("1999-01-01"), np.datetime64("2002-01-01"))
        self._write(tmp_path / "a.csv", dates, np.round(rng.gamma(1, 3, dates.size), 1))
        self._write(tmp_path / "b.csv", dates, np.round(rng.gamma(1, 3, dates.size), 1))
        out = tmp_path / "pair.csv"
        code = main(["ingest", "--station-a", str(tmp_path / "a.csv"), "--station-b", str(tmp_path / "b.csv"),
                     "--format", "plain", "--out", str(out)])
        assert code == EXIT_OK
        ds = Dataset.from_csv(out)
        np.testing.assert_allclose(ds.values.std(axis=0, ddof=1), 1.0, atol=1e-12)
        man = json.loads((tmp_path / "pair.csv.manifest.json").read_text())
        assert man["provenance"]["stations"] == ["a", "b"] and len(man["scaling_factors"]) == 2

    def test_bad_years(self, tmp_path):
        (tmp_path / "a.csv").write_text("2000-01-01,1\n")
        code = main(["ingest", "--station-a", str(tmp_path / "a.csv"), "--station-b", str(tmp_path / "a.csv"),
                     "--format", "plain", "--years", "1999", "--out", str(tmp_path / "p.csv")])
        assert code == EXIT_CONFIG

    def test_parse_error(self, tmp_path, capsys):
        (tmp_path / "a.csv").write_text("2000-01-01,x\n")
        code = main(["ingest", "--station-a", str(tmp_path / "a.csv"), "--station-b", str(tmp_path / "a.csv"),
                     "--format", "plain", "--out", str(tmp_path / "p.csv")])
        assert code == EXIT_DATA and "line 1" in capsys.readouterr().err
