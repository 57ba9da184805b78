import csv
import json
import math
import shutil
import subprocess
import sys

import numpy as np
import pytest

from rmpwsens.cli import main, write_dataset
from rmpwsens.numerics import RngStream
from rmpwsens.simulation import generate, scenario_registry


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def scen1_csv(tmp_path_factory):
    d = tmp_path_factory.mktemp("scen1")
    sim = generate(scenario_registry("1"), RngStream(7), n=2000)
    path = d / "data.csv"
    write_dataset(path, sim.data)
    return path


def write_config(path, **doc):
    base = {"columns": {"covariates": ["x"]}, "bootstrap": 0, "within_se": "linearized"}
    base.update(doc)
    path.write_text(json.dumps(base), encoding="utf-8")
    return path


class TestBounds:
    def test_explicit(self, capsys):
        code, out, _ = run(["bounds", "--rho1c", -0.35, "--rho0c", -0.18], capsys)
        assert code == 0
        lo, hi = json.loads(out)["intersection"]
        assert abs(lo + 0.858449) <= 1e-6 and abs(hi - 0.984449) <= 1e-6

    def test_uninformative(self, capsys):
        code, out, _ = run(["bounds", "--rho1c", 0, "--rho0c", 0], capsys)
        assert code == 0 and json.loads(out)["intersection"] == [-1.0, 1.0]

    def test_several_pairs(self, capsys):
        code, out, _ = run(["bounds", "--rho1c", 0, "--rho0c", 0,
                            "--rho1c", -0.35, "--rho0c", -0.18], capsys)
        doc = json.loads(out)
        assert code == 0 and len(doc["per_auxiliary"]) == 2
        assert doc["intersection"] == doc["per_auxiliary"][1]["interval"]

    def test_infeasible(self, capsys):
        code, _, err = run(["bounds", "--rho1c", 0.99, "--rho0c", 0.99,
                            "--rho1c", -0.99, "--rho0c", 0.99], capsys)
        assert code == 2 and "do not intersect" in err

    def test_from_data(self, tmp_path, capsys):
        sim = generate(scenario_registry("7b"), RngStream(2), n=4000)
        path = tmp_path / "d.csv"
        write_dataset(path, sim.data)
        cfg = write_config(tmp_path / "c.json")
        code, out, _ = run(["bounds", "--input", path, "--config", cfg, "--aux", "l"], capsys)
        assert code == 0
        doc = json.loads(out)
        aux = doc["per_auxiliary"][0]
        # corr(Z(t), L | X) = loading * sd(L) / sd(r_t)
        assert abs(aux["rho_1c"] - 1.0 / math.sqrt(1.4)) <= 0.03
        assert abs(aux["rho_0c"] - 0.5 / math.sqrt(0.45)) <= 0.03
        assert doc["intersection"] == aux["interval"]

    def test_auxiliary_equal_to_z(self, tmp_path, capsys):
        sim = generate(scenario_registry("1"), RngStream(3), n=500)
        path = tmp_path / "d.csv"
        write_dataset(path, sim.data, {"c": sim.data.z})
        cfg = write_config(tmp_path / "c.json")
        code, _, err = run(["bounds", "--input", path, "--config", cfg, "--aux", "c"], capsys)
        assert code == 3 and "exact linear function of z" in err

    def test_binary_auxiliaries(self, tmp_path, capsys):
        sim = generate(scenario_registry("11"), RngStream(4), n=4000)
        rng = np.random.default_rng(0)
        noisy = np.where(rng.random(4000) < 0.8, sim.data.z, 1 - sim.data.z)
        path = tmp_path / "d.csv"
        write_dataset(path, sim.data, {"c": noisy, "w": rng.normal(size=4000)})
        cfg = write_config(tmp_path / "c.json", z_kind="binary")
        code, out, _ = run(["bounds", "--input", path, "--config", cfg, "--aux", "c"], capsys)
        assert code == 0 and json.loads(out)["per_auxiliary"][0]["rho_1c"] > 0.5
        code, _, err = run(["bounds", "--input", path, "--config", cfg, "--aux", "w"], capsys)
        assert code == 2 and "must be binary" in err


class TestAnalyze:
    def test_scenario_one(self, scen1_csv, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.json", rho=[0.5])
        out = tmp_path / "out"
        code, _, _ = run(["analyze", "--input", scen1_csv, "--config", cfg, "--out", out], capsys)
        assert code == 0
        rows = read_rows(out / "sensitivity.csv")
        assert len(rows) == 1 and rows[0]["method"] == "integration"
        assert abs(float(rows[0]["nie"]) - 0.352) <= 0.15
        initial = json.loads((out / "initial.json").read_text())
        assert initial["method"] == "naive"
        summary = json.loads((out / "summary.json").read_text())
        assert summary["errors"] == {} and summary["rho_grid"] == [0.5]
        verdict = summary["methods"]["integration"]["nie"]
        assert set(verdict) == {"bounds", "initial_inside_bounds", "initial_ci_excludes_zero",
                                "conclusion_flips"}

    def test_both_methods(self, scen1_csv, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.json", method="both", k_imputations=5,
                           rho={"range": [-0.5, 0.5], "n_grid": 3})
        out = tmp_path / "out"
        code, _, _ = run(["analyze", "--input", scen1_csv, "--config", cfg, "--out", out], capsys)
        assert code == 0
        rows = read_rows(out / "sensitivity.csv")
        by = {}
        for r in rows:
            by.setdefault(r["method"], []).append(float(r["rho"]))
        assert by == {"imputation": [-0.5, 0.0, 0.5], "integration": [-0.5, 0.0, 0.5]}
        keys = [(r["method"], float(r["rho"])) for r in rows]
        assert keys == sorted(keys)
        for r in rows:
            assert float(r["nie"]) + float(r["nde"]) == pytest.approx(
                float(rows[0]["nie"]) + float(rows[0]["nde"]), abs=1e-12)

    def test_bootstrap_intervals(self, scen1_csv, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.json", rho=[0.0, 0.5], bootstrap=50, seed=3)
        out = tmp_path / "out"
        code, _, _ = run(["analyze", "--input", scen1_csv, "--config", cfg, "--out", out], capsys)
        assert code == 0
        for r in read_rows(out / "sensitivity.csv"):
            se = float(r["nie_se"])
            assert 0.01 < se < 0.2
            half = (float(r["nie_ci_hi"]) - float(r["nie_ci_lo"])) / 2
            assert abs(half - 1.959963984540054 * se) <= 1e-9

    def test_missing_mediator_column(self, tmp_path, capsys):
        path = tmp_path / "d.csv"
        path.write_text("t,y,z,x\n1,0.5,0.1,0.2\n0,0.3,0.2,0.1\n", encoding="utf-8")
        cfg = write_config(tmp_path / "c.json", rho=[0.5])
        code, _, err = run(["analyze", "--input", path, "--config", cfg, "--out", tmp_path / "o"],
                           capsys)
        assert code == 2 and "'m'" in err and "missing column" in err

    def test_every_bad_cell_is_listed(self, tmp_path, capsys):
        path = tmp_path / "d.csv"
        path.write_text("t,m,y,z,x\n1,1,0.5,0.1,0.2\n2,0,abc,0.2,0.1\n0,0.5,0.1,inf,0\n",
                        encoding="utf-8")
        cfg = write_config(tmp_path / "c.json", rho=[0.5])
        code, _, err = run(["analyze", "--input", path, "--config", cfg, "--out", tmp_path / "o"],
                           capsys)
        assert code == 2
        for cell in ("row 2, column 't'", "row 2, column 'y'", "row 3, column 'm'",
                     "row 3, column 'z'"):
            assert cell in err

    def test_warnings(self, scen1_csv, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.json", rho=[0.5],
                           columns={"covariates": ["x"], "z_predictors": []})
        out = tmp_path / "out"
        code, _, err = run(["analyze", "--input", scen1_csv, "--config", cfg, "--out", out], capsys)
        assert code == 0 and "warning:" in err
        summary = json.loads((out / "summary.json").read_text())
        assert any("z predictors" in w for w in summary["warnings"])

    def test_rho_error_exit_code(self, tmp_path, capsys):
        sim = generate(scenario_registry("11"), RngStream(5))
        path = tmp_path / "d.csv"
        write_dataset(path, sim.data)
        cfg = write_config(tmp_path / "c.json", rho=[0.5, 1.0], z_kind="binary")
        out = tmp_path / "out"
        code, _, err = run(["analyze", "--input", path, "--config", cfg, "--out", out], capsys)
        assert code == 3
        summary = json.loads((out / "summary.json").read_text())
        assert list(summary["errors"]["integration"]) == ["1.0"]
        assert len(read_rows(out / "sensitivity.csv")) == 1

    def test_bad_config(self, scen1_csv, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.json", rho=[0.5], frobnicate=1)
        code, _, err = run(["analyze", "--input", scen1_csv, "--config", cfg, "--out", tmp_path],
                           capsys)
        assert code == 2 and "frobnicate" in err


class TestSimulate:
    def test_byte_identical(self, tmp_path, capsys):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            code, _, _ = run(["simulate", "1", "--replications", 1, "--seed", 7, "--out", out,
                              "--rho-grid=-1:1:5"], capsys)
            assert code == 0
            outs.append(((out / "replications.csv").read_bytes(),
                         (out / "summary.json").read_bytes()))
        assert outs[0] == outs[1]

    def test_unknown_scenario(self, tmp_path, capsys):
        code, _, err = run(["simulate", "99", "--replications", 1, "--out", tmp_path], capsys)
        assert code == 2 and "unknown scenario" in err

    def test_true_rho_only(self, tmp_path, capsys):
        code, _, _ = run(["simulate", "11", "--replications", 2, "--true-rho-only", "--out",
                          tmp_path, "--estimators", "naive,integration"], capsys)
        assert code == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["rho_grid"] == [0.5]
        assert set(summary["estimators"]) == {"naive", "integration"}

    def test_invalid_summary_exit_code(self, tmp_path, capsys):
        code, _, err = run(["simulate", "1", "--replications", 10, "--n", 8, "--out", tmp_path,
                            "--estimators", "naive"], capsys)
        assert code == 3 and "flagged invalid" in err

    @pytest.mark.parametrize("sid", ["1", "11"])
    def test_round_trip(self, sid, tmp_path, capsys):
        out = tmp_path / "sim"
        code, _, _ = run(["simulate", sid, "--replications", 2, "--seed", 4, "--out", out,
                          "--rho-grid=-0.5:0.5:3", "--k", 4, "--emit-csv"], capsys)
        assert code == 0
        recorded = read_rows(out / "replications.csv")
        for rep in (0, 1):
            ana = tmp_path / f"ana{rep}"
            code, _, _ = run(["analyze", "--input", out / "data" / f"rep_{rep:05d}.csv",
                              "--config", out / "data" / f"rep_{rep:05d}.json", "--out", ana],
                             capsys)
            assert code == 0
            init = json.loads((ana / "initial.json").read_text())
            naive = [r for r in recorded if r["replication"] == str(rep) and r["estimator"] == "naive"]
            assert abs(init["nie"] - float(naive[0]["nie"])) <= 1e-10
            sens = read_rows(ana / "sensitivity.csv")
            mine = [r for r in recorded if r["replication"] == str(rep)
                    and r["estimator"] in ("integration", "imputation")]
            assert len(sens) == len(mine)
            for r in mine:
                match = [s for s in sens if s["method"] == r["estimator"]
                         and float(s["rho"]) == float(r["rho"])]
                assert abs(float(match[0]["nie"]) - float(r["nie"])) <= 1e-10
                assert abs(float(match[0]["nde"]) - float(r["nde"])) <= 1e-10


def test_console_script(tmp_path):
    exe = shutil.which("rmpwsens")
    cmd = [exe] if exe else [sys.executable, "-m", "rmpwsens.cli"]
    res = subprocess.run(cmd + ["bounds", "--rho1c", "0.2", "--rho0c", "0.1"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert len(json.loads(res.stdout)["intersection"]) == 2
