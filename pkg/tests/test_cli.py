import csv
import json

import pytest

from screenlab.cli import main


@pytest.fixture(scope="module")
def demo_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "demo.csv"
    rc = main(["gen", "--preset", "linear-case3", "--n", "80",
               "--seed", "3", "--out", str(path)])
    assert rc == 0
    return path


class TestBound:
    def test_prints_both_bounds(self, capsys):
        rc = main(["bound", "--d", "16", "--p", "1000", "--s", "6", "--r", "2"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "exact 0.0291780" in out
        assert "side_condition True" in out


class TestGen:
    def test_header_and_shape(self, demo_csv):
        rows = list(csv.reader(open(demo_csv)))
        assert rows[0][-1] == "y" and rows[0][0] == "x1"
        assert len(rows) == 81 and len(rows[0]) == 1001


class TestScreen:
    def test_ranked_csv(self, demo_csv, capsys):
        rc = main(["screen", "--data", str(demo_csv), "--response", "y",
                   "--loss", "quadratic", "--size", "5"])
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "rank,feature,utility"
        assert len(lines) == 6
        utilities = [float(l.split(",")[2]) for l in lines[1:]]
        assert utilities == sorted(utilities)

    def test_out_file(self, demo_csv, tmp_path):
        out = tmp_path / "rank.csv"
        rc = main(["screen", "--data", str(demo_csv), "--response", "y",
                   "--out", str(out)])
        assert rc == 0 and out.exists()


class TestIsis:
    def test_trace_and_model(self, demo_csv, tmp_path, capsys):
        rc = main(["isis", "--data", str(demo_csv), "--response", "y",
                   "--loss", "quadratic", "--penalty", "scad", "--d", "10",
                   "--n-lambda", "25", "--out", str(tmp_path)])
        assert rc == 0
        trace = [json.loads(line)
                 for line in open(tmp_path / "isis_trace.jsonl")]
        assert "final_model" in trace[-1]
        assert trace[0]["iteration"] == 1
        rows = list(csv.reader(open(tmp_path / "isis_model.csv")))
        assert rows[0] == ["feature", "coefficient"]
        assert rows[1][0] == "(intercept)"


class TestVariants:
    def test_var2_selection_file(self, demo_csv, tmp_path):
        rc = main(["var2", "--data", str(demo_csv), "--response", "y",
                   "--d", "6", "--out", str(tmp_path)])
        assert rc == 0
        rows = list(csv.reader(open(tmp_path / "var2_selection.csv")))
        assert rows[0][:2] == ["feature", "in_intersection"]
        assert sum(int(r[1]) for r in rows[1:]) == 6

    def test_var1_iterated(self, demo_csv, tmp_path):
        rc = main(["var1", "--data", str(demo_csv), "--response", "y",
                   "--d", "8", "--n-lambda", "20", "--iterated",
                   "--out", str(tmp_path)])
        assert rc == 0
        assert (tmp_path / "var1_trace.jsonl").exists()


class TestFit:
    def test_model_csv(self, demo_csv, tmp_path):
        out = tmp_path / "model.csv"
        rc = main(["fit", "--data", str(demo_csv), "--response", "y",
                   "--loss", "quadratic", "--penalty", "scad",
                   "--n-lambda", "20", "--out", str(out)])
        assert rc == 0
        rows = list(csv.reader(open(out)))
        assert rows[0] == ["feature", "coefficient"]

    def test_print_config(self, capsys):
        rc = main(["fit", "--data", "x", "--response", "y", "--print-config"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "tol = 1e-08" in out
        assert "n_lambda = 100" in out

    def test_missing_values_rejected(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,y\n1,2\n,3\n")
        with pytest.raises(ValueError, match="row 3"):
            main(["fit", "--data", str(bad), "--response", "y",
                  "--loss", "quadratic"])


class TestConfigFile:
    def test_file_supplies_defaults_flags_win(self, demo_csv, tmp_path,
                                              capsys):
        cfgfile = tmp_path / "run.cfg"
        cfgfile.write_text("size = 3\n# comment\nloss = quadratic\n")
        rc = main(["screen", "--data", str(demo_csv), "--response", "y",
                   "--config", str(cfgfile)])
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 4   # header + 3 from the config file
        capsys.readouterr()
        rc = main(["screen", "--data", str(demo_csv), "--response", "y",
                   "--config", str(cfgfile), "--size", "5"])
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 6   # explicit flag beats the file

    def test_unknown_key_rejected(self, demo_csv, tmp_path):
        cfgfile = tmp_path / "run.cfg"
        cfgfile.write_text("warp = 9\n")
        with pytest.raises(SystemExit, match="matches no flag"):
            main(["screen", "--data", str(demo_csv), "--response", "y",
                  "--config", str(cfgfile)])


class TestRun:
    def test_small_run_emits_reports(self, tmp_path, capsys):
        rc = main(["run", "--preset", "linear-case3", "--methods", "van-sis",
                   "--reps", "2", "--seed", "1", "--test-multiplier", "2",
                   "--out", str(tmp_path / "exp")])
        assert rc == 0
        assert (tmp_path / "exp" / "replicates.csv").exists()
        assert (tmp_path / "exp" / "summary.csv").exists()
        summary = json.load(open(tmp_path / "exp" / "summary.json"))
        assert summary["failures"] == 0
        assert "van-sis" in summary["summary"]
