import json
import subprocess
import sys

import numpy as np
import pytest

from sammd.cli import main
from sammd.dataio import read_samf, write_samf
from sammd.toymodels import gen_synthetic


@pytest.fixture()
def data_files(tmp_path):
    x, labels = gen_synthetic("blobs", {"centers": [[0, 0], [3, 3]], "std": 0.5}, 60, seed=0)
    y, _ = gen_synthetic("blobs", {"centers": [[0, 0], [3, 3]], "std": 0.5}, 60, seed=1)
    xp, yp = tmp_path / "x.samf", tmp_path / "y.samf"
    write_samf(xp, x)
    write_samf(yp, y)
    lp = tmp_path / "labels.csv"
    lp.write_text("\n".join(str(int(v)) for v in labels) + "\n")
    return xp, yp, lp


def run_cli(args, capsys):
    code = main(args)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


FAST = ["--n-perm", "50", "--iters", "10", "--minibatch", "10"]


class TestTestCommand:
    def test_same_file_mmd_g_accepts(self, data_files, capsys):
        xp, _, _ = data_files
        code, out, _ = run_cli(
            ["test", "--x", str(xp), "--y", str(xp), "--method", "mmd-g", "--seed", "1"],
            capsys,
        )
        assert code == 0
        report = json.loads(out)
        assert report["p_value"] == 1.0
        assert report["reject"] is False
        assert report["method"] == "mmd-g"

    def test_missing_required_flag_is_usage_error(self, data_files, capsys):
        xp, _, _ = data_files
        code, _, err = run_cli(["test", "--x", str(xp)], capsys)
        assert code == 2

    def test_missing_file_is_data_error(self, tmp_path, capsys):
        code, _, err = run_cli(
            ["test", "--x", str(tmp_path / "none.samf"), "--y", str(tmp_path / "none.samf")],
            capsys,
        )
        assert code == 3
        assert "data error" in err

    def test_malformed_file_is_data_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.samf"
        bad.write_bytes(b"JUNKJUNKJUNK")
        code, _, err = run_cli(["test", "--x", str(bad), "--y", str(bad)], capsys)
        assert code == 3

    def test_bad_features_spec_is_usage_error(self, data_files, capsys):
        xp, yp, _ = data_files
        code, _, _ = run_cli(
            ["test", "--x", str(xp), "--y", str(yp), "--features", "magic"], capsys
        )
        assert code == 2

    def test_features_only_for_sammd(self, data_files, capsys):
        xp, yp, _ = data_files
        code, _, _ = run_cli(
            ["test", "--x", str(xp), "--y", str(yp), "--method", "mmd-g",
             "--features", "toy-mlp:nope.npz"],
            capsys,
        )
        assert code == 2

    def test_sammd_with_raw_features(self, data_files, capsys):
        xp, yp, _ = data_files
        code, out, _ = run_cli(
            ["test", "--x", str(xp), "--y", str(yp), "--method", "sammd", "--seed", "3"]
            + FAST,
            capsys,
        )
        assert code == 0
        report = json.loads(out)
        assert set(report["null_quantiles"]) == {"min", "q05", "q25", "q50", "q75", "q95", "max"}
        assert report["parameters"]["features"] == "raw"

    def test_byte_identical_reports(self, data_files, capsys):
        xp, yp, _ = data_files
        args = ["test", "--x", str(xp), "--y", str(yp), "--method", "mmd-o-wb",
                "--seed", "7"] + FAST
        _, out1, _ = run_cli(args, capsys)
        _, out2, _ = run_cli(args, capsys)
        assert out1 == out2

    def test_precomputed_feature_files(self, data_files, tmp_path, capsys):
        xp, yp, _ = data_files
        x, y = read_samf(xp), read_samf(yp)
        fx, fy = tmp_path / "fx.samf", tmp_path / "fy.samf"
        write_samf(fx, np.tanh(x))
        write_samf(fy, np.tanh(y))
        code, out, _ = run_cli(
            ["test", "--x", str(xp), "--y", str(yp), "--method", "sammd",
             "--features", f"file:{fx},{fy}", "--seed", "2"] + FAST,
            capsys,
        )
        assert code == 0
        assert json.loads(out)["parameters"]["features"].startswith("file:")


class TestAttackAndGen:
    def test_gen_writes_valid_samf(self, tmp_path, capsys):
        out_path = tmp_path / "g.samf"
        labels_path = tmp_path / "g-labels.csv"
        code, out, _ = run_cli(
            ["gen", "--kind", "blobs", "--n", "40", "--dim", "2", "--seed", "5",
             "--out", str(out_path), "--labels-out", str(labels_path)],
            capsys,
        )
        assert code == 0
        data = read_samf(out_path)
        assert data.shape == (40, 2)
        assert len(labels_path.read_text().strip().splitlines()) == 40

    def test_gen_dependent(self, tmp_path, capsys):
        out_path = tmp_path / "dep.samf"
        code, out, _ = run_cli(
            ["gen", "--kind", "dependent", "--n", "30", "--dim", "3", "--l", "2.0",
             "--seed", "1", "--out", str(out_path)],
            capsys,
        )
        assert code == 0
        assert read_samf(out_path).shape == (30, 3)

    def test_attack_respects_ball_and_saves_model(self, data_files, tmp_path, capsys):
        xp, _, lp = data_files
        adv_path = tmp_path / "adv.samf"
        model_path = tmp_path / "model.npz"
        code, out, _ = run_cli(
            ["attack", "--x", str(xp), "--labels", str(lp), "--attack", "pgd",
             "--epsilon", "0.2", "--epochs", "10", "--seed", "0",
             "--out", str(adv_path), "--save-model", str(model_path)],
            capsys,
        )
        assert code == 0
        x = read_samf(xp)
        adv = read_samf(adv_path)
        # float32 storage costs at most one half-ulp on each side
        assert np.abs(adv - x).max() <= 0.2 * (1 + 1e-6)
        assert model_path.exists()
        report = json.loads(out)
        assert report["rows"] == 60

        code, out, _ = run_cli(
            ["test", "--x", str(xp), "--y", str(adv_path), "--method", "sammd",
             "--features", f"toy-mlp:{model_path}", "--seed", "1"] + FAST,
            capsys,
        )
        assert code == 0

    def test_attack_without_labels_or_model_is_usage_error(self, data_files, capsys):
        xp, _, _ = data_files
        code, _, _ = run_cli(
            ["attack", "--x", str(xp), "--epsilon", "0.1", "--out", "o.samf"], capsys
        )
        assert code == 2


class TestExperimentCommands:
    def test_calibrate_report_and_csv(self, tmp_path, capsys):
        csv_path = tmp_path / "rows.csv"
        code, out, _ = run_cli(
            ["calibrate", "--generator", "gaussian", "--methods", "mmd-g",
             "--n", "24", "--trials", "4", "--seed", "0", "--n-perm", "20",
             "--csv", str(csv_path)],
            capsys,
        )
        assert code == 0
        report = json.loads(out)
        assert len(report["rows"]) == 1
        assert report["rows"][0]["trials"] == 4
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0] == "method,condition,axis_value,rejection_rate,std_error"
        assert len(lines) == 2

    def test_power_csv_rows(self, tmp_path, capsys):
        csv_path = tmp_path / "curve.csv"
        code, out, _ = run_cli(
            ["power", "--axis", "epsilon", "--values", "0.05,0.1,0.2",
             "--method", "mmd-g", "--n", "24", "--trials", "2", "--seed", "1",
             "--n-perm", "20", "--csv", str(csv_path)],
            capsys,
        )
        assert code == 0
        report = json.loads(out)
        assert [r["axis_value"] for r in report["rows"]] == [0.05, 0.1, 0.2]
        assert len(csv_path.read_text().strip().splitlines()) == 4

    def test_noniid_rows(self, capsys):
        code, out, _ = run_cli(
            ["noniid", "--flavor", "b", "--methods", "mmd-g", "--n", "24",
             "--trials", "2", "--seed", "0", "--n-perm", "20"] ,
            capsys,
        )
        assert code == 0
        report = json.loads(out)
        assert len(report["rows"]) == 2

    def test_hsic_score(self, tmp_path, capsys):
        data, _ = gen_synthetic("gaussian", {"dim": 2}, 60, seed=3)
        path = tmp_path / "d.samf"
        write_samf(path, data)
        code, out, _ = run_cli(
            ["hsic", "--data", str(path), "--subset-size", "10", "--repeats", "5",
             "--seed", "2"],
            capsys,
        )
        assert code == 0
        report = json.loads(out)
        assert isinstance(report["score"], float)


class TestReportSchema:
    def test_test_report_schema(self, data_files, capsys):
        import jsonschema

        xp, yp, _ = data_files
        _, out, _ = run_cli(
            ["test", "--x", str(xp), "--y", str(yp), "--method", "mmd-g", "--seed", "0"],
            capsys,
        )
        schema = {
            "type": "object",
            "required": [
                "command", "method", "parameters", "seed", "statistic",
                "p_value", "reject", "null_quantiles", "n_x", "n_y", "dim",
            ],
            "properties": {
                "command": {"const": "test"},
                "p_value": {"type": "number", "minimum": 0, "maximum": 1},
                "reject": {"type": "boolean"},
                "statistic": {"type": "number"},
                "null_quantiles": {"type": "object"},
            },
        }
        jsonschema.validate(json.loads(out), schema)


class TestConsoleEntry:
    def test_module_invocation(self, data_files, tmp_path):
        xp, yp, _ = data_files
        result = subprocess.run(
            [sys.executable, "-m", "sammd.cli", "test", "--x", str(xp), "--y", str(yp),
             "--method", "mmd-g", "--seed", "0"],
            capture_output=True,
            text=True,
        )
        assert result.returncode == 0
        assert json.loads(result.stdout)["method"] == "mmd-g"
        assert "elapsed_s=" in result.stderr
