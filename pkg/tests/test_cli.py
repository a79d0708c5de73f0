import pathlib

import pandas as pd
import pytest
from click.testing import CliRunner

from trackscan.cli import EXIT_NOT_SAFE, EXIT_OK, EXIT_USAGE_ERROR, cli
from trackscan.inspection import NOT_SAFE_TEXT, SAFE_TEXT
from trackscan.report_files import VERSION, load_report


@pytest.fixture()
def runner() -> CliRunner:
    return CliRunner()


@pytest.fixture(scope="module")
def experiment(tmp_path_factory) -> pathlib.Path:
    out = tmp_path_factory.mktemp("experiment")
    result = CliRunner().invoke(
        cli,
        ["generate", "--experiment", "--cases", "1,4,15", "--trials", "1,2", "--out", str(out), "--quiet"],
    )
    assert result.exit_code == EXIT_OK, result.output
    return out


@pytest.fixture(scope="module")
def dataset(tmp_path_factory) -> pathlib.Path:
    root = tmp_path_factory.mktemp("dataset")
    config = root / "run.toml"
    config.write_text("[dataset]\ntrain_count = 4\nvalid_count = 2\ntest_count = 2\n")
    out = root / "data"
    result = CliRunner().invoke(
        cli,
        [
            "generate",
            "--dataset",
            "--kinds",
            "block",
            "--image-size",
            "24",
            "--config",
            str(config),
            "--out",
            str(out),
            "--quiet",
        ],
    )
    assert result.exit_code == EXIT_OK, result.output
    return out


def test_version(runner):
    result = runner.invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert VERSION in result.output


class TestGenerate:
    def test_experiment_files(self, experiment):
        assert len(list(experiment.glob("*_F_T*.png"))) == 6
        assert (experiment / "ground_truth.json").is_file()
        assert (experiment / "config.toml").is_file()

    def test_dataset_tree(self, dataset):
        assert len(list((dataset / "train").rglob("*.png"))) == 4
        assert (dataset / "dataset.json").is_file()

    def test_needs_a_target(self, runner, tmp_path):
        result = runner.invoke(cli, ["generate", "--out", str(tmp_path)])
        assert result.exit_code == EXIT_USAGE_ERROR

    def test_unknown_kind(self, runner, tmp_path):
        result = runner.invoke(cli, ["generate", "--dataset", "--kinds", "rail", "--out", str(tmp_path)])
        assert result.exit_code == EXIT_USAGE_ERROR

    def test_empty_cases(self, runner, tmp_path):
        result = runner.invoke(cli, ["generate", "--experiment", "--cases", "", "--out", str(tmp_path)])
        assert result.exit_code == EXIT_USAGE_ERROR


class TestInspect:
    def test_not_safe(self, runner, experiment, tmp_path):
        result = runner.invoke(
            cli,
            [
                "inspect",
                str(experiment / "01_F_T2.png"),
                str(experiment / "15_F_T2.png"),
                "--out",
                str(tmp_path),
                "--quiet",
            ],
        )
        assert result.exit_code == EXIT_NOT_SAFE
        assert "Acquiring Image 1 (Control): 01_F_T2.png" in result.output
        assert NOT_SAFE_TEXT in result.output
        report = load_report(tmp_path / "report.json")
        assert set(report.sorted_labels) == {"1-8S", "2-8S", "1-8W", "2-8W", "8B", "2-1C"}
        assert (tmp_path / "overlay.png").is_file()
        assert len((tmp_path / "report.txt").read_text().splitlines()) == 8

    def test_safe(self, runner, experiment, tmp_path):
        image = str(experiment / "01_F_T1.png")
        result = runner.invoke(cli, ["inspect", image, image, "--out", str(tmp_path), "--quiet"])
        assert result.exit_code == EXIT_OK
        assert SAFE_TEXT in result.output

    def test_threshold_range(self, runner, experiment, tmp_path):
        image = str(experiment / "01_F_T1.png")
        result = runner.invoke(
            cli, ["inspect", image, image, "--threshold", "0", "--out", str(tmp_path)]
        )
        assert result.exit_code == EXIT_USAGE_ERROR

    def test_missing_image(self, runner, tmp_path):
        result = runner.invoke(cli, ["inspect", "missing.png", "missing.png"])
        assert result.exit_code == EXIT_USAGE_ERROR


class TestBatch:
    @pytest.fixture(scope="class")
    def batch(self, experiment, tmp_path_factory) -> pathlib.Path:
        out = tmp_path_factory.mktemp("batch")
        result = CliRunner().invoke(
            cli,
            [
                "inspect-batch",
                "--experiment",
                str(experiment),
                "--cases",
                "1,4,15",
                "--trials",
                "1,2",
                "--out",
                str(out),
                "--quiet",
            ],
        )
        assert result.exit_code == EXIT_OK, result.output
        return out

    def test_outputs(self, batch):
        assert len(list((batch / "reports").glob("*.json"))) == 6
        assert len(list((batch / "overlays").glob("*.png"))) == 6
        for name in ["confusion.csv", "likert.csv", "stats.csv", "histogram.csv"]:
            assert (batch / name).is_file()

    def test_confusion(self, batch):
        df = pd.read_csv(batch / "confusion.csv")
        assert list(df.columns) == ["run", "tp", "fn", "fp", "tn"]
        assert len(df) == 6
        assert (df[["tp", "fn", "fp", "tn"]].sum(axis=1) == 49).all()

    def test_report(self, runner, batch, tmp_path):
        result = runner.invoke(cli, ["report", "--batch", str(batch), "--out", str(tmp_path), "--quiet"])
        assert result.exit_code == EXIT_OK, result.output
        assert "Overall acceptance" in result.output
        for name in ["config.toml", "stats.csv", "histogram.csv", "likert_histogram.png", "case_stddev.png"]:
            assert (tmp_path / name).is_file()

    def test_missing_frames(self, runner, experiment, tmp_path):
        result = runner.invoke(
            cli,
            ["inspect-batch", "--experiment", str(experiment), "--cases", "1,2", "--trials", "1", "--out", str(tmp_path)],
        )
        assert result.exit_code == 1

    def test_shifted_pairing(self, runner, experiment, tmp_path):
        result = runner.invoke(
            cli,
            [
                "inspect-batch",
                "--experiment",
                str(experiment),
                "--pairing",
                "shifted",
                "--cases",
                "4",
                "--trials",
                "1",
                "--out",
                str(tmp_path),
                "--quiet",
            ],
        )
        assert result.exit_code == EXIT_OK, result.output
        report = load_report(tmp_path / "reports" / "04_F_T1.json")
        assert report.control_name == "01_F_T2"


def test_roc(runner, experiment, tmp_path):
    result = runner.invoke(
        cli,
        [
            "roc",
            "--experiment",
            str(experiment),
            "--thresholds",
            "5,10,40",
            "--cases",
            "1,4,15",
            "--trials",
            "1,2",
            "--out",
            str(tmp_path),
            "--quiet",
        ],
    )
    assert result.exit_code == EXIT_OK, result.output
    df = pd.read_csv(tmp_path / "roc.csv")
    assert list(df["threshold"]) == [5, 10, 40]
    assert (tmp_path / "roc.png").is_file()


class TestClassifier:
    @pytest.fixture(scope="class")
    def trained(self, dataset, tmp_path_factory) -> pathlib.Path:
        out = tmp_path_factory.mktemp("model")
        result = CliRunner().invoke(
            cli,
            [
                "train",
                "--data",
                str(dataset),
                "--epochs",
                "2",
                "--steps-per-epoch",
                "1",
                "--validation-steps",
                "1",
                "--batch",
                "2",
                "--no-augment",
                "--seed",
                "7",
                "--out",
                str(out),
                "--quiet",
            ],
        )
        assert result.exit_code == EXIT_OK, result.output
        return out

    def test_train_outputs(self, trained):
        assert (trained / "model.rcnn").is_file()
        assert (trained / "history.png").is_file()
        history = pd.read_csv(trained / "history.csv")
        assert len(history) == 2

    def test_predict(self, runner, trained, dataset):
        image = next((dataset / "test" / "safe").glob("*.png"))
        result = runner.invoke(cli, ["predict", str(trained / "model.rcnn"), str(image), "--quiet"])
        assert result.exit_code == EXIT_OK, result.output
        assert result.output.split()[0] in ("safe", "defective")

    def test_evaluate(self, runner, trained, dataset, tmp_path):
        result = runner.invoke(
            cli,
            ["evaluate", str(trained / "model.rcnn"), "--data", str(dataset / "test"), "--out", str(tmp_path), "--quiet"],
        )
        assert result.exit_code == EXIT_OK, result.output
        df = pd.read_csv(tmp_path / "confusion.csv")
        assert int(df[["tp", "fn", "fp", "tn"]].sum(axis=1).iloc[0]) == 2

    def test_retrain_with_frozen_layers(self, runner, trained, dataset, tmp_path):
        result = runner.invoke(
            cli,
            [
                "train",
                "--data",
                str(dataset),
                "--base",
                str(trained / "model.rcnn"),
                "--freeze",
                "3",
                "--epochs",
                "1",
                "--steps-per-epoch",
                "1",
                "--batch",
                "2",
                "--out",
                str(tmp_path),
                "--quiet",
            ],
        )
        assert result.exit_code == EXIT_OK, result.output
        assert (tmp_path / "model.rcnn").is_file()

    def test_freeze_everything_fails(self, runner, trained, dataset, tmp_path):
        result = runner.invoke(
            cli,
            [
                "train",
                "--data",
                str(dataset),
                "--base",
                str(trained / "model.rcnn"),
                "--freeze",
                "100",
                "--out",
                str(tmp_path),
                "--quiet",
            ],
        )
        assert result.exit_code == 1
