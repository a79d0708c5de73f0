from fractions import Fraction

import pytest

from trackscan import plots
from trackscan.components import DefectSet
from trackscan.metrics import ConfusionMatrix, RocCurve, RocPoint, likert_score
from trackscan.training import EpochRecord, History


@pytest.fixture()
def scores():
    expected = DefectSet.from_labels(["8B"])
    return [
        likert_score(expected, DefectSet.from_labels(reported), True, True, True, True, case, 1)
        for case, reported in [(1, ["8B"]), (2, ["8B", "1B"]), (3, [])]
    ]


def test_roc(tmp_path):
    curve = RocCurve(
        tuple(
            RocPoint(t, tpr, fpr, tpr, fpr)
            for t, tpr, fpr in [(5, 1.0, 0.2), (10, 0.98, 0.08), (20, 0.7, 0.01)]
        )
    )
    path = tmp_path / "roc.png"
    plots.plot_roc(curve, path)
    assert path.stat().st_size > 0


def test_history(tmp_path):
    history = History([EpochRecord(e, 1 / e, 0.5 + e / 10, 1.2 / e, 0.5) for e in range(1, 4)])
    path = tmp_path / "history.png"
    plots.plot_history(history, path)
    assert path.is_file()


def test_confusion_matrix(tmp_path):
    path = tmp_path / "confusion.png"
    plots.plot_confusion_matrix(ConfusionMatrix(tp=90, fn=10, fp=5, tn=95), path)
    assert path.is_file()


class TestScoreFigures:
    def test_histogram(self, tmp_path, scores):
        assert scores[1].score == Fraction(14, 3)
        path = tmp_path / "histogram.png"
        plots.plot_likert_histogram(scores, path)
        assert path.is_file()

    def test_stddev(self, tmp_path, scores):
        path = tmp_path / "stddev.png"
        plots.plot_case_stddev(scores, path)
        assert path.is_file()

    def test_false_positives(self, tmp_path, scores):
        path = tmp_path / "false_positives.png"
        plots.plot_false_positives(scores, path)
        assert path.is_file()
