from fractions import Fraction

import numpy as np
import pytest

from trackscan.components import DefectSet, get_test_case, parse_component_label
from trackscan.inspection import PipelineConfig, inspect
from trackscan.metrics import (
    LIKERT_COLUMNS,
    ConfusionMatrix,
    LikertScore,
    MetricsError,
    UndefinedRateError,
    case_statistics,
    check_thresholds,
    confusion_from_sets,
    detection_credit,
    false_positive_penalty,
    fpr,
    histogram,
    likert_score,
    non_increasing,
    overall_acceptance,
    read_likert_csv,
    roc_sweep,
    score_report,
    stats,
    tpr,
    write_likert_csv,
)
from trackscan.scene import SceneConfig, render_track, standard_geometry


def defects(*labels: str) -> DefectSet:
    return DefectSet.from_labels(labels)


def uniform_score(value: Fraction, case: int, trial: int) -> LikertScore:
    zero = Fraction(0)
    return LikertScore(case, trial, value, zero, zero, zero, zero, zero)


def grid(value: Fraction) -> list[LikertScore]:
    return [uniform_score(value, c, t) for c in range(1, 16) for t in range(1, 6)]


class TestRates:
    def test_true_positive_rate(self):
        assert tpr(ConfusionMatrix(tp=171, fn=2)) == pytest.approx(0.98843, abs=1e-5)

    def test_false_positive_rate(self):
        assert fpr(ConfusionMatrix(fp=23, tn=269)) == pytest.approx(0.07877, abs=1e-5)

    def test_undefined(self):
        with pytest.raises(UndefinedRateError):
            tpr(ConfusionMatrix(fp=1, tn=1))
        with pytest.raises(UndefinedRateError):
            fpr(ConfusionMatrix(tp=1, fn=1))
        with pytest.raises(UndefinedRateError):
            _ = ConfusionMatrix().accuracy

    def test_sum_then_rate(self):
        a = ConfusionMatrix(tp=3, fn=1, fp=2, tn=10)
        b = ConfusionMatrix(tp=1, fn=1, fp=0, tn=5)
        assert tpr(a + b) == pytest.approx(4 / 6)
        assert (a + b).total == 23

    def test_negative_counts(self):
        with pytest.raises(MetricsError):
            ConfusionMatrix(tp=-1)

    def test_from_predictions(self):
        cm = ConfusionMatrix.from_predictions([1, 1, 0, 0, 1], [1, 0, 1, 0, 1])
        assert cm == ConfusionMatrix(tp=2, fn=1, fp=1, tn=1)
        assert cm.accuracy == pytest.approx(0.6)


class TestConfusionFromSets:
    @pytest.mark.parametrize(
        "expected, reported, counts",
        [
            (["1-7S"], ["1-7S"], (1, 0, 0, 48)),
            (["1-7S"], [], (0, 1, 0, 48)),
            (["1B", "2B"], ["1B", "3B"], (1, 1, 1, 46)),
            ([], [], (0, 0, 0, 49)),
        ],
    )
    def test_examples(self, expected, reported, counts):
        cm = confusion_from_sets(defects(*expected), defects(*reported))
        assert (cm.tp, cm.fn, cm.fp, cm.tn) == counts

    def test_universe(self):
        universe = [parse_component_label(label) for label in ["1B", "2B", "3B"]]
        cm = confusion_from_sets(defects("1B"), defects("1B"), universe)
        assert cm == ConfusionMatrix(tp=1, tn=2)
        with pytest.raises(MetricsError):
            confusion_from_sets(defects("4B"), defects(), universe)


class TestLikert:
    def test_perfect(self):
        score = likert_score(defects("8B"), defects("8B"), True, True, True, True)
        assert score.score == 5

    def test_one_false_positive(self):
        score = likert_score(defects("8B"), defects("8B", "1B"), True, True, True, True)
        assert score.score == Fraction(14, 3)
        assert score.spurious == 1

    def test_minimum(self):
        score = likert_score(
            defects("8B"), defects("1B", "2B", "3B", "4B"), False, False, False, False
        )
        assert score.score == -1

    @pytest.mark.parametrize(
        "recall, credit",
        [(1.0, Fraction(1)), (0.5, Fraction(2, 3)), (0.2, Fraction(1, 3)), (0.0, Fraction(0))],
    )
    def test_detection_credit(self, recall, credit):
        assert detection_credit(recall) == credit

    def test_penalty_is_capped(self):
        assert false_positive_penalty(0) == 0
        assert false_positive_penalty(5) == 1

    def test_partial_recall(self):
        score = likert_score(defects("8B", "1B"), defects("8B"), True, True, True, True)
        assert score.recall == 0.5
        assert score.score == Fraction(14, 3)

    def test_safe_track_reported_safe(self):
        assert likert_score(defects(), defects(), True, True, True, True).score == 5


class TestScoreReport:
    @pytest.fixture(scope="class")
    def images(self):
        scene = SceneConfig()
        geometry = standard_geometry(scene)
        control = render_track(geometry, get_test_case(1).defects, 1, scene).image
        variable = render_track(geometry, get_test_case(4).defects, 2, scene).image
        return geometry, control, variable

    def test_correct_run_scores_five(self, images):
        geometry, control, variable = images
        report = inspect(control, variable, geometry, PipelineConfig())
        assert score_report(report, get_test_case(4).defects, 4, 1).score == 5

    def test_wrong_verdict(self, images):
        geometry, control, _ = images
        report = inspect(control, control, geometry, PipelineConfig())
        score = score_report(report, get_test_case(4).defects, 4, 1)
        assert score.textual == 0
        assert score.detection == 0
        assert score.score == 3

    def test_incomplete_report(self, images):
        geometry, control, _ = images
        report = inspect(control, control[:, :100], geometry, PipelineConfig())
        assert score_report(report, get_test_case(4).defects, 4, 1).score == 0

    def test_incomplete_report_on_safe_track(self, images):
        geometry, control, _ = images
        report = inspect(control, control[:, :100], geometry, PipelineConfig())
        score = score_report(report, get_test_case(1).defects, 1, 1)
        assert score.detection == 0
        assert score.score == 0

    def test_missing_overlay_marks(self, images):
        geometry, control, variable = images
        report = inspect(control, variable, geometry, PipelineConfig())
        score = score_report(report, get_test_case(4).defects, 4, 1, overlay_marked=False)
        assert score.concur == 0


class TestAcceptance:
    def test_maximum(self):
        assert overall_acceptance(grid(Fraction(5))) == pytest.approx(100.0)

    def test_proportional(self):
        assert overall_acceptance(grid(Fraction(4))) == pytest.approx(80.0)

    def test_reported_average(self):
        value = Fraction(480445, 100000)
        assert overall_acceptance(grid(value)) == pytest.approx(96.089, abs=1e-9)

    def test_mean_of_case_means(self):
        scores = [uniform_score(Fraction(5), 1, 1), uniform_score(Fraction(5), 1, 2)]
        scores += [uniform_score(Fraction(3), 2, 1), uniform_score(Fraction(3), 2, 2)]
        assert overall_acceptance(scores, cases=[1, 2], trials=[1, 2]) == pytest.approx(80.0)

    def test_incomplete_grid(self):
        with pytest.raises(MetricsError, match="missing"):
            overall_acceptance(grid(Fraction(5))[:-1])

    def test_duplicates(self):
        scores = grid(Fraction(5))
        with pytest.raises(MetricsError, match="Duplicate"):
            overall_acceptance(scores + scores[:1])


class TestStatistics:
    def test_constant(self):
        s = stats([3, 3, 3])
        assert s.stddev == 0
        assert s.variance == 0

    def test_population(self):
        s = stats([4, 5, 5, 5, 5])
        assert s.mean == pytest.approx(4.8)
        assert s.stddev == pytest.approx(0.4)
        assert s.variance == pytest.approx(0.16)

    def test_empty(self):
        with pytest.raises(MetricsError):
            stats([])

    def test_histogram(self):
        assert histogram([5, 5, 5, 4]) == {1: 0, 2: 0, 3: 0, 4: 1, 5: 3}

    def test_histogram_bins(self):
        counts = histogram([Fraction(14, 3), 4.4, 1.2, -1, 0.5, 2.5])
        assert counts == {1: 3, 2: 0, 3: 1, 4: 1, 5: 1}
        assert sum(counts.values()) == 6

    def test_case_statistics(self):
        scores = [uniform_score(Fraction(v), 1, t) for t, v in enumerate([4, 5, 5, 5, 5], 1)]
        df = case_statistics(scores)
        assert list(df["case"]) == ["1", "overall"]
        assert df.loc[0, "stddev"] == pytest.approx(0.4)

    def test_likert_csv(self, tmp_path):
        scores = [
            likert_score(defects("8B"), defects("8B", "1B"), True, True, True, True, case=2, trial=3),
            likert_score(defects("8B", "1B"), defects("8B"), True, False, True, True),
        ]
        path = tmp_path / "likert.csv"
        write_likert_csv(scores, path)
        assert path.read_text().splitlines()[0] == ",".join(LIKERT_COLUMNS)
        loaded = read_likert_csv(path)
        assert sorted(loaded, key=lambda s: (s.case, s.trial)) == sorted(
            scores, key=lambda s: (s.case, s.trial)
        )


class TestRoc:
    @pytest.fixture(scope="class")
    def pairs(self):
        scene = SceneConfig()
        geometry = standard_geometry(scene)
        control = render_track(geometry, DefectSet(), 1, scene).image
        result = []
        for case, seed in [(1, 2), (4, 3), (15, 4)]:
            expected = get_test_case(case).defects
            result.append((control, render_track(geometry, expected, seed, scene).image, expected))
        return geometry, result

    def test_monotonic(self, pairs):
        geometry, data = pairs
        curve = roc_sweep(data, geometry, PipelineConfig(), [1, 10, 60, 254])
        assert curve.thresholds == [1, 10, 60, 254]
        tprs = [p.tpr for p in curve.points]
        fprs = [p.fpr for p in curve.points]
        assert tprs == sorted(tprs, reverse=True)
        assert fprs == sorted(fprs, reverse=True)
        assert all(0 <= v <= 1 for v in tprs + fprs)

    def test_extremes(self, pairs):
        geometry, data = pairs
        curve = roc_sweep(data, geometry, PipelineConfig(), [10, 254])
        assert curve.point(10).tpr >= 0.95
        assert curve.point(254).tpr == 0
        assert curve.point(254).fpr == 0
        with pytest.raises(KeyError):
            curve.point(11)

    def test_dataframe(self, pairs):
        geometry, data = pairs
        df = roc_sweep(data, geometry, PipelineConfig(), [10, 20]).to_dataframe()
        assert list(df.columns) == ["threshold", "tpr", "fpr"]
        assert len(df) == 2

    def test_default_threshold_keeps_raw_rate(self, pairs):
        geometry, data = pairs
        curve = roc_sweep(data, geometry, PipelineConfig(), [1, 5, 10, 20, 40, 60])
        assert curve.point(10).tpr == curve.point(10).raw_tpr
        assert curve.point(1).tpr == max(p.raw_tpr for p in curve.points)

    @pytest.mark.parametrize(
        "raw, expected",
        [
            ([1.0, 0.8, 0.5], [1.0, 0.8, 0.5]),
            ([0.9, 1.0, 0.8], [1.0, 1.0, 0.8]),
            ([0.5, 0.5, 0.6, 0.0], [0.6, 0.6, 0.6, 0.0]),
        ],
    )
    def test_non_increasing(self, raw, expected):
        np.testing.assert_array_equal(non_increasing(np.array(raw)), expected)

    @pytest.mark.parametrize("thresholds", [[], [0, 10], [10, 255], [20, 10], [10, 10]])
    def test_invalid_thresholds(self, thresholds):
        with pytest.raises(MetricsError):
            check_thresholds(thresholds)


def test_from_predictions_with_arrays():
    actual = np.array([True, False])
    assert ConfusionMatrix.from_predictions(actual, actual) == ConfusionMatrix(tp=1, tn=1)
