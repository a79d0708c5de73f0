"""Evaluation of inspection runs and classifiers.

Component-level confusion matrices and rates, threshold sweeps, the
five-point rubric used to score inspection runs and descriptive
statistics of those scores.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

from trackscan.components import (
    NUM_CASES,
    NUM_TRIALS,
    ComponentId,
    DefectSet,
    component_inventory,
)
from trackscan.inspection import (
    InspectionReport,
    PipelineConfig,
    StepStatus,
    Verdict,
    detect_labels,
    preprocess,
    register,
)
from trackscan.scene import TrackGeometry

logger = logging.getLogger(__name__)

LIKERT_MAX = 5
LIKERT_MIN = -1
HISTOGRAM_BINS = (1, 2, 3, 4, 5)
LIKERT_COLUMNS = [
    "case",
    "trial",
    "score",
    "textual",
    "steps",
    "detection",
    "graphical",
    "concur",
    "penalty",
    "recall",
    "spurious",
]


class UndefinedRateError(ArithmeticError):
    """Rate has a zero denominator."""


class MetricsError(ValueError):
    """Invalid input for a metric."""


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fn: int = 0
    fp: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fn, self.fp, self.tn) < 0:
            raise MetricsError(f"Negative count in {self}")

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return ConfusionMatrix(
            self.tp + other.tp, self.fn + other.fn, self.fp + other.fp, self.tn + other.tn
        )

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn

    @property
    def accuracy(self) -> float:
        if self.total == 0:
            raise UndefinedRateError("Accuracy of an empty confusion matrix")
        return (self.tp + self.tn) / self.total

    @classmethod
    def from_predictions(cls, actual: np.ndarray, predicted: np.ndarray) -> "ConfusionMatrix":
        """Count boolean predictions, True being the positive class."""
        actual = np.asarray(actual, dtype=bool)
        predicted = np.asarray(predicted, dtype=bool)
        return cls(
            tp=int(np.sum(actual & predicted)),
            fn=int(np.sum(actual & ~predicted)),
            fp=int(np.sum(~actual & predicted)),
            tn=int(np.sum(~actual & ~predicted)),
        )


def tpr(cm: ConfusionMatrix) -> float:
    """True positive rate TP / (TP + FN)."""
    if cm.tp + cm.fn == 0:
        raise UndefinedRateError("True positive rate with no positives")
    return cm.tp / (cm.tp + cm.fn)


def fpr(cm: ConfusionMatrix) -> float:
    """False positive rate FP / (FP + TN)."""
    if cm.fp + cm.tn == 0:
        raise UndefinedRateError("False positive rate with no negatives")
    return cm.fp / (cm.fp + cm.tn)


def confusion_from_sets(
    expected: DefectSet,
    reported: DefectSet,
    universe: Iterable[ComponentId] | None = None,
) -> ConfusionMatrix:
    """Component-level confusion matrix of a single run.

    Every component of the universe (default: the full 49-component
    inventory) is one sample; missing components are positives.
    """
    universe = frozenset(component_inventory() if universe is None else universe)
    outside = (expected.missing | reported.missing) - universe
    if outside:
        labels = sorted(id.label for id in outside)
        raise MetricsError(f"Components outside the inventory: {labels}")
    tp = len(expected.missing & reported.missing)
    fn = len(expected.missing - reported.missing)
    fp = len(reported.missing - expected.missing)
    return ConfusionMatrix(tp=tp, fn=fn, fp=fp, tn=len(universe) - tp - fn - fp)


@dataclass(frozen=True)
class RocPoint:
    threshold: int
    tpr: float
    fpr: float
    # rates before enforcing monotonicity
    raw_tpr: float
    raw_fpr: float


@dataclass(frozen=True)
class RocCurve:
    points: tuple[RocPoint, ...]

    @property
    def thresholds(self) -> list[int]:
        return [p.threshold for p in self.points]

    def __len__(self) -> int:
        return len(self.points)

    def point(self, threshold: int) -> RocPoint:
        for p in self.points:
            if p.threshold == threshold:
                return p
        raise KeyError(threshold)

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(p.threshold, p.tpr, p.fpr) for p in self.points],
            columns=["threshold", "tpr", "fpr"],
        )


def check_thresholds(thresholds: Sequence[int]) -> None:
    if not thresholds:
        raise MetricsError("No thresholds given")
    if any(not 1 <= t <= 254 for t in thresholds):
        raise MetricsError("Thresholds must be in 1..254")
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise MetricsError("Thresholds must be strictly increasing")


def non_increasing(values: np.ndarray) -> np.ndarray:
    """Smallest non-increasing sequence that is nowhere below the values.

    Each entry becomes the maximum over itself and everything after it, so
    values that already decrease are kept.
    """
    return np.maximum.accumulate(np.asarray(values)[::-1])[::-1]


def roc_sweep(
    pairs: Sequence[tuple[np.ndarray, np.ndarray, DefectSet]],
    geometry: TrackGeometry,
    config: PipelineConfig,
    thresholds: Sequence[int],
    progress: bool = False,
) -> RocCurve:
    """Component-level TPR and FPR of the pipeline for each threshold.

    Each pair is (control image, variable image, expected defects). Images
    are preprocessed and registered once; only the difference threshold
    varies. Both rates are made non-increasing in the threshold with
    `non_increasing`; adjusted points are logged and keep their raw values.
    """
    thresholds = list(thresholds)
    check_thresholds(thresholds)
    prepared = []
    for control, variable, expected in tqdm(pairs, desc="Registering", disable=not progress):
        control = preprocess(control, config)
        variable = preprocess(variable, config)
        offset = register(control, variable, config.registration_window)
        prepared.append((control, variable, offset, expected))

    raw = []
    for threshold in tqdm(thresholds, desc="Sweeping", disable=not progress):
        swept = config.model_copy(update={"diff_threshold": threshold})
        total = ConfusionMatrix()
        for control, variable, offset, expected in prepared:
            labels = detect_labels(control, variable, offset, geometry, swept)
            total += confusion_from_sets(expected, DefectSet.from_labels(labels))
        raw.append((threshold, tpr(total), fpr(total)))

    raw_tprs = np.array([r[1] for r in raw])
    raw_fprs = np.array([r[2] for r in raw])
    tprs = non_increasing(raw_tprs)
    fprs = non_increasing(raw_fprs)
    for (threshold, _, _), t, f, rt, rf in zip(raw, tprs, fprs, raw_tprs, raw_fprs):
        if t != rt or f != rf:
            logger.warning(
                "ROC rates at threshold %d adjusted from (%.4f, %.4f) to (%.4f, %.4f)",
                threshold,
                rt,
                rf,
                t,
                f,
            )
    return RocCurve(
        tuple(
            RocPoint(threshold, float(t), float(f), float(rt), float(rf))
            for (threshold, _, _), t, f, rt, rf in zip(raw, tprs, fprs, raw_tprs, raw_fprs)
        )
    )


@dataclass(frozen=True)
class LikertScore:
    """Rubric score of one inspection run.

    The score is the sum of the credits for a correct verdict, a complete
    step log, the detection credit, complete graphical steps and agreement
    of text and graphics, minus the false positive penalty.
    """

    case: int
    trial: int
    textual: Fraction
    steps: Fraction
    detection: Fraction
    graphical: Fraction
    concur: Fraction
    penalty: Fraction
    recall: float = 1.0
    spurious: int = 0

    @property
    def score(self) -> Fraction:
        return (
            self.textual + self.steps + self.detection + self.graphical + self.concur
            - self.penalty
        )


def detection_credit(recall: float) -> Fraction:
    if recall >= 1:
        return Fraction(1)
    if recall >= 0.5:
        return Fraction(2, 3)
    if recall > 0:
        return Fraction(1, 3)
    return Fraction(0)


def false_positive_penalty(spurious: int) -> Fraction:
    return Fraction(min(spurious, 3), 3)


def likert_score(
    expected: DefectSet,
    reported: DefectSet,
    textual_ok: bool,
    steps_ok: bool,
    graphical_steps_ok: bool,
    concur: bool,
    case: int = 1,
    trial: int = 1,
) -> LikertScore:
    """Score a run on the rubric, from -1 to 5.

    Recall is 1 when nothing was expected; reporting components in that
    case only costs the false positive penalty.
    """
    if expected.missing:
        recall = len(expected.missing & reported.missing) / len(expected.missing)
    else:
        recall = 1.0
    spurious = len(reported.missing - expected.missing)
    return LikertScore(
        case=case,
        trial=trial,
        textual=Fraction(int(textual_ok)),
        steps=Fraction(int(steps_ok)),
        detection=detection_credit(recall),
        graphical=Fraction(int(graphical_steps_ok)),
        concur=Fraction(int(concur)),
        penalty=false_positive_penalty(spurious),
        recall=recall,
        spurious=spurious,
    )


def score_report(
    report: InspectionReport,
    expected: DefectSet,
    case: int,
    trial: int,
    overlay_marked: bool | None = None,
) -> LikertScore:
    """Derive the rubric flags from an inspection report and score it.

    The text and the graphics concur when the overlay carries marks exactly
    if the verdict is NotSafe. Without an overlay, marks are assumed for
    every reported blob. A run that did not reach a verdict scores 0, also
    on a safe track.
    """
    if not report.is_complete:
        zero = Fraction(0)
        return LikertScore(case, trial, zero, zero, zero, zero, zero, zero, recall=0.0)
    expected_verdict = Verdict.SAFE if expected.is_safe else Verdict.NOT_SAFE
    graphical_ok = any(
        s.name == "present_visual" and s.status is StepStatus.OK for s in report.step_log
    )
    if overlay_marked is None:
        overlay_marked = bool(report.blobs)
    return likert_score(
        expected,
        report.defects,
        textual_ok=report.verdict is expected_verdict,
        steps_ok=report.steps_complete(),
        graphical_steps_ok=graphical_ok,
        concur=overlay_marked == (report.verdict is Verdict.NOT_SAFE),
        case=case,
        trial=trial,
    )


def overall_acceptance(
    scores: Sequence[LikertScore],
    cases: Iterable[int] = range(1, NUM_CASES + 1),
    trials: Iterable[int] = range(1, NUM_TRIALS + 1),
) -> float:
    """Mean of the per-case trial means as a percentage of the maximum score.

    Raises:
        MetricsError: if a (case, trial) score is missing or duplicated.
    """
    expected = {(c, t) for c in cases for t in trials}
    seen = [(s.case, s.trial) for s in scores]
    if len(seen) != len(set(seen)):
        raise MetricsError("Duplicate scores in the grid")
    if set(seen) != expected:
        missing = sorted(expected - set(seen))
        raise MetricsError(f"Incomplete score grid, missing {missing[:5]}")
    df = scores_to_dataframe(scores)
    case_means = df.groupby("case")["score"].mean()
    return float(case_means.mean() / LIKERT_MAX * 100)


@dataclass(frozen=True)
class CaseStats:
    count: int
    mean: float
    stddev: float
    variance: float


def stats(scores: Sequence[float]) -> CaseStats:
    """Population mean, standard deviation and variance."""
    values = np.asarray([float(s) for s in scores])
    if len(values) == 0:
        raise MetricsError("No scores")
    stddev = float(values.std())
    return CaseStats(len(values), float(values.mean()), stddev, stddev**2)


def histogram(scores: Sequence[float]) -> dict[int, int]:
    """Frequency per rating bin.

    Bin b holds scores in [b - 0.5, b + 0.5); the lowest bin also holds
    everything below it.
    """
    if len(scores) == 0:
        raise MetricsError("No scores")
    edges = np.array(HISTOGRAM_BINS[1:]) - 0.5
    index = np.digitize([float(s) for s in scores], edges)
    counts = np.bincount(index, minlength=len(HISTOGRAM_BINS))
    return {b: int(c) for b, c in zip(HISTOGRAM_BINS, counts)}


def scores_to_dataframe(scores: Sequence[LikertScore]) -> pd.DataFrame:
    rows = [
        (
            s.case,
            s.trial,
            float(s.score),
            float(s.textual),
            float(s.steps),
            float(s.detection),
            float(s.graphical),
            float(s.concur),
            float(s.penalty),
            s.recall,
            s.spurious,
        )
        for s in sorted(scores, key=lambda s: (s.case, s.trial))
    ]
    return pd.DataFrame(rows, columns=LIKERT_COLUMNS)


def case_statistics(scores: Sequence[LikertScore]) -> pd.DataFrame:
    """Per-case and overall count, mean, stddev and variance of the scores."""
    df = scores_to_dataframe(scores)
    rows = []
    for case, group in df.groupby("case"):
        s = stats(group["score"])
        rows.append((str(case), s.count, s.mean, s.stddev, s.variance))
    s = stats(df["score"])
    rows.append(("overall", s.count, s.mean, s.stddev, s.variance))
    return pd.DataFrame(rows, columns=["case", "count", "mean", "stddev", "variance"])


def write_confusion_csv(rows: Sequence[tuple[str, ConfusionMatrix]], path: Path) -> None:
    df = pd.DataFrame(
        [(run, cm.tp, cm.fn, cm.fp, cm.tn) for run, cm in rows],
        columns=["run", "tp", "fn", "fp", "tn"],
    )
    df.to_csv(path, index=False)


def write_roc_csv(curve: RocCurve, path: Path) -> None:
    curve.to_dataframe().to_csv(path, index=False)


def write_likert_csv(scores: Sequence[LikertScore], path: Path) -> None:
    scores_to_dataframe(scores).to_csv(path, index=False)


def read_likert_csv(path: Path) -> list[LikertScore]:
    df = pd.read_csv(path)
    missing = set(LIKERT_COLUMNS) - set(df.columns)
    if missing:
        raise MetricsError(f"{path} lacks columns {sorted(missing)}")

    def thirds(value: float) -> Fraction:
        return Fraction(value).limit_denominator(3)

    return [
        LikertScore(
            case=int(row.case),
            trial=int(row.trial),
            textual=thirds(row.textual),
            steps=thirds(row.steps),
            detection=thirds(row.detection),
            graphical=thirds(row.graphical),
            concur=thirds(row.concur),
            penalty=thirds(row.penalty),
            recall=float(row.recall),
            spurious=int(row.spurious),
        )
        for row in df.itertuples(index=False)
    ]


def write_stats_csv(scores: Sequence[LikertScore], path: Path) -> None:
    case_statistics(scores).to_csv(path, index=False)


def write_histogram_csv(scores: Sequence[LikertScore], path: Path) -> None:
    counts = histogram([s.score for s in scores])
    df = pd.DataFrame(list(counts.items()), columns=["rating", "frequency"])
    df.to_csv(path, index=False)
