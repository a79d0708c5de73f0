"""Figures of the evaluation results, exported as PNG."""

import logging
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from trackscan.metrics import (  # noqa: E402
    HISTOGRAM_BINS,
    ConfusionMatrix,
    LikertScore,
    RocCurve,
    case_statistics,
    histogram,
    scores_to_dataframe,
)
from trackscan.training import History  # noqa: E402

logger = logging.getLogger(__name__)

DPI = 150


def _save(filename: Path) -> None:
    plt.tight_layout()
    plt.savefig(filename, dpi=DPI)
    plt.close()
    logger.info("Saved figure %s", filename)


def plot_roc(curve: RocCurve, filename: Path, highlight: int | None = 10) -> None:
    df = curve.to_dataframe()
    plt.figure()
    plt.plot(df["fpr"], df["tpr"], "b.-")
    if highlight in curve.thresholds:
        point = curve.point(highlight)
        plt.plot(point.fpr, point.tpr, "ro", label=f"threshold {highlight}")
        plt.legend()
    plt.xlabel("False positive rate")
    plt.ylabel("True positive rate")
    plt.xlim(0, max(0.1, float(df["fpr"].max()) * 1.1))
    plt.ylim(0, 1.05)
    _save(filename)


def plot_likert_histogram(scores: Sequence[LikertScore], filename: Path) -> None:
    counts = histogram([s.score for s in scores])
    labels = ["≤1" if b == HISTOGRAM_BINS[0] else str(b) for b in counts]
    plt.figure()
    plt.bar(labels, list(counts.values()), color="tab:blue")
    plt.xlabel("Rating")
    plt.ylabel("Frequency")
    _save(filename)


def plot_case_stddev(scores: Sequence[LikertScore], filename: Path) -> None:
    df = case_statistics(scores)
    per_case = df[df["case"] != "overall"]
    plt.figure()
    plt.bar(per_case["case"], per_case["stddev"], color="tab:orange")
    plt.xlabel("Test case")
    plt.ylabel("Standard deviation of score")
    _save(filename)


def plot_false_positives(scores: Sequence[LikertScore], filename: Path) -> None:
    df = scores_to_dataframe(scores)
    totals = df.groupby("case")["spurious"].sum()
    plt.figure()
    plt.bar(totals.index.astype(str), totals.values, color="tab:red")
    plt.xlabel("Test case")
    plt.ylabel("False positive components")
    _save(filename)


def plot_history(history: History, filename: Path) -> None:
    df = history.to_dataframe()
    plt.figure(figsize=(8, 4))
    plt.subplot(1, 2, 1)
    plt.plot(df["epoch"], df["train_acc"], "b-", label="training")
    plt.plot(df["epoch"], df["val_acc"], "r-", label="validation")
    plt.xlabel("Epoch")
    plt.ylabel("Accuracy")
    plt.ylim(0, 1.05)
    plt.legend()
    plt.subplot(1, 2, 2)
    plt.plot(df["epoch"], df["train_loss"], "b-", label="training")
    plt.plot(df["epoch"], df["val_loss"], "r-", label="validation")
    plt.xlabel("Epoch")
    plt.ylabel("Loss")
    plt.legend()
    _save(filename)


def plot_confusion_matrix(cm: ConfusionMatrix, filename: Path) -> None:
    # rows: actual defective, safe; columns: predicted defective, safe
    counts = np.array([[cm.tp, cm.fn], [cm.fp, cm.tn]])
    plt.figure()
    plt.imshow(counts, cmap="Blues")
    for (row, col), value in np.ndenumerate(counts):
        color = "white" if value > counts.max() / 2 else "black"
        plt.text(col, row, str(value), ha="center", va="center", color=color)
    plt.xticks([0, 1], ["defective", "safe"])
    plt.yticks([0, 1], ["defective", "safe"])
    plt.xlabel("Predicted")
    plt.ylabel("Actual")
    _save(filename)
