"""Evaluation metrics: confusion counts, precision/recall/F1, MAE, correlation,
multiclass accuracies, and the confidence-to-sentiment linear scaling.

Degenerate cases (no predicted positives, constant correlation inputs) never
abort a run: report assembly records them as flags and substitutes zeros.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Polarity

SENTIMENT_SPAN = 6.0  # width of the sentiment scale [-3, 3]


@dataclass(frozen=True)
class ConfusionMatrix:
    """Binary confusion counts; "positive" is the positive-sentiment class."""

    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class Prf1:
    precision: float
    recall: float
    f1: float
    degenerate: bool = False


def confusion(pred: Sequence[Polarity], truth: Sequence[Polarity]) -> ConfusionMatrix:
    if len(pred) != len(truth):
        raise ValueError(f"length mismatch: {len(pred)} predictions, {len(truth)} truths")
    if not pred:
        raise ValueError("cannot build a confusion matrix from zero samples")
    tp = fp = fn = tn = 0
    for p, t in zip(pred, truth):
        if t is Polarity.POSITIVE:
            if p is Polarity.POSITIVE:
                tp += 1
            else:
                fn += 1
        else:
            if p is Polarity.POSITIVE:
                fp += 1
            else:
                tn += 1
    return ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=tn)


def prf1(cm: ConfusionMatrix) -> Prf1:
    """Precision, recall and F1; undefined quantities become 0 with the degenerate flag."""
    degenerate = False
    if cm.tp + cm.fp > 0:
        precision = cm.tp / (cm.tp + cm.fp)
    else:
        precision, degenerate = 0.0, True
    if cm.tp + cm.fn > 0:
        recall = cm.tp / (cm.tp + cm.fn)
    else:
        recall, degenerate = 0.0, True
    if precision + recall > 0:
        f1 = 2.0 * precision * recall / (precision + recall)
    else:
        f1, degenerate = 0.0, True
    return Prf1(precision=precision, recall=recall, f1=f1, degenerate=degenerate)


def scale_confidence(confidence: float) -> float:
    """Map a confidence in [0, 1] linearly onto the sentiment scale [-3, 3]."""
    if not 0.0 <= confidence <= 1.0:
        raise ValueError(f"confidence {confidence} outside [0, 1]")
    return SENTIMENT_SPAN * confidence - SENTIMENT_SPAN / 2.0


def mae(pred: Sequence[float], truth: Sequence[float]) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ValueError("inputs must be equal-length vectors")
    if pred.size == 0:
        raise ValueError("cannot compute MAE of zero samples")
    return float(np.abs(pred - truth).mean())


def pearson(pred: Sequence[float], truth: Sequence[float]) -> float:
    """Sample correlation coefficient; raises on constant inputs."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ValueError("inputs must be equal-length vectors")
    if pred.size < 2:
        raise ValueError("need at least 2 samples")
    dp = pred - pred.mean()
    dt = truth - truth.mean()
    denom = float(np.sqrt((dp @ dp) * (dt @ dt)))
    if denom == 0.0:
        raise ValueError("correlation undefined for constant input")
    return float(np.clip((dp @ dt) / denom, -1.0, 1.0))


def _bin_sentiment(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(values), -3, 3)


def multiclass_accuracy(
    pred_sentiment: Sequence[float], truth_sentiment: Sequence[float], classes: int
) -> float:
    """Mean per-class recall after binning sentiments into 5 or 7 classes.

    7-class bins round to the nearest integer in {-3..3}. The 5-class variant
    clamps *predictions* into [-2, 2] before rounding while ground truth keeps
    its rounded class, so extreme truths are never recalled by construction.
    Averaging runs over the classes present in the ground truth.
    """
    pred = np.asarray(pred_sentiment, dtype=np.float64)
    truth = np.asarray(truth_sentiment, dtype=np.float64)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ValueError("inputs must be equal-length vectors")
    if pred.size == 0:
        raise ValueError("cannot compute accuracy of zero samples")
    if classes == 7:
        pred_bins = _bin_sentiment(pred)
    elif classes == 5:
        pred_bins = np.rint(np.clip(pred, -2, 2))
    else:
        raise ValueError("classes must be 5 or 7")
    truth_bins = _bin_sentiment(truth)
    recalls = []
    for cls in np.unique(truth_bins):
        members = truth_bins == cls
        recalls.append(float((pred_bins[members] == cls).mean()))
    return float(np.mean(recalls))


def binary_accuracies(pred: Sequence[Polarity], truth: Sequence[Polarity]) -> tuple[float, float]:
    """(plain accuracy, mean per-class recall) over binary labels."""
    if len(pred) != len(truth):
        raise ValueError(f"length mismatch: {len(pred)} predictions, {len(truth)} truths")
    if not pred:
        raise ValueError("cannot compute accuracy of zero samples")
    plain = sum(1 for p, t in zip(pred, truth) if p is t) / len(pred)
    recalls = []
    for cls in (Polarity.POSITIVE, Polarity.NEGATIVE):
        members = [(p, t) for p, t in zip(pred, truth) if t is cls]
        if members:
            recalls.append(sum(1 for p, t in members if p is t) / len(members))
    return plain, float(np.mean(recalls))


@dataclass(frozen=True)
class MetricReport:
    precision: float
    recall: float
    f1: float
    mae: float
    correlation: float
    binary_accuracy: float
    weighted_binary_accuracy: float
    acc5: float
    acc7: float
    confusion: ConfusionMatrix
    degenerate: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "mae": self.mae,
            "correlation": self.correlation,
            "binary_accuracy": self.binary_accuracy,
            "weighted_binary_accuracy": self.weighted_binary_accuracy,
            "acc5": self.acc5,
            "acc7": self.acc7,
            "confusion": {
                "tp": self.confusion.tp,
                "fp": self.confusion.fp,
                "fn": self.confusion.fn,
                "tn": self.confusion.tn,
            },
            "degenerate": list(self.degenerate),
        }


def compute_report(
    pred_labels: Sequence[Polarity],
    truth_labels: Sequence[Polarity],
    pred_sentiment: Sequence[float],
    truth_sentiment: Sequence[float],
) -> MetricReport:
    """Assemble the full report, downgrading degenerate metrics to flagged zeros."""
    cm = confusion(pred_labels, truth_labels)
    scores = prf1(cm)
    flags = []
    if scores.degenerate:
        flags.append("precision_recall_f1")
    try:
        correlation = pearson(pred_sentiment, truth_sentiment)
    except ValueError:
        correlation = 0.0
        flags.append("correlation")
    plain, weighted = binary_accuracies(pred_labels, truth_labels)
    return MetricReport(
        precision=scores.precision,
        recall=scores.recall,
        f1=scores.f1,
        mae=mae(pred_sentiment, truth_sentiment),
        correlation=correlation,
        binary_accuracy=plain,
        weighted_binary_accuracy=weighted,
        acc5=multiclass_accuracy(pred_sentiment, truth_sentiment, 5),
        acc7=multiclass_accuracy(pred_sentiment, truth_sentiment, 7),
        confusion=cm,
        degenerate=tuple(flags),
    )


def format_report(report: MetricReport, title: str = "") -> str:
    """Flat key/value text block plus an actual-major confusion matrix."""
    lines = []
    if title:
        lines.append(f"# {title}")
    for key in (
        "precision",
        "recall",
        "f1",
        "mae",
        "correlation",
        "binary_accuracy",
        "weighted_binary_accuracy",
        "acc5",
        "acc7",
    ):
        lines.append(f"{key} {getattr(report, key):.6f}")
    if report.degenerate:
        lines.append(f"degenerate {','.join(report.degenerate)}")
    cm = report.confusion
    lines.append("# confusion matrix (rows = actual, columns = predicted)")
    lines.append(f"{'':>16}{'pred_positive':>15}{'pred_negative':>15}")
    lines.append(f"{'act_positive':>16}{cm.tp:>15}{cm.fn:>15}")
    lines.append(f"{'act_negative':>16}{cm.fp:>15}{cm.tn:>15}")
    return "\n".join(lines) + "\n"
