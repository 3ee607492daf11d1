"""
Metrics at patch and bag level, and predicted variance grouped by absolute error.

MAE is in grade-index units. Macro-F1 averages over every grade 0..N-1, and a
grade with no true and no predicted samples scores 0. Quartiles use linear
interpolation between order statistics.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from sklearn.metrics import accuracy_score, f1_score, mean_absolute_error

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    macro_f1: float
    mae: float
    num_samples: int
    level: str
    method: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class VarianceByErrorGroup:
    groups: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        rows = [(err, v) for err in sorted(self.groups) for v in self.groups[err]]
        return pd.DataFrame(rows, columns=["abs_error", "variance"])

    def write_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, lineterminator="\n")

    def write_summary(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump({str(k): v for k, v in sorted(self.summary.items())}, f, indent=2)
            f.write("\n")


def _check_pair(y_true, y_pred):
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.ndim != 1 or y_true.shape != y_pred.shape:
        raise InvalidArgumentError(f"y_true and y_pred must be vectors of equal length, got {y_true.shape} and {y_pred.shape}")
    if y_true.size == 0:
        raise InvalidArgumentError("metrics need at least one sample")
    return y_true, y_pred


def accuracy(y_true, y_pred) -> float:
    y_true, y_pred = _check_pair(y_true, y_pred)
    return float(accuracy_score(y_true, y_pred))


def macro_f1(y_true, y_pred, num_grades: int) -> float:
    y_true, y_pred = _check_pair(y_true, y_pred)
    labels = np.arange(num_grades)
    if np.any(~np.isin(y_true, labels)) or np.any(~np.isin(y_pred, labels)):
        raise InvalidArgumentError(f"grades must lie in 0..{num_grades - 1}")
    return float(f1_score(y_true, y_pred, labels=labels, average="macro", zero_division=0))


def mae(y_true, y_pred) -> float:
    y_true, y_pred = _check_pair(y_true, y_pred)
    return float(mean_absolute_error(y_true.astype(np.float64), y_pred.astype(np.float64)))


def compute_metrics(y_true, y_pred, num_grades: int, level: str, method: str = "") -> MetricsReport:
    return MetricsReport(
        accuracy=accuracy(y_true, y_pred),
        macro_f1=macro_f1(y_true, y_pred, num_grades),
        mae=mae(y_true, y_pred),
        num_samples=len(y_true),
        level=level,
        method=method,
    )


def five_number_summary(values) -> dict:
    values = np.asarray(values, dtype=np.float64)
    q = np.quantile(values, [0.0, 0.25, 0.5, 0.75, 1.0], method="linear")
    return {
        "count": int(values.size),
        "min": float(q[0]),
        "q1": float(q[1]),
        "median": float(q[2]),
        "q3": float(q[3]),
        "max": float(q[4]),
        "mean": float(values.mean()),
    }


def variance_by_error(bag_predictions, y_true) -> VarianceByErrorGroup:
    """Group PV variances by |y_true - predicted_grade|."""
    if len(bag_predictions) != len(y_true):
        raise InvalidArgumentError(f"{len(bag_predictions)} predictions but {len(y_true)} labels")
    groups = {}
    for pred, truth in zip(bag_predictions, y_true):
        if pred.method != "PV" or pred.variance is None:
            raise InvalidArgumentError(f"bag {pred.bag_id!r}: variance is only defined for PV predictions")
        groups.setdefault(abs(int(truth) - pred.predicted_grade), []).append(float(pred.variance))
    groups = dict(sorted(groups.items()))
    return VarianceByErrorGroup(groups=groups, summary={k: five_number_summary(v) for k, v in groups.items()})


def summarize_trials(reports) -> dict:
    """Mean and population standard deviation of each metric over repeated trials."""
    if len(reports) == 0:
        raise InvalidArgumentError("no trials to summarize")
    frame = pd.DataFrame([r.to_dict() for r in reports])
    out = {}
    for metric in ("accuracy", "macro_f1", "mae"):
        out[metric] = {"mean": float(frame[metric].mean()), "std": float(frame[metric].std(ddof=0))}
    return out
