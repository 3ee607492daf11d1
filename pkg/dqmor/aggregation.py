"""
Bag-level aggregation of patch posteriors.

Each method is a standalone handler taking the list of patch posteriors and
returning a BagPrediction; AGGREGATION_REGISTRY maps method tags to handlers.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from .errors import InvalidArgumentError
from .qmr import Posterior, argmax_grade, expected_grade, posterior_variance

METHODS = ("MV", "PV")


@dataclass(frozen=True, eq=False)
class BagPrediction:
    bag_id: str
    method: str
    predicted_grade: int
    num_patches: int
    distribution: Optional[Posterior] = None
    expected_grade: Optional[float] = None
    variance: Optional[float] = None


def _check_posteriors(patch_posteriors) -> int:
    if len(patch_posteriors) == 0:
        raise InvalidArgumentError("a bag needs at least one patch posterior")
    sizes = {p.num_grades for p in patch_posteriors}
    if len(sizes) != 1:
        raise InvalidArgumentError(f"patch posteriors disagree on the number of grades: {sorted(sizes)}")
    return sizes.pop()


def probability_vote(patch_posteriors) -> Posterior:
    """Elementwise mean of the patch distributions."""
    _check_posteriors(patch_posteriors)
    stacked = np.stack([p.probs for p in patch_posteriors])
    return Posterior(stacked.sum(axis=0) / stacked.shape[0])


def majority_vote(patch_grades, num_grades: int) -> int:
    """Modal grade; ties go to the higher grade."""
    grades = np.asarray(patch_grades, dtype=np.int64)
    if grades.size == 0:
        raise InvalidArgumentError("majority vote needs at least one grade")
    if np.any(grades < 0) or np.any(grades >= num_grades):
        raise InvalidArgumentError(f"grades must lie in 0..{num_grades - 1}")
    counts = np.bincount(grades, minlength=num_grades)
    return int(num_grades - 1 - np.argmax(counts[::-1]))


def _aggregate_pv(bag_id, patch_posteriors):
    dist = probability_vote(patch_posteriors)
    return BagPrediction(
        bag_id=bag_id,
        method="PV",
        predicted_grade=argmax_grade(dist),
        num_patches=len(patch_posteriors),
        distribution=dist,
        expected_grade=expected_grade(dist),
        variance=posterior_variance(dist),
    )


def _aggregate_mv(bag_id, patch_posteriors):
    num_grades = _check_posteriors(patch_posteriors)
    grades = [argmax_grade(p) for p in patch_posteriors]
    return BagPrediction(
        bag_id=bag_id,
        method="MV",
        predicted_grade=majority_vote(grades, num_grades),
        num_patches=len(patch_posteriors),
    )


# =============================================================================
# AGGREGATION REGISTRY
# =============================================================================

AGGREGATION_REGISTRY = {
    "MV": _aggregate_mv,
    "PV": _aggregate_pv,
}


def predict_bag(patch_posteriors, method: str, bag_id: str = "") -> BagPrediction:
    handler = AGGREGATION_REGISTRY.get(method)
    if handler is None:
        raise InvalidArgumentError(f"unknown aggregation method '{method}' (expected MV or PV)")
    return handler(bag_id, list(patch_posteriors))


def predict_bags(dataset, patch_probs: np.ndarray, method: str) -> list:
    """One BagPrediction per bag of `dataset`, from its (M, N) patch posteriors."""
    return [
        predict_bag([Posterior(patch_probs[i]) for i in idx], method, bag_id=bag)
        for bag, idx in dataset.bags().items()
    ]


def bag_predictions_frame(predictions, num_grades: int) -> pd.DataFrame:
    """
    Columns bag_id,method,predicted_grade,expected_grade,variance,num_patches,p0..p{N-1};
    MV rows leave the distribution columns empty.
    """
    rows = []
    for pred in predictions:
        row = {
            "bag_id": pred.bag_id,
            "method": pred.method,
            "predicted_grade": pred.predicted_grade,
            "expected_grade": pred.expected_grade,
            "variance": pred.variance,
            "num_patches": pred.num_patches,
        }
        probs = pred.distribution.probs if pred.distribution is not None else [None] * num_grades
        row.update({f"p{r}": probs[r] for r in range(num_grades)})
        rows.append(row)
    columns = ["bag_id", "method", "predicted_grade", "expected_grade", "variance", "num_patches"]
    return pd.DataFrame(rows, columns=columns + [f"p{r}" for r in range(num_grades)])


def write_bag_predictions(predictions, num_grades: int, path) -> None:
    frame = bag_predictions_frame(predictions, num_grades)
    frame.to_csv(path, index=False, na_rep="", lineterminator="\n")
