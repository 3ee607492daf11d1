import json

import numpy as np
import pandas as pd
import pytest

from dqmor.aggregation import predict_bag
from dqmor.errors import InvalidArgumentError
from dqmor.evaluation import (
    MetricsReport,
    accuracy,
    compute_metrics,
    five_number_summary,
    macro_f1,
    mae,
    summarize_trials,
    variance_by_error,
)
from dqmor.qmr import Posterior


class TestMetrics:
    def test_accuracy(self):
        assert accuracy([0, 1, 2, 3], [0, 1, 2, 0]) == pytest.approx(0.75)

    def test_mae(self):
        assert mae([0, 1, 2, 3], [0, 1, 2, 0]) == pytest.approx(0.75)

    def test_perfect_macro_f1(self):
        assert macro_f1([0, 0, 1, 1], [0, 0, 1, 1], 2) == pytest.approx(1.0)

    def test_macro_f1_one_grade_missed(self):
        # grade 1: precision 1, recall 1/2 -> F1 2/3; grade 0: precision 2/3, recall 1 -> F1 4/5
        assert macro_f1([0, 0, 1, 1], [0, 0, 0, 1], 2) == pytest.approx((2 / 3 + 4 / 5) / 2)

    def test_absent_grade_counts_as_zero(self):
        assert macro_f1([0, 1], [0, 1], 3) == pytest.approx(2 / 3)

    def test_length_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            accuracy([0, 1], [0])

    def test_empty(self):
        with pytest.raises(InvalidArgumentError):
            mae([], [])

    def test_grade_out_of_range(self):
        with pytest.raises(InvalidArgumentError):
            macro_f1([0, 4], [0, 1], 3)

    def test_compute_metrics(self):
        report = compute_metrics([0, 1, 2, 3], [0, 1, 2, 0], 4, level="bag", method="PV")
        assert report.accuracy == pytest.approx(0.75)
        assert report.mae == pytest.approx(0.75)
        assert (report.num_samples, report.level, report.method) == (4, "bag", "PV")


class TestVarianceByError:
    def pv(self, probs, bag_id="x"):
        return predict_bag([Posterior(probs)], "PV", bag_id=bag_id)

    def test_groups_by_absolute_error(self):
        preds = [self.pv([1, 0, 0]), self.pv([0.5, 0.5, 0]), self.pv([0, 0, 1])]
        groups = variance_by_error(preds, [0, 2, 0])
        assert sorted(groups.groups) == [0, 1, 2]
        assert groups.groups[0] == [pytest.approx(0.0)]
        assert groups.groups[1] == [pytest.approx(0.25)]
        assert groups.summary[2]["count"] == 1

    def test_quartiles_match_sorted_interpolation(self, rng):
        values = rng.uniform(0, 2, 101)
        summary = five_number_summary(values)
        ordered = np.sort(values)
        assert summary["median"] == pytest.approx(ordered[50])
        assert summary["q1"] == pytest.approx(ordered[25])
        assert summary["q3"] == pytest.approx(ordered[75])
        assert summary["min"] == ordered[0] and summary["max"] == ordered[-1]

    def test_quartile_interpolation(self):
        summary = five_number_summary([1.0, 2.0, 3.0, 4.0])
        assert summary["q1"] == pytest.approx(1.75)
        assert summary["median"] == pytest.approx(2.5)
        assert summary["q3"] == pytest.approx(3.25)

    def test_rejects_mv_predictions(self):
        mv = predict_bag([Posterior([0.2, 0.8])], "MV")
        with pytest.raises(InvalidArgumentError):
            variance_by_error([mv], [1])

    def test_length_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            variance_by_error([self.pv([1.0, 0.0])], [0, 1])

    def test_writes_tables(self, tmp_path):
        groups = variance_by_error([self.pv([1, 0]), self.pv([0.5, 0.5])], [0, 0])
        groups.write_csv(tmp_path / "v.csv")
        groups.write_summary(tmp_path / "v.json")
        frame = pd.read_csv(tmp_path / "v.csv")
        assert list(frame.columns) == ["abs_error", "variance"]
        assert len(frame) == 2
        summary = json.loads((tmp_path / "v.json").read_text())
        assert set(summary) == {"0", "1"}


class TestSummarizeTrials:
    def test_mean_and_std(self):
        reports = [
            MetricsReport(accuracy=0.5, macro_f1=0.4, mae=1.0, num_samples=10, level="bag"),
            MetricsReport(accuracy=0.7, macro_f1=0.6, mae=0.5, num_samples=10, level="bag"),
        ]
        out = summarize_trials(reports)
        assert out["accuracy"]["mean"] == pytest.approx(0.6)
        assert out["accuracy"]["std"] == pytest.approx(0.1)
        assert out["mae"]["mean"] == pytest.approx(0.75)

    def test_empty(self):
        with pytest.raises(InvalidArgumentError):
            summarize_trials([])
