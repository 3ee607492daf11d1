"""
DQMOR: density-matrix ordinal regression over precomputed feature vectors.

Random Fourier features turn feature vectors into unit states; QMR (joint
density, measurement + partial trace) and DMKDC (one density per class) turn
states into grade posteriors; bags of patches are summarized by majority or
probability vote, with the posterior variance as the uncertainty measure.
"""

from .aggregation import BagPrediction, majority_vote, predict_bag, probability_vote
from .config import QmrConfig
from .dataio import FeatureDataset, load_checkpoint, load_csv, save_checkpoint, synth_generate
from .dmkdc import ClassDensityEnsemble, class_scores, cross_entropy_loss, dmkdc_posterior
from .evaluation import MetricsReport, accuracy, macro_f1, mae, variance_by_error
from .qmr import (
    FactoredJointDensity,
    Posterior,
    argmax_grade,
    brute_force_posterior,
    expected_grade,
    posterior,
    posterior_variance,
    qmr_loss,
)
from .rff_encoder import RffEncoder, StateVector, encode, raw_kernel_estimate, sample_encoder
from .training import GradCheckReport, TrainReport, analytic_gradient, gradient_check, train

__all__ = [
    "BagPrediction", "majority_vote", "predict_bag", "probability_vote",
    "QmrConfig",
    "FeatureDataset", "load_checkpoint", "load_csv", "save_checkpoint", "synth_generate",
    "ClassDensityEnsemble", "class_scores", "cross_entropy_loss", "dmkdc_posterior",
    "MetricsReport", "accuracy", "macro_f1", "mae", "variance_by_error",
    "FactoredJointDensity", "Posterior", "argmax_grade", "brute_force_posterior",
    "expected_grade", "posterior", "posterior_variance", "qmr_loss",
    "RffEncoder", "StateVector", "encode", "raw_kernel_estimate", "sample_encoder",
    "GradCheckReport", "TrainReport", "analytic_gradient", "gradient_check", "train",
]
