import numpy as np
import pytest

from dqmor.dataio import synth_generate
from dqmor.dmkdc import ClassDensityEnsemble
from dqmor.qmr import FactoredJointDensity


def unit_vector(rng, dim):
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_qmr(rng, state_dim, num_grades, num_components):
    V = rng.standard_normal((num_components, state_dim * num_grades))
    logits = rng.standard_normal(num_components)
    return FactoredJointDensity(state_dim, num_grades, num_components, V=V, lambda_logits=logits)


def random_dmkdc(rng, state_dim, num_grades, num_components):
    V = rng.standard_normal((num_grades, num_components, state_dim))
    logits = rng.standard_normal((num_grades, num_components))
    return ClassDensityEnsemble(state_dim, num_grades, num_components, V=V, lambda_logits=logits)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_dataset():
    return synth_generate(num_bags=60, patches_per_bag=4, feature_dim=2, num_grades=5, noise_sigma=0.1, seed=0)


