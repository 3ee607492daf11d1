import numpy as np
import pytest

from conftest import random_qmr, unit_vector
from dqmor.errors import DegenerateMeasurementWarning, InvalidArgumentError, OracleTooLargeError
from dqmor.qmr import (
    FactoredJointDensity,
    Posterior,
    argmax_grade,
    brute_force_posterior,
    expected_grade,
    materialize_density,
    posterior,
    posterior_batch,
    posterior_variance,
    qmr_loss,
)


def onehot(n, i):
    e = np.zeros(n)
    e[i] = 1.0
    return e


def uniform_model(num_grades):
    """D=1 model whose posterior is uniform for every state."""
    V = np.stack([np.kron([1.0], onehot(num_grades, r)) for r in range(num_grades)])
    return FactoredJointDensity(1, num_grades, num_grades, V=V)


class TestPosteriorStatistics:
    def test_uniform_mean_and_variance(self):
        p = Posterior(np.full(5, 0.2))
        assert expected_grade(p) == pytest.approx(2.0)
        assert posterior_variance(p) == pytest.approx(2.0)

    def test_one_hot(self):
        p = Posterior(onehot(5, 3))
        assert expected_grade(p) == pytest.approx(3.0)
        assert posterior_variance(p) == pytest.approx(0.0)

    def test_symmetric_bump(self):
        p = Posterior([0.1, 0.2, 0.4, 0.2, 0.1])
        assert p.mean == pytest.approx(2.0)
        assert p.variance == pytest.approx(1.2)

    def test_argmax(self):
        assert argmax_grade(Posterior([0.1, 0.6, 0.1, 0.1, 0.1])) == 1

    def test_argmax_tie_goes_up(self):
        assert argmax_grade(Posterior([0.5, 0.5, 0.0])) == 1
        assert argmax_grade(Posterior(np.full(4, 0.25))) == 3

    @pytest.mark.parametrize("probs", [[0.5, 0.6], [-0.1, 1.1], [], [[0.5, 0.5]]])
    def test_rejects_non_simplex(self, probs):
        with pytest.raises(InvalidArgumentError):
            Posterior(probs)


class TestPosteriorFastPath:
    def test_single_component_gives_one_hot(self, rng):
        psi = unit_vector(rng, 4)
        model = FactoredJointDensity(4, 5, 1, V=np.kron(psi, onehot(5, 2))[None, :])
        p = posterior(model, psi)
        np.testing.assert_allclose(p.probs, onehot(5, 2), atol=1e-12)
        assert not p.degenerate

    def test_scale_invariance(self, rng):
        model = random_qmr(rng, 6, 4, 3)
        psi = unit_vector(rng, 6)
        np.testing.assert_allclose(posterior(model, 3.0 * psi).probs, posterior(model, psi).probs, atol=1e-12)

    def test_matches_oracle_small(self, rng):
        model = random_qmr(rng, 4, 3, 2)
        psi = unit_vector(rng, 4)
        np.testing.assert_allclose(posterior(model, psi).probs, brute_force_posterior(model, psi).probs, atol=1e-10)

    def test_matches_oracle_sweep(self, rng):
        for _ in range(100):
            D = int(rng.integers(1, 17))
            K = int(rng.integers(1, 9))
            model = random_qmr(rng, D, 5, K)
            psi = unit_vector(rng, D)
            np.testing.assert_allclose(
                posterior(model, psi).probs, brute_force_posterior(model, psi).probs, atol=1e-10
            )

    def test_simplex_range_and_variance_bounds(self, rng):
        N = 5
        for _ in range(10):
            model = random_qmr(rng, 8, N, 4)
            states = rng.standard_normal((100, 8))
            probs = posterior_batch(model, states)
            assert np.all(probs >= 0)
            np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
            grades = np.arange(N)
            means = probs @ grades
            variances = (probs * (grades - means[:, None]) ** 2).sum(axis=1)
            assert np.all(means >= 0) and np.all(means <= N - 1)
            assert np.all(variances >= -1e-12) and np.all(variances <= (N - 1) ** 2 / 4 + 1e-12)

    def test_batch_matches_single(self, rng):
        model = random_qmr(rng, 5, 3, 2)
        states = rng.standard_normal((7, 5))
        batch = posterior_batch(model, states)
        for i in range(7):
            np.testing.assert_allclose(batch[i], posterior(model, states[i]).probs, atol=1e-14)

    def test_orthogonal_state_is_degenerate(self):
        V = np.stack([np.kron(onehot(2, 0), onehot(3, r)) for r in range(3)])
        model = FactoredJointDensity(2, 3, 3, V=V)
        with pytest.warns(DegenerateMeasurementWarning):
            p = posterior(model, onehot(2, 1))
        assert p.degenerate
        np.testing.assert_allclose(p.probs, np.full(3, 1.0 / 3.0))
        assert brute_force_posterior(model, onehot(2, 1)).degenerate

    def test_wrong_state_length(self, rng):
        model = random_qmr(rng, 4, 3, 2)
        with pytest.raises(InvalidArgumentError):
            posterior(model, np.ones(5))


class TestDensity:
    def test_trace_is_one(self, rng):
        model = random_qmr(rng, 6, 4, 5)
        assert np.trace(materialize_density(model)) == pytest.approx(1.0, abs=1e-10)

    def test_psd_and_symmetric(self, rng):
        rho = materialize_density(random_qmr(rng, 3, 3, 4))
        np.testing.assert_allclose(rho, rho.T, atol=1e-14)
        assert np.linalg.eigvalsh(rho).min() >= -1e-12

    def test_oracle_guard(self, rng):
        model = random_qmr(rng, 64, 5, 2)
        with pytest.raises(OracleTooLargeError):
            brute_force_posterior(model, unit_vector(rng, 64))

    def test_bad_parameter_shapes(self):
        with pytest.raises(InvalidArgumentError):
            FactoredJointDensity(4, 3, 2, V=np.ones((2, 11)))
        with pytest.raises(InvalidArgumentError):
            FactoredJointDensity(4, 3, 2, lambda_logits=np.zeros(3))

    def test_dict_round_trip(self, rng):
        model = random_qmr(rng, 4, 3, 2)
        back = FactoredJointDensity.from_dict(model.to_dict())
        states = rng.standard_normal((5, 4))
        assert np.array_equal(posterior_batch(back, states), posterior_batch(model, states))


class TestQmrLoss:
    def test_zero_at_confident_correct_prediction(self, rng):
        psi = unit_vector(rng, 4)
        model = FactoredJointDensity(4, 5, 1, V=np.kron(psi, onehot(5, 2))[None, :])
        assert qmr_loss(model, [(psi, 2)], alpha=0.4) == pytest.approx(0.0, abs=1e-12)

    def test_uniform_posterior(self):
        assert qmr_loss(uniform_model(5), [(np.ones(1), 2)], alpha=0.4) == pytest.approx(0.8)

    def test_alpha_zero_is_squared_error(self):
        assert qmr_loss(uniform_model(5), [(np.ones(1), 0)], alpha=0.0) == pytest.approx(4.0)

    def test_batch_mean(self):
        model = uniform_model(5)
        loss = qmr_loss(model, [(np.ones(1), 0), (np.ones(1), 2)], alpha=0.0)
        assert loss == pytest.approx(2.0)

    def test_empty_batch(self):
        with pytest.raises(InvalidArgumentError):
            qmr_loss(uniform_model(3), [], alpha=0.4)

    def test_label_out_of_range(self):
        with pytest.raises(InvalidArgumentError):
            qmr_loss(uniform_model(3), [(np.ones(1), 3)], alpha=0.4)

    def test_negative_alpha(self):
        with pytest.raises(InvalidArgumentError):
            qmr_loss(uniform_model(3), [(np.ones(1), 1)], alpha=-0.1)
