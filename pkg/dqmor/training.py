"""
Gradient-based training for QMR and DMKDC.

Both models expose the same `objective(psi, labels, alpha)`; gradients come
from torch autograd through the softmax eigenvalues and the row
normalization of V, and Adam updates the raw parameters. A central-difference
checker verifies the analytic gradient entry by entry.
"""

import copy
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .config import QmrConfig
from .errors import CheckTooLargeError, InvalidArgumentError, TrainingDivergedError
from .models import get_model_class
from .rff_encoder import encode_batch
from .utils import normalize_rows, numpy_to_tensor, stack_batch, tensor_to_numpy

logger = logging.getLogger(__name__)
progress_logger = logging.getLogger("dqmor.progress")

GRADCHECK_MAX_PARAMETERS = 20_000
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


@dataclass
class TrainReport:
    epoch_losses: list
    final_loss: float
    best_loss: float
    best_epoch: int
    epochs_run: int
    seed: int
    wall_time_seconds: float
    validation_losses: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")


@dataclass
class GradCheckReport:
    max_relative_error: float
    block_errors: dict = field(default_factory=dict)
    step: float = 1e-5

    def passed(self, tolerance: float = 1e-4) -> bool:
        return self.max_relative_error <= tolerance

    def to_dict(self) -> dict:
        return asdict(self)


# =============================================================================
# INITIALIZATION
# =============================================================================

def _sample_indices(rng: np.random.Generator, pool: np.ndarray, count: int) -> np.ndarray:
    return rng.choice(pool, size=count, replace=pool.shape[0] < count)


def initialize(kind: str, encoder, dataset, config: QmrConfig):
    """
    Random init: logits zero, V rows standard normal then normalized.
    Data init: QMR row k = encode(x_k) (x) onehot(y_k) for K random samples;
    DMKDC rows of class c = encodings of K random samples of class c (random
    rows for a class with no samples).
    """
    model_cls = get_model_class(kind)
    D, N, K = encoder.rff_dim, config.num_grades, config.num_components
    generator = torch.Generator().manual_seed(config.seed % 2**64)
    shape = (K, D * N) if kind == "qmr" else (N, K, D)
    V = normalize_rows(torch.randn(*shape, dtype=torch.float64, generator=generator))

    if config.init == "data":
        rng = np.random.Generator(np.random.PCG64(config.seed))
        labels = dataset.labels
        if kind == "qmr":
            picks = _sample_indices(rng, np.arange(len(dataset)), K)
            states = encode_batch(encoder, dataset.features[picks])
            joint = np.zeros((K, D, N))
            joint[np.arange(K), :, labels[picks]] = states
            V = numpy_to_tensor(joint.reshape(K, D * N))
        else:
            V = V.clone()
            for c in range(N):
                pool = np.flatnonzero(labels == c)
                if pool.size == 0:
                    continue
                picks = _sample_indices(rng, pool, K)
                V[c] = numpy_to_tensor(encode_batch(encoder, dataset.features[picks]))
    return model_cls(D, N, K, V=V)


# =============================================================================
# GRADIENTS
# =============================================================================

def _parameters(model):
    """Parameter blocks in gradient-vector order."""
    return [("lambda_logits", model.lambda_logits), ("V", model.V)]


def flat_parameters(model) -> np.ndarray:
    return np.concatenate([tensor_to_numpy(p).reshape(-1) for _, p in _parameters(model)])


def set_flat_parameters(model, theta: np.ndarray) -> None:
    offset = 0
    with torch.no_grad():
        for _, p in _parameters(model):
            size = p.numel()
            p.copy_(numpy_to_tensor(theta[offset:offset + size]).reshape(p.shape))
            offset += size


def _gradient(model, psi, labels, alpha) -> np.ndarray:
    loss = model.objective(psi, labels, alpha)
    grads = torch.autograd.grad(loss, [p for _, p in _parameters(model)])
    return np.concatenate([tensor_to_numpy(g).reshape(-1) for g in grads])


def analytic_gradient(model, batch, alpha: float = 0.4) -> np.ndarray:
    """
    Exact gradient of the batch-mean loss over (lambda_logits, V), flattened
    in that order. QMR uses the MSE + alpha * variance objective, DMKDC the
    cross-entropy (alpha ignored).
    """
    psi, labels = stack_batch(batch, model.state_dim, model.num_grades)
    return _gradient(model, psi, labels, alpha)


def gradient_check(model, batch, h: float = 1e-5, alpha: float = 0.4, corrupt: bool = False) -> GradCheckReport:
    """
    Compare analytic_gradient with (L(theta + h e_i) - L(theta - h e_i)) / 2h
    for every parameter. `corrupt` perturbs the analytic gradient first, as a
    negative control.
    """
    theta = flat_parameters(model)
    if theta.size > GRADCHECK_MAX_PARAMETERS:
        raise CheckTooLargeError(f"{theta.size} parameters exceed gradient-check limit {GRADCHECK_MAX_PARAMETERS}")
    if h <= 0:
        raise InvalidArgumentError(f"step h must be > 0, got {h}")

    psi, labels = stack_batch(batch, model.state_dim, model.num_grades)
    analytic = _gradient(model, psi, labels, alpha)
    if corrupt:
        analytic = analytic.copy()
        analytic[0] += max(1e-3, abs(analytic[0]))

    numeric = np.empty_like(theta)
    probe = theta.copy()
    try:
        with torch.no_grad():
            for i in range(theta.size):
                probe[i] = theta[i] + h
                set_flat_parameters(model, probe)
                plus = model.objective(psi, labels, alpha).item()
                probe[i] = theta[i] - h
                set_flat_parameters(model, probe)
                minus = model.objective(psi, labels, alpha).item()
                probe[i] = theta[i]
                numeric[i] = (plus - minus) / (2.0 * h)
    finally:
        set_flat_parameters(model, theta)

    rel = np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    block_errors = {}
    offset = 0
    for name, p in _parameters(model):
        block = rel[offset:offset + p.numel()]
        block_errors[name] = float(block.max()) if block.size else 0.0
        offset += p.numel()
    return GradCheckReport(max_relative_error=float(rel.max()), block_errors=block_errors, step=h)


# =============================================================================
# TRAINING LOOP
# =============================================================================

def _check_inputs(kind, dataset, encoder, config):
    if len(dataset) == 0:
        raise InvalidArgumentError("dataset is empty")
    if not dataset.is_labeled:
        raise InvalidArgumentError("training needs a labeled dataset")
    if dataset.input_dim != encoder.input_dim:
        raise InvalidArgumentError(f"feature dim {dataset.input_dim} != encoder input_dim {encoder.input_dim}")
    if encoder.rff_dim != config.rff_dim:
        raise InvalidArgumentError(f"encoder rff_dim {encoder.rff_dim} != config rff_dim {config.rff_dim}")
    if dataset.num_grades != config.num_grades:
        raise InvalidArgumentError(f"dataset has {dataset.num_grades} grades, config {config.num_grades}")
    get_model_class(kind)


def _assert_constraints(model):
    lam = model.eigenvalues()
    totals = lam.sum(dim=-1)
    assert torch.all(lam >= 0) and torch.allclose(totals, torch.ones_like(totals))
    norms = torch.linalg.norm(model.eigenvectors(), dim=-1)
    assert torch.allclose(norms, torch.ones_like(norms))


def train(kind: str, dataset, encoder, config: QmrConfig, validation=None):
    """
    Minibatch Adam on lambda_logits and V. Batches are drawn from a
    permutation seeded with (seed + epoch). Each epoch is scored by the
    full-dataset loss after its updates, on `validation` when one is given
    and on the training set otherwise; the best-scoring parameters are
    returned.
    """
    _check_inputs(kind, dataset, encoder, config)
    if validation is not None:
        _check_inputs(kind, validation, encoder, config)
    started = time.perf_counter()

    psi = numpy_to_tensor(encode_batch(encoder, dataset.features))
    labels = torch.tensor(np.array(dataset.labels), dtype=torch.long)
    if validation is not None:
        val_psi = numpy_to_tensor(encode_batch(encoder, validation.features))
        val_labels = torch.tensor(np.array(validation.labels), dtype=torch.long)
    model = initialize(kind, encoder, dataset, config)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate, betas=ADAM_BETAS, eps=ADAM_EPS)

    size = len(dataset)
    epoch_losses = []
    validation_losses = []
    best_loss = math.inf
    best_epoch = 0
    best_state = copy.deepcopy(model.state_dict())
    logger.info("[DQMOR Train] %s: %d samples, D=%d, N=%d, K=%d, lr=%g",
                kind, size, config.rff_dim, config.num_grades, config.num_components, config.learning_rate)

    for epoch in range(config.epochs):
        generator = torch.Generator().manual_seed((config.seed + epoch) % 2**64)
        order = torch.randperm(size, generator=generator)
        for batch_index, start in enumerate(range(0, size, config.batch_size)):
            idx = order[start:start + config.batch_size]
            loss = model.objective(psi[idx], labels[idx], config.alpha)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDivergedError(epoch, batch_index, value)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            if __debug__:
                with torch.no_grad():
                    _assert_constraints(model)

        with torch.no_grad():
            epoch_loss = model.objective(psi, labels, config.alpha).item()
            score = epoch_loss
            if validation is not None:
                score = model.objective(val_psi, val_labels, config.alpha).item()
                validation_losses.append(score)
        epoch_losses.append(epoch_loss)
        if validation is None:
            progress_logger.info("epoch=%d loss=%r", epoch, epoch_loss)
        else:
            progress_logger.info("epoch=%d loss=%r val_loss=%r", epoch, epoch_loss, score)
        if score < best_loss:
            best_loss = score
            best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())

    model.load_state_dict(best_state)
    report = TrainReport(
        epoch_losses=epoch_losses,
        final_loss=epoch_losses[-1],
        best_loss=best_loss,
        best_epoch=best_epoch,
        epochs_run=len(epoch_losses),
        seed=config.seed,
        wall_time_seconds=time.perf_counter() - started,
        validation_losses=validation_losses,
    )
    return model, report


def random_problem(kind: str, state_dim: int, num_grades: int, num_components: int, batch_size: int, seed: int):
    """
    A random model (normal V rows, normal logits) and a batch of random unit
    states with random labels, for gradient checks.
    """
    model_cls = get_model_class(kind)
    generator = torch.Generator().manual_seed(seed % 2**64)
    shape = (num_components, state_dim * num_grades) if kind == "qmr" else (num_grades, num_components, state_dim)
    V = torch.randn(*shape, dtype=torch.float64, generator=generator)
    logits = torch.randn(*shape[:-1], dtype=torch.float64, generator=generator)
    model = model_cls(state_dim, num_grades, num_components, V=V, lambda_logits=logits)

    rng = np.random.Generator(np.random.PCG64(seed))
    states = rng.standard_normal((batch_size, state_dim))
    states /= np.linalg.norm(states, axis=1, keepdims=True)
    labels = rng.integers(0, num_grades, batch_size)
    return model, list(zip(states, labels.tolist()))
