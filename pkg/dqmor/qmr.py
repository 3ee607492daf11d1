"""
Quantum Measurement Regression.

A joint input-label density matrix rho_train = sum_k lambda_k v_k v_k^T is kept
in factored form: each row of V is an eigenvector of the joint space (index
d * N + r), and the eigenvalues are the softmax of free logits. Measuring an
encoded state psi with pi = |psi><psi| (x) Id_N, renormalizing and tracing out
the input leaves a label density whose diagonal is the posterior over grades.
Only that diagonal is ever computed on the fast path:

    u_k = V_k^T psi          (V_k is row k reshaped to D x N)
    s_r = sum_k lambda_k u_{k,r}^2
    p_r = s_r / sum_r' s_r'
"""

import warnings
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import DegenerateMeasurementWarning, InvalidArgumentError, OracleTooLargeError
from .utils import (
    as_matrix,
    eigenvalues,
    normalize_rows,
    normalize_scores,
    numpy_to_tensor,
    stack_batch,
    tensor_to_numpy,
)

ORACLE_MAX_JOINT_DIM = 256
SIMPLEX_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Posterior:
    """Discrete distribution over grades 0..N-1."""

    probs: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        probs = np.array(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.shape[0] < 1:
            raise InvalidArgumentError(f"posterior must be a nonempty vector, got shape {probs.shape}")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > SIMPLEX_TOL:
            raise InvalidArgumentError(f"posterior is not a probability simplex: {probs.tolist()}")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def num_grades(self) -> int:
        return self.probs.shape[0]

    @property
    def mean(self) -> float:
        return expected_grade(self)

    @property
    def variance(self) -> float:
        return posterior_variance(self)


def expected_grade(p: Posterior) -> float:
    return float(p.probs @ np.arange(p.num_grades, dtype=np.float64))


def posterior_variance(p: Posterior) -> float:
    r = np.arange(p.num_grades, dtype=np.float64)
    return float(p.probs @ (r - expected_grade(p)) ** 2)


def argmax_grade(p: Posterior) -> int:
    """Index of the largest probability; ties go to the higher grade."""
    reversed_probs = p.probs[::-1]
    return int(p.num_grades - 1 - np.argmax(reversed_probs))


def grade_statistics(probs: torch.Tensor):
    """Expected grade and variance per row of a (B, N) probability tensor."""
    r = torch.arange(probs.shape[-1], dtype=probs.dtype)
    mean = probs @ r
    var = (probs * (mean.unsqueeze(-1) - r) ** 2).sum(dim=-1)
    return mean, var


class FactoredJointDensity(nn.Module):
    """Joint density over inputs (x) labels, factored as V^T diag(softmax(logits)) V."""

    kind = "qmr"

    def __init__(self, state_dim: int, num_grades: int, num_components: int, V=None, lambda_logits=None):
        super().__init__()
        self.state_dim = int(state_dim)
        self.num_grades = int(num_grades)
        self.num_components = int(num_components)
        if min(self.state_dim, self.num_grades, self.num_components) < 1:
            raise InvalidArgumentError("state_dim, num_grades and num_components must all be >= 1")
        joint_dim = self.state_dim * self.num_grades

        if V is None:
            V = torch.randn(self.num_components, joint_dim, dtype=torch.float64, generator=torch.Generator().manual_seed(0))
        else:
            V = numpy_to_tensor(V)
        logits = (
            torch.zeros(self.num_components, dtype=torch.float64)
            if lambda_logits is None
            else numpy_to_tensor(lambda_logits)
        )
        if V.shape != (self.num_components, joint_dim):
            raise InvalidArgumentError(f"V must have shape ({self.num_components}, {joint_dim}), got {tuple(V.shape)}")
        if logits.shape != (self.num_components,):
            raise InvalidArgumentError(f"lambda_logits must have shape ({self.num_components},), got {tuple(logits.shape)}")
        self.V = nn.Parameter(V.clone())
        self.lambda_logits = nn.Parameter(logits.clone())

    def eigenvalues(self) -> torch.Tensor:
        return eigenvalues(self.lambda_logits)

    def eigenvectors(self) -> torch.Tensor:
        """Forward-normalized eigenvectors, shape (K, D*N)."""
        return normalize_rows(self.V)

    def scores(self, psi: torch.Tensor) -> torch.Tensor:
        """Unnormalized per-grade scores s, shape (B, N)."""
        Vk = self.eigenvectors().reshape(self.num_components, self.state_dim, self.num_grades)
        u = torch.einsum("bd,kdn->bkn", psi, Vk)
        return torch.einsum("k,bkn->bn", self.eigenvalues(), u * u)

    def forward(self, psi: torch.Tensor):
        """Posterior probabilities (B, N) and per-row degenerate flags."""
        return normalize_scores(self.scores(psi))

    def objective(self, psi: torch.Tensor, labels: torch.Tensor, alpha: float) -> torch.Tensor:
        """Batch-mean of (y - y_hat)^2 + alpha * posterior variance."""
        probs, _ = self(psi)
        mean, var = grade_statistics(probs)
        return ((labels.to(probs.dtype) - mean) ** 2 + alpha * var).mean()

    def to_dict(self) -> dict:
        return {
            "num_components": self.num_components,
            "state_dim": self.state_dim,
            "num_grades": self.num_grades,
            "lambda_logits": tensor_to_numpy(self.lambda_logits).tolist(),
            "V": tensor_to_numpy(self.V).reshape(-1).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FactoredJointDensity":
        K, D, N = int(data["num_components"]), int(data["state_dim"]), int(data["num_grades"])
        V = np.asarray(data["V"], dtype=np.float64)
        if V.size != K * D * N:
            raise InvalidArgumentError(f"V holds {V.size} values, expected {K * D * N}")
        return cls(D, N, K, V=V.reshape(K, D * N), lambda_logits=data["lambda_logits"])


def posterior_batch(model: FactoredJointDensity, states) -> np.ndarray:
    """Posteriors for every row of a (B, D) state matrix, shape (B, N)."""
    psi = numpy_to_tensor(as_matrix(states, model.state_dim, "states"))
    with torch.no_grad():
        probs, _ = model(psi)
    return tensor_to_numpy(probs)


def posterior(model: FactoredJointDensity, psi) -> Posterior:
    """
    Posterior over grades for one state. Accepts a StateVector or any vector
    of length D (un-normalized vectors give the same answer).
    """
    values = getattr(psi, "values", psi)
    x = numpy_to_tensor(as_matrix(values, model.state_dim, "psi"))
    with torch.no_grad():
        probs, degenerate = model(x)
    if bool(degenerate[0]):
        warnings.warn("measurement trace below 1e-12; returning uniform posterior", DegenerateMeasurementWarning)
    return Posterior(tensor_to_numpy(probs[0]), degenerate=bool(degenerate[0]))


def materialize_density(model: FactoredJointDensity) -> np.ndarray:
    """rho_train = sum_k lambda_k v_k v_k^T as a dense (D*N, D*N) matrix."""
    with torch.no_grad():
        V = tensor_to_numpy(model.eigenvectors())
        lam = tensor_to_numpy(model.eigenvalues())
    return (V.T * lam) @ V


def brute_force_posterior(model: FactoredJointDensity, psi) -> Posterior:
    """
    Literal measurement: collapse rho_train with pi, renormalize by the trace,
    partial-trace the input subsystem and read the diagonal.
    """
    D, N = model.state_dim, model.num_grades
    if D * N > ORACLE_MAX_JOINT_DIM:
        raise OracleTooLargeError(f"joint dimension {D * N} exceeds oracle limit {ORACLE_MAX_JOINT_DIM}")
    values = as_matrix(getattr(psi, "values", psi), D, "psi")[0]

    rho = materialize_density(model)
    pi = np.kron(np.outer(values, values), np.eye(N))
    collapsed = pi @ rho @ pi
    trace = np.trace(collapsed)
    if trace < 1e-12:
        return Posterior(np.full(N, 1.0 / N), degenerate=True)
    collapsed = collapsed / trace

    rho_y = np.zeros((N, N))
    for d in range(D):
        for r in range(N):
            for s in range(N):
                rho_y[r, s] += collapsed[d * N + r, d * N + s]
    return Posterior(np.diag(rho_y).copy())


def qmr_loss(model: FactoredJointDensity, batch, alpha: float) -> float:
    if alpha < 0:
        raise InvalidArgumentError(f"alpha must be >= 0, got {alpha}")
    psi, labels = stack_batch(batch, model.state_dim, model.num_grades)
    with torch.no_grad():
        return model.objective(psi, labels, alpha).item()


QMR_MODEL_CLASS_MAPPINGS = {
    "qmr": FactoredJointDensity,
}
