"""
Density Matrix Kernel Density Classification.

One factored density matrix per class, rho_c = sum_k lambda_{c,k} v_{c,k} v_{c,k}^T.
A state is scored by its expected value under each rho_c and the scores are
normalized into a posterior (no class priors).
"""

import warnings

import numpy as np
import torch
from torch import nn

from .errors import DegenerateMeasurementWarning, InvalidArgumentError
from .qmr import Posterior
from .utils import (
    as_matrix,
    eigenvalues,
    normalize_rows,
    normalize_scores,
    numpy_to_tensor,
    stack_batch,
    tensor_to_numpy,
)

LOG_EPS = 1e-12


class ClassDensityEnsemble(nn.Module):
    kind = "dmkdc"

    def __init__(self, state_dim: int, num_grades: int, num_components: int, V=None, lambda_logits=None):
        super().__init__()
        self.state_dim = int(state_dim)
        self.num_grades = int(num_grades)
        self.num_components = int(num_components)
        if min(self.state_dim, self.num_grades, self.num_components) < 1:
            raise InvalidArgumentError("state_dim, num_grades and num_components must all be >= 1")
        shape = (self.num_grades, self.num_components, self.state_dim)

        if V is None:
            V = torch.randn(*shape, dtype=torch.float64, generator=torch.Generator().manual_seed(0))
        else:
            V = numpy_to_tensor(V)
        logits = (
            torch.zeros(self.num_grades, self.num_components, dtype=torch.float64)
            if lambda_logits is None
            else numpy_to_tensor(lambda_logits)
        )
        if tuple(V.shape) != shape:
            raise InvalidArgumentError(f"V must have shape {shape}, got {tuple(V.shape)}")
        if tuple(logits.shape) != shape[:2]:
            raise InvalidArgumentError(f"lambda_logits must have shape {shape[:2]}, got {tuple(logits.shape)}")
        self.V = nn.Parameter(V.clone())
        self.lambda_logits = nn.Parameter(logits.clone())

    def eigenvalues(self) -> torch.Tensor:
        return eigenvalues(self.lambda_logits)

    def eigenvectors(self) -> torch.Tensor:
        return normalize_rows(self.V)

    def scores(self, psi: torch.Tensor) -> torch.Tensor:
        """<psi|rho_c|psi> per class, shape (B, N)."""
        proj = torch.einsum("bd,ckd->bck", psi, self.eigenvectors())
        return torch.einsum("ck,bck->bc", self.eigenvalues(), proj * proj)

    def forward(self, psi: torch.Tensor):
        return normalize_scores(self.scores(psi))

    def objective(self, psi: torch.Tensor, labels: torch.Tensor, alpha: float = 0.0) -> torch.Tensor:
        """Batch-mean categorical cross-entropy; alpha is accepted for a uniform signature and ignored."""
        probs, _ = self(psi)
        picked = probs.gather(1, labels.unsqueeze(1)).squeeze(1)
        return -torch.log(picked + LOG_EPS).mean()

    def to_dict(self) -> dict:
        return {
            "num_components": self.num_components,
            "state_dim": self.state_dim,
            "num_grades": self.num_grades,
            "lambda_logits": tensor_to_numpy(self.lambda_logits).tolist(),
            "V": tensor_to_numpy(self.V).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ClassDensityEnsemble":
        K, D, N = int(data["num_components"]), int(data["state_dim"]), int(data["num_grades"])
        V = np.asarray(data["V"], dtype=np.float64)
        if V.size != N * K * D:
            raise InvalidArgumentError(f"V holds {V.size} values, expected {N * K * D}")
        logits = np.asarray(data["lambda_logits"], dtype=np.float64)
        if logits.size != N * K:
            raise InvalidArgumentError(f"lambda_logits holds {logits.size} values, expected {N * K}")
        return cls(D, N, K, V=V.reshape(N, K, D), lambda_logits=logits.reshape(N, K))


def class_scores(model: ClassDensityEnsemble, psi) -> np.ndarray:
    values = getattr(psi, "values", psi)
    x = numpy_to_tensor(as_matrix(values, model.state_dim, "psi"))
    with torch.no_grad():
        return tensor_to_numpy(model.scores(x)[0])


def dmkdc_posterior_batch(model: ClassDensityEnsemble, states) -> np.ndarray:
    psi = numpy_to_tensor(as_matrix(states, model.state_dim, "states"))
    with torch.no_grad():
        probs, _ = model(psi)
    return tensor_to_numpy(probs)


def dmkdc_posterior(model: ClassDensityEnsemble, psi) -> Posterior:
    values = getattr(psi, "values", psi)
    x = numpy_to_tensor(as_matrix(values, model.state_dim, "psi"))
    with torch.no_grad():
        probs, degenerate = model(x)
    if bool(degenerate[0]):
        warnings.warn("class scores sum below 1e-12; returning uniform posterior", DegenerateMeasurementWarning)
    return Posterior(tensor_to_numpy(probs[0]), degenerate=bool(degenerate[0]))


def quadratic_form_scores(model: ClassDensityEnsemble, psi) -> np.ndarray:
    """Full-matrix reference: psi^T rho_c psi with each rho_c materialized as D x D."""
    values = as_matrix(getattr(psi, "values", psi), model.state_dim, "psi")[0]
    with torch.no_grad():
        V = tensor_to_numpy(model.eigenvectors())
        lam = tensor_to_numpy(model.eigenvalues())
    out = np.empty(model.num_grades)
    for c in range(model.num_grades):
        rho_c = (V[c].T * lam[c]) @ V[c]
        out[c] = values @ rho_c @ values
    return out


def cross_entropy_loss(model: ClassDensityEnsemble, batch) -> float:
    psi, labels = stack_batch(batch, model.state_dim, model.num_grades)
    with torch.no_grad():
        return model.objective(psi, labels).item()


DMKDC_MODEL_CLASS_MAPPINGS = {
    "dmkdc": ClassDensityEnsemble,
}
