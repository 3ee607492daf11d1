"""
Common utility functions for DQMOR modules.

This module centralizes the array/tensor helpers every model module needs.
"""

import numpy as np
import torch

from .errors import InvalidArgumentError


DTYPE = torch.float64


# =============================================================================
# Array / Tensor Conversion Helpers
# =============================================================================
# Model parameters are float64 tensors; everything crossing the public API is a
# float64 numpy array.

def numpy_to_tensor(array) -> torch.Tensor:
    """
    Convert an array-like to a float64 tensor.

    Args:
        array: NumPy array, list, or tensor

    Returns:
        PyTorch tensor, dtype float64, on CPU (a writable copy)
    """
    if isinstance(array, torch.Tensor):
        return array.detach().to(dtype=DTYPE, device="cpu")
    return torch.from_numpy(np.array(array, dtype=np.float64, order="C"))


def tensor_to_numpy(tensor: torch.Tensor) -> np.ndarray:
    """
    Convert a tensor to a float64 numpy array (detached copy).

    Args:
        tensor: PyTorch tensor of any shape

    Returns:
        NumPy array float64
    """
    return tensor.detach().cpu().numpy().astype(np.float64, copy=True)


def as_vector(x, length: int, name: str = "x") -> np.ndarray:
    """Coerce to a finite float64 vector of the given length."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != length:
        raise InvalidArgumentError(f"{name} must be a vector of length {length}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite values")
    return arr


def as_matrix(X, width: int, name: str = "X") -> np.ndarray:
    """Coerce to a finite float64 matrix with `width` columns (a vector becomes one row)."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if arr.ndim != 2 or arr.shape[1] != width:
        raise InvalidArgumentError(f"{name} must have {width} columns, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite values")
    return arr


# =============================================================================
# Differentiable Reparameterizations
# =============================================================================

def normalize_rows(V: torch.Tensor) -> torch.Tensor:
    """
    Scale every row (last axis) to unit Euclidean norm.

    Applied inside the forward pass, so gradients flow through the
    normalization to the stored parameters.
    """
    return V / torch.linalg.norm(V, dim=-1, keepdim=True)


def eigenvalues(lambda_logits: torch.Tensor) -> torch.Tensor:
    """Softmax over the last axis: unconstrained logits -> eigenvalue simplex."""
    return torch.softmax(lambda_logits, dim=-1)


def normalize_scores(scores: torch.Tensor, floor: float = 1e-12):
    """
    Normalize nonnegative per-grade scores into distributions, row by row.

    Rows whose total falls below `floor` become uniform. The denominator is
    swapped for 1 on those rows so no NaN reaches the backward pass.

    Returns:
        (probs, degenerate) where degenerate is a bool tensor per row
    """
    total = scores.sum(dim=-1, keepdim=True)
    degenerate = total < floor
    safe_total = torch.where(degenerate, torch.ones_like(total), total)
    uniform = torch.full_like(scores, 1.0 / scores.shape[-1])
    probs = torch.where(degenerate, uniform, scores / safe_total)
    return probs, degenerate.squeeze(-1)


def stack_batch(batch, state_dim: int, num_grades: int):
    """
    Turn a list of (state, label) pairs into a (B, D) state tensor and a
    (B,) label tensor, validating labels against the grade count.
    """
    if len(batch) == 0:
        raise InvalidArgumentError("batch must be nonempty")
    states = []
    labels = []
    for i, (psi, label) in enumerate(batch):
        values = getattr(psi, "values", psi)
        states.append(as_vector(values, state_dim, name=f"state {i}"))
        label = int(label)
        if not 0 <= label < num_grades:
            raise InvalidArgumentError(f"label {label} of sample {i} outside 0..{num_grades - 1}")
        labels.append(label)
    return numpy_to_tensor(np.stack(states)), torch.tensor(labels, dtype=torch.long)
