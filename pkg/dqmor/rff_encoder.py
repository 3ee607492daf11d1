"""
Random Fourier feature encoder.

Maps raw feature vectors to unit-norm state vectors whose inner products
approximate the RBF kernel exp(-gamma * ||x - y||^2):

    z(x)_i = sqrt(2 / D) * cos(w_i . x + b_i),   w_i ~ N(0, 2*gamma*I),  b_i ~ U[0, 2*pi]

W is drawn first (D x n standard normals, row-major), then b (D uniforms), both
from numpy's PCG64 generator seeded with `seed`.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateEncodingError, InvalidArgumentError
from .utils import as_matrix, as_vector

NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class StateVector:
    """Unit-norm encoded input |psi_x>."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class RffEncoder:
    input_dim: int
    rff_dim: int
    gamma: float
    seed: int
    W: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)

    def __post_init__(self):
        W = np.array(self.W, dtype=np.float64)
        b = np.array(self.b, dtype=np.float64)
        if W.shape != (self.rff_dim, self.input_dim) or b.shape != (self.rff_dim,):
            raise InvalidArgumentError(
                f"encoder arrays have shapes W={W.shape}, b={b.shape}; "
                f"expected ({self.rff_dim}, {self.input_dim}) and ({self.rff_dim},)"
            )
        W.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    def raw_features(self, X) -> np.ndarray:
        """Un-normalized feature map z(X), shape (B, D)."""
        X = as_matrix(X, self.input_dim)
        return np.sqrt(2.0 / self.rff_dim) * np.cos(X @ self.W.T + self.b)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "rff_dim": self.rff_dim,
            "gamma": self.gamma,
            "seed": self.seed,
            "W": self.W.tolist(),
            "b": self.b.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RffEncoder":
        return cls(
            input_dim=int(data["input_dim"]),
            rff_dim=int(data["rff_dim"]),
            gamma=float(data["gamma"]),
            seed=int(data["seed"]),
            W=np.asarray(data["W"], dtype=np.float64).reshape(int(data["rff_dim"]), int(data["input_dim"])),
            b=np.asarray(data["b"], dtype=np.float64),
        )


def sample_encoder(input_dim: int, rff_dim: int, gamma: float, seed: int) -> RffEncoder:
    if int(input_dim) < 1 or int(rff_dim) < 1:
        raise InvalidArgumentError(f"dimensions must be >= 1 (input_dim={input_dim}, rff_dim={rff_dim})")
    if not np.isfinite(gamma) or gamma <= 0:
        raise InvalidArgumentError(f"gamma must be > 0, got {gamma}")
    if not 0 <= int(seed) < 2**64:
        raise InvalidArgumentError(f"seed must be a 64-bit unsigned integer, got {seed}")

    rng = np.random.Generator(np.random.PCG64(int(seed)))
    W = np.sqrt(2.0 * gamma) * rng.standard_normal((int(rff_dim), int(input_dim)))
    b = rng.uniform(0.0, 2.0 * np.pi, int(rff_dim))
    return RffEncoder(int(input_dim), int(rff_dim), float(gamma), int(seed), W, b)


def encode_batch(encoder: RffEncoder, X) -> np.ndarray:
    """Encode each row of X to a unit state; returns shape (B, D)."""
    Z = encoder.raw_features(X)
    norms = np.linalg.norm(Z, axis=1, keepdims=True)
    bad = np.flatnonzero(norms[:, 0] < NORM_FLOOR)
    if bad.size:
        raise DegenerateEncodingError(f"raw feature map has near-zero norm for row(s) {bad.tolist()}")
    return Z / norms


def encode(encoder: RffEncoder, x) -> StateVector:
    x = as_vector(x, encoder.input_dim)
    return StateVector(encode_batch(encoder, x)[0])


def raw_kernel_estimate(encoder: RffEncoder, x, y) -> float:
    """z(x) . z(y) with the un-normalized feature maps."""
    zx = encoder.raw_features(as_vector(x, encoder.input_dim, "x"))[0]
    zy = encoder.raw_features(as_vector(y, encoder.input_dim, "y"))[0]
    return float(zx @ zy)


def rbf_kernel(x, y, gamma: float) -> float:
    """Exact kernel the encoder approximates."""
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    return float(np.exp(-gamma * (d @ d)))
