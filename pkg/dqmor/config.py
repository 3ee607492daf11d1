"""
Hyperparameter schema, training configuration and presets.

HYPERPARAMETER_TYPES follows the node-style input declaration: each entry is
(TYPE, options) with default / min / max, and it drives the CLI flags, the
defaults and range validation from one place.
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, fields, replace

from .errors import InvalidArgumentError

logger = logging.getLogger(__name__)

DEFAULT_GAMMA = 2.0 ** -13

MODEL_KINDS = ("qmr", "dmkdc")

HYPERPARAMETER_TYPES = {
    "rff_dim": ("INT", {"default": 1024, "min": 1, "flag": "--rff-dim", "help": "random Fourier feature components D"}),
    "num_grades": ("INT", {"default": 5, "min": 2, "flag": "--grades", "help": "number of ordinal grades N"}),
    "num_components": ("INT", {"default": 32, "min": 1, "flag": "--eig", "help": "eigen-components K"}),
    "gamma": ("FLOAT", {"default": DEFAULT_GAMMA, "min": 0.0, "exclusive_min": True, "flag": "--gamma", "help": "RBF bandwidth (default 2^-13)"}),
    "alpha": ("FLOAT", {"default": 0.4, "min": 0.0, "flag": "--alpha", "help": "variance-term weight of the QMR loss"}),
    "learning_rate": ("FLOAT", {"default": None, "min": 0.0, "exclusive_min": True, "flag": "--lr", "help": "Adam learning rate (QMR 6e-5, DMKDC 5e-3)"}),
    "epochs": ("INT", {"default": 200, "min": 1, "flag": "--epochs", "help": "training epochs"}),
    "batch_size": ("INT", {"default": 32, "min": 1, "flag": "--batch-size", "help": "minibatch size"}),
    "seed": ("INT", {"default": 0, "min": 0, "max": 2**64 - 1, "flag": "--seed", "help": "seed for every random draw"}),
    "init": (["random", "data"], {"default": "random", "flag": "--init", "help": "parameter initialization"}),
}

DEFAULT_LEARNING_RATES = {
    "qmr": 6e-5,
    "dmkdc": 5e-3,
}


@dataclass(frozen=True)
class QmrConfig:
    rff_dim: int = 1024
    num_grades: int = 5
    num_components: int = 32
    gamma: float = DEFAULT_GAMMA
    alpha: float = 0.4
    learning_rate: float = DEFAULT_LEARNING_RATES["qmr"]
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    init: str = "random"

    @classmethod
    def for_model(cls, kind: str, **overrides) -> "QmrConfig":
        """Defaults for a model kind, with any non-None overrides applied."""
        if kind not in MODEL_KINDS:
            raise InvalidArgumentError(f"unknown model kind '{kind}' (expected one of {', '.join(MODEL_KINDS)})")
        known = {f.name for f in fields(cls)}
        unknown = set(overrides) - known
        if unknown:
            raise InvalidArgumentError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        values = {k: v for k, v in overrides.items() if v is not None}
        values.setdefault("learning_rate", DEFAULT_LEARNING_RATES[kind])
        return cls(**values).validate()

    def validate(self) -> "QmrConfig":
        for name, (kind, options) in HYPERPARAMETER_TYPES.items():
            value = getattr(self, name)
            if isinstance(kind, list):
                if value not in kind:
                    raise InvalidArgumentError(f"{name} must be one of {kind}, got {value!r}")
                continue
            lo = options.get("min")
            hi = options.get("max")
            if lo is not None and (value < lo or (options.get("exclusive_min") and value == lo)):
                op = ">" if options.get("exclusive_min") else ">="
                raise InvalidArgumentError(f"{name} must be {op} {lo}, got {value}")
            if hi is not None and value > hi:
                raise InvalidArgumentError(f"{name} must be <= {hi}, got {value}")
        return self

    def with_overrides(self, **overrides) -> "QmrConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None}).validate()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "QmrConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known}).validate()


# =============================================================================
# PRESETS
# =============================================================================

def _get_presets_dir():
    """Get the presets directory path."""
    return os.path.join(os.path.dirname(__file__), "presets")


def list_presets() -> dict:
    """
    Load every preset JSON from the presets folder, keyed by filename stem.
    Unreadable files are skipped with a warning.
    """
    presets = {}
    presets_dir = _get_presets_dir()
    if not os.path.isdir(presets_dir):
        return presets
    for filename in sorted(os.listdir(presets_dir)):
        if not filename.endswith(".json"):
            continue
        filepath = os.path.join(presets_dir, filename)
        try:
            with open(filepath, "r", encoding="utf-8") as f:
                presets[filename[:-5]] = json.load(f)
        except (json.JSONDecodeError, IOError) as e:
            logger.warning("[DQMOR Config] Failed to load preset %s: %s", filename, e)
    return presets


def load_preset(name: str) -> dict:
    """Return the hyperparameter dict of a named preset."""
    presets = list_presets()
    if name not in presets:
        available = ", ".join(sorted(presets)) or "none"
        raise InvalidArgumentError(f"unknown preset '{name}' (available: {available})")
    return dict(presets[name].get("params", {}))
