"""
Dataset ingestion, synthetic ordinal data and checkpoint files.

Dataset CSV: header `bag_id,patch_id,label,f0,...,f{n-1}`, one row per patch,
UTF-8 with LF line endings. A bag is the group of rows sharing a bag_id.

Checkpoint JSON: top-level keys `version`, `kind`, `encoder`, `model`, `config`
and, when stamped, `created`. Floats are written with the shortest repr that
parses back to the same float64.
"""

import json
import logging
import math
import re
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np
import pandas as pd

from .errors import CheckpointError, DatasetParseError, InvalidArgumentError
from .models import get_model_class
from .rff_encoder import RffEncoder

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
ID_PATTERN = re.compile(r"^[A-Za-z0-9_-]+$")
UNLABELED = -1


@dataclass(frozen=True, eq=False)
class FeatureDataset:
    bag_ids: tuple
    patch_ids: tuple
    labels: np.ndarray
    features: np.ndarray
    num_grades: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 2:
            raise InvalidArgumentError(f"features must be a matrix, got shape {features.shape}")
        size = features.shape[0]
        if not (len(self.bag_ids) == len(self.patch_ids) == labels.shape[0] == size):
            raise InvalidArgumentError("bag_ids, patch_ids, labels and features must have equal lengths")
        if np.any(labels >= self.num_grades) or np.any(labels < UNLABELED):
            raise InvalidArgumentError(f"labels must lie in 0..{self.num_grades - 1}")
        if len(set(zip(self.bag_ids, self.patch_ids))) != size:
            raise InvalidArgumentError("(bag_id, patch_id) pairs must be unique")
        labels.setflags(write=False)
        features.setflags(write=False)
        object.__setattr__(self, "bag_ids", tuple(self.bag_ids))
        object.__setattr__(self, "patch_ids", tuple(self.patch_ids))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "features", features)

    def __len__(self):
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    @property
    def is_labeled(self) -> bool:
        return bool(np.all(self.labels >= 0))

    def bags(self) -> dict:
        """bag_id -> record indices, in order of first appearance."""
        groups = pd.Series(np.arange(len(self))).groupby(list(self.bag_ids), sort=False).indices
        return {bag: np.asarray(idx) for bag, idx in groups.items()}

    def bag_labels(self) -> dict:
        """bag_id -> grade; patches inherit their slide's grade, a mixed bag takes its modal label (ties upward)."""
        out = {}
        for bag, idx in self.bags().items():
            counts = np.bincount(self.labels[idx].clip(min=0), minlength=self.num_grades)
            out[bag] = int(self.num_grades - 1 - np.argmax(counts[::-1]))
        return out

    def subset(self, indices) -> "FeatureDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return FeatureDataset(
            bag_ids=tuple(self.bag_ids[i] for i in indices),
            patch_ids=tuple(self.patch_ids[i] for i in indices),
            labels=self.labels[indices],
            features=self.features[indices],
            num_grades=self.num_grades,
        )

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.features, columns=[f"f{i}" for i in range(self.input_dim)])
        df.insert(0, "label", self.labels)
        df.insert(0, "patch_id", list(self.patch_ids))
        df.insert(0, "bag_id", list(self.bag_ids))
        return df


# =============================================================================
# CSV
# =============================================================================

def _line(row_index: int) -> int:
    # Row 0 of the frame sits on line 2, under the header.
    return int(row_index) + 2


def load_csv(path, num_grades: int, require_labels: bool = True) -> FeatureDataset:
    """
    Parse a dataset CSV. With require_labels=False an empty label cell is
    accepted and stored as -1 (prediction input).
    """
    try:
        # With header=None the header line is row 0, so every later row, the
        # first record included, must not be wider than it (ParserError).
        raw = pd.read_csv(path, header=None, dtype=str, keep_default_na=False, na_filter=False)
    except OSError as e:
        raise DatasetParseError(f"cannot read {path}: {e}")
    except pd.errors.EmptyDataError:
        raise DatasetParseError("file is empty", lines=(1,))
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise DatasetParseError(f"ragged row ({e})", lines=(int(match.group(1)),) if match else ())
    except UnicodeDecodeError as e:
        raise DatasetParseError(f"not UTF-8 ({e})")

    columns = [str(c) for c in raw.iloc[0]]
    df = raw.iloc[1:].reset_index(drop=True)
    df.columns = columns
    if columns[:3] != ["bag_id", "patch_id", "label"]:
        raise DatasetParseError(f"header must start with bag_id,patch_id,label, got {','.join(columns[:3])}", lines=(1,))
    feature_cols = columns[3:]
    if not feature_cols:
        raise DatasetParseError("header names no feature columns", lines=(1,))
    expected = [f"f{i}" for i in range(len(feature_cols))]
    if feature_cols != expected:
        raise DatasetParseError(f"feature columns must be f0..f{len(expected) - 1} in order", lines=(1,))
    if df.empty:
        raise DatasetParseError("file has a header but no records", lines=(1,))

    missing = df.isna().any(axis=1)
    if missing.any():
        raise DatasetParseError("row has fewer fields than the header", lines=(_line(np.flatnonzero(missing)[0]),))

    for col in ("bag_id", "patch_id"):
        bad = ~df[col].str.match(ID_PATTERN)
        if bad.any():
            i = np.flatnonzero(bad)[0]
            raise DatasetParseError(f"{col} {df[col].iloc[i]!r} must match [A-Za-z0-9_-]+", lines=(_line(i),))

    label_text = df["label"].str.strip()
    empty_label = label_text == ""
    if require_labels and empty_label.any():
        raise DatasetParseError("missing label", lines=(_line(np.flatnonzero(empty_label)[0]),))
    labels = pd.to_numeric(label_text.where(~empty_label, str(UNLABELED)), errors="coerce")
    bad = labels.isna() | (labels != labels.round())
    if bad.any():
        i = np.flatnonzero(bad)[0]
        raise DatasetParseError(f"label {df['label'].iloc[i]!r} is not an integer", lines=(_line(i),))
    labels = labels.astype(np.int64)
    out_of_range = (labels >= num_grades) | ((labels < 0) & ~empty_label)
    if out_of_range.any():
        i = np.flatnonzero(out_of_range)[0]
        raise DatasetParseError(f"label {labels.iloc[i]} outside 0..{num_grades - 1}", lines=(_line(i),))

    features = df[feature_cols].apply(pd.to_numeric, errors="coerce")
    bad = features.isna().any(axis=1) | ~np.isfinite(features.fillna(0.0).to_numpy()).all(axis=1)
    if bad.any():
        raise DatasetParseError("non-numeric or non-finite feature value", lines=(_line(np.flatnonzero(bad)[0]),))

    dup = df.duplicated(subset=["bag_id", "patch_id"], keep=False)
    if dup.any():
        first = np.flatnonzero(dup)[0]
        key = (df["bag_id"].iloc[first], df["patch_id"].iloc[first])
        same = np.flatnonzero((df["bag_id"] == key[0]) & (df["patch_id"] == key[1]))
        raise DatasetParseError(
            f"duplicate (bag_id, patch_id) {key}", lines=(_line(same[0]), _line(same[1]))
        )

    dataset = FeatureDataset(
        bag_ids=tuple(df["bag_id"]),
        patch_ids=tuple(df["patch_id"]),
        labels=labels.to_numpy(),
        features=features.to_numpy(dtype=np.float64),
        num_grades=int(num_grades),
    )
    logger.info("[DQMOR Data] Loaded %d patches in %d bags (n=%d) from %s",
                len(dataset), len(dataset.bags()), dataset.input_dim, path)
    return dataset


def save_csv(dataset: FeatureDataset, path) -> None:
    df = dataset.to_frame()
    df["label"] = df["label"].astype(object).where(df["label"] >= 0, "")
    df.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")


# =============================================================================
# SYNTHETIC ORDINAL DATA
# =============================================================================

def latent_curve(t, feature_dim: int, num_grades: int) -> np.ndarray:
    """
    Noise-free feature vectors for latent severities t, shape (len(t), n).
    The first two coordinates trace a half circle of radius N / pi, so one
    unit of severity is one unit of arc length; the rest are zero.
    """
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    radius = num_grades / math.pi
    angle = math.pi * t / num_grades
    curve = np.zeros((t.shape[0], feature_dim))
    curve[:, 0] = radius * np.cos(angle)
    if feature_dim > 1:
        curve[:, 1] = radius * np.sin(angle)
    return curve


def synth_generate(num_bags: int, patches_per_bag: int, feature_dim: int, num_grades: int,
                   noise_sigma: float, seed: int, margin: float = 0.0) -> FeatureDataset:
    """
    Bags with a latent severity t ~ U[0, N); label floor(t). With margin > 0, t
    is pulled into [r + margin/2, r + 1 - margin/2) for its grade r. Every
    patch of a bag is latent_curve(t) plus N(0, sigma^2) noise on every
    coordinate. Draw order: all latent uniforms, then all noise row-major.
    """
    if min(num_bags, patches_per_bag, feature_dim) < 1 or num_grades < 2:
        raise InvalidArgumentError("bags, patches, feature_dim must be >= 1 and num_grades >= 2")
    if noise_sigma < 0:
        raise InvalidArgumentError(f"noise_sigma must be >= 0, got {noise_sigma}")
    if not 0.0 <= margin < 1.0:
        raise InvalidArgumentError(f"margin must lie in [0, 1), got {margin}")

    rng = np.random.Generator(np.random.PCG64(int(seed)))
    t = rng.uniform(0.0, num_grades, num_bags)
    grades = np.minimum(np.floor(t), num_grades - 1).astype(np.int64)
    t = grades + margin / 2.0 + (t - grades) * (1.0 - margin)
    noise = rng.standard_normal((num_bags * patches_per_bag, feature_dim))

    features = np.repeat(latent_curve(t, feature_dim, num_grades), patches_per_bag, axis=0)
    features = features + noise_sigma * noise
    bag_ids = tuple(f"bag{i:05d}" for i in range(num_bags) for _ in range(patches_per_bag))
    patch_ids = tuple(f"p{j:04d}" for _ in range(num_bags) for j in range(patches_per_bag))
    return FeatureDataset(bag_ids, patch_ids, np.repeat(grades, patches_per_bag), features, num_grades)


def split_bags(dataset: FeatureDataset, fractions=(0.6, 0.2, 0.2), seed: int = 0):
    """Partition by bag into len(fractions) datasets; no bag spans two parts."""
    fractions = np.asarray(fractions, dtype=np.float64)
    if fractions.ndim != 1 or np.any(fractions < 0) or abs(fractions.sum() - 1.0) > 1e-9:
        raise InvalidArgumentError(f"fractions must be nonnegative and sum to 1, got {fractions.tolist()}")
    groups = dataset.bags()
    names = list(groups)
    order = np.random.Generator(np.random.PCG64(int(seed))).permutation(len(names))
    cuts = np.round(np.cumsum(fractions)[:-1] * len(names)).astype(int)
    parts = []
    for chunk in np.split(order, cuts):
        idx = [groups[names[j]] for j in sorted(chunk)]
        parts.append(dataset.subset(np.concatenate(idx) if idx else np.empty(0, dtype=np.int64)))
    return tuple(parts)


# =============================================================================
# CHECKPOINTS
# =============================================================================

def save_checkpoint(model, encoder: RffEncoder, path, config=None, created=None) -> None:
    """
    Write model + encoder as JSON. `created` (a datetime, or True for now) is
    only recorded when given, so unstamped saves of equal models are byte-equal.
    """
    document = {
        "version": CHECKPOINT_VERSION,
        "kind": model.kind,
        "encoder": encoder.to_dict(),
        "model": model.to_dict(),
        "config": config.to_dict() if hasattr(config, "to_dict") else (config or {}),
    }
    if created is not None:
        stamp = datetime.now(timezone.utc) if created is True else created
        document["created"] = stamp.isoformat()
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(document, f, allow_nan=False)
        f.write("\n")


def load_checkpoint(path):
    """Returns (model, encoder, config dict)."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"malformed checkpoint document {path}: {e}")
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}")
    if not isinstance(document, dict):
        raise CheckpointError(f"malformed checkpoint document {path}: top level is not an object")

    version = document.get("version")
    if type(version) is not int or version != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint version mismatch: file has {version}, expected {CHECKPOINT_VERSION}")
    missing = [k for k in ("kind", "encoder", "model") if k not in document]
    if missing:
        raise CheckpointError(f"malformed checkpoint document {path}: missing {', '.join(missing)}")

    try:
        model_cls = get_model_class(document["kind"])
        encoder = RffEncoder.from_dict(document["encoder"])
        model = model_cls.from_dict(document["model"])
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"inconsistent checkpoint {path}: {e}")
    if model.state_dim != encoder.rff_dim:
        raise CheckpointError(
            f"inconsistent checkpoint {path}: model state_dim {model.state_dim} != encoder rff_dim {encoder.rff_dim}"
        )
    return model, encoder, document.get("config", {})
