"""Neural-Collapse feature generator: isotropic Gaussians centred on ETF vertices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import make_rng
from .errors import ConfigError, DimensionError, EmptyClassError
from .geometry import EtfFrame


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Rows of features (or raw inputs) with an integer class label per row.

    An empty matrix (``n == 0``) is allowed and reported by ``is_empty``; it is
    what ``split_forget_retain`` returns when a side has no rows.
    """

    rows: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64).ravel()
        if rows.ndim != 2 or rows.shape[1] < 1:
            raise DimensionError(f"rows must be (n, p>=1), got {rows.shape}")
        if rows.shape[0] != labels.shape[0]:
            raise DimensionError(f"{rows.shape[0]} rows but {labels.shape[0]} labels")
        if labels.size and (labels.min() < 0 or labels.max() >= self.class_count):
            raise ConfigError(f"labels must lie in [0, {self.class_count})")
        rows.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    @property
    def is_empty(self) -> bool:
        return len(self) == 0

    def subset(self, mask: np.ndarray) -> FeatureMatrix:
        return FeatureMatrix(self.rows[mask], self.labels[mask], self.class_count)

    def with_rows(self, rows: np.ndarray) -> FeatureMatrix:
        """Same labels, new rows (e.g. the features a model assigns to these inputs)."""
        return FeatureMatrix(rows, self.labels, self.class_count)


@dataclass(frozen=True)
class NcGenConfig:
    frame: EtfFrame
    sigma: float
    samples_per_class: int
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if self.samples_per_class < 1:
            raise ConfigError(f"samples_per_class must be >= 1, got {self.samples_per_class}")


def sample_nc_features(config: NcGenConfig) -> FeatureMatrix:
    """Draw ``samples_per_class`` rows per class from ``N(v_i, sigma^2 I)``.

    Rows are grouped by class (all of class 0 first). The noise is one
    ``standard_normal`` block from the Philox stream of ``config.seed``, so the
    label vector is seed-independent and the rows are a pure function of the config.
    """
    frame, n = config.frame, config.samples_per_class
    labels = np.repeat(np.arange(frame.class_count), n)
    noise = make_rng(config.seed).standard_normal((labels.size, frame.ambient_dim))
    rows = frame.directions[labels] + config.sigma * noise
    return FeatureMatrix(rows, labels, frame.class_count)


def empirical_class_mean(features: FeatureMatrix, class_id: int) -> np.ndarray:
    mask = features.labels == class_id
    if not mask.any():
        raise EmptyClassError(f"no rows with label {class_id}")
    rows = features.rows[mask]
    # Shifted by the first row: identical rows give that row back bit for bit.
    return rows[0] + (rows - rows[0]).mean(axis=0)


def split_forget_retain(features: FeatureMatrix, forget_class: int) -> tuple[FeatureMatrix, FeatureMatrix]:
    """Return ``(D_f, D_r)``: rows of ``forget_class`` and all other rows, order kept."""
    if not 0 <= forget_class < features.class_count:
        raise ConfigError(f"forget_class {forget_class} outside [0, {features.class_count})")
    mask = features.labels == forget_class
    return features.subset(mask), features.subset(~mask)
