"""Class unlearning: projection (POUR-P), projection-guided distillation (POUR-D), baselines.

All entry points receive only the forget set; none of them takes retained data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._rng import derive_seed, make_rng
from .errors import ConfigError, DegenerateFrameError, EmptyClassError
from .geometry import Projector, projector_from_direction
from .synthetic import FeatureMatrix
from .toy_model import (
    TrainConfig,
    TrainResult,
    ToyModel,
    backward_l2_feature_loss,
    encoder_features,
    fit_cross_entropy,
    forward_logits,
    optimize,
    softmax,
)

VARIANTS = ("pour_p", "pour_d", "random_label", "gradient_ascent")
DIRECTION_SOURCES = ("head_column", "empirical_mean")

DEFAULT_DISTILL = TrainConfig(steps=500, step_size=0.05, optimizer="momentum")
DEFAULT_BASELINE = TrainConfig(steps=500, step_size=0.1, update_clip=1.0)


@dataclass(frozen=True)
class UnlearnConfig:
    forget_class: int
    variant: str = "pour_p"
    direction_source: str = "head_column"
    train: Optional[TrainConfig] = None  # None: the variant's default above
    snapshot_every: Optional[int] = None  # POUR-D trajectory checkpoints

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.direction_source not in DIRECTION_SOURCES:
            raise ConfigError(f"direction_source must be one of {DIRECTION_SOURCES}")
        if self.forget_class < 0:
            raise ConfigError("forget_class must be >= 0")

    def train_config(self) -> TrainConfig:
        if self.train is not None:
            return self.train
        return DEFAULT_DISTILL if self.variant == "pour_d" else DEFAULT_BASELINE


def _check_class(model: ToyModel, config: UnlearnConfig) -> None:
    if config.forget_class >= model.class_count:
        raise ConfigError(
            f"forget_class {config.forget_class} >= class_count {model.class_count}"
        )


def _forget_rows(forget_set) -> np.ndarray:
    rows = forget_set.rows if isinstance(forget_set, FeatureMatrix) else np.asarray(forget_set, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise EmptyClassError("forget set is empty")
    return rows


def forget_direction(model: ToyModel, config: UnlearnConfig, forget_set=None) -> np.ndarray:
    """The class direction to project out: a head column, or the mean encoder feature over D_f."""
    _check_class(model, config)
    if config.direction_source == "head_column":
        return model.head[:, config.forget_class].copy()
    if forget_set is None:
        raise EmptyClassError("empirical_mean direction needs the forget set")
    z = encoder_features(model, _forget_rows(forget_set))
    return z[0] + (z - z[0]).mean(axis=0)  # exact when all features coincide


def pour_p(model: ToyModel, config: UnlearnConfig, forget_set=None) -> tuple[ToyModel, Projector]:
    """Attach the projection ``P = I - w w^T/|w|^2`` after the extractor.

    The extractor and head are untouched; the forgotten class is masked from
    predictions. ``forget_set`` (inputs of D_f) is needed only for
    ``direction_source="empirical_mean"``.
    """
    if model.class_count < 3:
        raise DegenerateFrameError("projection unlearning needs C >= 3 (C=2 leaves no retained frame)")
    projector = projector_from_direction(forget_direction(model, config, forget_set))
    out = model.copy()
    out.projection = projector
    out.masked_class = config.forget_class
    return out, projector


@dataclass
class DistillResult:
    model: ToyModel
    projector: Optional[Projector]
    losses: list[float] = field(default_factory=list)
    snapshots: list[tuple[int, ToyModel]] = field(default_factory=list)


def pour_d(model: ToyModel, config: UnlearnConfig, forget_set) -> DistillResult:
    """Distil the projected teacher ``(P theta, W)`` into a student extractor on D_f only.

    The student starts from the original extractor, the head stays frozen, and
    the loss is the mean squared feature error ``|theta_s(x) - P theta(x)|^2``.
    """
    x = _forget_rows(forget_set)
    teacher, projector = pour_p(model, config, forget_set)
    targets = teacher.features(x)
    student = model.copy()
    student.projection = None
    student.masked_class = None
    run: TrainResult = optimize(
        student,
        lambda m, idx: backward_l2_feature_loss(m, x[idx], targets[idx]),
        x.shape[0],
        config.train_config(),
        train_head=False,
        snapshot_every=config.snapshot_every,
    )
    return DistillResult(run.model, projector, run.losses, run.snapshots)


def baseline_random_label(model: ToyModel, forget_set, config: UnlearnConfig) -> TrainResult:
    """Cross-entropy on D_f with every label redrawn uniformly from the retained classes."""
    _check_class(model, config)
    x = _forget_rows(forget_set)
    retained = np.delete(np.arange(model.class_count), config.forget_class)
    tc = config.train_config()
    rng = make_rng(derive_seed(tc.seed, "random-label"))
    labels = retained[rng.integers(0, retained.size, size=x.shape[0])]
    return fit_cross_entropy(model, x, labels, tc)


def baseline_gradient_ascent(model: ToyModel, forget_set, config: UnlearnConfig) -> TrainResult:
    """Maximise cross-entropy on D_f with each parameter update clipped in global norm."""
    _check_class(model, config)
    x = _forget_rows(forget_set)
    tc = config.train_config()
    if tc.update_clip is None:
        raise ConfigError("gradient ascent requires update_clip > 0")
    labels = np.full(x.shape[0], config.forget_class)
    return fit_cross_entropy(model, x, labels, tc, ascent=True)


def uniformity_check(model: ToyModel, forget_inputs) -> tuple[float, float]:
    """Worst retained-class logit magnitude and softmax deviation from uniform on D_f.

    The softmax is taken over the retained classes only (the model's
    ``masked_class`` is dropped). Returns ``(max |logit|, max |q - 1/(C-1)|)``.
    """
    if model.masked_class is None:
        raise ConfigError("model has no projection stage / masked class")
    logits = np.delete(forward_logits(model, _forget_rows(forget_inputs)), model.masked_class, axis=1)
    q = softmax(logits)
    return float(np.max(np.abs(logits))), float(np.max(np.abs(q - 1.0 / logits.shape[1])))


def run_unlearning(model: ToyModel, config: UnlearnConfig, forget_set) -> DistillResult:
    """Dispatch on ``config.variant``; every variant returns a :class:`DistillResult`.

    For the baselines ``projector`` is ``None``.
    """
    if config.variant == "pour_p":
        out, proj = pour_p(model, config, forget_set)
        return DistillResult(out, proj)
    if config.variant == "pour_d":
        return pour_d(model, config, forget_set)
    fn = baseline_random_label if config.variant == "random_label" else baseline_gradient_ascent
    run = fn(model, forget_set, config)
    return DistillResult(run.model, None, run.losses, run.snapshots)
