"""End-to-end experiment: generate -> train -> unlearn -> (reference) -> metrics.

The unlearning stage only ever receives the forget split. Retained rows sit
behind :class:`ForgetOnlyGate`, which refuses (and counts) any access while
the unlearning stage is running.
"""

from __future__ import annotations

import contextlib
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from . import __version__
from ._rng import derive_seed
from .bounds import BoundTriple, alpha_sweep, empirical_bound
from .config import ExperimentConfig
from .errors import PourError, ProtocolViolation, StageError
from .geometry import EtfFrame, gram_residual, make_etf
from .metrics import MetricsReport, accuracy, aus, rmia_linear_probe, rus_report, weight_angle_stats
from .synthetic import FeatureMatrix, NcGenConfig, sample_nc_features, split_forget_retain
from .toy_model import ToyModel, encoder_features, forward_features, init_model, predict, train_supervised
from .unlearn import DistillResult, UnlearnConfig, run_unlearning

Unlearner = Callable[[ToyModel, UnlearnConfig, FeatureMatrix], DistillResult]


class ForgetOnlyGate:
    """Holds a labelled training set and hands out its forget / retain splits.

    Inside :meth:`unlearning` the retain split is locked: every request is
    counted in ``retain_accesses`` and raises :class:`ProtocolViolation`.
    """

    def __init__(self, data: FeatureMatrix, forget_class: int):
        self._forget, self._retain = split_forget_retain(data, forget_class)
        self._locked = False
        self.retain_accesses = 0

    def forget_set(self) -> FeatureMatrix:
        return self._forget

    def retain_set(self) -> FeatureMatrix:
        if self._locked:
            self.retain_accesses += 1
            raise ProtocolViolation("retained data requested during the unlearning stage")
        return self._retain

    @contextlib.contextmanager
    def unlearning(self):
        self._locked = True
        try:
            yield self._forget
        finally:
            self._locked = False


@contextlib.contextmanager
def stage(name: str):
    """Re-raise package and numeric errors tagged with the pipeline stage."""
    try:
        yield
    except StageError:
        raise
    except (PourError, ArithmeticError, ValueError) as exc:
        raise StageError(name, exc) from exc


@dataclass
class RunManifest:
    variant: str
    config_hash: str
    version: str
    seed: int
    metrics: MetricsReport
    bounds: list[BoundTriple] = field(default_factory=list)
    loss_trajectory: Optional[list[float]] = None
    alpha_sweep: Optional[list[dict]] = None
    retain_accesses_during_unlearn: int = 0
    duration_s: float = 0.0

    def record(self, include_timing: bool = False) -> dict:
        """JSON-ready dict with a fixed key order; timing is left out unless asked for."""
        out = {
            "variant": self.variant,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "version": self.version,
            "metrics": {k: _round(v) for k, v in self.metrics.to_dict().items()},
            "bounds": [{k: _round(v) for k, v in asdict(b).items()} for b in self.bounds],
            "loss_trajectory": self.loss_trajectory,
            "alpha_sweep": self.alpha_sweep,
            "retain_accesses_during_unlearn": self.retain_accesses_during_unlearn,
        }
        if include_timing:
            out["duration_s"] = self.duration_s
        return out


def _round(v):
    return None if v is None else round(float(v), 4)


@dataclass
class Artifacts:
    """Everything a run produces besides the manifest (kept for checkpointing)."""

    frame: EtfFrame
    train: FeatureMatrix
    test: FeatureMatrix
    original: ToyModel
    unlearned: DistillResult
    reference: Optional[ToyModel] = None


def generate_data(cfg: ExperimentConfig, seed: int) -> tuple[EtfFrame, FeatureMatrix, FeatureMatrix]:
    frame = make_etf(cfg["C"], cfg["d"], derive_seed(seed, "frame"))
    train = sample_nc_features(NcGenConfig(frame, cfg["sigma"], cfg["samples_per_class"], derive_seed(seed, "train")))
    test = sample_nc_features(NcGenConfig(frame, cfg["sigma"], cfg["test_samples_per_class"], derive_seed(seed, "test")))
    return frame, train, test


def train_original(cfg: ExperimentConfig, seed: int, train: FeatureMatrix) -> ToyModel:
    model = init_model(cfg["d"], cfg["C"], cfg["hidden_dim"], cfg["feature_dim"], derive_seed(seed, "init"))
    return train_supervised(model, train, cfg.train_config(derive_seed(seed, "train-sgd")))


def train_reference(cfg: ExperimentConfig, seed: int, retain: FeatureMatrix) -> ToyModel:
    """Retrained-from-scratch model on D_r only (isolated from the unlearning stage)."""
    model = init_model(cfg["d"], cfg["C"], cfg["hidden_dim"], cfg["feature_dim"], derive_seed(seed, "ref-init"))
    return train_supervised(model, retain, cfg.train_config(derive_seed(seed, "ref-sgd")))


def unlearn_config(cfg: ExperimentConfig, seed: int) -> UnlearnConfig:
    return UnlearnConfig(
        forget_class=cfg["forget_class"],
        variant=cfg["variant"],
        direction_source=cfg["direction_source"],
        train=cfg.unlearn_train_config(derive_seed(seed, "unlearn")),
        snapshot_every=cfg["snapshot_every"],
    )


def unlearn_stage(
    cfg: ExperimentConfig,
    seed: int,
    model: ToyModel,
    gate: ForgetOnlyGate,
    unlearner: Unlearner = run_unlearning,
) -> DistillResult:
    with gate.unlearning() as forget:
        return unlearner(model, unlearn_config(cfg, seed), forget)


def needs_reference(cfg: ExperimentConfig) -> bool:
    return cfg["metrics"]["rus_r"] or cfg["metrics"]["bounds"]


def evaluate(
    cfg: ExperimentConfig,
    seed: int,
    original: ToyModel,
    result: DistillResult,
    reference: Optional[ToyModel],
    train: FeatureMatrix,
    test: FeatureMatrix,
) -> tuple[MetricsReport, list[BoundTriple], Optional[list[dict]]]:
    u = cfg["forget_class"]
    toggles = cfg["metrics"]
    model = result.model
    train_f, train_r = split_forget_retain(train, u)
    test_f, test_r = split_forget_retain(test, u)

    def acc(m, split):
        return accuracy(predict(m, split.rows), split.labels)

    report = MetricsReport(
        acc_r=acc(model, test_r), acc_f=acc(model, test_f),
        acc_tr=acc(model, train_r), acc_tf=acc(model, train_f),
    )
    report.aus = aus(report.acc_r, acc(original, test_r), report.acc_f)

    projected_only = cfg["variant"] == "pour_p" and not toggles["cka_after_projection"]
    if projected_only:
        rep = lambda x: encoder_features(model, x)  # noqa: E731
    else:
        rep = lambda x: forward_features(model, x)  # noqa: E731

    if toggles["rus_o"] and not projected_only:
        ref_fn = reference.features if (toggles["rus_r"] and reference is not None) else None
        report = report.merged(rus_report(rep, original.features, ref_fn, train_f, train_r))
    if toggles["rmia"]:
        report.rmia = rmia_linear_probe(rep(train_f.rows), rep(test_f.rows), cfg["rmia_folds"],
                                        derive_seed(seed, "rmia"))
    if toggles["angles"]:
        mean_angle, ideal, _ = weight_angle_stats(model.head)
        report.head_mean_angle_deg, report.head_ideal_angle_deg = mean_angle, ideal
        unit = model.head / np.linalg.norm(model.head, axis=0)
        report.head_gram_residual = gram_residual(EtfFrame(unit.T))

    bounds = []
    if toggles["bounds"] and reference is not None:
        bounds.append(empirical_bound(
            forward_features(model, train.rows), predict(model, train.rows),
            reference.features(train.rows), predict(reference, train.rows),
            u, cfg["bound_kernel"],
        ))

    sweep = None
    if result.snapshots:
        # Reference features: the retrained model if built, else the projected teacher.
        if reference is not None:
            target = reference.features(train_f.rows)
        elif result.projector is not None:
            target = result.projector.apply(encoder_features(original, train_f.rows))
        else:
            target = original.features(train_f.rows)
        sweep = [asdict(p) for p in alpha_sweep(result.snapshots, train_f.rows, target, u).points]
    return report, bounds, sweep


def run_experiment(
    cfg: ExperimentConfig,
    seed: Optional[int] = None,
    unlearner: Unlearner = run_unlearning,
) -> tuple[RunManifest, Artifacts]:
    """Run every stage for one seed and return the manifest plus the produced objects."""
    seed = cfg["seed"] if seed is None else seed
    started = time.perf_counter()
    with stage("generate"):
        frame, train, test = generate_data(cfg, seed)
    with stage("train"):
        original = train_original(cfg, seed, train)
    gate = ForgetOnlyGate(train, cfg["forget_class"])
    with stage("unlearn"):
        result = unlearn_stage(cfg, seed, original, gate, unlearner)
    reference = None
    if needs_reference(cfg):
        with stage("reference"):
            reference = train_reference(cfg, seed, gate.retain_set())
    with stage("metrics"):
        report, bounds, sweep = evaluate(cfg, seed, original, result, reference, train, test)
    manifest = RunManifest(
        variant=cfg["variant"],
        config_hash=cfg.config_hash(),
        version=__version__,
        seed=seed,
        metrics=report,
        bounds=bounds,
        loss_trajectory=list(result.losses) or None,
        alpha_sweep=sweep,
        retain_accesses_during_unlearn=gate.retain_accesses,
        duration_s=time.perf_counter() - started,
    )
    return manifest, Artifacts(frame, train, test, original, result, reference)
