"""Representation and classification metrics for class unlearning.

CKA here is linear CKA with every feature dimension centred to zero mean over
the samples before the Gram matrices are formed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Callable, Optional

import numpy as np

from ._rng import derive_seed, make_rng
from .errors import DegenerateInputError, DimensionError, InsufficientDataError, ZeroDirectionError
from .synthetic import FeatureMatrix

FeatureSource = Callable[[np.ndarray], np.ndarray]

_DEGENERATE = 1e-12

# Membership probe hyperparameters.
PROBE_L2 = 1e-3
PROBE_STEPS = 200
PROBE_STEP_SIZE = 0.1


def _rows(x) -> np.ndarray:
    if isinstance(x, FeatureMatrix):
        x = x.rows
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    return x


def linear_cka(x, y) -> float:
    """Linear CKA between two representations of the same ``n`` samples.

    Uses ``<XX^T, YY^T>_F = |X^T Y|_F^2`` so the ``n x n`` Grams are never
    materialised.
    """
    x, y = _rows(x), _rows(y)
    if x.shape[0] != y.shape[0]:
        raise DimensionError(f"row counts differ: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[0] < 2:
        raise DimensionError("CKA needs at least 2 samples")
    x = x - x.mean(axis=0)
    y = y - y.mean(axis=0)
    norm_x = np.linalg.norm(x.T @ x)
    norm_y = np.linalg.norm(y.T @ y)
    if norm_x < _DEGENERATE or norm_y < _DEGENERATE:
        raise DegenerateInputError("centred Gram is zero (constant features)")
    cross = np.linalg.norm(x.T @ y) ** 2
    return float(cross / (norm_x * norm_y))


def rus(phi_f: float, cka_r: float) -> float:
    """Harmonic mean of the forgetting indicator and retention alignment."""
    total = phi_f + cka_r
    if total == 0:
        return 0.0
    return 2.0 * phi_f * cka_r / total


def aus(acc_r_unlearned: float, acc_r_original: float, acc_f_unlearned: float) -> float:
    """``(1 - drop_r) / (1 + acc_f)``; the retain drop is not clamped, so AUS may exceed 1."""
    drop_r = acc_r_original - acc_r_unlearned
    return (1.0 - drop_r) / (1.0 + acc_f_unlearned)


def accuracy(predictions, truth) -> float:
    predictions = np.asarray(predictions).ravel()
    truth = np.asarray(truth).ravel()
    if predictions.shape != truth.shape:
        raise DimensionError(f"length mismatch: {predictions.size} vs {truth.size}")
    if truth.size == 0:
        raise InsufficientDataError("accuracy of an empty set")
    return float(np.mean(predictions == truth))


@dataclass
class MetricsReport:
    """Metric values for one unlearned model; ``None`` marks an absent entry."""

    cka_f_o: Optional[float] = None
    cka_r_o: Optional[float] = None
    cka_f_r: Optional[float] = None
    cka_r_r: Optional[float] = None
    rus_o: Optional[float] = None
    rus_r: Optional[float] = None
    acc_r: Optional[float] = None
    acc_f: Optional[float] = None
    acc_tr: Optional[float] = None
    acc_tf: Optional[float] = None
    aus: Optional[float] = None
    rmia: Optional[float] = None
    head_mean_angle_deg: Optional[float] = None
    head_ideal_angle_deg: Optional[float] = None
    head_gram_residual: Optional[float] = None

    def present(self, name: str) -> bool:
        return getattr(self, name) is not None

    def merged(self, other: MetricsReport) -> MetricsReport:
        """Entries of ``other`` that are present override this report's."""
        out = MetricsReport(**self.to_dict())
        for f in fields(other):
            value = getattr(other, f.name)
            if value is not None:
                setattr(out, f.name, value)
        return out

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def rus_report(
    model_f: FeatureSource,
    model_o: FeatureSource,
    model_r: Optional[FeatureSource],
    d_f: FeatureMatrix,
    d_r: FeatureMatrix,
) -> MetricsReport:
    """CKA family and RUS for an unlearned model against original / retrained references.

    Each ``model_*`` maps an input array to its feature rows. The ``(r)``
    entries are filled only when ``model_r`` is given.
    """
    zf_f, zf_r = model_f(d_f.rows), model_f(d_r.rows)
    report = MetricsReport(
        cka_f_o=linear_cka(zf_f, model_o(d_f.rows)),
        cka_r_o=linear_cka(zf_r, model_o(d_r.rows)),
    )
    report.rus_o = rus(1.0 - report.cka_f_o, report.cka_r_o)
    if model_r is not None:
        report.cka_f_r = linear_cka(zf_f, model_r(d_f.rows))
        report.cka_r_r = linear_cka(zf_r, model_r(d_r.rows))
        report.rus_r = rus(report.cka_f_r, report.cka_r_r)
    return report


def _fit_logistic(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    w = np.zeros(x.shape[1])
    b = 0.0
    n = x.shape[0]
    for _ in range(PROBE_STEPS):
        z = x @ w + b
        p = 0.5 * (1.0 + np.tanh(0.5 * z))  # overflow-free sigmoid
        err = p - y
        w -= PROBE_STEP_SIZE * (x.T @ err / n + PROBE_L2 * w)
        b -= PROBE_STEP_SIZE * float(err.mean())
    return w, b


def rmia_linear_probe(features_train, features_test, folds: int = 5, seed: int = 0) -> float:
    """Membership attack accuracy of a linear probe separating train from test features.

    Train rows are labelled 1 and test rows 0. Each of ``folds`` stratified
    folds is held out in turn; a logistic-loss probe is fit by full-batch
    gradient descent on the remaining rows (standardised with their own
    statistics) and scored on the held-out fold. Returns the mean fold accuracy.
    The larger side is subsampled without replacement to the size of the
    smaller one, so a probe with no signal scores 0.5 rather than the
    majority fraction.
    """
    a, b = _rows(features_train), _rows(features_test)
    if folds < 2:
        raise InsufficientDataError(f"folds must be >= 2, got {folds}")
    if min(len(a), len(b)) < folds:
        raise InsufficientDataError(
            f"{len(a)} member / {len(b)} non-member rows cannot fill {folds} folds"
        )
    rng = make_rng(derive_seed(seed, "rmia-folds"))
    m = min(len(a), len(b))
    a = a if len(a) == m else a[np.sort(rng.choice(len(a), m, replace=False))]
    b = b if len(b) == m else b[np.sort(rng.choice(len(b), m, replace=False))]
    x = np.vstack([a, b])
    y = np.concatenate([np.ones(m), np.zeros(m)])
    fold_of = np.empty(len(y), dtype=np.int64)
    for side in (np.flatnonzero(y == 1), np.flatnonzero(y == 0)):
        fold_of[rng.permutation(side)] = np.arange(side.size) % folds
    scores = []
    for k in range(folds):
        held = fold_of == k
        xtr, ytr = x[~held], y[~held]
        mu, sd = xtr.mean(axis=0), xtr.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        w, b0 = _fit_logistic((xtr - mu) / sd, ytr)
        pred = ((x[held] - mu) / sd @ w + b0) > 0
        scores.append(float(np.mean(pred == (y[held] == 1))))
    return math.fsum(sorted(scores)) / folds


def weight_angle_stats(head: np.ndarray) -> tuple[float, float, list[float]]:
    """Pairwise angles (degrees) between the ``C`` columns of a ``p x C`` head.

    Returns ``(mean_angle, ideal_angle, per_pair)`` where the ideal is the
    simplex-ETF angle ``arccos(-1/(C-1))`` and ``per_pair`` lists the
    ``C(C-1)/2`` angles in ``(i, j), i < j`` order.
    """
    head = np.asarray(head, dtype=np.float64)
    c = head.shape[1]
    if c < 2:
        raise DimensionError("need at least 2 classifier columns")
    norms = np.linalg.norm(head, axis=0)
    if np.any(norms < _DEGENERATE):
        raise ZeroDirectionError("classifier head has a zero column")
    unit = head / norms
    cos = np.clip(unit.T @ unit, -1.0, 1.0)
    iu = np.triu_indices(c, k=1)
    angles = np.degrees(np.arccos(cos[iu])).tolist()
    ideal = math.degrees(math.acos(-1.0 / (c - 1)))
    return math.fsum(angles) / len(angles), ideal, angles
