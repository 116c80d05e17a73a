"""MMD discrepancy and Monte-Carlo checks of the three-term mixture decomposition bound.

For mixtures ``P = a P_u + (1-a) P_n`` and ``Q = b Q_u + (1-b) Q_n`` under an
IPM ``K``::

    |b K(P_u,Q_u) - (1-b) K(P_n,Q_n)| - |a-b| D  <=  K(P, Q)
                                                  <=  |a-b| D + b K(P_u,Q_u) + (1-b) K(P_n,Q_n)

with ``D = K(P_u, P_n)`` (the P-side class separation). The mirrored form
with ``a`` weights and ``D_ref = K(Q_u, Q_n)`` also holds; both separations
are reported. Square-rooted V-statistic MMD is exactly the IPM over the RKHS
unit ball between the empirical measures, so plug-in estimates obey the
inequality sample by sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist

from ._rng import derive_seed, make_rng
from .errors import ConfigError, DimensionError
from .toy_model import ToyModel, forward_features, predict

KERNELS = ("linear", "gaussian")


def median_bandwidth(*samples: np.ndarray) -> float:
    """Median pairwise Euclidean distance of the pooled sample."""
    pooled = np.vstack([np.atleast_2d(s) for s in samples])
    dists = pdist(pooled)
    dists = dists[dists > 0]
    return float(np.median(dists)) if dists.size else 1.0


def _weights(w: Optional[np.ndarray], n: int) -> np.ndarray:
    if w is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(w, dtype=np.float64)
    return w / w.sum()


def mmd(
    x: np.ndarray,
    y: np.ndarray,
    kernel: str = "gaussian",
    bandwidth: Optional[float] = None,
    x_weights: Optional[np.ndarray] = None,
    y_weights: Optional[np.ndarray] = None,
) -> float:
    """Biased (V-statistic) MMD, square-rooted.

    ``kernel="gaussian"`` uses ``exp(-|x-y|^2 / (2 b^2))`` with ``b`` the median
    heuristic on the pooled sample unless ``bandwidth`` is given. Optional
    nonnegative weights turn either side into a weighted empirical measure.
    """
    x, y = np.atleast_2d(np.asarray(x, float)), np.atleast_2d(np.asarray(y, float))
    if x.shape[1] != y.shape[1]:
        raise DimensionError(f"sample dims differ: {x.shape[1]} vs {y.shape[1]}")
    if kernel not in KERNELS:
        raise ConfigError(f"kernel must be one of {KERNELS}, got {kernel!r}")
    wx, wy = _weights(x_weights, len(x)), _weights(y_weights, len(y))
    if kernel == "linear":
        return float(np.linalg.norm(wx @ x - wy @ y))
    if bandwidth is None:
        bandwidth = median_bandwidth(x, y)
    if not bandwidth > 0:
        raise ConfigError(f"bandwidth must be > 0, got {bandwidth}")
    scale = -0.5 / bandwidth**2

    def mean_k(a, wa, b, wb):
        return float(wa @ np.exp(scale * cdist(a, b, "sqeuclidean")) @ wb)

    sq = mean_k(x, wx, x, wx) + mean_k(y, wy, y, wy) - 2.0 * mean_k(x, wx, y, wy)
    return math.sqrt(max(sq, 0.0))


@dataclass(frozen=True)
class MixtureSpec:
    """Two-component Gaussian mixture: forgotten class ``u`` and the rest."""

    mean_u: Sequence[float]
    scale_u: float
    mean_not_u: Sequence[float]
    scale_not_u: float
    weight_alpha: float

    def __post_init__(self):
        if not 0.0 <= self.weight_alpha <= 1.0:
            raise ConfigError(f"weight_alpha must be in [0, 1], got {self.weight_alpha}")
        if len(self.mean_u) != len(self.mean_not_u):
            raise DimensionError("component means have different dimensions")
        if self.scale_u < 0 or self.scale_not_u < 0:
            raise ConfigError("component scales must be >= 0")

    @property
    def dim(self) -> int:
        return len(self.mean_u)

    def sample(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        u = np.asarray(self.mean_u, float) + self.scale_u * rng.standard_normal((n, self.dim))
        r = np.asarray(self.mean_not_u, float) + self.scale_not_u * rng.standard_normal((n, self.dim))
        return u, r


@dataclass(frozen=True)
class BoundTriple:
    lower: float
    middle: float
    upper: float
    delta_c: float  # K(P_u, P_not_u), used in the assembly
    delta_c_reference: float  # K(Q_u, Q_not_u), reported only
    estimator_std: float
    k_forget: float
    k_retain: float
    alpha: float
    beta: float

    def sandwiched(self, slack_sigmas: float = 3.0) -> bool:
        s = slack_sigmas * self.estimator_std
        return self.lower - s <= self.middle <= self.upper + s


def _assemble(alpha, beta, k_u, k_r, delta):
    sep = abs(alpha - beta) * delta
    lower = abs(beta * k_u - (1.0 - beta) * k_r) - sep
    upper = sep + beta * k_u + (1.0 - beta) * k_r
    return lower, upper


def bound_terms(
    p_u: np.ndarray,
    p_r: np.ndarray,
    q_u: np.ndarray,
    q_r: np.ndarray,
    alpha: float,
    beta: float,
    kernel: str = "gaussian",
    bandwidth: Optional[float] = None,
) -> dict:
    """Plug-in estimates of every bound quantity from component samples.

    Mixtures are the weighted empirical measures with exact weights
    ``alpha`` / ``beta``; one kernel bandwidth is shared by all five MMDs.
    """
    if kernel == "gaussian" and bandwidth is None:
        bandwidth = median_bandwidth(p_u, p_r, q_u, q_r)

    def k(a, b, wa=None, wb=None):
        return mmd(a, b, kernel, bandwidth, wa, wb)

    k_u, k_r = k(p_u, q_u), k(p_r, q_r)
    delta, delta_ref = k(p_u, p_r), k(q_u, q_r)
    wp = np.concatenate([np.full(len(p_u), alpha / len(p_u)), np.full(len(p_r), (1 - alpha) / len(p_r))])
    wq = np.concatenate([np.full(len(q_u), beta / len(q_u)), np.full(len(q_r), (1 - beta) / len(q_r))])
    middle = k(np.vstack([p_u, p_r]), np.vstack([q_u, q_r]), wp, wq)
    lower, upper = _assemble(alpha, beta, k_u, k_r, delta)
    return dict(lower=lower, middle=middle, upper=upper, delta_c=delta,
                delta_c_reference=delta_ref, k_forget=k_u, k_retain=k_r)


def verify_decomposition_bound(
    p_spec: MixtureSpec,
    q_spec: MixtureSpec,
    samples_per_component: int,
    kernel: str = "gaussian",
    seed: int = 0,
    repetitions: int = 10,
) -> BoundTriple:
    """Average the plug-in bound over ``repetitions`` independent draws.

    ``estimator_std`` is the sample standard deviation of the middle term
    across repetitions.
    """
    if samples_per_component < 100:
        raise ConfigError("samples_per_component must be >= 100")
    if p_spec.dim != q_spec.dim:
        raise DimensionError("P and Q live in different dimensions")
    reps = []
    for r in range(repetitions):
        rng = make_rng(derive_seed(seed, "bound-rep", r))
        p_u, p_r = p_spec.sample(rng, samples_per_component)
        q_u, q_r = q_spec.sample(rng, samples_per_component)
        reps.append(bound_terms(p_u, p_r, q_u, q_r, p_spec.weight_alpha, q_spec.weight_alpha, kernel))
    avg = {key: math.fsum(t[key] for t in reps) / repetitions for key in reps[0]}
    middles = np.array([t["middle"] for t in reps])
    std = float(middles.std(ddof=1)) if repetitions > 1 else 0.0
    return BoundTriple(estimator_std=std, alpha=p_spec.weight_alpha, beta=q_spec.weight_alpha, **avg)


def random_mixture_pair(rng: np.random.Generator, max_dim: int = 8) -> tuple[MixtureSpec, MixtureSpec]:
    """A random (P, Q) mixture pair for randomized bound trials."""
    d = int(rng.integers(1, max_dim + 1))

    def spec():
        return MixtureSpec(
            mean_u=rng.normal(0.0, 2.0, d).tolist(),
            scale_u=float(rng.uniform(0.05, 1.5)),
            mean_not_u=rng.normal(0.0, 2.0, d).tolist(),
            scale_not_u=float(rng.uniform(0.05, 1.5)),
            weight_alpha=float(rng.uniform(0.0, 1.0)),
        )

    return spec(), spec()


def empirical_bound(
    p_features: np.ndarray,
    p_pred: np.ndarray,
    q_features: np.ndarray,
    q_pred: np.ndarray,
    forget_class: int,
    kernel: str = "gaussian",
) -> BoundTriple:
    """Bound from two models' features on the same inputs, split by predicted class.

    ``alpha`` / ``beta`` are the fractions predicted as ``forget_class``. A
    component with no rows carries zero mixture weight, so any measure may
    stand in for it; the other model's matching component is used (both
    empty: that component's terms vanish).
    """
    alpha = float(np.mean(p_pred == forget_class))
    beta = float(np.mean(q_pred == forget_class))
    p_u, p_r = p_features[p_pred == forget_class], p_features[p_pred != forget_class]
    q_u, q_r = q_features[q_pred == forget_class], q_features[q_pred != forget_class]
    if len(p_u) == 0 and len(q_u) == 0:
        k_r = mmd(p_r, q_r, kernel)
        return BoundTriple(k_r, k_r, k_r, 0.0, 0.0, 0.0, 0.0, k_r, alpha, beta)
    if len(p_r) == 0 and len(q_r) == 0:
        k_u = mmd(p_u, q_u, kernel)
        return BoundTriple(k_u, k_u, k_u, 0.0, 0.0, 0.0, k_u, 0.0, alpha, beta)
    p_u = q_u if len(p_u) == 0 else p_u
    q_u = p_u if len(q_u) == 0 else q_u
    p_r = q_r if len(p_r) == 0 else p_r
    q_r = p_r if len(q_r) == 0 else q_r
    terms = bound_terms(p_u, p_r, q_u, q_r, alpha, beta, kernel)
    return BoundTriple(estimator_std=0.0, alpha=alpha, beta=beta, **terms)


@dataclass(frozen=True)
class SweepPoint:
    step: int
    alpha: float
    k: float


@dataclass(frozen=True)
class AlphaSweep:
    points: list[SweepPoint]

    @property
    def alpha_monotone(self) -> bool:
        """True when alpha never increases along the trajectory (reported, not enforced)."""
        a = [p.alpha for p in self.points]
        return all(y <= x for x, y in zip(a, a[1:]))


def alpha_sweep(
    snapshots: Sequence[tuple[int, ToyModel]],
    forget_inputs: np.ndarray,
    reference_features: np.ndarray,
    forget_class: int,
    kernel: str = "linear",
) -> AlphaSweep:
    """Forgetting coefficient and discrepancy along an unlearning trajectory.

    At each ``(step, model)`` snapshot, ``alpha`` is the fraction of
    ``forget_inputs`` predicted as ``forget_class`` and ``k`` the MMD between
    the snapshot's features on those inputs and ``reference_features``.
    """
    points = []
    for step, model in snapshots:
        alpha = float(np.mean(predict(model, forget_inputs) == forget_class))
        feats = forward_features(model, forget_inputs)
        points.append(SweepPoint(int(step), alpha, mmd(feats, reference_features, kernel)))
    return AlphaSweep(points)

