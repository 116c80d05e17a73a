"""Simplex equiangular tight frames and rank-one orthogonal projectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import make_rng
from .errors import DegenerateFrameError, DimensionError, ZeroDirectionError

ZERO_NORM = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class EtfFrame:
    """``C`` unit class directions in ``R^d``, stored as the rows of ``directions``."""

    directions: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.directions, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] < 2 or d.shape[1] < 1:
            raise DimensionError(f"frame needs shape (C>=2, d>=1), got {d.shape}")
        object.__setattr__(self, "directions", _frozen(d))

    @property
    def class_count(self) -> int:
        return self.directions.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.directions.shape[1]

    def gram(self) -> np.ndarray:
        return self.directions @ self.directions.T


def ideal_gram(class_count: int) -> np.ndarray:
    """Gram matrix of any simplex ETF with ``class_count`` vertices."""
    c = class_count
    return (c / (c - 1)) * np.eye(c) - np.full((c, c), 1.0 / (c - 1))


def _canonical_simplex(class_count: int) -> np.ndarray:
    """Centered standard simplex expressed in ``C-1`` Helmert coordinates."""
    c = class_count
    centered = np.eye(c) - 1.0 / c
    centered *= np.sqrt(c / (c - 1))
    # Helmert rows: orthonormal basis of the sum-zero hyperplane in R^C.
    basis = np.zeros((c - 1, c))
    for k in range(1, c):
        basis[k - 1, :k] = 1.0
        basis[k - 1, k] = -k
        basis[k - 1] /= np.sqrt(k * (k + 1))
    return centered @ basis.T


def make_etf(class_count: int, ambient_dim: int, orientation_seed: int = 0) -> EtfFrame:
    """Build a simplex ETF of ``class_count`` unit vectors in ``R^ambient_dim``.

    The frame is constructed analytically in ``C-1`` coordinates. When
    ``ambient_dim > C-1`` it is embedded through a random orthonormal basis
    (QR of a seeded Gaussian matrix, signs fixed by ``diag(R) > 0``); when
    ``ambient_dim == C-1`` the canonical frame is returned and the seed is unused.
    """
    if class_count < 2:
        raise DimensionError(f"class_count must be >= 2, got {class_count}")
    if ambient_dim < class_count - 1:
        raise DimensionError(
            f"ambient_dim below C-1: ambient_dim={ambient_dim}, C={class_count}"
        )
    coords = _canonical_simplex(class_count)
    if ambient_dim == class_count - 1:
        return EtfFrame(coords)
    rng = make_rng(orientation_seed)
    q, r = np.linalg.qr(rng.standard_normal((ambient_dim, class_count - 1)))
    q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
    return EtfFrame(coords @ q.T)


@dataclass(frozen=True, eq=False)
class Projector:
    """Orthogonal projector ``P = I - v v^T / |v|^2`` onto the complement of ``v``.

    ``apply`` works from the raw direction rather than the dense matrix, so a
    feature that is bitwise equal to the direction is sent to exactly zero.
    """

    matrix: np.ndarray
    removed_direction: np.ndarray
    source_direction: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def apply(self, z: np.ndarray) -> np.ndarray:
        """Project a vector or the rows of a matrix."""
        v = self.source_direction
        z = np.asarray(z, dtype=np.float64)
        if z.shape[-1] != v.shape[0]:
            raise DimensionError(f"projector acts on dim {v.shape[0]}, got {z.shape[-1]}")
        coef = np.sum(z * v, axis=-1) / np.sum(v * v)
        return z - np.multiply.outer(coef, v)


def projector_from_direction(v: np.ndarray) -> Projector:
    v = np.asarray(v, dtype=np.float64).ravel()
    norm = float(np.linalg.norm(v))
    if norm < ZERO_NORM:
        raise ZeroDirectionError(f"direction norm {norm:.3e} below {ZERO_NORM}")
    matrix = np.eye(v.size) - np.outer(v, v) / (v @ v)
    return Projector(_frozen(matrix), _frozen(v / norm), _frozen(v))


def _check_forget_index(frame: EtfFrame, forget_index: int) -> None:
    if not 0 <= forget_index < frame.class_count:
        raise IndexError(f"forget_index {forget_index} out of range for C={frame.class_count}")
    if frame.class_count < 3:
        raise DegenerateFrameError(
            "projecting a 2-class frame collapses the retained vertex to the origin"
        )


def projection_norms(frame: EtfFrame, forget_index: int) -> np.ndarray:
    """Norms ``|P v_i|`` of the retained directions before renormalisation."""
    _check_forget_index(frame, forget_index)
    p = projector_from_direction(frame.directions[forget_index])
    kept = np.delete(frame.directions, forget_index, axis=0)
    return np.linalg.norm(p.apply(kept), axis=1)


def project_frame(frame: EtfFrame, forget_index: int) -> EtfFrame:
    """Remove vertex ``forget_index`` and renormalise the projected remainder.

    For a simplex ETF the result is a ``C-1`` vertex simplex ETF living in the
    orthogonal complement of the removed vertex (still expressed in ``R^d``).
    """
    _check_forget_index(frame, forget_index)
    p = projector_from_direction(frame.directions[forget_index])
    kept = p.apply(np.delete(frame.directions, forget_index, axis=0))
    return EtfFrame(kept / np.linalg.norm(kept, axis=1, keepdims=True))


def gram_residual(frame: EtfFrame) -> float:
    """Max absolute deviation of the frame's Gram matrix from the simplex-ETF Gram."""
    return float(np.max(np.abs(frame.gram() - ideal_gram(frame.class_count))))
