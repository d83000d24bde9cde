"""Dense float64 vector kernel shared by every combiner and optimizer.

Gradients are plain 1-D ``numpy.ndarray`` objects of dtype float64. All
reductions go through this module so that the summation order is the same
everywhere a value is compared bit-for-bit.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

EPS = 1e-12

GradVector = np.ndarray


def as_vector(x) -> GradVector:
    """Return ``x`` as a contiguous 1-D float64 array (no copy if already one)."""
    v = np.ascontiguousarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    return v


def _check_pair(a: GradVector, b: GradVector) -> None:
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")


def dot(a: GradVector, b: GradVector) -> float:
    a, b = as_vector(a), as_vector(b)
    _check_pair(a, b)
    return float(np.dot(a, b))


def l2_norm(a: GradVector) -> float:
    return math.sqrt(dot(a, a))


def cosine(a: GradVector, b: GradVector, eps: float = EPS) -> float:
    """Cosine similarity clamped to [-1, 1].

    A vector with norm below ``eps`` is treated as conflict-free with anything,
    so the result is 0 rather than an error.
    """
    a, b = as_vector(a), as_vector(b)
    _check_pair(a, b)
    na, nb = l2_norm(a), l2_norm(b)
    if na < eps or nb < eps:
        return 0.0
    c = dot(a, b) / (max(na, eps) * max(nb, eps))
    return min(1.0, max(-1.0, c))


def axpy(y: GradVector, alpha: float, x: GradVector) -> GradVector:
    y, x = as_vector(y), as_vector(x)
    _check_pair(y, x)
    return y + alpha * x


def project_out(g: GradVector, onto: GradVector, strength: float, eps: float = EPS) -> GradVector:
    """Remove ``strength`` times the component of ``g`` along ``onto``.

    ``strength=1`` is the full orthogonal projection, ``strength=0`` returns an
    exact copy of ``g``.
    """
    g, onto = as_vector(g), as_vector(onto)
    _check_pair(g, onto)
    if not 0.0 <= strength <= 1.0:
        raise ValueError(f"strength must be in [0, 1], got {strength}")
    if strength == 0.0:
        return g.copy()
    coef = dot(g, onto) / max(dot(onto, onto), eps * eps)
    return g - (strength * coef) * onto


def weighted_sum(vectors: Sequence[GradVector], weights: Sequence[float]) -> GradVector:
    """``sum_i weights[i] * vectors[i]`` accumulated in index order."""
    if len(vectors) == 0:
        raise ValueError("weighted_sum of an empty list")
    if len(vectors) != len(weights):
        raise ValueError(f"{len(vectors)} vectors but {len(weights)} weights")
    first = as_vector(vectors[0])
    out = weights[0] * first
    for w, v in zip(weights[1:], vectors[1:]):
        v = as_vector(v)
        _check_pair(first, v)
        out = out + w * v
    return out


def clip_by_norm(g: GradVector, max_norm: float | None) -> GradVector:
    """Rescale ``g`` so its L2 norm is at most ``max_norm`` (``None`` disables)."""
    g = as_vector(g)
    if max_norm is None:
        return g
    n = l2_norm(g)
    if n > max_norm:
        return g * (max_norm / n)
    return g
