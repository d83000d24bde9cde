"""Reference multi-task combiners: weighted sum, PCGrad, CAGrad, GradNorm."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from gcond import vecmath as vm
from gcond.vecmath import GradVector


def weighted_sum(grads: Sequence[GradVector], weights: Sequence[float]) -> GradVector:
    return vm.weighted_sum(grads, weights)


def pcgrad_combine(
    grads: Sequence[GradVector],
    seed: int | Sequence[int] | None = None,
    project_against: str = "original",
) -> GradVector:
    """Gradient surgery: strip each task gradient of its conflicting components.

    Each task's working copy is projected onto the normal plane of every other
    task gradient it has a negative dot product with, visiting the others in a
    seeded random order. ``project_against="running"`` projects against the
    other tasks' already-modified copies instead of the originals.
    """
    if len(grads) == 0:
        raise ValueError("pcgrad_combine needs at least one gradient")
    if project_against not in ("original", "running"):
        raise ValueError(f"project_against must be 'original' or 'running', got {project_against!r}")
    grads = [vm.as_vector(g) for g in grads]
    for g in grads[1:]:
        if g.shape != grads[0].shape:
            raise ValueError("length mismatch between task gradients")
    rng = np.random.default_rng(seed)
    order = [int(i) for i in rng.permutation(len(grads))]
    work = [g.copy() for g in grads]
    for i in order:
        gi = work[i]
        for j in order:
            if j == i:
                continue
            ref = grads[j] if project_against == "original" else work[j]
            d = vm.dot(gi, ref)
            if d < 0:
                gi = gi - (d / vm.dot(ref, ref)) * ref
        work[i] = gi
    return vm.weighted_sum(work, [1.0] * len(work))


def _cagrad_dual(w: float, g1: GradVector, g2: GradVector, g0: GradVector, radius: float) -> float:
    gw = w * g1 + (1.0 - w) * g2
    return float(np.dot(gw, g0)) + radius * vm.l2_norm(gw)


def _cagrad_direction(w: float, g1: GradVector, g2: GradVector, g0: GradVector, radius: float) -> GradVector:
    gw = w * g1 + (1.0 - w) * g2
    nw = vm.l2_norm(gw)
    if nw < vm.EPS:
        return g0.copy()
    return g0 + (radius / nw) * gw


def cagrad_combine(grads: Sequence[GradVector], c: float = 0.5, grid: int = 101) -> GradVector:
    """Two-task CAGrad update.

    Minimizes the dual ``g_w . g0 + c ||g0|| ||g_w||`` over the simplex weight
    ``w`` (``g_w = w g1 + (1 - w) g2``, ``g0`` the average gradient) with a
    coarse grid followed by a bounded scalar refinement, then returns
    ``g0 + c ||g0|| / ||g_w|| * g_w``.
    """
    if len(grads) != 2:
        raise NotImplementedError("cagrad_combine supports exactly two tasks")
    if not 0.0 <= c < 1.0:
        raise ValueError(f"c must be in [0, 1), got {c}")
    g1, g2 = vm.as_vector(grads[0]), vm.as_vector(grads[1])
    if g1.shape != g2.shape:
        raise ValueError("length mismatch between task gradients")
    g0 = 0.5 * (g1 + g2)
    g0_norm = vm.l2_norm(g0)
    if g0_norm < vm.EPS:
        return np.zeros_like(g0)
    if c == 0.0:
        return g0
    radius = c * g0_norm
    ws = np.linspace(0.0, 1.0, grid)
    vals = [_cagrad_dual(w, g1, g2, g0, radius) for w in ws]
    k = int(np.argmin(vals))
    lo, hi = ws[max(k - 1, 0)], ws[min(k + 1, grid - 1)]
    res = minimize_scalar(
        _cagrad_dual, bounds=(lo, hi), args=(g1, g2, g0, radius),
        method="bounded", options={"xatol": 1e-10},
    )
    w_best = float(res.x) if res.fun <= vals[k] else float(ws[k])
    return _cagrad_direction(w_best, g1, g2, g0, radius)


def cagrad_bruteforce(grads: Sequence[GradVector], c: float, step: float = 1e-4) -> GradVector:
    """Dense-grid reference for :func:`cagrad_combine`, used only for validation."""
    g1, g2 = vm.as_vector(grads[0]), vm.as_vector(grads[1])
    g0 = 0.5 * (g1 + g2)
    g0_norm = vm.l2_norm(g0)
    if g0_norm < vm.EPS:
        return np.zeros_like(g0)
    radius = c * g0_norm
    n = int(round(1.0 / step)) + 1
    ws = np.linspace(0.0, 1.0, n)
    gw = ws[:, None] * g1[None, :] + (1.0 - ws)[:, None] * g2[None, :]
    vals = gw @ g0 + radius * np.linalg.norm(gw, axis=1)
    return _cagrad_direction(float(ws[int(np.argmin(vals))]), g1, g2, g0, radius)


@dataclass
class GradNormState:
    loss_weights: np.ndarray
    alpha: float = 1.5
    weight_lr: float = 1e-3
    initial_losses: np.ndarray | None = None

    def __post_init__(self):
        self.loss_weights = np.asarray(self.loss_weights, dtype=np.float64)
        if np.any(self.loss_weights <= 0):
            raise ValueError("GradNorm loss weights must be positive")
        n = len(self.loss_weights)
        self.loss_weights = self.loss_weights * (n / self.loss_weights.sum())

    @classmethod
    def uniform(cls, n_tasks: int, **kw) -> "GradNormState":
        return cls(np.ones(n_tasks), **kw)


def gradnorm_update(
    grads: Sequence[GradVector],
    losses: Sequence[float],
    state: GradNormState,
    min_weight: float = 1e-6,
) -> tuple[np.ndarray, GradVector]:
    """One GradNorm weight update followed by the reweighted gradient sum.

    The target norms are held fixed while the weights take a subgradient step
    on ``sum_i |lambda_i ||g_i|| - target_i|``; weights are then floored at
    ``min_weight`` and rescaled to sum to N.
    """
    n = len(state.loss_weights)
    if len(grads) != n or len(losses) != n:
        raise ValueError(f"expected {n} gradients and losses")
    losses = np.asarray(losses, dtype=np.float64)
    if state.initial_losses is None:
        if np.any(losses == 0):
            raise ValueError("GradNorm needs non-zero initial losses")
        state.initial_losses = losses.copy()
    norms = np.array([vm.l2_norm(g) for g in grads])
    lam = state.loss_weights
    G = lam * norms
    G_bar = G.mean()
    ratios = losses / state.initial_losses
    r = ratios / ratios.mean()
    target = G_bar * r**state.alpha
    lam = lam - state.weight_lr * np.sign(G - target) * norms
    lam = np.maximum(lam, min_weight)
    lam = lam * (n / lam.sum())
    state.loss_weights = lam
    combined = vm.weighted_sum(grads, [float(x) for x in lam])
    return lam.copy(), combined
