"""Synthetic multi-task objectives with analytic gradients.

Every problem carries N loss functions with closed-form gradients, optional
additive Gaussian micro-batch noise drawn from a counter-based generator keyed
by ``(seed, task, micro_step)``, and a starting point. The finite-difference
oracle here is independent of the analytic gradients and is what the
self-test checks them against.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from gcond import vecmath as vm
from gcond.vecmath import GradVector

LossFn = Callable[[np.ndarray], float]
GradFn = Callable[[np.ndarray], np.ndarray]

_KEY_BITS = 40


@dataclass(frozen=True)
class MultiTaskProblem:
    name: str
    dim: int
    loss_fns: tuple[LossFn, ...]
    grad_fns: tuple[GradFn, ...]
    noise_sigma: tuple[float, ...]
    theta0: np.ndarray
    params: dict = field(default_factory=dict)

    @property
    def n_tasks(self) -> int:
        return len(self.loss_fns)

    def loss(self, task: int, theta) -> float:
        return float(self.loss_fns[task](vm.as_vector(theta)))

    def losses(self, theta) -> list[float]:
        return [self.loss(i, theta) for i in range(self.n_tasks)]

    def grad(self, task: int, theta) -> GradVector:
        return np.asarray(self.grad_fns[task](vm.as_vector(theta)), dtype=np.float64)

    def with_noise(self, sigma: float | Sequence[float]) -> "MultiTaskProblem":
        if np.isscalar(sigma):
            sigma = (float(sigma),) * self.n_tasks
        sigma = tuple(float(s) for s in sigma)
        if len(sigma) != self.n_tasks or any(s < 0 for s in sigma):
            raise ValueError(f"need {self.n_tasks} non-negative noise levels, got {sigma}")
        return MultiTaskProblem(
            self.name, self.dim, self.loss_fns, self.grad_fns, sigma, self.theta0, self.params
        )


def _noise_generator(seed: int, task: int, k: int) -> np.random.Generator:
    if seed < 0 or task < 0 or k < 0 or k >= 1 << _KEY_BITS:
        raise ValueError(f"noise key out of range: seed={seed}, task={task}, k={k}")
    key = np.array([seed, (task << _KEY_BITS) | k], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def micro_batch_noise(problem: MultiTaskProblem, task: int, k: int, seed: int) -> np.ndarray:
    """The additive noise realization for ``(seed, task, k)``; zeros when noise is off."""
    sigma = problem.noise_sigma[task]
    if sigma == 0.0:
        return np.zeros(problem.dim)
    return sigma * _noise_generator(seed, task, k).standard_normal(problem.dim)


def micro_batch_gradient(problem: MultiTaskProblem, task: int, theta, k: int, seed: int) -> GradVector:
    """Analytic gradient plus keyed noise; identical keys give identical output."""
    if not 0 <= task < problem.n_tasks:
        raise IndexError(f"task {task} out of range")
    g = problem.grad(task, theta)
    if problem.noise_sigma[task] == 0.0:
        return g
    return g + micro_batch_noise(problem, task, k, seed)


def finite_difference_oracle(problem: MultiTaskProblem, task: int, theta, h: float = 1e-5) -> GradVector:
    """Central-difference gradient of one task's loss."""
    if h <= 0:
        raise ValueError("h must be positive")
    return finite_difference(problem.loss_fns[task], theta, h)


def finite_difference(f: LossFn, theta, h: float = 1e-5) -> np.ndarray:
    x0 = vm.as_vector(theta)
    grad = np.zeros_like(x0)
    for j in range(x0.shape[0]):
        x = x0.copy()
        x[j] = x0[j] + h
        f_plus = f(x)
        x[j] = x0[j] - h
        f_minus = f(x)
        grad[j] = (f_plus - f_minus) / (2 * h)
    return grad


def gradient_check(
    problem: MultiTaskProblem,
    n_points: int = 100,
    h: float = 1e-5,
    seed: int = 0,
    spread: float = 1.0,
) -> list[float]:
    """Worst relative FD error per task over random points around ``theta0``."""
    rng = np.random.default_rng(seed)
    worst = [0.0] * problem.n_tasks
    for _ in range(n_points):
        theta = problem.theta0 + spread * rng.standard_normal(problem.dim)
        for task in range(problem.n_tasks):
            an = problem.grad(task, theta)
            fd = finite_difference_oracle(problem, task, theta, h)
            err = vm.l2_norm(fd - an) / max(vm.l2_norm(an), 1e-8)
            worst[task] = max(worst[task], err)
    return worst


def stream_digest(chunks: Sequence[np.ndarray]) -> str:
    """Short hex digest of a sequence of float arrays (used to fingerprint noise streams)."""
    h = hashlib.sha256()
    for c in chunks:
        h.update(np.ascontiguousarray(c, dtype=np.float64).tobytes())
    return h.hexdigest()[:16]


def _random_rotation(rng: np.random.Generator, dim: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def make_conflicting_quadratics(
    angle: float,
    scale_ratio: float = 1.0,
    dim: int = 2,
    condition: float | Sequence[float] = 1.0,
    seed: int = 0,
    noise_sigma: float | Sequence[float] = 0.0,
    theta0: Sequence[float] | None = None,
) -> MultiTaskProblem:
    """Two quadratic bowls whose gradients at the origin meet at ``angle``.

    ``L_i(x) = 0.5 (x - mu_i)^T A_i (x - mu_i)``. The first gradient at the
    origin is the unit vector ``e_1``, the second has norm ``scale_ratio`` and
    lies in the ``(e_1, e_2)`` plane at the requested angle. ``condition`` sets
    the eigenvalue spread of each ``A_i`` (one value for both or one per task);
    eigenvectors come from a rotation seeded by ``seed``.
    """
    if not 0.0 < angle <= math.pi:
        raise ValueError(f"angle must be in (0, pi], got {angle}")
    if scale_ratio <= 0:
        raise ValueError(f"scale_ratio must be positive, got {scale_ratio}")
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    conds = (float(condition),) * 2 if np.isscalar(condition) else tuple(float(c) for c in condition)
    if len(conds) != 2 or any(c < 1 for c in conds):
        raise ValueError(f"condition must be >= 1 (one value or one per task), got {condition}")

    rng = np.random.default_rng(seed)
    g0 = [np.zeros(dim), np.zeros(dim)]
    g0[0][0] = 1.0
    g0[1][0] = scale_ratio * math.cos(angle)
    g0[1][1] = scale_ratio * math.sin(angle)
    if angle == math.pi:
        g0[1][1] = 0.0

    mats, mus = [], []
    for i in range(2):
        q = _random_rotation(rng, dim)
        eig = np.geomspace(1.0, conds[i], dim)
        a = (q * eig) @ q.T
        a = 0.5 * (a + a.T)
        mats.append(a)
        mus.append(-np.linalg.solve(a, g0[i]))

    def _loss(a, mu):
        return lambda x: 0.5 * float((x - mu) @ a @ (x - mu))

    def _grad(a, mu):
        return lambda x: a @ (x - mu)

    start = np.zeros(dim) if theta0 is None else vm.as_vector(theta0).copy()
    prob = MultiTaskProblem(
        name="conflicting_quadratics",
        dim=dim,
        loss_fns=tuple(_loss(a, m) for a, m in zip(mats, mus)),
        grad_fns=tuple(_grad(a, m) for a, m in zip(mats, mus)),
        noise_sigma=(0.0, 0.0),
        theta0=start,
        params={"A": mats, "mu": mus},
    )
    return prob.with_noise(noise_sigma)


def make_dual_loss_regression(
    n_points: int = 200,
    dim: int = 5,
    seed: int = 0,
    losses: tuple[str, str] = ("l1", "l2"),
    target_noise: float = 1.0,
    outlier_fraction: float = 0.1,
    noise_sigma: float | Sequence[float] = 0.0,
) -> MultiTaskProblem:
    """Linear regression scored by two losses on one synthetic dataset.

    Residuals are ``r = y - X theta``. ``"l1"`` is the mean absolute residual
    (subgradient ``sign(0) = 0``), ``"l2"`` the mean squared residual. Targets
    carry Laplace noise plus a fraction of large one-sided outliers, so the L1
    and L2 minimizers differ and their gradients pull apart between them.
    """
    if n_points < dim:
        raise ValueError(f"need n_points >= dim, got {n_points} < {dim}")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_points, dim))
    w_true = rng.standard_normal(dim)
    y = X @ w_true
    if target_noise > 0:
        y = y + target_noise * rng.laplace(size=n_points)
        n_out = int(round(outlier_fraction * n_points))
        if n_out:
            idx = rng.choice(n_points, size=n_out, replace=False)
            y[idx] += 10.0 * target_noise * (1.0 + rng.random(n_out))

    def _l1(x):
        return float(np.mean(np.abs(y - X @ x)))

    def _l1_grad(x):
        return -(X.T @ np.sign(y - X @ x)) / n_points

    def _l2(x):
        r = y - X @ x
        return float(np.mean(r * r))

    def _l2_grad(x):
        return -2.0 * (X.T @ (y - X @ x)) / n_points

    table = {"l1": (_l1, _l1_grad), "l2": (_l2, _l2_grad)}
    for name in losses:
        if name not in table:
            raise ValueError(f"unknown loss {name!r}; expected 'l1' or 'l2'")
    prob = MultiTaskProblem(
        name="dual_loss_regression",
        dim=dim,
        loss_fns=tuple(table[n][0] for n in losses),
        grad_fns=tuple(table[n][1] for n in losses),
        noise_sigma=(0.0,) * len(losses),
        theta0=np.zeros(dim),
        params={"X": X, "y": y, "w_true": w_true},
    )
    return prob.with_noise(noise_sigma)


PROBLEMS = {
    "conflicting_quadratics": make_conflicting_quadratics,
    "dual_loss_regression": make_dual_loss_regression,
}


def build_problem(name: str, params: dict) -> MultiTaskProblem:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return factory(**params)
