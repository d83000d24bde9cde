"""Per-task gradient accumulation over a window of K micro-steps.

Two schedules are supported. In sequential mode every task sees every
micro-batch. In stochastic mode the window is cut into N contiguous blocks of
K/N micro-steps and each block feeds exactly one task's buffer.
"""

from __future__ import annotations

import enum
from typing import Sequence

import numpy as np

from gcond.vecmath import GradVector, as_vector


class AccumMode(str, enum.Enum):
    SEQUENTIAL = "sequential"
    STOCHASTIC = "stochastic"


def _check_schedule(K: int, N: int, mode: AccumMode) -> None:
    if K < 1 or N < 1:
        raise ValueError(f"K and N must be positive, got K={K}, N={N}")
    if mode == AccumMode.STOCHASTIC and K % N != 0:
        raise ValueError(f"stochastic accumulation needs N | K, got K={K}, N={N}")


def task_for_microstep(
    k: int,
    K: int,
    N: int,
    mode: AccumMode,
    block_order: Sequence[int] | None = None,
) -> tuple[int, ...]:
    """Tasks whose gradient is evaluated at micro-step ``k`` of a window.

    Sequential mode returns every task index. Stochastic mode returns the single
    owner of block ``floor(k*N/K)``; ``block_order`` optionally permutes which
    task owns which block.
    """
    mode = AccumMode(mode)
    _check_schedule(K, N, mode)
    if not 0 <= k < K:
        raise ValueError(f"micro-step {k} outside window of {K}")
    if mode == AccumMode.SEQUENTIAL:
        return tuple(range(N))
    block = (k * N) // K
    if block_order is not None:
        return (int(block_order[block]),)
    return (block,)


class Accumulator:
    """Running sums of per-task micro-gradients for one accumulation window.

    ``finalize`` returns the per-task means and clears the buffers. When
    ``shuffle_seed`` is given, stochastic block ownership is permuted per
    window with a generator seeded from ``(shuffle_seed, window)``.
    """

    def __init__(
        self,
        n_tasks: int,
        dim: int,
        K: int,
        mode: AccumMode | str = AccumMode.SEQUENTIAL,
        shuffle_seed: int | None = None,
    ):
        self.mode = AccumMode(mode)
        _check_schedule(K, n_tasks, self.mode)
        self.N = n_tasks
        self.K = K
        self.dim = dim
        self.shuffle_seed = shuffle_seed
        self.window = 0
        self.buffers = [np.zeros(dim) for _ in range(n_tasks)]
        self.counts = [0] * n_tasks

    @property
    def expected_count(self) -> int:
        if self.mode == AccumMode.SEQUENTIAL:
            return self.K
        return self.K // self.N

    def block_order(self) -> list[int] | None:
        if self.mode != AccumMode.STOCHASTIC or self.shuffle_seed is None:
            return None
        rng = np.random.default_rng([self.shuffle_seed, self.window])
        return [int(i) for i in rng.permutation(self.N)]

    def schedule(self) -> list[tuple[int, ...]]:
        """Task selector for each micro-step of the current window."""
        order = self.block_order()
        return [task_for_microstep(k, self.K, self.N, self.mode, order) for k in range(self.K)]

    def accumulate(self, task: int, g: GradVector) -> None:
        if not 0 <= task < self.N:
            raise IndexError(f"task {task} out of range for {self.N} tasks")
        g = as_vector(g)
        if g.shape[0] != self.dim:
            raise ValueError(f"length mismatch: buffer has {self.dim}, got {g.shape[0]}")
        if self.counts[task] >= self.expected_count:
            raise RuntimeError(
                f"task {task} already has {self.counts[task]} of {self.expected_count} contributions"
            )
        self.buffers[task] += g
        self.counts[task] += 1

    def ready(self) -> bool:
        return all(c == self.expected_count for c in self.counts)

    def finalize(self) -> list[GradVector]:
        if not self.ready():
            raise RuntimeError(
                f"finalize called early: counts {self.counts}, expected {self.expected_count} each"
            )
        means = [buf / cnt for buf, cnt in zip(self.buffers, self.counts)]
        self.buffers = [np.zeros(self.dim) for _ in range(self.N)]
        self.counts = [0] * self.N
        self.window += 1
        return means
