"""Conflict resolution on accumulated per-task gradients.

One call to :func:`resolve` turns N averaged task gradients into a single
update direction: the most conflicting pair is found, its cosine is mapped to
an effective conflict angle, a winner is chosen from direction stability and
relative strength, both gradients are projected with angle-dependent
strengths, and the survivors are combined and smoothed with a bias-corrected
EMA.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from gcond import vecmath as vm
from gcond.vecmath import GradVector


class Zone(str, enum.Enum):
    AGREEMENT = "agreement"
    MILD = "mild"
    MODERATE = "moderate"
    CRITICAL = "critical"


@dataclass
class ConductorConfig:
    theta_crit: float = -0.8
    theta_main: float = -0.5
    theta_weak: float = 0.0
    remap_power: float = 2.0
    use_smooth_logic: bool = True
    w_stability: float = 0.8
    w_strength: float = 0.2
    dominance_window: int = 0
    norm_ema_beta: float = 0.95
    momentum_beta: float = 0.9
    projection_max_iters: int = 3
    task_weights: tuple[float, ...] | None = None
    eps: float = 1e-12
    # "post": stability compares against last step's post-resolution gradient
    stability_reference: str = "post"

    def __post_init__(self):
        if not -1.0 <= self.theta_crit < self.theta_main < self.theta_weak <= 1.0:
            raise ValueError(
                "thresholds must satisfy -1 <= theta_crit < theta_main < theta_weak <= 1, got "
                f"({self.theta_crit}, {self.theta_main}, {self.theta_weak})"
            )
        if self.remap_power <= 0:
            raise ValueError("remap_power must be positive")
        if self.w_stability < 0 or self.w_strength < 0 or self.w_stability + self.w_strength <= 0:
            raise ValueError("tie-breaking weights must be non-negative with a positive sum")
        if self.dominance_window < 0:
            raise ValueError("dominance_window must be >= 0")
        for name in ("norm_ema_beta", "momentum_beta"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be in [0, 1)")
        if self.projection_max_iters < 1:
            raise ValueError("projection_max_iters must be >= 1")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.stability_reference not in ("post", "pre"):
            raise ValueError("stability_reference must be 'post' or 'pre'")
        if self.task_weights is not None:
            w = tuple(float(x) for x in self.task_weights)
            if any(x < 0 for x in w) or abs(sum(w) - 1.0) > 1e-9:
                raise ValueError(f"task_weights must be non-negative and sum to 1, got {w}")
            self.task_weights = w

    @property
    def thresholds(self) -> tuple[float, float, float]:
        return self.theta_crit, self.theta_main, self.theta_weak

    @property
    def effective_power(self) -> float:
        return self.remap_power if self.use_smooth_logic else 1.0

    def weights_for(self, n: int) -> tuple[float, ...]:
        if self.task_weights is None:
            return (1.0 / n,) * n
        if len(self.task_weights) != n:
            raise ValueError(f"{len(self.task_weights)} task weights for {n} tasks")
        return self.task_weights


@dataclass
class ConductorState:
    prev_grads: list[GradVector | None] | None = None
    norm_ema: list[float] | None = None
    dominance_streak: tuple[int, int] | None = None
    momentum: GradVector | None = None
    step: int = 0


@dataclass
class ConflictReport:
    pair: tuple[int, int]
    cosine: float
    zone: Zone
    winner: int
    alpha_eff: float
    s_w: float
    s_l: float

    @property
    def loser(self) -> int:
        i, j = self.pair
        return j if self.winner == i else i


def effective_alpha(c: float, cfg: ConductorConfig) -> float:
    """Map a conflicting cosine to an effective conflict angle in (0, pi]."""
    crit, main, weak = cfg.thresholds
    if c >= weak:
        raise ValueError(f"cosine {c} is in the agreement zone (>= {weak})")
    if c <= crit:
        return math.pi
    if c < main:
        return math.pi / 2 + (math.pi / 2) * ((c - main) / (crit - main)) ** cfg.effective_power
    return (math.pi / 2) * (1.0 - (c - main) / (weak - main))


def scaling_factors(alpha_eff: float) -> tuple[float, float]:
    """Winner and loser projection strengths for an effective angle."""
    if not 0.0 <= alpha_eff <= math.pi:
        raise ValueError(f"alpha_eff must be in [0, pi], got {alpha_eff}")
    # sin(pi) is 1.2e-16 in floating point; the winner must stay untouched there
    s_w = 0.0 if alpha_eff >= math.pi else math.sin(alpha_eff)
    s_l = math.sin(min(alpha_eff, math.pi / 2))
    return min(max(s_w, 0.0), 1.0), min(max(s_l, 0.0), 1.0)


def classify_zone(c: float, cfg: ConductorConfig) -> Zone:
    crit, main, weak = cfg.thresholds
    if c >= weak:
        return Zone.AGREEMENT
    if c >= main:
        return Zone.MILD
    if c >= crit:
        return Zone.MODERATE
    return Zone.CRITICAL


def stability_score(current: GradVector, previous: GradVector | None, eps: float = vm.EPS) -> float:
    if previous is None:
        return 0.0
    return vm.cosine(current, previous, eps)


def strength_scores(
    gi: GradVector, gj: GradVector, ema_i: float, ema_j: float, eps: float = vm.EPS
) -> tuple[float, float]:
    if ema_i < 0 or ema_j < 0:
        raise ValueError("norm EMAs must be non-negative")
    ri = vm.l2_norm(gi) / (ema_i + eps)
    rj = vm.l2_norm(gj) / (ema_j + eps)
    total = ri + rj
    if total <= 0:
        return 0.5, 0.5
    return ri / total, rj / total


def arbitration_score(stability: float, strength: float, cfg: ConductorConfig) -> float:
    return cfg.w_stability * max(0.0, stability) + cfg.w_strength * strength


def select_winner(
    i: int,
    j: int,
    grads: Sequence[GradVector],
    state: ConductorState,
    cfg: ConductorConfig,
) -> tuple[int, int]:
    """Pick ``(winner, loser)`` for the pair ``(i, j)``.

    Ties go to the lower index. With a dominance window, a task that has
    already won that many consecutive resolve calls yields to its opponent and
    the streak is cleared.
    """
    if i == j:
        raise ValueError("a task cannot conflict with itself")
    prev = state.prev_grads or [None] * len(grads)
    ema = state.norm_ema or [vm.l2_norm(g) for g in grads]
    s_i = stability_score(grads[i], prev[i], cfg.eps)
    s_j = stability_score(grads[j], prev[j], cfg.eps)
    n_i, n_j = strength_scores(grads[i], grads[j], ema[i], ema[j], cfg.eps)
    score_i = arbitration_score(s_i, n_i, cfg)
    score_j = arbitration_score(s_j, n_j, cfg)
    if score_i > score_j or (score_i == score_j and i < j):
        winner, loser = i, j
    else:
        winner, loser = j, i
    streak = state.dominance_streak
    if cfg.dominance_window > 0 and streak is not None:
        task, count = streak
        if task == winner and count >= cfg.dominance_window:
            winner, loser = loser, winner
            state.dominance_streak = None
    return winner, loser


def pairwise_cosines(grads: Sequence[GradVector], eps: float = vm.EPS) -> dict[tuple[int, int], float]:
    n = len(grads)
    return {(i, j): vm.cosine(grads[i], grads[j], eps) for i in range(n) for j in range(i + 1, n)}


def min_pairwise_cosine(grads: Sequence[GradVector], eps: float = vm.EPS) -> tuple[tuple[int, int] | None, float]:
    """Most conflicting pair and its cosine; ties keep the lexicographically first pair."""
    best, best_c = None, math.inf
    for pair, c in pairwise_cosines(grads, eps).items():
        if c < best_c:
            best, best_c = pair, c
    return best, best_c


def _update_streak(state: ConductorState, winners: list[int]) -> None:
    if not winners:
        state.dominance_streak = None
        return
    streak = state.dominance_streak
    if streak is not None and streak[0] in winners:
        state.dominance_streak = (streak[0], streak[1] + 1)
    else:
        state.dominance_streak = (winners[0], 1)


def _resolve(
    grads: Sequence[GradVector],
    state: ConductorState,
    cfg: ConductorConfig,
    hard: bool,
) -> tuple[GradVector, list[ConflictReport]]:
    if len(grads) == 0:
        raise ValueError("resolve needs at least one task gradient")
    grads = [vm.as_vector(g) for g in grads]
    dim = grads[0].shape[0]
    for g in grads[1:]:
        if g.shape[0] != dim:
            raise ValueError(f"length mismatch: {dim} vs {g.shape[0]}")
    n = len(grads)
    weights = cfg.weights_for(n)
    t = state.step + 1

    norms = [vm.l2_norm(g) for g in grads]
    if state.norm_ema is None:
        state.norm_ema = list(norms)
    else:
        b = cfg.norm_ema_beta
        state.norm_ema = [b * e + (1.0 - b) * x for e, x in zip(state.norm_ema, norms)]

    work = [g.copy() for g in grads]
    reports: list[ConflictReport] = []
    for _ in range(cfg.projection_max_iters):
        pair, c = min_pairwise_cosine(work, cfg.eps)
        if pair is None or c >= cfg.theta_weak:
            break
        zone = classify_zone(c, cfg)
        # winner selection looks at the accumulated gradients, not the working copies
        winner, loser = select_winner(pair[0], pair[1], grads, state, cfg)
        alpha = math.pi if zone == Zone.CRITICAL else effective_alpha(c, cfg)
        if hard:
            s_w, s_l = 0.0, 1.0
        else:
            s_w, s_l = scaling_factors(alpha)
        g_w, g_l = work[winner], work[loser]
        work[loser] = vm.project_out(g_l, g_w, s_l, cfg.eps)
        work[winner] = vm.project_out(g_w, g_l, s_w, cfg.eps)
        reports.append(ConflictReport(pair, c, zone, winner, alpha, s_w, s_l))

    _update_streak(state, [r.winner for r in reports])
    state.prev_grads = work if cfg.stability_reference == "post" else grads

    combined = vm.weighted_sum(work, weights)
    beta = cfg.momentum_beta
    if beta == 0.0:
        unified = combined
    else:
        if state.momentum is None:
            state.momentum = np.zeros(dim)
        elif state.momentum.shape[0] != dim:
            raise ValueError("momentum buffer length does not match gradients")
        state.momentum = beta * state.momentum + (1.0 - beta) * combined
        unified = state.momentum / (1.0 - beta**t)
    state.step = t
    return unified, reports


def resolve(
    grads: Sequence[GradVector], state: ConductorState, cfg: ConductorConfig
) -> tuple[GradVector, list[ConflictReport]]:
    """Arbitrate conflicts among ``grads`` and return ``(unified, reports)``.

    ``state`` is updated in place (norm EMAs, previous gradients, dominance
    streak, momentum, step counter).
    """
    return _resolve(grads, state, cfg, hard=False)


def resolve_as_pcgrad(
    grads: Sequence[GradVector], state: ConductorState, cfg: ConductorConfig
) -> tuple[GradVector, list[ConflictReport]]:
    """Same pipeline as :func:`resolve` with hard one-sided projections.

    Every non-agreement pair projects the loser fully and leaves the winner
    alone, regardless of zone.
    """
    return _resolve(grads, state, cfg, hard=True)


@dataclass
class GradientConductor:
    """Config plus cross-step state, for callers that resolve once per window."""

    config: ConductorConfig = field(default_factory=ConductorConfig)
    hard_projection: bool = False
    state: ConductorState = field(default_factory=ConductorState)

    def __call__(self, grads: Sequence[GradVector]) -> tuple[GradVector, list[ConflictReport]]:
        return _resolve(grads, self.state, self.config, hard=self.hard_projection)

    def reset(self) -> None:
        self.state = ConductorState()
