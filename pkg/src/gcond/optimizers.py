"""Parameter update rules that consume a (unified) gradient.

Each optimizer keeps its state in a small dataclass and exposes a pure-looking
``*_step(params, grad, state)`` function that mutates only the state and
returns new parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from gcond import vecmath as vm
from gcond.vecmath import GradVector


@dataclass
class AdamWState:
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.95
    weight_decay: float = 0.0
    eps: float = 1e-8
    m: GradVector | None = None
    v: GradVector | None = None
    t: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must be in [0, 1)")
        if self.weight_decay < 0 or self.eps <= 0:
            raise ValueError("weight_decay must be >= 0 and eps > 0")


def adamw_step(params: GradVector, grad: GradVector, state: AdamWState) -> GradVector:
    """Decoupled-weight-decay Adam. With ``beta1=0`` this is RMS normalization only."""
    p, g = vm.as_vector(params), vm.as_vector(grad)
    if p.shape != g.shape:
        raise ValueError(f"length mismatch: {p.shape[0]} vs {g.shape[0]}")
    if state.m is None:
        state.m = np.zeros_like(p)
        state.v = np.zeros_like(p)
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m = b1 * state.m + (1.0 - b1) * g
    state.v = b2 * state.v + (1.0 - b2) * g * g
    m_hat = state.m / (1.0 - b1**state.t)
    v_hat = state.v / (1.0 - b2**state.t)
    return p - state.lr * (m_hat / (np.sqrt(v_hat) + state.eps) + state.weight_decay * p)


@dataclass
class LionLarsState:
    """Sign-of-momentum direction scaled by a clipped ``||p|| / ||m||`` trust ratio.

    ``trust_ratio_coef`` plays the role of the learning rate and is expected to
    be overwritten every step by a scheduler. ``param_blocks`` lists block
    sizes for layer-wise ratios; ``None`` means one global block.
    """

    trust_ratio_coef: float = 1e-5
    beta: float = 0.9
    trust_ratio_clip: float = 50.0
    eps: float = 1e-12
    bias_correction: bool = True
    param_blocks: Sequence[int] | None = None
    m: GradVector | None = None
    t: int = 0
    last_trust_ratios: list[float] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("beta must be in [0, 1)")
        if self.trust_ratio_coef <= 0 or self.trust_ratio_clip <= 0:
            raise ValueError("trust_ratio_coef and trust_ratio_clip must be positive")

    def block_slices(self, dim: int) -> list[slice]:
        if self.param_blocks is None:
            return [slice(0, dim)]
        if sum(self.param_blocks) != dim or any(b <= 0 for b in self.param_blocks):
            raise ValueError(f"param_blocks {list(self.param_blocks)} do not partition {dim} parameters")
        edges = np.cumsum([0, *self.param_blocks])
        return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def trust_ratio(p_block: GradVector, m_block: GradVector, clip: float, eps: float = 1e-12) -> float:
    r = vm.l2_norm(p_block) / max(vm.l2_norm(m_block), eps)
    return min(max(r, 0.0), clip)


def lion_lars_step(params: GradVector, grad: GradVector, state: LionLarsState) -> GradVector:
    p, g = vm.as_vector(params), vm.as_vector(grad)
    if p.shape != g.shape:
        raise ValueError(f"length mismatch: {p.shape[0]} vs {g.shape[0]}")
    if state.m is None:
        state.m = np.zeros_like(p)
    state.t += 1
    state.m = state.beta * state.m + (1.0 - state.beta) * g
    m = state.m
    if state.bias_correction and state.beta > 0:
        m = m / (1.0 - state.beta**state.t)
    out = p.copy()
    ratios = []
    for sl in state.block_slices(p.shape[0]):
        r = trust_ratio(p[sl], m[sl], state.trust_ratio_clip, state.eps)
        ratios.append(r)
        out[sl] = p[sl] - state.trust_ratio_coef * r * np.sign(m[sl])
    state.last_trust_ratios = ratios
    return out


@dataclass
class SGDState:
    lr: float = 1.0


def sgd_step(params: GradVector, grad: GradVector, lr: float) -> GradVector:
    p, g = vm.as_vector(params), vm.as_vector(grad)
    if p.shape != g.shape:
        raise ValueError(f"length mismatch: {p.shape[0]} vs {g.shape[0]}")
    return p - lr * g


class Optimizer:
    """Uniform ``step(params, grad)`` front for the three update rules."""

    def __init__(self, name: str, state):
        self.name = name
        self.state = state

    @property
    def lr(self) -> float:
        if self.name == "lion_lars":
            return self.state.trust_ratio_coef
        return self.state.lr

    @lr.setter
    def lr(self, value: float) -> None:
        if self.name == "lion_lars":
            self.state.trust_ratio_coef = value
        else:
            self.state.lr = value

    def step(self, params: GradVector, grad: GradVector) -> GradVector:
        if self.name == "adamw":
            return adamw_step(params, grad, self.state)
        if self.name == "lion_lars":
            return lion_lars_step(params, grad, self.state)
        return sgd_step(params, grad, self.state.lr)


def make_optimizer(name: str, **params) -> Optimizer:
    if name == "adamw":
        return Optimizer(name, AdamWState(**params))
    if name == "lion_lars":
        if "lr" in params:
            params["trust_ratio_coef"] = params.pop("lr")
        return Optimizer(name, LionLarsState(**params))
    if name == "sgd":
        return Optimizer(name, SGDState(**params))
    raise ValueError(f"unknown optimizer {name!r}")
