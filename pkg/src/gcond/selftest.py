"""Fast built-in checks run by ``gcond selftest`` before any experiment."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from gcond import vecmath as vm
from gcond.accumulator import Accumulator
from gcond.conductor import ConductorConfig, ConductorState, effective_alpha, resolve
from gcond.problems import gradient_check, make_conflicting_quadratics, make_dual_loss_regression

FD_RTOL = 1e-4


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def shipped_problems():
    """One representative instance of every shipped problem family."""
    return {
        "conflicting_quadratics(pi)": make_conflicting_quadratics(math.pi, 2.0, 6, condition=20.0),
        "conflicting_quadratics(pi/2)": make_conflicting_quadratics(math.pi / 2, 1.0, 3),
        "dual_loss_regression(l1,l2)": make_dual_loss_regression(200, 5, seed=0),
        "dual_loss_regression(l2,l2)": make_dual_loss_regression(200, 5, seed=1, losses=("l2", "l2")),
    }


def check_gradients(n_points: int = 100) -> list[CheckResult]:
    out = []
    for name, prob in shipped_problems().items():
        t0 = time.perf_counter()
        worst = gradient_check(prob, n_points=n_points, h=1e-5, seed=0)
        ok = max(worst) <= FD_RTOL
        out.append(CheckResult(
            f"fd-oracle {name}", ok,
            "max rel err " + ", ".join(f"{w:.2e}" for w in worst),
            time.perf_counter() - t0,
        ))
    return out


def check_projection(trials: int = 200) -> CheckResult:
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(trials):
        g, w = rng.standard_normal(8), rng.standard_normal(8)
        p = vm.project_out(g, w, 1.0)
        worst = max(worst, abs(vm.dot(p, w)) / (vm.l2_norm(g) * vm.l2_norm(w)))
    return CheckResult("projection orthogonality", worst <= 1e-9, f"max |<p,w>|/(|g||w|) = {worst:.1e}")


def check_alpha_map() -> CheckResult:
    cfg = ConductorConfig()
    cs = np.linspace(-1.0, cfg.theta_weak, 1001)[:-1]
    alphas = [effective_alpha(float(c), cfg) for c in cs]
    monotone = all(b <= a + 1e-15 for a, b in zip(alphas, alphas[1:]))
    d = 1e-6
    jump_main = abs(effective_alpha(cfg.theta_main - d, cfg) - effective_alpha(cfg.theta_main + d, cfg))
    jump_crit = abs(effective_alpha(cfg.theta_crit + d, cfg) - math.pi)
    ok = monotone and jump_main < 1e-4 and jump_crit < 1e-4
    return CheckResult("conflict-angle map", ok, f"monotone={monotone}, gap@main={jump_main:.1e}, gap@crit={jump_crit:.1e}")


def check_bias_correction(steps: int = 50) -> CheckResult:
    cfg = ConductorConfig(momentum_beta=0.9, task_weights=(1.0,))
    state = ConductorState()
    gc = np.array([2.0, -1.0, 0.5])
    worst = 0.0
    for _ in range(steps):
        out, _ = resolve([gc], state, cfg)
        worst = max(worst, vm.l2_norm(out - gc) / vm.l2_norm(gc))
    return CheckResult("EMA bias correction", worst <= 1e-12, f"max rel err {worst:.1e}")


def check_accumulator_mean() -> CheckResult:
    rng = np.random.default_rng(1)
    acc = Accumulator(2, 4, 6, "stochastic")
    contrib = {0: [], 1: []}
    for tasks in acc.schedule():
        for i in tasks:
            g = rng.standard_normal(4)
            contrib[i].append(g)
            acc.accumulate(i, g)
    means = acc.finalize()
    err = max(vm.l2_norm(means[i] - np.mean(contrib[i], axis=0)) for i in (0, 1))
    return CheckResult("accumulator exact mean", err <= 1e-15, f"max err {err:.1e}")


def run_selftest(n_points: int = 100) -> list[CheckResult]:
    results = check_gradients(n_points)
    for check in (check_projection, check_alpha_map, check_bias_correction, check_accumulator_mean):
        t0 = time.perf_counter()
        r = check()
        r.seconds = time.perf_counter() - t0
        results.append(r)
    return results
