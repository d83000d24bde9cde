"""End-to-end acceptance criteria, one test each, at their stated tolerances.

Every test appends a PASS/FAIL line (with the measured numbers) to the
terminal summary, so ``pytest tests/test_acceptance.py`` doubles as a report.
"""

import math
import time
from pathlib import Path

import numpy as np

from conftest import ACCEPTANCE_LINES
from gcond import vecmath as vm
from gcond.accumulator import Accumulator
from gcond.baselines import cagrad_bruteforce, cagrad_combine
from gcond.conductor import ConductorConfig, ConductorState, Zone, effective_alpha, resolve
from gcond.harness.config import config_from_dict
from gcond.harness.runner import run_experiment, run_method
from gcond.optimizers import AdamWState, LionLarsState, adamw_step, lion_lars_step, trust_ratio
from gcond.problems import make_conflicting_quadratics, micro_batch_gradient
from gcond.selftest import check_gradients

SEEDS = [11, 42, 2025]
WEIGHTS = [0.85, 0.15]

# pi-angle conflict problem shared by criteria 6 and 7
CONFLICT_PROBLEM = {
    "name": "conflicting_quadratics",
    "params": {"angle": math.pi, "scale_ratio": 1.0, "dim": 8, "condition": 100.0, "noise_sigma": 0.1},
}


def report(number, title, ok, detail, seconds, limit):
    in_time = seconds < limit
    status = "PASS" if ok and in_time else "FAIL"
    line = f"[{status}] {number:>2}. {title}: {detail} ({seconds:.2f}s, limit {limit:g}s)"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line
    assert in_time, line


def experiment(problem, methods, steps, seeds=SEEDS, **over):
    d = {
        "schema_version": 1,
        "problem": problem,
        "methods": methods,
        "optimizer": {"name": "adamw", "lr": 0.01},
        "task_weights": WEIGHTS,
        "K": 24,
        "total_steps": steps,
        "seeds": seeds,
    }
    d.update(over)
    return config_from_dict(d)


def alpha_reference(c, crit, main, weak, p):
    c = np.asarray(c, dtype=float)
    moderate = (math.pi / 2) * (1.0 + ((main - c) / (main - crit)) ** p)
    mild = (math.pi / 2) * (weak - c) / (weak - main)
    return np.where(c <= crit, math.pi, np.where(c < main, moderate, mild))


def test_01_piecewise_map():
    t0 = time.perf_counter()
    cfg = ConductorConfig()
    crit, main, weak = cfg.thresholds
    grid = np.linspace(-1.0, weak, 10_001)[:-1]
    ours = np.array([effective_alpha(float(c), cfg) for c in grid])
    ref = alpha_reference(grid, crit, main, weak, cfg.remap_power)
    max_err = float(np.max(np.abs(ours - ref)))
    d = 1e-6
    jump_main = abs(effective_alpha(main - d, cfg) - effective_alpha(main + d, cfg))
    jump_crit = abs(effective_alpha(crit + d, cfg) - math.pi)
    monotone = bool(np.all(np.diff(ours) <= 0))
    ok = max_err <= 1e-12 and jump_main <= 1e-4 and jump_crit <= 1e-4 and monotone
    detail = f"max |diff| {max_err:.1e}, jumps crit {jump_crit:.1e} main {jump_main:.1e}, monotone {monotone}"
    report(1, "piecewise alpha map", ok, detail, time.perf_counter() - t0, 1.0)


def test_02_zone_semantics():
    t0 = time.perf_counter()
    cfg = ConductorConfig(momentum_beta=0.0, task_weights=(0.85, 0.15))
    e1 = np.array([1.0, 0.0, 0.0])

    def pair(c, scale=2.0):
        return [e1.copy(), scale * np.array([c, math.sqrt(1 - c * c), 0.0])]

    checks = {}
    # Agreement
    g = pair(0.3)
    out, reps = resolve(g, ConductorState(), cfg)
    checks["agreement"] = not reps and out.tobytes() == vm.weighted_sum(g, cfg.task_weights).tobytes()
    # Critical: give task 0 a stable history so it wins
    g = pair(-0.9)
    st = ConductorState(prev_grads=[e1.copy(), None])
    _, reps = resolve(g, st, cfg)
    w, l = reps[0].winner, reps[0].loser
    checks["critical"] = (
        reps[0].zone == Zone.CRITICAL
        and st.prev_grads[w].tobytes() == g[w].tobytes()
        and abs(vm.dot(st.prev_grads[l], g[w])) / (vm.l2_norm(g[l]) * vm.l2_norm(g[w])) <= 1e-9
    )
    # Mild
    _, reps = resolve(pair(-0.3), ConductorState(), cfg)
    checks["mild"] = reps[0].zone == Zone.MILD and reps[0].s_w == reps[0].s_l
    # Moderate
    _, reps = resolve(pair(-0.65), ConductorState(), cfg)
    checks["moderate"] = reps[0].zone == Zone.MODERATE and reps[0].s_l == 1.0 and 0.0 < reps[0].s_w < 1.0
    detail = ", ".join(f"{k} {'ok' if v else 'BAD'}" for k, v in checks.items())
    report(2, "zone semantics", all(checks.values()), detail, time.perf_counter() - t0, 1.0)


def test_03_variance_reduction():
    t0 = time.perf_counter()
    sigma, windows, dim = 1.0, 1000, 8
    prob = make_conflicting_quadratics(1.0, dim=dim, noise_sigma=sigma)
    theta = np.zeros(dim)
    ratios = {}
    for K in (1, 6, 24):
        acc = Accumulator(1, dim, K)
        means = np.empty((windows, dim))
        for w in range(windows):
            for k in range(K):
                acc.accumulate(0, micro_batch_gradient(prob, 0, theta, w * K + k, seed=7))
            means[w] = acc.finalize()[0]
        ratios[K] = float(np.var(means, axis=0, ddof=1).mean() * K / sigma**2)
    ok = all(abs(r - 1.0) <= 0.2 for r in ratios.values())
    detail = "K*Var/Var1 " + ", ".join(f"K={k}: {r:.3f}" for k, r in ratios.items())
    report(3, "variance reduction 1/K", ok, detail, time.perf_counter() - t0, 30.0)


def test_04_gradient_oracle():
    t0 = time.perf_counter()
    results = check_gradients(n_points=100)
    ok = all(r.passed for r in results)
    worst = max(max(float(x) for x in r.detail.split("err ")[1].split(", ")) for r in results)
    detail = f"{len(results)} problems, worst relative error {worst:.1e}"
    report(4, "finite-difference oracle", ok, detail, time.perf_counter() - t0, 10.0)


def test_05_sequential_stochastic_equivalence():
    t0 = time.perf_counter()
    problem = {"name": "dual_loss_regression",
               "params": {"n_points": 200, "dim": 5, "seed": 0, "noise_sigma": 0.5}}
    cfg = experiment(problem, ["gcond_sequential", "gcond_stochastic"], 300)
    finals = {m: np.array([run_method(cfg, m, s)[-1].losses for s in SEEDS]) for m in cfg.methods}
    a, b = finals["gcond_sequential"], finals["gcond_stochastic"]
    ma, mb = a.mean(axis=0), b.mean(axis=0)
    sa, sb = a.std(axis=0, ddof=1), b.std(axis=0, ddof=1)
    rel = np.abs(ma - mb) / np.maximum(np.abs(ma), np.abs(mb))
    overlap = (ma - sa <= mb + sb) & (mb - sb <= ma + sa)
    ok = bool(np.all(rel < 0.05) and np.all(overlap))
    detail = (f"seq {np.round(ma, 4).tolist()} ± {np.round(sa, 4).tolist()}, "
              f"stoch {np.round(mb, 4).tolist()} ± {np.round(sb, 4).tolist()}, "
              f"rel diff {np.round(rel, 4).tolist()}, overlap {overlap.tolist()}")
    report(5, "sequential/stochastic equivalence", ok, detail, time.perf_counter() - t0, 60.0)


def test_06_conflict_escape():
    t0 = time.perf_counter()
    steps = 300
    crit = ConductorConfig().theta_crit
    cfg = experiment(CONFLICT_PROBLEM, ["pcgrad", "gcond_sequential", "gcond_stochastic"], steps)
    pc_medians, exits, after = [], {}, {}
    for s in SEEDS:
        pc = np.array([r.min_cosine for r in run_method(cfg, "pcgrad", s)])
        pc_medians.append(float(np.median(pc)))
        for m in ("gcond_sequential", "gcond_stochastic"):
            tr = np.array([r.min_cosine for r in run_method(cfg, m, s)])
            idx = np.flatnonzero(tr >= crit)
            e = int(idx[0]) if idx.size else steps
            exits.setdefault(m, []).append(e)
            after.setdefault(m, []).append(float(np.median(tr[e:])) if e < steps else -1.0)
    ok = (
        max(pc_medians) < -0.9
        and all(e <= steps // 10 for v in exits.values() for e in v)
        and all(x > crit for v in after.values() for x in v)
    )
    detail = f"pcgrad median {np.round(pc_medians, 3).tolist()}; " + "; ".join(
        f"{m} exit step {exits[m]} median after {np.round(after[m], 3).tolist()}" for m in exits
    )
    report(6, "conflict escape", ok, detail, time.perf_counter() - t0, 60.0)


def test_07_comparative_convergence():
    t0 = time.perf_counter()
    methods = ["baseline", "pcgrad", "cagrad", "gradnorm", "gcond_stochastic", "gcond_as_pcgrad"]
    cfg = experiment(CONFLICT_PROBLEM, methods, 300)
    final = {m: float(np.mean([run_method(cfg, m, s)[-1].combined_loss for s in SEEDS])) for m in methods}
    best_ref = min(final[m] for m in ("baseline", "pcgrad", "cagrad", "gradnorm"))
    g, asp, pc = final["gcond_stochastic"], final["gcond_as_pcgrad"], final["pcgrad"]
    gcond_best = g <= best_ref
    between = min(g, pc) <= asp <= max(g, pc)
    detail = ", ".join(f"{m} {v:.4g}" for m, v in final.items())
    detail += f"; gcond <= best reference {gcond_best}; as_pcgrad between {between}"
    report(7, "comparative convergence", gcond_best and between, detail, time.perf_counter() - t0, 300.0)


def test_08_optimizer_contracts():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    st = AdamWState(lr=1e-3, beta1=0.0)
    p = rng.standard_normal(6)
    collapse = True
    for _ in range(10):
        g = rng.standard_normal(6)
        p = adamw_step(p, g, st)
        collapse &= (st.m / (1.0 - st.beta1**st.t)).tobytes() == g.tobytes()

    lion = LionLarsState(trust_ratio_coef=1.0, beta=0.9, trust_ratio_clip=1e12)
    q = rng.standard_normal(6)
    signs_ok = True
    for _ in range(10):
        g = rng.standard_normal(6)
        if lion.m is None:
            g[0] = 0.0  # first step: m[0] == 0 exercises sign(0) = 0
        new = lion_lars_step(q, g, lion)
        units = (q - new) / lion.last_trust_ratios[0]
        signs_ok &= bool(np.all(np.isin(np.round(units, 9), [-1.0, 0.0, 1.0])))
        q = new

    pb, mb = np.zeros(4), np.zeros(4)
    pb[0], mb[0] = 10.0, 0.1
    clipped = trust_ratio(pb, mb, clip=50.0) == 50.0

    cfg = ConductorConfig(momentum_beta=0.9, task_weights=(0.5, 0.5))
    g = [np.array([1.0, 3.0]), np.array([3.0, 1.0])]
    out, _ = resolve(g, ConductorState(), cfg)
    combined = vm.weighted_sum(g, cfg.task_weights)
    bias_err = float(np.max(np.abs(out - combined) / np.abs(combined)))
    bias_ok = bias_err <= 2 * np.finfo(float).eps

    ok = collapse and signs_ok and clipped and bias_ok
    detail = (f"adamw m_hat==g {collapse}, lion signs {signs_ok}, clip at 50 {clipped}, "
              f"bias-corrected EMA rel err at t=1 {bias_err:.1e}")
    report(8, "optimizer contracts", ok, detail, time.perf_counter() - t0, 1.0)


def test_09_cagrad_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(100):
        dim = int(rng.integers(2, 10))
        g = [rng.standard_normal(dim) * rng.uniform(0.1, 10), rng.standard_normal(dim) * rng.uniform(0.1, 10)]
        c = float(rng.uniform(0.0, 0.99))
        fast, ref = cagrad_combine(g, c), cagrad_bruteforce(g, c, step=1e-4)
        worst = max(worst, vm.l2_norm(fast - ref) / vm.l2_norm(ref))
    g1, g2 = rng.standard_normal(5), rng.standard_normal(5)
    exact_mean = cagrad_combine([g1, g2], 0.0).tobytes() == (0.5 * (g1 + g2)).tobytes()
    ok = worst <= 1e-3 and exact_mean
    detail = f"100 instances, worst relative diff {worst:.1e}; c=0 exact mean {exact_mean}"
    report(9, "CAGrad oracle", ok, detail, time.perf_counter() - t0, 10.0)


def test_10_determinism(tmp_path):
    t0 = time.perf_counter()
    from gcond.harness.config import METHODS
    params = dict(CONFLICT_PROBLEM, params=dict(CONFLICT_PROBLEM["params"], noise_sigma=0.5))
    dirs = []
    for name in ("a", "b"):
        cfg = experiment(params, list(METHODS), 40, seeds=[11, 42], output_dir=str(tmp_path / name))
        dirs.append(run_experiment(cfg).output_dir)
    files = sorted(p.relative_to(dirs[0]) for p in Path(dirs[0]).rglob("*.csv"))
    same = [(dirs[0] / f).read_bytes() == (dirs[1] / f).read_bytes() for f in files]
    ok = len(files) == len(METHODS) * 3 and all(same)
    detail = f"{sum(same)}/{len(files)} CSV files byte-identical across reruns"
    report(10, "determinism", ok, detail, time.perf_counter() - t0, 30.0)
