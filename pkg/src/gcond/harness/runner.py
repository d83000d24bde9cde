"""Seeded training loops and CSV telemetry.

Output layout under the run directory::

    config.yaml
    <method>/seed_<seed>.csv     one row per optimizer step
    <method>/aggregate.csv       mean and sample stddev across seeds
    summary.csv, summary.txt     written by ``compare``
"""

from __future__ import annotations

import csv
import logging
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from gcond import vecmath as vm
from gcond.accumulator import Accumulator
from gcond.baselines import GradNormState, cagrad_combine, gradnorm_update, pcgrad_combine, weighted_sum
from gcond.conductor import GradientConductor, min_pairwise_cosine
from gcond.harness.config import ConfigError, ExperimentConfig, dump_config
from gcond.optimizers import make_optimizer
from gcond.problems import MultiTaskProblem, build_problem, micro_batch_noise, stream_digest

log = logging.getLogger(__name__)

LRSchedule = Callable[[int], float]


@dataclass
class StepRecord:
    step: int
    losses: list[float]
    combined_loss: float
    grad_norms: list[float]
    min_cosine: float
    zone: str | None
    winner: int | None
    s_w: float | None
    s_l: float | None
    n_arbitrations: int
    unified_norm: float
    counts: list[int]
    noise_hash: str


@dataclass
class RunArtifacts:
    output_dir: Path
    methods: list[str]
    seeds: list[int]
    n_tasks: int
    records: dict[str, dict[int, list[StepRecord]]] = field(default_factory=dict)


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def csv_header(n_tasks: int) -> list[str]:
    t = range(n_tasks)
    return (
        ["step"]
        + [f"loss_{i}" for i in t]
        + ["combined_loss"]
        + [f"grad_norm_{i}" for i in t]
        + ["min_cosine", "zone", "winner", "s_w", "s_l", "n_arbitrations", "unified_norm"]
        + [f"count_{i}" for i in t]
        + ["noise_hash"]
    )


def csv_row(r: StepRecord) -> list[str]:
    return (
        [fmt(r.step)]
        + [fmt(x) for x in r.losses]
        + [fmt(r.combined_loss)]
        + [fmt(x) for x in r.grad_norms]
        + [fmt(r.min_cosine), fmt(r.zone), fmt(r.winner), fmt(r.s_w), fmt(r.s_l),
           fmt(r.n_arbitrations), fmt(r.unified_norm)]
        + [fmt(c) for c in r.counts]
        + [r.noise_hash]
    )


def _make_combiner(cfg: ExperimentConfig, method: str, n_tasks: int, seed: int):
    weights = cfg.weights(n_tasks)

    if method == "baseline":
        return lambda grads, losses, step: (weighted_sum(grads, weights), [])
    if method == "pcgrad":
        def pcgrad(grads, losses, step):
            scaled = [w * g for w, g in zip(weights, grads)]
            return pcgrad_combine(scaled, seed=(seed, step), project_against=cfg.pcgrad_project_against), []
        return pcgrad
    if method == "cagrad":
        def cagrad(grads, losses, step):
            return cagrad_combine([w * g for w, g in zip(weights, grads)], c=cfg.cagrad_c), []
        return cagrad
    if method == "gradnorm":
        state = GradNormState(
            np.array(weights) * n_tasks, alpha=cfg.gradnorm_alpha, weight_lr=cfg.gradnorm_lr
        )
        return lambda grads, losses, step: (gradnorm_update(grads, losses, state)[1], [])
    conductor = GradientConductor(
        config=cfg.conductor_for(method, n_tasks),
        hard_projection=method == "gcond_as_pcgrad",
    )
    return lambda grads, losses, step: conductor(grads)


def run_method(
    cfg: ExperimentConfig,
    method: str,
    seed: int,
    problem: MultiTaskProblem | None = None,
    lr_schedule: LRSchedule | None = None,
) -> list[StepRecord]:
    """Train one (method, seed) pair and return its per-step telemetry.

    Gradients inside an accumulation window are all taken at the same
    parameters. The noise for micro-step ``k`` of window ``t`` is keyed by
    ``(seed, task, t*K + k)``, so every method sees the same noise stream.
    """
    if problem is None:
        problem = build_problem(cfg.problem.name, cfg.problem.params)
    n = problem.n_tasks
    cfg.check_tasks(n)
    weights = cfg.weights(n)
    mode = cfg.accumulation_for(method)
    acc = Accumulator(n, problem.dim, cfg.K, mode, shuffle_seed=seed if cfg.shuffle_blocks else None)
    combine = _make_combiner(cfg, method, n, seed)
    opt = make_optimizer(cfg.optimizer.name, **cfg.optimizer_params(method))
    theta = problem.theta0.copy()
    records: list[StepRecord] = []

    for step in range(cfg.total_steps):
        if lr_schedule is not None:
            opt.lr = lr_schedule(step)
        losses = problem.losses(theta)
        true_grads = [problem.grad(i, theta) for i in range(n)]
        noise_chunks = []
        for k, tasks in enumerate(acc.schedule()):
            key = step * cfg.K + k
            for i in tasks:
                noise = micro_batch_noise(problem, i, key, seed)
                noise_chunks.append(noise)
                acc.accumulate(i, true_grads[i] + noise)
        counts = list(acc.counts)
        ghat = acc.finalize()

        _, min_cos = min_pairwise_cosine(ghat) if n > 1 else (None, 1.0)
        unified, reports = combine(ghat, losses, step)
        unified = vm.clip_by_norm(unified, cfg.clip_norm)
        theta = opt.step(theta, unified)
        if not np.all(np.isfinite(theta)):
            raise FloatingPointError(f"{method} diverged at step {step} (seed {seed})")

        first = reports[0] if reports else None
        records.append(StepRecord(
            step=step,
            losses=losses,
            combined_loss=float(sum(w * x for w, x in zip(weights, losses))),
            grad_norms=[vm.l2_norm(g) for g in ghat],
            min_cosine=float(min_cos),
            zone=first.zone.value if first else None,
            winner=first.winner if first else None,
            s_w=first.s_w if first else None,
            s_l=first.s_l if first else None,
            n_arbitrations=len(reports),
            unified_norm=vm.l2_norm(unified),
            counts=counts,
            noise_hash=stream_digest(noise_chunks),
        ))
    return records


def write_records(path: Path, records: list[StepRecord], n_tasks: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header(n_tasks))
        for r in records:
            w.writerow(csv_row(r))


def _mean_std(values: list[float]) -> tuple[float, float]:
    mean = statistics.fmean(values)
    std = statistics.stdev(values) if len(values) > 1 else math.nan
    return mean, std


def aggregate_columns(n_tasks: int) -> list[str]:
    return (
        [f"loss_{i}" for i in range(n_tasks)]
        + ["combined_loss"]
        + [f"grad_norm_{i}" for i in range(n_tasks)]
        + ["min_cosine", "unified_norm"]
    )


def _numeric(r: StepRecord) -> list[float]:
    return [*r.losses, r.combined_loss, *r.grad_norms, r.min_cosine, r.unified_norm]


def write_aggregate(path: Path, by_seed: dict[int, list[StepRecord]], n_tasks: int) -> None:
    cols = aggregate_columns(n_tasks)
    header = ["step", "n_seeds"] + [f"{c}_{s}" for c in cols for s in ("mean", "std")]
    runs = list(by_seed.values())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for step in range(len(runs[0])):
            rows = [_numeric(run[step]) for run in runs]
            out = [str(step), str(len(runs))]
            for j in range(len(cols)):
                mean, std = _mean_std([row[j] for row in rows])
                out += [fmt(mean), fmt(std)]
            w.writerow(out)


def run_experiment(cfg: ExperimentConfig, lr_schedule: LRSchedule | None = None) -> RunArtifacts:
    """Run every configured method for every seed and write CSV telemetry."""
    problem = build_problem(cfg.problem.name, cfg.problem.params)
    cfg.check_tasks(problem.n_tasks)
    out = cfg.resolved_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "config.yaml")
    arts = RunArtifacts(out, list(cfg.methods), list(cfg.seeds), problem.n_tasks)
    for method in cfg.methods:
        mdir = out / method
        mdir.mkdir(exist_ok=True)
        arts.records[method] = {}
        for seed in cfg.seeds:
            log.info("running %s seed=%d", method, seed)
            recs = run_method(cfg, method, seed, problem, lr_schedule)
            arts.records[method][seed] = recs
            write_records(mdir / f"seed_{seed}.csv", recs, problem.n_tasks)
        write_aggregate(mdir / "aggregate.csv", arts.records[method], problem.n_tasks)
    return arts


@dataclass
class SummaryRow:
    method: str
    best_loss: list[tuple[float, float]]
    best_combined: tuple[float, float]
    final_combined: tuple[float, float]


def summarize(arts: RunArtifacts, weights: tuple[float, ...]) -> list[SummaryRow]:
    rows = []
    for method in arts.methods:
        runs = list(arts.records[method].values())
        best = [
            _mean_std([min(r.losses[i] for r in run) for run in runs]) for i in range(arts.n_tasks)
        ]
        best_comb = _mean_std([min(r.combined_loss for r in run) for run in runs])
        final_comb = _mean_std([run[-1].combined_loss for run in runs])
        rows.append(SummaryRow(method, best, best_comb, final_comb))
    return rows


def write_summary(out: Path, rows: list[SummaryRow], n_tasks: int) -> None:
    header = ["method"]
    for i in range(n_tasks):
        header += [f"best_loss_{i}_mean", f"best_loss_{i}_std"]
    header += ["best_combined_mean", "best_combined_std", "final_combined_mean", "final_combined_std"]
    table = []
    for r in rows:
        row = [r.method]
        for m, s in r.best_loss:
            row += [fmt(m), fmt(s)]
        row += [fmt(r.best_combined[0]), fmt(r.best_combined[1])]
        row += [fmt(r.final_combined[0]), fmt(r.final_combined[1])]
        table.append(row)
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(table)

    text_header = ["method"] + [f"best loss_{i}" for i in range(n_tasks)] + ["best combined", "final combined"]
    cells = [text_header]
    for r in rows:
        cells.append(
            [r.method]
            + [f"{m:.6g} ± {s:.2g}" for m, s in r.best_loss]
            + [f"{r.best_combined[0]:.6g} ± {r.best_combined[1]:.2g}",
               f"{r.final_combined[0]:.6g} ± {r.final_combined[1]:.2g}"]
        )
    widths = [max(len(row[c]) for row in cells) for c in range(len(text_header))]
    lines = []
    for k, row in enumerate(cells):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    (out / "summary.txt").write_text("\n".join(lines) + "\n")


def compare_methods(cfg: ExperimentConfig, lr_schedule: LRSchedule | None = None) -> tuple[RunArtifacts, list[SummaryRow]]:
    """Run all methods and tabulate best per-task loss (mean ± sample stddev over seeds)."""
    if len(cfg.methods) < 2:
        raise ConfigError("compare needs at least two methods")
    if len(cfg.seeds) < 2:
        raise ConfigError("compare needs at least two seeds to report a standard deviation")
    arts = run_experiment(cfg, lr_schedule)
    rows = summarize(arts, cfg.weights(arts.n_tasks))
    write_summary(arts.output_dir, rows, arts.n_tasks)
    return arts, rows
