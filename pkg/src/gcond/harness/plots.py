"""Static SVG figures from a run directory's aggregate CSVs."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import yaml  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "gcond",
    "svg.fonttype": "none",
}

PLOT_FILES = ("loss.svg", "grad_norm.svg", "min_cosine.svg")


def _read_aggregate(path: Path) -> dict[str, list[float]]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path} has no rows")
    return {k: [float(r[k]) for r in rows] for k in rows[0]}


def _band(ax, steps, data, col, label):
    mean, std = data[f"{col}_mean"], data[f"{col}_std"]
    (line,) = ax.plot(steps, mean, lw=1.2, label=label)
    lo = [m - s for m, s in zip(mean, std) if s == s]
    if len(lo) == len(mean):
        hi = [m + s for m, s in zip(mean, std)]
        ax.fill_between(steps, lo, hi, color=line.get_color(), alpha=0.2, lw=0)


def run_methods(run_dir: Path) -> list[str]:
    cfg_path = run_dir / "config.yaml"
    if not cfg_path.exists():
        raise FileNotFoundError(f"no config.yaml in {run_dir}; is this a run directory?")
    with open(cfg_path) as fh:
        methods = yaml.safe_load(fh).get("methods") or []
    if not methods:
        raise ValueError(f"{run_dir} lists no methods")
    return list(methods)


def emit_plots(run_dir: str | Path, out_dir: str | Path | None = None) -> list[Path]:
    """Write loss, gradient-norm and min-cosine figures; returns the file paths."""
    run_dir = Path(run_dir)
    methods = run_methods(run_dir)
    data = {}
    for m in methods:
        agg = run_dir / m / "aggregate.csv"
        if not agg.exists():
            raise FileNotFoundError(f"missing {agg}")
        data[m] = _read_aggregate(agg)
    n_tasks = sum(1 for k in next(iter(data.values())) if k.startswith("loss_") and k.endswith("_mean"))
    out = Path(out_dir) if out_dir else run_dir / "plots"
    out.mkdir(parents=True, exist_ok=True)
    paths = []

    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, n_tasks, figsize=(3.2 * n_tasks, 2.6), squeeze=False)
        for i, ax in enumerate(axes[0]):
            for m, d in data.items():
                _band(ax, d["step"], d, f"loss_{i}", m)
            ax.set_yscale("log")
            ax.set_xlabel("step")
            ax.set_ylabel(f"task {i} loss")
        axes[0][-1].legend(frameon=False)
        fig.tight_layout()
        paths.append(out / PLOT_FILES[0])
        fig.savefig(paths[-1], metadata={"Date": None})
        plt.close(fig)

        fig, axes = plt.subplots(1, n_tasks, figsize=(3.2 * n_tasks, 2.6), squeeze=False)
        for i, ax in enumerate(axes[0]):
            for m, d in data.items():
                _band(ax, d["step"], d, f"grad_norm_{i}", m)
            ax.set_yscale("log")
            ax.set_xlabel("step")
            ax.set_ylabel(f"task {i} accumulated grad norm")
        axes[0][-1].legend(frameon=False)
        fig.tight_layout()
        paths.append(out / PLOT_FILES[1])
        fig.savefig(paths[-1], metadata={"Date": None})
        plt.close(fig)

        fig, ax = plt.subplots(figsize=(4.5, 2.8))
        for m, d in data.items():
            _band(ax, d["step"], d, "min_cosine", m)
        ax.set_ylim(-1.05, 1.05)
        ax.axhline(0.0, color="0.6", lw=0.6, ls=":")
        ax.set_xlabel("step")
        ax.set_ylabel("min pairwise cosine")
        ax.legend(frameon=False)
        fig.tight_layout()
        paths.append(out / PLOT_FILES[2])
        fig.savefig(paths[-1], metadata={"Date": None})
        plt.close(fig)
    return paths
