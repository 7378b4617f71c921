"""Figure rendering for CLI reports.

Every report path can drop a PNG next to its delimited output; these
helpers own the matplotlib calls so the rest of the package never touches
a plotting API.  The Agg backend keeps everything headless.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)
import numpy as np  # noqa: E402

from .errors import IoFailure  # noqa: E402


def _save(fig, path: str | os.PathLike) -> str:
    path = os.fspath(path)
    try:
        fig.savefig(path, dpi=120, bbox_inches="tight")
    except OSError as exc:
        raise IoFailure(f"cannot write figure {path}: {exc}") from exc
    finally:
        plt.close(fig)
    return path


def save_field_heatmap(field, path: str | os.PathLike,
                       title: str = "field amplitude") -> str:
    """Render |φ| over the grid; empty fields come out all black."""
    dense = np.zeros((field.grid_size, field.grid_size))
    for (r, c), v in field.cells.items():
        dense[r, c] = abs(v)
    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(dense, origin="lower", cmap="magma")
    ax.set_xlabel("column")
    ax.set_ylabel("row")
    ax.set_title(f"{title} (t={field.time:g}, {len(field.cells)} active cells)")
    fig.colorbar(im, ax=ax, label="|amplitude|")
    return _save(fig, path)


def save_ci_trace(report, path: str | os.PathLike) -> str:
    """Consensus trace: CI per step on the left axis, max pairwise field
    difference on a log right axis."""
    steps = [row.step for row in report.rows]
    ci = [row.ci for row in report.rows]
    diff = [row.max_pairwise_diff for row in report.rows]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(steps, ci, color="tab:blue", label="collective intelligence")
    ax.set_xlabel("step")
    ax.set_ylabel("CI (mean pairwise cosine)", color="tab:blue")
    ax.set_ylim(-0.02, 1.02)
    ax2 = ax.twinx()
    positive = [d if d > 0 else np.nan for d in diff]
    ax2.plot(steps, positive, color="tab:red", alpha=0.7, label="max pairwise diff")
    ax2.set_yscale("log")
    ax2.set_ylabel("max pairwise difference", color="tab:red")
    status = "converged" if report.converged else "not converged"
    ax.set_title(f"{report.n_agents} agents, {report.topology} coupling "
                 f"k={report.coupling_strength:g} ({status})")
    fig.tight_layout()
    return _save(fig, path)


def save_bench_comparison(aggregates: list[dict], path: str | os.PathLike) -> str:
    """Grouped bars of the aggregate metrics, one group per mode."""
    metrics = ["mean_recall", "mean_precision", "mean_token_f1", "exact_match_rate"]
    labels = ["recall", "precision", "token F1", "exact match"]
    x = np.arange(len(metrics))
    width = 0.8 / max(1, len(aggregates))
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for i, agg in enumerate(aggregates):
        vals = [agg.get(m) if agg.get(m) is not None else 0.0 for m in metrics]
        ax.bar(x + i * width, vals, width, label=f"{agg['mode']} (k={agg['k']})")
    ax.set_xticks(x + width * (len(aggregates) - 1) / 2)
    ax.set_xticklabels(labels)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.set_title("retrieval quality by scoring mode")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def save_seed_comparison(comparison, path: str | os.PathLike) -> str:
    """Per-seed anchor recall for composite vs cosine-only scoring."""
    x = np.arange(len(comparison.seeds))
    fig, ax = plt.subplots(figsize=(8, 3.5))
    ax.bar(x - 0.2, comparison.field_recall, 0.4, label="composite score")
    ax.bar(x + 0.2, comparison.baseline_recall, 0.4, label="cosine only")
    ax.set_xticks(x)
    ax.set_xticklabels([str(s) for s in comparison.seeds])
    ax.set_xlabel("seed")
    ax.set_ylabel("anchor recall@k")
    ax.set_ylim(0, 1.15)
    ax.set_title(f"anchor recovery: improved on {comparison.n_improved} of "
                 f"{len(comparison.seeds)} seeds")
    ax.legend(loc="lower right")
    fig.tight_layout()
    return _save(fig, path)
