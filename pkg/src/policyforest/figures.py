"""Chart rendering for the report tables.

Renders the three figure analogs next to their delimited data files.
Rendering is pinned (backend, size, dpi, PNG metadata) so that equal
tables produce byte-identical image files.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .analysis import GroupShareRow, ReportTables

FIGURE_FILES = (
    "fig_sorted_policies.png",
    "fig_mean_std.png",
    "fig_parameters.png",
)

_DPI = 120
_PNG_METADATA = {"Software": "policyforest"}


def _save(fig: "plt.Figure", path: Path) -> None:
    fig.savefig(path, dpi=_DPI, metadata=_PNG_METADATA)
    plt.close(fig)


def _by_policy(tables: ReportTables) -> dict[str, list[GroupShareRow]]:
    grouped: dict[str, list[GroupShareRow]] = {}
    for row in tables.shares.rows:
        grouped.setdefault(row.key[1], []).append(row)
    return grouped


def _render_sorted_policies(tables: ReportTables, path: Path) -> None:
    grouped = _by_policy(tables)
    fig, ax = plt.subplots(figsize=(8.0, 5.0))
    for policy in sorted(grouped):
        shares = sorted(
            (row.share_pct for row in grouped[policy]), reverse=True
        )
        ax.plot(range(1, len(shares) + 1), shares, marker=".", label=policy)
    ax.set_xlabel("region rank")
    ax.set_ylabel("optimal share (%)")
    ax.set_title("Optimal share per policy, regions ranked")
    ax.legend(fontsize=8)
    ax.grid(True, linewidth=0.3, alpha=0.5)
    fig.tight_layout()
    _save(fig, path)


def _render_mean_std(tables: ReportTables, path: Path) -> None:
    grouped = _by_policy(tables)
    policies = sorted(grouped)
    n = len(policies)
    ncols = 2 if n > 1 else 1
    nrows = (n + ncols - 1) // ncols
    fig, axes = plt.subplots(
        nrows, ncols, figsize=(5.0 * ncols, 3.2 * nrows), squeeze=False
    )
    for i, policy in enumerate(policies):
        ax = axes[i // ncols][i % ncols]
        rows = sorted(grouped[policy], key=lambda r: (-r.share_pct, r.key[0]))
        x = range(1, len(rows) + 1)
        mean = [row.share_pct for row in rows]
        lower = [row.share_pct - row.std_pp for row in rows]
        upper = [row.share_pct + row.std_pp for row in rows]
        ax.fill_between(x, lower, upper, alpha=0.3, linewidth=0)
        ax.plot(x, mean, linewidth=1.2)
        ax.set_title(policy, fontsize=9)
        ax.grid(True, linewidth=0.3, alpha=0.5)
    for j in range(n, nrows * ncols):
        axes[j // ncols][j % ncols].set_axis_off()
    fig.suptitle("Optimal share with one-sigma band", fontsize=11)
    fig.supxlabel("region rank", fontsize=9)
    fig.supylabel("share (%)", fontsize=9)
    fig.tight_layout()
    _save(fig, path)


def _render_parameters(tables: ReportTables, path: Path) -> None:
    rows = sorted(tables.params.rows, key=lambda r: (r.score, r.parameter))
    height = max(3.0, 0.28 * len(rows) + 1.2)
    fig, ax = plt.subplots(figsize=(8.0, height))
    y = range(len(rows))
    ax.barh(y, [row.score for row in rows], height=0.6, label="surrogate optimal")
    if tables.params.has_reference:
        ref_y = [i for i, row in enumerate(rows) if row.reference is not None]
        ref_x = [row.reference for row in rows if row.reference is not None]
        ax.plot(ref_x, ref_y, "kd", markersize=4, label="reference")
    ax.set_yticks(list(y))
    ax.set_yticklabels([row.parameter for row in rows], fontsize=7)
    ax.set_xlim(0.0, 1.0)
    ax.set_xlabel("min-max standardized mean")
    ax.set_title("Parameter scores over predicted-optimal runs")
    ax.legend(fontsize=8, loc="lower right")
    ax.grid(True, axis="x", linewidth=0.3, alpha=0.5)
    fig.tight_layout()
    _save(fig, path)


def render_figures(tables: ReportTables, directory: str | Path) -> list[Path]:
    """Render the three chart files into `directory`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = [directory / name for name in FIGURE_FILES]
    _render_sorted_policies(tables, paths[0])
    _render_mean_std(tables, paths[1])
    _render_parameters(tables, paths[2])
    return paths
