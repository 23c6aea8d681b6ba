"""Evaluation report rendering: delimited per-scene table plus figures.

The eval pipeline produces one metric row per (scene, instruction) unit.
This module writes that table as CSV next to the JSON reports and renders
a small set of matplotlib figures (aggregate coverage bars, the EMD
distribution, and per-scene CFR against EW-CFR) into the same directory.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import List, Mapping, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = ["metric_columns", "write_per_scene_csv", "render_figures"]


def metric_columns(thresholds: Sequence[float]) -> List[str]:
    return [f"cr@{t:g}" for t in thresholds] + ["emd", "cfr", "ew_cfr"]


def write_per_scene_csv(
    path: Union[str, Path],
    rows: Sequence[Mapping],
    thresholds: Sequence[float],
) -> None:
    """One row per evaluated unit: ids first, then the metric columns."""
    cols = ["scene_id", "instruction_id"] + metric_columns(thresholds)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: row.get(c, "") for c in cols})


def render_figures(
    out_dir: Union[str, Path],
    rows: Sequence[Mapping],
    aggregate: Mapping[str, float],
    thresholds: Sequence[float],
) -> List[Path]:
    """Render the report figures; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []

    cr_keys = [f"cr@{t:g}" for t in thresholds]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    values = [aggregate.get(k, 0.0) for k in cr_keys]
    ax.bar(range(len(cr_keys)), values, color="#4878cf", width=0.6)
    ax.set_xticks(range(len(cr_keys)))
    ax.set_xticklabels(cr_keys)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("coverage rate")
    ax.set_title("Aggregate coverage by threshold")
    for i, v in enumerate(values):
        ax.text(i, v + 0.015, f"{v:.3f}", ha="center", fontsize=8)
    fig.tight_layout()
    p = out / "coverage.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    written.append(p)

    emds = [row["emd"] for row in rows if row.get("emd") is not None]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    if emds:
        ax.hist(emds, bins=min(20, max(5, len(emds) // 2)),
                color="#6acc65", edgecolor="black", linewidth=0.5)
    ax.set_xlabel("EMD")
    ax.set_ylabel("scenes")
    ax.set_title("Per-scene pose-set EMD")
    fig.tight_layout()
    p = out / "emd_hist.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    written.append(p)

    fig, ax = plt.subplots(figsize=(4.2, 4.2))
    xs = [row["cfr"] for row in rows if row.get("cfr") is not None]
    ys = [row["ew_cfr"] for row in rows if row.get("ew_cfr") is not None]
    ax.scatter(xs, ys, s=18, color="#d65f5f", alpha=0.8)
    ax.plot([0, 1], [0, 1], ls="--", lw=0.8, color="gray")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.set_xlabel("CFR")
    ax.set_ylabel("EW-CFR")
    ax.set_title("Collision metrics per scene")
    fig.tight_layout()
    p = out / "cfr_vs_ewcfr.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    written.append(p)
    return written
