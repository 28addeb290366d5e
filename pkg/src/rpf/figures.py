"""Matplotlib renderings of the evaluation reports (headless)."""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import SceneReport, ViewpointReport

_SAVEFIG_KW = dict(dpi=150, bbox_inches="tight", metadata={"Software": "rpf"})


def scene_medians_figure(reports: Sequence[SceneReport], path) -> None:
    """Two-panel bar chart of per-scene median errors."""
    scenes = [rep.scene for rep in reports]
    pos = [rep.median_position_m for rep in reports]
    ori = [rep.median_orientation_deg for rep in reports]
    fig, (ax_pos, ax_ori) = plt.subplots(1, 2, figsize=(max(6.0, 1.2 * len(scenes) + 3), 3.2))
    x = range(len(scenes))
    ax_pos.bar(x, [0.0 if v is None else v for v in pos], color="#3b6ea5")
    ax_pos.set_ylabel("median position error [m]")
    ax_ori.bar(x, [0.0 if v is None else v for v in ori], color="#a5543b")
    ax_ori.set_ylabel("median orientation error [deg]")
    for ax in (ax_pos, ax_ori):
        ax.set_xticks(list(x))
        ax.set_xticklabels(scenes, rotation=30, ha="right")
        ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG_KW)
    plt.close(fig)


def viewpoint_figure(report: ViewpointReport, path) -> None:
    """Median errors per scene across viewpoint set indices."""
    fig, (ax_pos, ax_ori) = plt.subplots(1, 2, figsize=(9.0, 3.2))
    for rep in report.scenes:
        ks = list(range(len(rep.medians)))
        pos = [m[0] for m in rep.medians]
        ori = [m[1] for m in rep.medians]
        ax_pos.plot(ks, pos, marker="o", label=rep.scene)
        ax_ori.plot(ks, ori, marker="o", label=rep.scene)
    ax_pos.set_ylabel("median position error [m]")
    ax_ori.set_ylabel("median orientation error [deg]")
    for ax in (ax_pos, ax_ori):
        ax.set_xlabel("viewpoint set index")
        ax.grid(alpha=0.3)
    if report.scenes:
        ax_ori.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG_KW)
    plt.close(fig)
