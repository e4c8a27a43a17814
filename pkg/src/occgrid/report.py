"""Evaluation/inspection outputs: JSON + CSV tables and rendered figures.

Figures are written next to the delimited output with a non-interactive
backend, so report generation works headless.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib import colors

from .visibility import VisibilityMask
from .voxelizer import NO_CLASS, OccGrid, VoxelState


def write_report_json(path: Union[str, Path], report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True))


def write_report_csv(path: Union[str, Path], report: dict) -> None:
    """One row per class: id, name, iou, tp, fp, fn, present."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class_id", "name", "iou", "tp", "fp", "fn", "present"])
        for row in report["classes"]:
            writer.writerow(
                [
                    row["class_id"],
                    row["name"],
                    "" if row["iou"] is None else f"{row['iou']:.6f}",
                    row["tp"],
                    row["fp"],
                    row["fn"],
                    int(row["present"]),
                ]
            )
        writer.writerow([])
        writer.writerow(["miou", "" if report["miou"] is None else f"{report['miou']:.6f}"])
        writer.writerow(["miou_absent_as_zero",
                         "" if report["miou_absent_as_zero"] is None
                         else f"{report['miou_absent_as_zero']:.6f}"])


def save_iou_figure(path: Union[str, Path], report: dict) -> None:
    """Horizontal bar chart of per-class IoU with the mIoU line."""
    rows = [r for r in report["classes"] if r["present"]]
    names = [r["name"] for r in rows]
    ious = [r["iou"] for r in rows]
    fig, ax = plt.subplots(figsize=(7, max(2.0, 0.4 * len(rows) + 1.2)))
    ax.barh(np.arange(len(rows)), ious, color="#4878cf")
    ax.set_yticks(np.arange(len(rows)))
    ax.set_yticklabels(names)
    ax.invert_yaxis()
    ax.set_xlim(0, 1)
    ax.set_xlabel("IoU")
    if report["miou"] is not None:
        ax.axvline(report["miou"], color="#d65f5f", linestyle="--",
                   label=f"mIoU = {report['miou']:.3f}")
        ax.legend(loc="lower right")
    ax.set_title("Per-class IoU (masked)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _bev_class_image(grid: OccGrid) -> np.ndarray:
    """Top-down class map: highest occupied voxel per column, -1 if none."""
    occupied = grid.state == VoxelState.OCCUPIED
    nx, ny, nz = grid.spec.dims
    image = np.full((nx, ny), -1, dtype=np.int16)
    heights = np.where(occupied, np.arange(nz)[None, None, :], -1).max(axis=2)
    has = heights >= 0
    ix, iy = np.nonzero(has)
    image[ix, iy] = grid.semantics[ix, iy, heights[ix, iy]]
    return image


def save_bev_figure(
    path: Union[str, Path],
    grids: Sequence[OccGrid],
    titles: Sequence[str],
    class_names: Optional[Sequence[str]] = None,
) -> None:
    """Side-by-side bird's-eye-view class maps (e.g. prediction vs GT)."""
    n = len(grids)
    n_classes = 0
    images = []
    for grid in grids:
        image = _bev_class_image(grid)
        images.append(image)
        if image.max() >= n_classes:
            n_classes = int(image.max()) + 1
    n_classes = max(n_classes, 1)
    cmap = plt.get_cmap("tab20", n_classes)
    cmap = colors.ListedColormap([(0.95, 0.95, 0.95)] + [cmap(i) for i in range(n_classes)])

    fig, axes = plt.subplots(1, n, figsize=(5.2 * n, 5), squeeze=False)
    for ax, image, title in zip(axes[0], images, titles):
        ax.imshow(
            image.T + 1, origin="lower", cmap=cmap,
            vmin=0, vmax=n_classes, interpolation="nearest",
        )
        ax.set_title(title)
        ax.set_xlabel("x index")
        ax.set_ylabel("y index")
    if class_names:
        handles = [
            plt.Rectangle((0, 0), 1, 1, color=cmap(i + 1))
            for i in range(min(n_classes, len(class_names)))
        ]
        fig.legend(handles, class_names[:n_classes], loc="lower center",
                   ncol=min(6, max(1, n_classes)), frameon=False)
    fig.tight_layout(rect=(0, 0.06, 1, 1))
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_state_histogram(path: Union[str, Path], grid: OccGrid) -> None:
    """State and per-class voxel counts for one grid."""
    state_counts = np.bincount(grid.state.reshape(-1), minlength=3)[:3]
    occupied_sem = grid.semantics[grid.state == VoxelState.OCCUPIED]
    class_ids, class_counts = np.unique(occupied_sem, return_counts=True)

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.bar(["free", "occupied", "unobserved"], state_counts,
            color=["#6acc64", "#4878cf", "#b0b0b0"])
    ax1.set_ylabel("voxels")
    ax1.set_title("Occupancy states")
    labels = [str(c) if c != NO_CLASS else "n/a" for c in class_ids]
    ax2.bar(labels, class_counts, color="#4878cf")
    ax2.set_xlabel("class id")
    ax2.set_title("Occupied voxels per class")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def grid_stats(grid_or_mask: Union[OccGrid, VisibilityMask]) -> dict:
    """Printable summary used by the inspect subcommand."""
    if isinstance(grid_or_mask, OccGrid):
        spec = grid_or_mask.spec
        states = np.bincount(grid_or_mask.state.reshape(-1), minlength=3)
        occupied_sem = grid_or_mask.semantics[grid_or_mask.state == VoxelState.OCCUPIED]
        ids, counts = np.unique(occupied_sem, return_counts=True)
        body = {
            "kind": "occupancy",
            "free": int(states[VoxelState.FREE]),
            "occupied": int(states[VoxelState.OCCUPIED]),
            "unobserved": int(states[VoxelState.UNOBSERVED]),
            "classes": {int(i): int(c) for i, c in zip(ids, counts)},
        }
    else:
        spec = grid_or_mask.spec
        ids, counts = np.unique(grid_or_mask.values.reshape(-1), return_counts=True)
        body = {
            "kind": f"mask/{grid_or_mask.kind.value}",
            "values": {int(i): int(c) for i, c in zip(ids, counts)},
        }
    body.update(
        {
            "dims": list(spec.dims),
            "voxel_size": spec.voxel_size,
            "min_corner": [float(v) for v in spec.min_corner],
            "max_corner": [float(v) for v in spec.max_corner],
            "total_voxels": spec.voxel_count,
        }
    )
    return body


__all__ = [
    "grid_stats",
    "save_bev_figure",
    "save_iou_figure",
    "save_state_histogram",
    "write_report_csv",
    "write_report_json",
]
