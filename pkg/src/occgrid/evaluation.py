"""Visibility-masked mIoU scoring of occupancy grids.

Only voxels inside the joint evaluation mask contribute. A voxel's
label is its semantic class when OCCUPIED and a distinguished "free"
label otherwise; free competes with the semantic classes (a free
prediction over an occupied ground-truth voxel is a false negative for
that class) but is excluded from the averaged class set unless
explicitly requested.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import SpecMismatchError, ValidationError
from .visibility import VisibilityMask
from .voxelizer import OccGrid, VoxelState


@dataclass
class ConfusionTable:
    """Per-class TP/FP/FN counts; index ``num_classes`` is the free label."""

    tp: np.ndarray  # int64, length num_classes + 1
    fp: np.ndarray
    fn: np.ndarray
    num_classes: int
    masked_voxels: int

    @property
    def free_label(self) -> int:
        return self.num_classes

    def __add__(self, other: "ConfusionTable") -> "ConfusionTable":
        if self.num_classes != other.num_classes:
            raise ValidationError("cannot add confusion tables with different class counts")
        return ConfusionTable(
            self.tp + other.tp,
            self.fp + other.fp,
            self.fn + other.fn,
            self.num_classes,
            self.masked_voxels + other.masked_voxels,
        )


def _grid_labels(grid: OccGrid, free_label: int) -> np.ndarray:
    """Flat per-voxel label: semantic class when occupied, else free."""
    occupied = grid.state.reshape(-1) == VoxelState.OCCUPIED
    labels = np.full(occupied.shape, free_label, dtype=np.int64)
    labels[occupied] = grid.semantics.reshape(-1)[occupied].astype(np.int64)
    return labels


def confusion(
    pred: OccGrid,
    gt: OccGrid,
    mask: Union[VisibilityMask, np.ndarray],
    num_classes: Optional[int] = None,
) -> ConfusionTable:
    """Accumulate masked TP/FP/FN counts per class.

    ``num_classes`` defaults to one past the largest class id present
    in either grid within the mask.
    """
    if pred.spec != gt.spec:
        raise SpecMismatchError("prediction and ground truth specs differ")
    mask_values = mask.values if isinstance(mask, VisibilityMask) else np.asarray(mask)
    if isinstance(mask, VisibilityMask) and mask.spec != pred.spec:
        raise SpecMismatchError("mask spec differs from grids")
    if mask_values.shape != pred.spec.dims:
        raise SpecMismatchError(
            f"mask shape {mask_values.shape} does not match dims {pred.spec.dims}"
        )

    keep = mask_values.reshape(-1).astype(bool)
    if num_classes is None:
        occupied = (
            (pred.state.reshape(-1) == VoxelState.OCCUPIED)
            | (gt.state.reshape(-1) == VoxelState.OCCUPIED)
        ) & keep
        sem = np.concatenate(
            [pred.semantics.reshape(-1)[occupied], gt.semantics.reshape(-1)[occupied]]
        )
        num_classes = int(sem.max()) + 1 if sem.size else 0

    free = num_classes
    pred_labels = _grid_labels(pred, free)[keep]
    gt_labels = _grid_labels(gt, free)[keep]
    if pred_labels.size and max(pred_labels.max(), gt_labels.max()) > free:
        raise ValidationError("grid contains class ids >= num_classes")

    side = num_classes + 1
    matrix = np.bincount(gt_labels * side + pred_labels, minlength=side * side)
    matrix = matrix.reshape(side, side)  # rows: ground truth, cols: prediction

    diag = np.diag(matrix).astype(np.int64)
    fn = matrix.sum(axis=1).astype(np.int64) - diag
    fp = matrix.sum(axis=0).astype(np.int64) - diag
    return ConfusionTable(diag, fp, fn, num_classes, int(keep.sum()))


def miou(
    table: ConfusionTable,
    include_free: bool = False,
) -> Tuple[Dict[int, float], Optional[float]]:
    """Per-class IoU and their mean.

    Classes with a zero denominator (never present in either grid under
    the mask) are excluded from both the report and the mean. When
    every denominator is zero the mean is None (undefined), which is
    distinct from an mIoU of 0.
    """
    limit = table.num_classes + 1 if include_free else table.num_classes
    per_class: Dict[int, float] = {}
    for c in range(limit):
        denom = int(table.tp[c] + table.fp[c] + table.fn[c])
        if denom == 0:
            continue
        per_class[c] = float(table.tp[c]) / denom
    mean = float(np.mean(list(per_class.values()))) if per_class else None
    return per_class, mean


def build_report(
    table: ConfusionTable,
    class_names: Optional[Sequence[str]] = None,
    go_class: Optional[int] = None,
    include_free: bool = False,
) -> dict:
    """Machine-readable evaluation report.

    Reports the headline mIoU (absent classes excluded) together with
    the alternative conventions: zero-denominator classes counted as 0,
    and the mean without the general-object class when one is
    designated.
    """
    per_class, mean = miou(table, include_free=include_free)
    rows = []
    for c in range(table.num_classes + (1 if include_free else 0)):
        denom = int(table.tp[c] + table.fp[c] + table.fn[c])
        if class_names is not None and c < len(class_names):
            name = class_names[c]
        elif c == table.free_label:
            name = "free"
        else:
            name = f"class_{c}"
        rows.append(
            {
                "class_id": c,
                "name": name,
                "iou": per_class.get(c),
                "present": denom > 0,
                "tp": int(table.tp[c]),
                "fp": int(table.fp[c]),
                "fn": int(table.fn[c]),
            }
        )

    n_semantic = table.num_classes
    all_classes = [per_class.get(c, 0.0) for c in range(n_semantic)]
    report = {
        "num_classes": n_semantic,
        "masked_voxels": table.masked_voxels,
        "classes": rows,
        "miou": mean,
        "miou_absent_as_zero": float(np.mean(all_classes)) if n_semantic else None,
    }
    if go_class is not None:
        no_go = {c: v for c, v in per_class.items() if c != go_class}
        report["go_class"] = go_class
        report["miou_without_go"] = (
            float(np.mean(list(no_go.values()))) if no_go else None
        )
    free_tp = int(table.tp[table.free_label])
    free_denom = free_tp + int(table.fp[table.free_label]) + int(table.fn[table.free_label])
    report["free_iou"] = (free_tp / free_denom) if free_denom else None
    return report


__all__ = ["ConfusionTable", "build_report", "confusion", "miou"]
