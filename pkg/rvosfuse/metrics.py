"""
Module containing the region similarity (J), contour accuracy (F) and J&F
report used to score referring segmentations
"""
from dataclasses import dataclass, field
from decimal import Decimal, ROUND_HALF_EVEN
import math
import warnings

import numpy as np
from rich.console import Console
from rich.table import Table
from scipy import ndimage

from .mask_core import MaskSequence, boundary_map, mask_iou

BOUND_FRACTION = 0.008
RECALL_THRESHOLD = 0.5
DECAY_BINS = 4

def round_half_even(value: float, digits: int = 2) -> float:
    """Rounds the decimal representation of value, ties to even"""
    quantum = Decimal(1).scaleb(-digits)
    return float(Decimal(repr(float(value))).quantize(quantum, ROUND_HALF_EVEN))


def bound_radius(height: int, width: int) -> int:
    """Chebyshev dilation radius: ceil(0.008 x image diagonal)"""
    return math.ceil(BOUND_FRACTION*math.sqrt(height**2 + width**2))


def _check_pair(pred: MaskSequence, gt: MaskSequence) -> None:
    pred.check_compatible(gt)


def frame_region_similarity(pred: MaskSequence, gt: MaskSequence) -> np.ndarray:
    """Per-frame IoU over the frames of the ground truth"""
    _check_pair(pred, gt)
    return np.array(
        [mask_iou(pred.mask_at(t), gt.mask_at(t)) for t in range(gt.num_frames)],
        dtype = float)


def region_similarity(pred: MaskSequence, gt: MaskSequence) -> float:
    """
    J: mean per-frame IoU over the ground-truth frames. Frames empty in both
    count as 1.0.

    Args:
        pred (MaskSequence): Predicted sequence
        gt (MaskSequence): Ground-truth sequence of the same dimensions

    Returns:
        float: J as a fraction in [0, 1]
    """
    scores = frame_region_similarity(pred, gt)
    if scores.size == 0:
        return 1.0
    return float(scores.mean())


def frame_contour_accuracy(pred: MaskSequence, gt: MaskSequence) -> np.ndarray:
    """Per-frame boundary F over the frames of the ground truth"""
    _check_pair(pred, gt)
    radius = bound_radius(*gt.shape)
    scores = []
    for t in range(gt.num_frames):
        pred_boundary = boundary_map(pred.mask_at(t)).data
        gt_boundary = boundary_map(gt.mask_at(t)).data
        scores.append(boundary_f_measure(pred_boundary, gt_boundary, radius))
    return np.array(scores, dtype = float)


def boundary_f_measure(
        pred_boundary: np.ndarray, gt_boundary: np.ndarray, radius: int
        ) -> float:
    """F of one frame from precomputed boundary maps"""
    n_pred = int(pred_boundary.sum())
    n_gt = int(gt_boundary.sum())
    if n_pred == 0 and n_gt == 0:
        return 1.0
    if n_pred == 0 or n_gt == 0:
        return 0.0
    square = np.ones((2*radius + 1, 2*radius + 1), dtype = bool)
    precision = int(
        (pred_boundary & ndimage.binary_dilation(gt_boundary, square)).sum()
        ) / n_pred
    recall = int(
        (gt_boundary & ndimage.binary_dilation(pred_boundary, square)).sum()
        ) / n_gt
    if precision + recall == 0:
        return 0.0
    return 2*precision*recall / (precision + recall)


def contour_accuracy(pred: MaskSequence, gt: MaskSequence) -> float:
    """
    F: mean per-frame boundary F measure. Boundaries are dilated by a
    square of radius ceil(0.008 x diagonal) before matching.

    Args:
        pred (MaskSequence): Predicted sequence
        gt (MaskSequence): Ground-truth sequence of the same dimensions

    Returns:
        float: F as a fraction in [0, 1]
    """
    scores = frame_contour_accuracy(pred, gt)
    if scores.size == 0:
        return 1.0
    return float(scores.mean())


def metric_statistics(per_frame: np.ndarray) -> tuple[float, float, float]:
    """
    Mean, recall and decay of a per-frame score series. Recall is the
    fraction of frames scoring above 0.5; decay is the mean of the first
    of four equal bins minus the mean of the last one.

    Returns:
        tuple[float, float, float]: (mean, recall, decay) as fractions
    """
    per_frame = np.asarray(per_frame, dtype = float)
    if per_frame.size == 0:
        return 1.0, 1.0, 0.0
    mean = float(per_frame.mean())
    recall = float((per_frame > RECALL_THRESHOLD).mean())
    edges = np.round(np.linspace(1, per_frame.size, DECAY_BINS + 1) + 1e-10) - 1
    edges = edges.astype(int)
    bins = [per_frame[edges[i]:edges[i + 1] + 1] for i in range(DECAY_BINS)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category = RuntimeWarning)
        decay = float(np.nanmean(bins[0]) - np.nanmean(bins[-1]))
    return mean, recall, decay


@dataclass
class ObjectMetrics:
    """
    Scores of one object as percentages

    Attributes:
        object_id (str): Object identifier
        J (float): Region similarity
        F (float): Contour accuracy
        J_recall, J_decay, F_recall, F_decay (float | None): Statistics
            over frames, None when built from (J, F) pairs only
    """
    object_id: str
    J: float
    F: float
    J_recall: float | None = None
    J_decay: float | None = None
    F_recall: float | None = None
    F_decay: float | None = None

    @property
    def JF(self) -> float:
        """Mean of J and F, unrounded"""
        return (self.J + self.F) / 2

    def to_dict(self) -> dict:
        """JSON-ready entry, values rounded to two decimals"""
        entry = {
            "id": self.object_id,
            "J": round_half_even(self.J),
            "F": round_half_even(self.F),
            "JF": round_half_even(self.JF),
        }
        for key in ('J_recall', 'J_decay', 'F_recall', 'F_decay'):
            value = getattr(self, key)
            if value is not None:
                entry[key] = round_half_even(value)
        return entry


@dataclass
class MetricsReport:
    """
    Per-object J, F, J&F and their unweighted means. Values are kept at full
    precision; the `mean_*` properties are rounded half-even to 2 decimals.
    """
    per_object: list = field(default_factory = list)

    def _mean(self, key: str) -> float:
        return float(np.mean([getattr(o, key) for o in self.per_object]))

    @property
    def raw_mean_J(self) -> float:
        """Unrounded mean J"""
        return self._mean('J')

    @property
    def raw_mean_F(self) -> float:
        """Unrounded mean F"""
        return self._mean('F')

    @property
    def raw_mean_JF(self) -> float:
        """Unrounded mean J&F"""
        return self._mean('JF')

    @property
    def mean_J(self) -> float:
        """Mean J, rounded"""
        return round_half_even(self.raw_mean_J)

    @property
    def mean_F(self) -> float:
        """Mean F, rounded"""
        return round_half_even(self.raw_mean_F)

    @property
    def mean_JF(self) -> float:
        """Mean J&F, rounded"""
        return round_half_even(self.raw_mean_JF)

    def to_dict(self) -> dict:
        """JSON-ready report"""
        return {
            "per_object": [o.to_dict() for o in self.per_object],
            "mean_J": self.mean_J,
            "mean_F": self.mean_F,
            "mean_JF": self.mean_JF,
        }


def jf_report(pairs, object_ids: list[str] | None = None) -> MetricsReport:
    """
    Builds a report from per-object (J, F) percentages

    Args:
        pairs (Iterable): (J, F) tuples or ObjectMetrics, percentages
        object_ids (list[str]): Ids for tuple input, defaults to indices

    Returns:
        MetricsReport: Report with unweighted means

    Raises:
        ValueError: If no objects are given
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("Cannot build a J&F report without objects")
    if object_ids is None:
        object_ids = [str(i) for i in range(len(pairs))]
    if len(object_ids) != len(pairs):
        raise ValueError(
            f"{len(object_ids)} ids given for {len(pairs)} objects")
    entries = []
    for object_id, pair in zip(object_ids, pairs):
        if isinstance(pair, ObjectMetrics):
            entries.append(pair)
        else:
            j_value, f_value = pair
            entries.append(ObjectMetrics(object_id, float(j_value), float(f_value)))
    return MetricsReport(entries)


def evaluate_object(
        pred: MaskSequence, gt: MaskSequence, object_id: str | None = None
        ) -> ObjectMetrics:
    """
    J, F and their statistics for one object, as percentages

    Args:
        pred (MaskSequence): Predicted sequence
        gt (MaskSequence): Ground-truth sequence
        object_id (str): Report id, defaults to the ground-truth id
    """
    j_mean, j_recall, j_decay = metric_statistics(
        frame_region_similarity(pred, gt))
    f_mean, f_recall, f_decay = metric_statistics(
        frame_contour_accuracy(pred, gt))
    return ObjectMetrics(
        object_id = gt.object_id if object_id is None else object_id,
        J = 100*j_mean, F = 100*f_mean,
        J_recall = 100*j_recall, J_decay = 100*j_decay,
        F_recall = 100*f_recall, F_decay = 100*f_decay,
    )


def print_report(report: MetricsReport, console: Console | None = None) -> None:
    """Prints a report as a rich table"""
    if console is None:
        console = Console()
    table = Table(title = "J&F evaluation")
    for column in ("object", "J", "F", "J&F"):
        table.add_column(column, justify = "right" if column != "object" else "left")
    for entry in report.per_object:
        table.add_row(
            entry.object_id,
            f"{round_half_even(entry.J):.2f}",
            f"{round_half_even(entry.F):.2f}",
            f"{round_half_even(entry.JF):.2f}",
        )
    table.add_row(
        "[bold]mean", f"{report.mean_J:.2f}", f"{report.mean_F:.2f}",
        f"{report.mean_JF:.2f}")
    console.print(table)
