"""
Module containing the two-stage IoU fusion of referring predictions with
candidate instance sequences: a noise filter on the prediction, frame-level
fusion by per-frame IoU, and instance-level retrieval by video IoU.
"""
from dataclasses import dataclass, field
import logging

import numpy as np

from .config import FusionConfig
from .mask_core import MaskSequence, intersection_area, mask_area, mask_iou, \
    rle_union

@dataclass
class FusionResult:
    """
    Output of the fusion of one referring prediction

    Attributes:
        fused_frames (MaskSequence): Final fused sequence
        selected_instances (list[str]): Candidate ids retrieved at video
            level, in candidate order
        per_frame_matches (dict): Frame -> candidate ids matched at frame
            level (inherited ids on invalid frames)
        frame_validity (dict): Frame -> whether the prediction passed the
            noise filter
    """
    fused_frames: MaskSequence
    selected_instances: list = field(default_factory = list)
    per_frame_matches: dict = field(default_factory = dict)
    frame_validity: dict = field(default_factory = dict)

    def report(self) -> dict:
        """JSON-ready fusion report"""
        return {
            "selected": list(self.selected_instances),
            "frame_matches": {
                str(t): list(ids)
                for t, ids in sorted(self.per_frame_matches.items())
            },
            "valid_frames": sorted(
                t for t, valid in self.frame_validity.items() if valid),
        }


def _check_candidates(
        reference: MaskSequence, candidates: list[MaskSequence]) -> None:
    """Raises DimensionMismatchError if any candidate differs in size"""
    for candidate in candidates:
        reference.check_compatible(candidate)


def noise_filter(pred: MaskSequence, alpha: float) -> dict[int, bool]:
    """
    Flags frames of a referring prediction as valid or noise. A frame is
    invalid if it is empty or its area is below alpha times the median of
    the non-empty frame areas.

    Args:
        pred (MaskSequence): Referring prediction
        alpha (float): Noise area fraction in [0, 1)

    Returns:
        dict[int, bool]: Frame index -> validity for all frames
    """
    areas = pred.area_per_frame()
    nonzero = areas[areas > 0]
    if nonzero.size == 0:
        return {t: False for t in range(pred.num_frames)}
    threshold = alpha*float(np.median(nonzero))
    validity = {
        t: bool(area > 0 and area >= threshold)
        for t, area in enumerate(areas.tolist())
    }
    logging.debug(
        "Noise filter on %s: median area %s, %s/%s frames valid",
        pred.object_id, float(np.median(nonzero)), sum(validity.values()),
        pred.num_frames)
    return validity


def frame_level_fuse(
        pred: MaskSequence,
        candidates: list[MaskSequence],
        validity: dict[int, bool],
        tau_f: float,
        ) -> tuple[MaskSequence, dict[int, list[str]]]:
    """
    Fuses the prediction with the candidates frame by frame. On a valid
    frame the candidates with IoU >= tau_f are unioned (the prediction is
    kept if none match). Invalid frames reuse the matches of the latest
    earlier valid frame, or become empty.

    Args:
        pred (MaskSequence): Referring prediction
        candidates (list[MaskSequence]): Candidate instance sequences
        validity (dict[int, bool]): Output of `noise_filter`
        tau_f (float): Frame-level IoU threshold

    Returns:
        tuple: Fused MaskSequence and frame -> matched candidate ids
    """
    _check_candidates(pred, candidates)
    height, width = pred.shape
    fused_frames, matches = {}, {}
    previous_matches = []
    for t in range(pred.num_frames):
        if validity.get(t, False):
            pred_mask = pred.mask_at(t)
            matched = [
                c for c in candidates
                if mask_iou(pred_mask, c.mask_at(t)) >= tau_f
            ]
            if matched:
                fused = rle_union(
                    (c.mask_at(t) for c in matched), height, width)
            else:
                fused = pred_mask
            previous_matches = matched
        else:
            ### Noise frames inherit the last valid frame's matches
            matched = previous_matches
            fused = rle_union((c.mask_at(t) for c in matched), height, width)
        matches[t] = [c.object_id for c in matched]
        if mask_area(fused) > 0:
            fused_frames[t] = fused
    return pred.with_frames(fused_frames), matches


def video_iou(a: MaskSequence, b: MaskSequence) -> float:
    """
    Sum of per-frame intersections over sum of per-frame unions. Two
    entirely empty sequences give 1.0.

    Args:
        a (MaskSequence): First sequence
        b (MaskSequence): Second sequence of the same dimensions

    Returns:
        float: Video-level IoU in [0, 1]
    """
    a.check_compatible(b)
    intersection, union = 0, 0
    for t in sorted(set(a.frame_indices) | set(b.frame_indices)):
        mask_a, mask_b = a.mask_at(t), b.mask_at(t)
        overlap = intersection_area(mask_a, mask_b)
        intersection += overlap
        union += mask_area(mask_a) + mask_area(mask_b) - overlap
    if union == 0:
        return 1.0
    return intersection / union


def instance_level_retrieve(
        fused: MaskSequence,
        candidates: list[MaskSequence],
        tau_v: float,
        per_frame_matches: dict | None = None,
        frame_validity: dict | None = None,
        ) -> FusionResult:
    """
    Retrieves whole candidate instances whose video IoU with the fused
    sequence reaches tau_v and unions them frame by frame. Without any
    such candidate the fused sequence is returned unchanged.

    Args:
        fused (MaskSequence): Frame-level fused sequence
        candidates (list[MaskSequence]): Candidate instance sequences
        tau_v (float): Video-level IoU threshold
        per_frame_matches (dict): Passed through into the result
        frame_validity (dict): Passed through into the result

    Returns:
        FusionResult: Final sequence and selected candidate ids
    """
    _check_candidates(fused, candidates)
    selected = [c for c in candidates if video_iou(fused, c) >= tau_v]
    if selected:
        height, width = fused.shape
        frames = {}
        indices = sorted(set().union(*(c.frame_indices for c in selected)))
        for t in indices:
            union = rle_union((c.mask_at(t) for c in selected), height, width)
            if mask_area(union) > 0:
                frames[t] = union
        num_frames = max(c.num_frames for c in [fused, *selected])
        output = fused.with_length(num_frames).with_frames(frames)
    else:
        logging.debug(
            "No candidate reaches video IoU %s for %s, keeping fused frames",
            tau_v, fused.object_id)
        output = fused
    return FusionResult(
        fused_frames = output,
        selected_instances = [c.object_id for c in selected],
        per_frame_matches = dict(per_frame_matches or {}),
        frame_validity = dict(frame_validity or {}),
    )


def fuse_expression(
        pred: MaskSequence,
        candidates: list[MaskSequence],
        config: FusionConfig | None = None,
        ) -> FusionResult:
    """
    Runs noise filter, frame-level fusion and (if enabled) instance-level
    retrieval for one referring prediction. Shorter sequences are padded
    with empty frames to the longest one.

    Args:
        pred (MaskSequence): Referring prediction
        candidates (list[MaskSequence]): Candidate instance sequences
        config (FusionConfig): Thresholds and switches, defaults if None

    Returns:
        FusionResult: Fused sequence, selection, matches and validity
    """
    if config is None:
        config = FusionConfig()
    num_frames = max(seq.num_frames for seq in [pred, *candidates])
    pred = pred.with_length(num_frames)
    candidates = [c.with_length(num_frames) for c in candidates]
    validity = noise_filter(pred, config.alpha)
    fused, matches = frame_level_fuse(pred, candidates, validity, config.tau_f)
    if not config.instance_level:
        return FusionResult(fused, [], matches, validity)
    result = instance_level_retrieve(
        fused, candidates, config.tau_v, matches, validity)
    logging.debug(
        "Fused %s with %s candidates, selected %s",
        pred.object_id, len(candidates), result.selected_instances)
    return result
