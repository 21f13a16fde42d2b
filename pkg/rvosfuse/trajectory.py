"""
Module containing the per-frame normalised box descriptor of an instance
trajectory and the frame sampling schemes used to build clips
"""
from typing import NamedTuple
import logging

import numpy as np

from .mask_core import MaskSequence, bbox_from_mask

FEATURE_NAMES = ('x_min', 'y_min', 'x_max', 'y_max', 'x_c', 'y_c', 'w', 'h')
SAMPLING_MODES = ('global', 'local')

class TrajectoryFeature(NamedTuple):
    """
    Normalised box of one frame, as fractions of the image dimensions.
    Invalid (empty) frames carry the zero vector.
    """
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    x_c: float
    y_c: float
    w: float
    h: float
    valid: bool

    @property
    def values(self) -> tuple[float, ...]:
        """The eight descriptor values without the validity flag"""
        return tuple(self[:8])

    @classmethod
    def empty(cls) -> "TrajectoryFeature":
        """Zero descriptor of a frame without foreground"""
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, False)


def positional_features(
        seq: MaskSequence, num_frames: int | None = None
        ) -> list[TrajectoryFeature]:
    """
    Computes the normalised box descriptor of every frame. Upper bounds are
    exclusive (x_max = (col_max + 1) / W) so a full-width object has w = 1.

    Args:
        seq (MaskSequence): Instance masks
        num_frames (int): Number of frames to describe. Defaults to the
            sequence length

    Returns:
        list[TrajectoryFeature]: One descriptor per frame
    """
    if num_frames is None:
        num_frames = seq.num_frames
    if seq.frame_indices and num_frames < seq.frame_indices[-1] + 1:
        raise ValueError(
            f"num_frames {num_frames} does not cover frame index "
            f"{seq.frame_indices[-1]} of '{seq.object_id}'")
    height, width = seq.shape
    features = []
    for t in range(num_frames):
        box = bbox_from_mask(seq.mask_at(t))
        if box is None:
            features.append(TrajectoryFeature.empty())
            continue
        x_min = box.x_min / width
        x_max = (box.x_max + 1) / width
        y_min = box.y_min / height
        y_max = (box.y_max + 1) / height
        features.append(TrajectoryFeature(
            x_min, y_min, x_max, y_max,
            (x_min + x_max) / 2, (y_min + y_max) / 2,
            x_max - x_min, y_max - y_min,
            True,
        ))
    logging.debug(
        "Computed %s trajectory features for %s (%s valid)",
        num_frames, seq.object_id, sum(f.valid for f in features))
    return features


def trajectory_matrix(
        features: list[TrajectoryFeature]
        ) -> tuple[np.ndarray, np.ndarray]:
    """
    Stacks descriptors into a (T, 8) float array and a (T,) validity vector
    """
    values = np.array([f.values for f in features], dtype = float)
    values = values.reshape(len(features), len(FEATURE_NAMES))
    valid = np.array([f.valid for f in features], dtype = bool)
    return values, valid


def segment_bounds(total: int, n: int) -> list[tuple[int, int]]:
    """
    Splits [0, total) into n contiguous half-open segments. The first
    total % n segments get one extra frame.
    """
    base, remainder = divmod(total, n)
    bounds = []
    start = 0
    for index in range(n):
        stop = start + base + (1 if index < remainder else 0)
        bounds.append((start, stop))
        start = stop
    return bounds


def sample_frames(
        total: int,
        n: int,
        mode: str = 'global',
        seed: int = 0,
        window_start: int | None = None,
        ) -> list[int]:
    """
    Chooses n frame indices of a video with `total` frames.

    global: one frame drawn uniformly from each of n contiguous segments.
    local: the contiguous window [window_start, window_start + n). Without a
    window_start the window position is drawn with the seeded generator.

    Args:
        total (int): Number of frames T
        n (int): Number of frames to sample
        mode (str): 'global' or 'local'
        seed (int): Seed of the random generator
        window_start (int): First frame of the local window

    Returns:
        list[int]: Strictly increasing frame indices

    Raises:
        ValueError: If n is not in [1, total], the mode is unknown or the
            window leaves the video
    """
    if n < 1 or n > total:
        raise ValueError(f"Cannot sample {n} frames from {total} frames")
    rng = np.random.default_rng(seed)
    if mode == 'global':
        return [
            int(rng.integers(start, stop))
            for start, stop in segment_bounds(total, n)
        ]
    if mode == 'local':
        if window_start is None:
            window_start = int(rng.integers(0, total - n + 1))
        if window_start < 0 or window_start + n > total:
            raise ValueError(
                f"Window [{window_start}, {window_start + n}) exceeds "
                f"video of {total} frames")
        return list(range(window_start, window_start + n))
    raise ValueError(
        f"Unknown sampling mode '{mode}', use one of {SAMPLING_MODES}")
