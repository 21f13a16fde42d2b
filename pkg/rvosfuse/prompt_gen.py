"""
Module containing the point and box prompt sampler for promptable mask
refinement. Points are (x=col, y=row) pixel coordinates.
"""
from dataclasses import dataclass, field
import logging

import numpy as np

from .mask_core import Bbox, BinaryMask, MaskSequence, bbox_from_mask, rle_decode

NUM_POSITIVE = 10
NUM_NEGATIVE = 5

@dataclass(frozen = True)
class PromptSet:
    """
    Prompts for one mask: its box plus positive points on the foreground and
    negative points on background pixels inside the box

    Attributes:
        box (Bbox | None): Tight box, None for an empty mask
        positive_points (list): (x, y) foreground pixels
        negative_points (list): (x, y) background pixels inside the box
        seed (int): Seed the points were drawn with
    """
    box: Bbox | None
    positive_points: list = field(default_factory = list)
    negative_points: list = field(default_factory = list)
    seed: int = 0

    @property
    def is_empty(self) -> bool:
        """True if the source mask had no foreground"""
        return self.box is None

    @property
    def labels(self) -> list[int]:
        """Point labels in prompt order: positives 1, negatives 0"""
        return [1]*len(self.positive_points) + [0]*len(self.negative_points)

    def to_dict(self, t: int | None = None) -> dict:
        """JSON-ready representation, optionally tagged with a frame index"""
        entry = {} if t is None else {"t": int(t)}
        entry.update({
            "box": None if self.box is None else list(self.box),
            "positive": [list(p) for p in self.positive_points],
            "negative": [list(p) for p in self.negative_points],
            "labels": self.labels,
        })
        return entry


def _draw_points(
        rng: np.random.Generator, rows: np.ndarray, cols: np.ndarray, k: int
        ) -> list[tuple[int, int]]:
    """Draws min(k, population) distinct (x, y) points without replacement"""
    population = rows.size
    size = min(k, population)
    if size == 0:
        return []
    chosen = rng.choice(population, size = size, replace = False)
    return [(int(cols[i]), int(rows[i])) for i in chosen]


def sample_prompts(
        mask: BinaryMask,
        seed: int,
        num_positive: int = NUM_POSITIVE,
        num_negative: int = NUM_NEGATIVE,
        ) -> PromptSet:
    """
    Samples prompts from a predicted mask. Positives are drawn uniformly
    without replacement from the foreground, negatives from the background
    pixels of the bounding box. Smaller populations are returned whole.

    Args:
        mask (BinaryMask): Predicted mask
        seed (int): Seed of the random generator
        num_positive (int): Number of positive points. Defaults to 10
        num_negative (int): Number of negative points. Defaults to 5

    Returns:
        PromptSet: Box and points, empty for an empty mask
    """
    box = bbox_from_mask(mask)
    if box is None:
        logging.debug("Empty mask, returning empty prompt set")
        return PromptSet(box = None, seed = seed)
    rng = np.random.default_rng(seed)

    ### Foreground pixels in row-major order
    fg_rows, fg_cols = np.nonzero(mask.data)
    positives = _draw_points(rng, fg_rows, fg_cols, num_positive)

    ### Background pixels inside the box, offset back to image coordinates
    window = mask.data[box.y_min:box.y_max + 1, box.x_min:box.x_max + 1]
    bg_rows, bg_cols = np.nonzero(~window)
    negatives = _draw_points(
        rng, bg_rows + box.y_min, bg_cols + box.x_min, num_negative)
    return PromptSet(box, positives, negatives, seed)


def prompts_for_sequence(
        seq: MaskSequence,
        seed: int,
        num_positive: int = NUM_POSITIVE,
        num_negative: int = NUM_NEGATIVE,
        ) -> list[tuple[int, PromptSet]]:
    """
    Samples prompts independently for every frame of a sequence. Frame t
    uses seed + t, so results do not depend on which other frames exist.

    Returns:
        list[tuple[int, PromptSet]]: (frame index, prompts) for all frames
    """
    prompts = []
    for t in range(seq.num_frames):
        prompt_set = sample_prompts(
            rle_decode(seq.mask_at(t)), seed + t, num_positive, num_negative)
        prompts.append((t, prompt_set))
    logging.debug(
        "Sampled prompts for %s frames of %s", seq.num_frames, seq.object_id)
    return prompts
