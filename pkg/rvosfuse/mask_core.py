"""
Module containing the binary mask types, the column-major run-length codec
and the geometric primitives (area, IoU, bounding box, boundary map) shared by
all other modules.

Runs follow the COCO convention: counts alternate background and foreground
runs, start with a (possibly empty) background run and traverse the image
column by column.
"""
from typing import Iterable, NamedTuple
import logging

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatchError, MalformedRleError

class BinaryMask:
    """
    Dense single-frame binary mask indexed (row, col), row 0 at the top
    """
    def __init__(self, data):
        """
        Constructor method for BinaryMask

        Args:
            data (array-like): 2D boolean grid of shape (height, width)
        """
        array = np.array(data, dtype = bool)
        if array.ndim != 2:
            raise DimensionMismatchError(
                f"BinaryMask data must be 2D, has {array.ndim} dimensions")
        if array.shape[0] < 1 or array.shape[1] < 1:
            raise DimensionMismatchError(
                f"BinaryMask must be at least 1x1, is {array.shape}")
        array.setflags(write = False)
        self._data = array

    @classmethod
    def zeros(cls, height: int, width: int) -> "BinaryMask":
        """Returns an all-background mask"""
        return cls(np.zeros((height, width), dtype = bool))

    @classmethod
    def full(cls, height: int, width: int) -> "BinaryMask":
        """Returns an all-foreground mask"""
        return cls(np.ones((height, width), dtype = bool))

    @property
    def data(self) -> np.ndarray:
        """Read-only boolean array of shape (height, width)"""
        return self._data

    @property
    def height(self) -> int:
        """Number of pixel rows"""
        return self._data.shape[0]

    @property
    def width(self) -> int:
        """Number of pixel columns"""
        return self._data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        """(height, width) of the mask"""
        return self._data.shape

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(
            self._data, other.data)

    def __repr__(self) -> str:
        return (f"BinaryMask({self.height}x{self.width}, "
                f"area={int(self._data.sum())})")


class RleMask:
    """
    Run-length encoded single-frame binary mask (column-major runs)
    """
    def __init__(self, height: int, width: int, counts: Iterable[int]):
        """
        Constructor method for RleMask. All invariants are checked here, so
        every RleMask in circulation is well formed.

        Args:
            height (int): Number of pixel rows
            width (int): Number of pixel columns
            counts (Iterable[int]): Alternating background/foreground runs

        Raises:
            MalformedRleError: If the counts violate any RLE invariant
        """
        if height < 1 or width < 1:
            raise MalformedRleError(
                f"RLE dimensions must be positive, are {height}x{width}")
        counts = [int(c) for c in counts]
        if any(c < 0 for c in counts):
            raise MalformedRleError(f"Negative run length in counts {counts}")
        if any(c == 0 for c in counts[1:]):
            raise MalformedRleError(
                "Only the leading background run may be zero, "
                f"got counts {counts}")
        total = sum(counts)
        if total != height * width:
            raise MalformedRleError(
                f"Counts sum to {total}, expected {height}x{width} = "
                f"{height * width}")
        self._height = int(height)
        self._width = int(width)
        self._counts = tuple(counts)

    @property
    def height(self) -> int:
        """Number of pixel rows"""
        return self._height

    @property
    def width(self) -> int:
        """Number of pixel columns"""
        return self._width

    @property
    def shape(self) -> tuple[int, int]:
        """(height, width) of the mask"""
        return (self._height, self._width)

    @property
    def counts(self) -> list[int]:
        """Run lengths, background first"""
        return list(self._counts)

    def foreground_runs(self) -> tuple[np.ndarray, np.ndarray]:
        """
        Returns the half-open [start, end) intervals of all foreground runs
        in column-major flat pixel indices
        """
        counts = np.asarray(self._counts, dtype = np.int64)
        boundaries = np.concatenate(([0], np.cumsum(counts)))
        starts = boundaries[1:-1:2]
        ends = starts + counts[1::2]
        return starts, ends

    def __eq__(self, other) -> bool:
        if not isinstance(other, RleMask):
            return NotImplemented
        return self.shape == other.shape and self._counts == other._counts

    def __hash__(self) -> int:
        return hash((self._height, self._width, self._counts))

    def __repr__(self) -> str:
        return f"RleMask({self._height}x{self._width}, counts={self.counts})"


class Bbox(NamedTuple):
    """Tight bounding box with inclusive pixel indices"""
    x_min: int
    y_min: int
    x_max: int
    y_max: int

    @property
    def width(self) -> int:
        """Number of pixel columns covered"""
        return self.x_max - self.x_min + 1

    @property
    def height(self) -> int:
        """Number of pixel rows covered"""
        return self.y_max - self.y_min + 1

    @property
    def area(self) -> int:
        """Number of pixels inside the box"""
        return self.width * self.height


def empty_rle(height: int, width: int) -> RleMask:
    """Returns the RLE of an all-background mask"""
    return RleMask(height, width, [height * width])


def rle_encode(mask: BinaryMask) -> RleMask:
    """
    Encodes a dense mask into column-major runs

    Args:
        mask (BinaryMask): Mask to encode

    Returns:
        RleMask: Lossless run-length encoding
    """
    flat = mask.data.ravel(order = 'F')
    change_points = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    boundaries = np.concatenate(([0], change_points, [flat.size]))
    counts = np.diff(boundaries).tolist()
    if flat[0]:
        counts.insert(0, 0)
    return RleMask(mask.height, mask.width, counts)


def rle_decode(rle: RleMask) -> BinaryMask:
    """
    Decodes column-major runs into a dense mask

    Args:
        rle (RleMask): Mask to decode

    Returns:
        BinaryMask: Dense mask with rle_encode(result) == rle
    """
    counts = rle.counts
    if sum(counts) != rle.height * rle.width:
        raise MalformedRleError(
            f"Counts sum to {sum(counts)}, expected {rle.height * rle.width}")
    values = (np.arange(len(counts)) % 2).astype(bool)
    flat = np.repeat(values, counts)
    return BinaryMask(flat.reshape(rle.shape, order = 'F'))


def mask_area(rle: RleMask) -> int:
    """Number of foreground pixels, i.e. the sum of the foreground runs"""
    return int(sum(rle.counts[1::2]))


def _check_same_dims(a, b) -> None:
    """Raises DimensionMismatchError if two masks differ in shape"""
    if a.shape != b.shape:
        raise DimensionMismatchError(
            f"Mask dimensions differ: {a.shape} vs {b.shape}")


def intersection_area(a: RleMask, b: RleMask) -> int:
    """
    Number of pixels that are foreground in both masks, computed by merging
    the two sorted run lists without decoding

    Args:
        a (RleMask): First mask
        b (RleMask): Second mask of the same dimensions

    Returns:
        int: |a ∩ b|
    """
    _check_same_dims(a, b)
    a_starts, a_ends = (x.tolist() for x in a.foreground_runs())
    b_starts, b_ends = (x.tolist() for x in b.foreground_runs())
    i, j, total = 0, 0, 0
    while i < len(a_starts) and j < len(b_starts):
        low = max(a_starts[i], b_starts[j])
        high = min(a_ends[i], b_ends[j])
        if high > low:
            total += high - low
        ### Advance whichever run finishes first
        if a_ends[i] < b_ends[j]:
            i += 1
        else:
            j += 1
    return total


def mask_iou(a: RleMask, b: RleMask) -> float:
    """
    Intersection over union of two masks computed on runs. Two empty masks
    are a perfect match (1.0).

    Args:
        a (RleMask): First mask
        b (RleMask): Second mask of the same dimensions

    Returns:
        float: |a ∩ b| / |a ∪ b| in [0, 1]
    """
    intersection = intersection_area(a, b)
    union = mask_area(a) + mask_area(b) - intersection
    if union == 0:
        return 1.0
    return intersection / union


def bbox_from_mask(mask: BinaryMask | RleMask) -> Bbox | None:
    """
    Tight inclusive bounding box of the foreground

    Args:
        mask (BinaryMask | RleMask): Mask in either representation

    Returns:
        Bbox | None: Box, or None for an empty mask
    """
    if isinstance(mask, BinaryMask):
        rows = np.flatnonzero(mask.data.any(axis = 1))
        cols = np.flatnonzero(mask.data.any(axis = 0))
        if rows.size == 0:
            return None
        return Bbox(int(cols[0]), int(rows[0]), int(cols[-1]), int(rows[-1]))
    if isinstance(mask, RleMask):
        return _bbox_from_runs(mask)
    raise TypeError(
        f"Expected BinaryMask or RleMask, got {type(mask).__name__}")


def _bbox_from_runs(rle: RleMask) -> Bbox | None:
    """Bounding box straight from the foreground runs"""
    starts, ends = rle.foreground_runs()
    if starts.size == 0:
        return None
    height = rle.height
    first_col = starts // height
    last_col = (ends - 1) // height
    first_row = starts % height
    last_row = (ends - 1) % height
    ### A run wrapping into the next column touches the first and last row
    wraps = last_col > first_col
    y_min = 0 if wraps.any() else int(first_row.min())
    y_max = height - 1 if wraps.any() else int(last_row.max())
    return Bbox(int(first_col.min()), y_min, int(last_col.max()), y_max)


def boundary_map(mask: BinaryMask | RleMask) -> BinaryMask:
    """
    Foreground pixels with at least one 4-neighbour that is background or
    outside the image

    Args:
        mask (BinaryMask | RleMask): Input mask

    Returns:
        BinaryMask: Boundary pixels, a subset of the input foreground
    """
    if isinstance(mask, RleMask):
        mask = rle_decode(mask)
    cross = ndimage.generate_binary_structure(2, 1)
    interior = ndimage.binary_erosion(
        mask.data, structure = cross, border_value = 0)
    return BinaryMask(mask.data & ~interior)


def rle_union(masks: Iterable[RleMask], height: int, width: int) -> RleMask:
    """
    Pixel-wise union of several masks of the given dimensions

    Args:
        masks (Iterable[RleMask]): Masks to merge, may be empty
        height (int): Mask height
        width (int): Mask width

    Returns:
        RleMask: Union mask (empty if no masks are given)
    """
    merged = np.zeros((height, width), dtype = bool)
    for rle in masks:
        if rle.shape != (height, width):
            raise DimensionMismatchError(
                f"Mask dimensions differ: {rle.shape} vs {(height, width)}")
        merged |= rle_decode(rle).data
    return rle_encode(BinaryMask(merged))


class MaskSequence:
    """
    One object's masks over the frames of a video. Frames that are not
    stored are empty masks.
    """
    def __init__(
            self,
            object_id: str,
            height: int,
            width: int,
            frames: dict | None = None,
            num_frames: int | None = None,
            ):
        """
        Constructor method for MaskSequence

        Args:
            object_id (str): Identifier of the object (or expression)
            height (int): Video height shared by all frames
            width (int): Video width shared by all frames
            frames (dict): Frame index -> RleMask, absent index = empty
            num_frames (int): Video length T. Defaults to max index + 1

        Raises:
            DimensionMismatchError: If a frame has other dimensions
            ValueError: If a frame index is negative or beyond num_frames
        """
        self.object_id = str(object_id)
        self._height = int(height)
        self._width = int(width)
        frames = {} if frames is None else dict(frames)
        for index, rle in frames.items():
            if not isinstance(index, (int, np.integer)) or index < 0:
                raise ValueError(
                    f"Frame index must be a non-negative int, is {index!r} "
                    f"(object '{self.object_id}')")
            if rle.shape != (self._height, self._width):
                raise DimensionMismatchError(
                    f"Frame {index} of object '{self.object_id}' has shape "
                    f"{rle.shape}, expected {(self._height, self._width)}")
        self._frames = {int(t): frames[t] for t in sorted(frames)}
        last_index = max(self._frames) if self._frames else -1
        if num_frames is None:
            num_frames = last_index + 1
        if num_frames < last_index + 1:
            raise ValueError(
                f"num_frames {num_frames} too small for frame index "
                f"{last_index} (object '{self.object_id}')")
        self._num_frames = int(num_frames)

    @classmethod
    def from_dense(
            cls, object_id: str, masks, num_frames: int | None = None
            ) -> "MaskSequence":
        """
        Builds a sequence from a dense (T, H, W) boolean array. Only frames
        with foreground are stored.
        """
        masks = np.asarray(masks, dtype = bool)
        if masks.ndim != 3:
            raise DimensionMismatchError(
                f"Dense sequence must be (T, H, W), has shape {masks.shape}")
        frames = {
            t: rle_encode(BinaryMask(frame))
            for t, frame in enumerate(masks) if frame.any()
        }
        if num_frames is None:
            num_frames = masks.shape[0]
        return cls(object_id, masks.shape[1], masks.shape[2], frames, num_frames)

    @property
    def height(self) -> int:
        """Video height"""
        return self._height

    @property
    def width(self) -> int:
        """Video width"""
        return self._width

    @property
    def shape(self) -> tuple[int, int]:
        """(height, width) shared by all frames"""
        return (self._height, self._width)

    @property
    def num_frames(self) -> int:
        """Video length T"""
        return self._num_frames

    @property
    def frames(self) -> dict:
        """Copy of the stored frame index -> RleMask mapping"""
        return dict(self._frames)

    @property
    def frame_indices(self) -> list[int]:
        """Sorted indices of stored frames"""
        return list(self._frames)

    def mask_at(self, t: int) -> RleMask:
        """Mask at frame t, an empty mask if the frame is not stored"""
        if t in self._frames:
            return self._frames[t]
        return empty_rle(self._height, self._width)

    def area_per_frame(self) -> np.ndarray:
        """Foreground pixel count for every frame in [0, num_frames)"""
        areas = np.zeros(self._num_frames, dtype = np.int64)
        for t, rle in self._frames.items():
            areas[t] = mask_area(rle)
        return areas

    def to_dense(self) -> np.ndarray:
        """Dense (T, H, W) boolean array"""
        dense = np.zeros(
            (self._num_frames, self._height, self._width), dtype = bool)
        for t, rle in self._frames.items():
            dense[t] = rle_decode(rle).data
        return dense

    def with_frames(
            self, frames: dict, object_id: str | None = None
            ) -> "MaskSequence":
        """New sequence with the same dimensions and the given frames"""
        if object_id is None:
            object_id = self.object_id
        return MaskSequence(
            object_id, self._height, self._width, frames, self._num_frames)

    def with_length(self, num_frames: int) -> "MaskSequence":
        """Same masks over a video of num_frames frames"""
        if num_frames == self._num_frames:
            return self
        return MaskSequence(
            self.object_id, self._height, self._width, self._frames,
            num_frames)

    def check_compatible(self, other: "MaskSequence") -> None:
        """Raises DimensionMismatchError if the video dimensions differ"""
        if self.shape != other.shape:
            raise DimensionMismatchError(
                f"Sequence '{self.object_id}' is {self.shape}, sequence "
                f"'{other.object_id}' is {other.shape}")

    def __eq__(self, other) -> bool:
        """Equal if dimensions, length and every frame's pixels agree"""
        if not isinstance(other, MaskSequence):
            return NotImplemented
        if self.shape != other.shape or self.num_frames != other.num_frames:
            return False
        indices = set(self._frames) | set(other.frame_indices)
        return all(self.mask_at(t) == other.mask_at(t) for t in indices)

    def __repr__(self) -> str:
        return (f"MaskSequence('{self.object_id}', {self._height}x"
                f"{self._width}, T={self._num_frames}, "
                f"stored={len(self._frames)})")


def log_sequence_summary(seq: MaskSequence) -> None:
    """Logs per-frame areas of a sequence at DEBUG level"""
    logging.debug(
        "Sequence %s: %s frames, areas %s",
        seq.object_id, seq.num_frames, seq.area_per_frame().tolist())
