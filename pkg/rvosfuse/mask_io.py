"""
Module containing the readers and writers of the JSON files exchanged by the
pipeline: mask-sequence files, tensor files and reports. Every file carries
a top-level "format_version". Writes are atomic (temporary file + rename).
"""
from dataclasses import dataclass, field
from pathlib import Path
import json
import logging
import os
import tempfile

import numpy as np

from .errors import DimensionMismatchError, MalformedRleError, MaskFileError
from .mask_core import MaskSequence, RleMask

FORMAT_VERSION = 1
OUTPUT_SUFFIXES = (
    '.fusion.json', '.prompts.json', '.features.json', '.query.json')

@dataclass
class MaskFile:
    """
    Content of one mask-sequence file

    Attributes:
        path (Path): File the content was read from
        video (str): Video identifier
        height (int): Frame height
        width (int): Frame width
        num_frames (int): Video length T
        sequences (list[MaskSequence]): Objects in file order
    """
    path: Path
    video: str
    height: int
    width: int
    num_frames: int
    sequences: list = field(default_factory = list)

    @property
    def object_ids(self) -> list[str]:
        """Object ids in file order"""
        return [seq.object_id for seq in self.sequences]

    def by_id(self) -> dict[str, MaskSequence]:
        """Object id -> MaskSequence"""
        return {seq.object_id: seq for seq in self.sequences}


def read_json(path) -> dict:
    """
    Reads a JSON object from a file

    Raises:
        MaskFileError: If the file is missing, unreadable or not a JSON
            object, or carries an unsupported format_version
    """
    path = Path(path)
    try:
        with open(path, 'r', encoding = 'utf-8') as file:
            data = json.load(file)
    except FileNotFoundError as exc:
        raise MaskFileError(path, "file not found") from exc
    except json.JSONDecodeError as exc:
        raise MaskFileError(
            path, f"malformed JSON at line {exc.lineno}: {exc.msg}") from exc
    except UnicodeDecodeError as exc:
        raise MaskFileError(
            path, f"not valid UTF-8 at byte {exc.start}: {exc.reason}") \
            from exc
    except OSError as exc:
        raise MaskFileError(path, f"cannot read file: {exc}") from exc
    if not isinstance(data, dict):
        raise MaskFileError(path, "top level must be a JSON object")
    version = data.get('format_version', FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise MaskFileError(
            path, f"unsupported format_version {version!r}, "
            f"expected {FORMAT_VERSION}")
    return data


def write_json(path, data: dict) -> Path:
    """
    Atomically writes a JSON object with sorted keys. The content goes to a
    temporary file in the target directory which then replaces the target.

    Args:
        path (str | Path): Target file
        data (dict): JSON-serialisable content, format_version is added

    Returns:
        Path: The written file
    """
    path = Path(path)
    path.parent.mkdir(parents = True, exist_ok = True)
    content = {'format_version': FORMAT_VERSION, **data}
    text = json.dumps(content, sort_keys = True) + "\n"
    file_descriptor, temp_name = tempfile.mkstemp(
        dir = path.parent, prefix = f".{path.name}.", suffix = ".tmp")
    try:
        with os.fdopen(file_descriptor, 'w', encoding = 'utf-8') as file:
            file.write(text)
        os.replace(temp_name, path)
    except BaseException:
        if os.path.exists(temp_name):
            os.remove(temp_name)
        raise
    logging.debug("Wrote %s", path)
    return path


def _positive_int(path, data: dict, key: str, object_id = None) -> int:
    value = data.get(key)
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise MaskFileError(
            path, f"'{key}' must be a positive integer, is {value!r}",
            object_id)
    return value


def _parse_frames(path, entry: dict, object_id: str, height: int, width: int):
    frames = {}
    raw_frames = entry.get('frames', [])
    if not isinstance(raw_frames, list):
        raise MaskFileError(path, "'frames' must be a list", object_id)
    previous = -1
    for raw in raw_frames:
        if not isinstance(raw, dict) or 't' not in raw or 'counts' not in raw:
            raise MaskFileError(
                path, f"frame entries need 't' and 'counts', got {raw!r}",
                object_id)
        t = raw['t']
        if isinstance(t, bool) or not isinstance(t, int) or t < 0:
            raise MaskFileError(
                path, f"frame index must be a non-negative integer, is {t!r}",
                object_id)
        if t <= previous:
            raise MaskFileError(
                path, f"frame indices must be strictly increasing, {t} "
                f"follows {previous}", object_id)
        counts = raw['counts']
        if not isinstance(counts, list) or not all(
                isinstance(c, int) and not isinstance(c, bool) for c in counts):
            raise MaskFileError(
                path, f"frame {t}: counts must be a list of integers",
                object_id)
        try:
            frames[t] = RleMask(height, width, counts)
        except MalformedRleError as exc:
            raise MaskFileError(path, f"frame {t}: {exc}", object_id) from exc
        previous = t
    return frames


def parse_mask_file(path, data: dict) -> MaskFile:
    """
    Validates a decoded mask-sequence JSON object. Objects may repeat the
    video dimensions as their own 'height'/'width'; they must agree.

    Raises:
        MaskFileError: On any schema, dimension or RLE violation, naming
            the object where one is involved
    """
    path = Path(path)
    video = data.get('video')
    if not isinstance(video, str) or not video:
        raise MaskFileError(path, "'video' must be a non-empty string")
    objects = data.get('objects')
    if not isinstance(objects, list):
        raise MaskFileError(path, "'objects' must be a list")

    dims = None
    if 'height' in data or 'width' in data:
        dims = (_positive_int(path, data, 'height'),
                _positive_int(path, data, 'width'))
    for entry in objects:
        if not isinstance(entry, dict) or 'id' not in entry:
            raise MaskFileError(path, f"object entries need an 'id', got "
                                f"{entry!r}")
        if 'height' in entry or 'width' in entry:
            object_id = str(entry['id'])
            object_dims = (
                _positive_int(path, entry, 'height', object_id),
                _positive_int(path, entry, 'width', object_id))
            if dims is None:
                dims = object_dims
            elif object_dims != dims:
                raise MaskFileError(
                    path, f"declares dims {object_dims}, inconsistent with "
                    f"{dims}", object_id)
    if dims is None:
        raise MaskFileError(path, "video 'height' and 'width' are missing")
    height, width = dims

    parsed = {}
    for entry in objects:
        object_id = str(entry['id'])
        if object_id in parsed:
            raise MaskFileError(path, "duplicate object id", object_id)
        parsed[object_id] = _parse_frames(path, entry, object_id, height, width)

    last_index = max(
        (max(frames) for frames in parsed.values() if frames), default = 0)
    num_frames = data.get('num_frames', last_index + 1)
    if isinstance(num_frames, bool) or not isinstance(num_frames, int) \
            or num_frames < last_index + 1:
        raise MaskFileError(
            path, f"'num_frames' {num_frames!r} does not cover frame index "
            f"{last_index}")
    sequences = [
        MaskSequence(object_id, height, width, frames, num_frames)
        for object_id, frames in parsed.items()
    ]
    return MaskFile(path, video, height, width, num_frames, sequences)


def load_mask_file(path) -> MaskFile:
    """
    Loads and validates a mask-sequence file

    Args:
        path (str | Path): JSON file in the mask-sequence layout

    Returns:
        MaskFile: Video dims and one MaskSequence per object

    Raises:
        MaskFileError: Missing file, malformed JSON, RLE or dims violations
    """
    data = read_json(path)
    mask_file = parse_mask_file(path, data)
    logging.info(
        "Loaded %s objects of video '%s' from %s",
        len(mask_file.sequences), mask_file.video, path)
    return mask_file


def load_mask_files(path) -> dict[str, MaskFile]:
    """
    Loads a single mask file or every *.json mask file of a directory.
    Report files written by the pipeline (*.fusion.json, ...) are skipped.

    Returns:
        dict[str, MaskFile]: Video id -> file content, sorted by video id

    Raises:
        MaskFileError: If a file fails to load, the path does not exist or
            two files describe the same video
    """
    path = Path(path)
    if path.is_dir():
        paths = sorted(
            p for p in path.glob('*.json')
            if not p.name.endswith(OUTPUT_SUFFIXES))
    elif path.exists():
        paths = [path]
    else:
        raise MaskFileError(path, "file or directory not found")
    files = {}
    for file_path in paths:
        mask_file = load_mask_file(file_path)
        if mask_file.video in files:
            raise MaskFileError(
                file_path, f"video '{mask_file.video}' already loaded from "
                f"{files[mask_file.video].path}")
        files[mask_file.video] = mask_file
    return dict(sorted(files.items()))


def mask_file_dict(
        video: str,
        sequences: list[MaskSequence],
        num_frames: int | None = None,
        shape: tuple[int, int] | None = None,
        ) -> dict:
    """
    Serialisable mask-sequence layout of a list of sequences

    Args:
        video (str): Video identifier
        sequences (list[MaskSequence]): Objects to store, in this order
        num_frames (int): Video length. Defaults to the longest sequence
        shape (tuple): (height, width), required without sequences

    Raises:
        ValueError: If neither sequences nor shape are given
        DimensionMismatchError: If the sequence dims differ
    """
    if sequences:
        for seq in sequences[1:]:
            sequences[0].check_compatible(seq)
        if shape is not None and tuple(shape) != sequences[0].shape:
            raise DimensionMismatchError(
                f"Sequences of video '{video}' are {sequences[0].shape}, "
                f"expected {tuple(shape)}")
        shape = sequences[0].shape
    elif shape is None:
        raise ValueError(f"Cannot write video '{video}' without objects or shape")
    if num_frames is None:
        num_frames = max((seq.num_frames for seq in sequences), default = 1)
    return {
        'video': video,
        'height': int(shape[0]),
        'width': int(shape[1]),
        'num_frames': num_frames,
        'objects': [
            {
                'id': seq.object_id,
                'frames': [
                    {'t': t, 'counts': rle.counts}
                    for t, rle in seq.frames.items()
                ],
            }
            for seq in sequences
        ],
    }


def save_mask_file(
        path, video: str, sequences: list[MaskSequence],
        num_frames: int | None = None,
        shape: tuple[int, int] | None = None) -> Path:
    """Atomically writes sequences as a mask-sequence file"""
    return write_json(path, mask_file_dict(video, sequences, num_frames, shape))


def load_tensor_file(path) -> dict[str, np.ndarray]:
    """
    Loads a tensor file {"name": {"shape": [...], "values": [...]}, ...}

    Returns:
        dict[str, np.ndarray]: Name -> float64 array of the given shape

    Raises:
        MaskFileError: If the file is unreadable or a tensor is invalid,
            naming the tensor
    """
    data = read_json(path)
    tensors = {}
    for name, entry in data.items():
        if name == 'format_version':
            continue
        if not isinstance(entry, dict) or 'shape' not in entry \
                or 'values' not in entry:
            raise MaskFileError(
                path, "tensor entries need 'shape' and 'values'", name)
        shape = entry['shape']
        if not isinstance(shape, list) or not all(
                isinstance(s, int) and s >= 0 for s in shape):
            raise MaskFileError(
                path, f"shape must be a list of sizes, is {shape!r}", name)
        try:
            values = np.asarray(entry['values'], dtype = float).reshape(-1)
            if values.size != int(np.prod(shape)):
                raise ValueError(
                    f"{values.size} values cannot fill shape {shape}")
            if not np.all(np.isfinite(values)):
                raise ValueError("values must be finite")
        except (TypeError, ValueError) as exc:
            raise MaskFileError(path, str(exc), name) from exc
        tensors[name] = values.reshape(shape)
    logging.info("Loaded %s tensors from %s", len(tensors), path)
    return tensors


def tensor_file_dict(tensors: dict) -> dict:
    """Serialisable tensor layout, values flattened row-major"""
    content = {}
    for name, array in tensors.items():
        array = np.asarray(array, dtype = float)
        content[str(name)] = {
            'shape': list(array.shape),
            'values': array.reshape(-1).tolist(),
        }
    return content


def save_tensor_file(path, tensors: dict) -> Path:
    """Atomically writes name -> array tensors as a tensor file"""
    return write_json(path, tensor_file_dict(tensors))
