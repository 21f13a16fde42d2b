"""Module containing various utils"""
import logging
import os

import matplotlib.pyplot as plt
import numpy as np
from rich.logging import RichHandler

from .mask_core import MaskSequence, rle_decode
from .prompt_gen import PromptSet
from .trajectory import FEATURE_NAMES, TrajectoryFeature

LOG_ENV_VAR = 'RVOSFUSE_LOG'
DEFAULT_LOG_LEVEL = 'WARNING'

def resolve_log_level(level: str | None = None) -> str:
    """
    Picks the log level: explicit value, else the RVOSFUSE_LOG environment
    variable, else WARNING

    Raises:
        ValueError: If the level is not a logging level name
    """
    if level is None:
        level = os.environ.get(LOG_ENV_VAR) or DEFAULT_LOG_LEVEL
    level = str(level).upper()
    if not isinstance(logging.getLevelName(level), int):
        raise ValueError(f"Unknown log level '{level}'")
    return level

def set_up_logging(level: str | None = None) -> None:
    """Installs a rich console handler on the root logger"""
    level = resolve_log_level(level)
    root = logging.getLogger()
    for handler in list(root.handlers):
        if isinstance(handler, RichHandler):
            root.removeHandler(handler)
    root.addHandler(RichHandler(show_path = False, markup = False))
    root.setLevel(level)
    logging.debug("Logging at level %s", level)

def set_logging_to_file(filename, level: str = 'DEBUG') -> logging.Handler:
    """Changes the standart logging handle (stdout) to the given file"""
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    file_handler = logging.FileHandler(filename, mode = 'w')
    file_handler.setFormatter(
        logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    root.addHandler(file_handler)
    root.setLevel(level)
    return file_handler

def plot_prompts(seq: MaskSequence, t: int, prompts: PromptSet, ax = None):
    """
    Shows the mask of frame t with its box and point prompts

    Args:
        seq (MaskSequence): Sequence the prompts were drawn from
        t (int): Frame index
        prompts (PromptSet): Prompts of that frame
        ax: Matplotlib axes, a new figure is created if None

    Returns:
        Matplotlib axes
    """
    if ax is None:
        _, ax = plt.subplots()
    ax.imshow(rle_decode(seq.mask_at(t)).data, cmap = 'gray', vmin = 0, vmax = 1)
    if prompts.box is not None:
        x_min, y_min, x_max, y_max = prompts.box
        ax.add_patch(plt.Rectangle(
            (x_min - 0.5, y_min - 0.5), x_max - x_min + 1, y_max - y_min + 1,
            fill = False, edgecolor = 'tab:orange'))
    for points, color, label in (
            (prompts.positive_points, 'tab:green', 'positive'),
            (prompts.negative_points, 'tab:red', 'negative')):
        if points:
            xs, ys = np.array(points).T
            ax.scatter(xs, ys, c = color, marker = 'x', label = label)
    if prompts.positive_points or prompts.negative_points:
        ax.legend(loc = 'upper right', fontsize = 8)
    ax.set_title(f"{seq.object_id}, frame {t}", loc = 'right')
    return ax

def plot_trajectory(features: list[TrajectoryFeature], ax = None):
    """
    Plots the box descriptor values over frames, invalid frames shaded

    Returns:
        Matplotlib axes
    """
    if ax is None:
        _, ax = plt.subplots()
    values = np.array([f.values for f in features]).reshape(-1, len(FEATURE_NAMES))
    for column, name in enumerate(FEATURE_NAMES):
        ax.plot(values[:, column], label = name)
    for t, feature in enumerate(features):
        if not feature.valid:
            ax.axvspan(t - 0.5, t + 0.5, color = 'gray', alpha = 0.2)
    ncols = int((len(ax.lines)-1)/10) + 1
    ax.legend(bbox_to_anchor=(1.0, 1.0), loc='upper left', fontsize = 8,
              ncols = ncols)
    ax.grid()
    ax.set_xlabel("Frame")
    ax.set_ylabel("Fraction of image size")
    return ax
