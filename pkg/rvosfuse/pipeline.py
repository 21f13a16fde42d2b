"""
Module containing the pipeline stages behind the command line: fusion,
evaluation, prompt and feature export, query initialisation and candidate
scoring. Work is fanned out per video (or expression) over a bounded thread
pool and written single-threaded in sorted order.
"""
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable
import logging

import numpy as np
from rich.progress import Progress

from .config import PipelineConfig
from .errors import DimensionMismatchError, MaskFileError, MissingObjectsError
from .fusion import fuse_expression
from .mask_core import MaskSequence, log_sequence_summary
from .mask_io import (
    load_mask_files, load_tensor_file, save_mask_file,
    save_tensor_file, write_json
)
from .metrics import MetricsReport, evaluate_object, jf_report
from .neural_kernel import (
    BlockWeights, aggregate_queries, initial_query, instance_tokens,
    score_candidates
)
from .prompt_gen import prompts_for_sequence
from .trajectory import positional_features, sample_frames, trajectory_matrix

def run_work_items(
        items: dict,
        func: Callable,
        jobs: int = 1,
        description: str = "Processing",
        ) -> dict:
    """
    Applies func to every item, in parallel if jobs > 1

    Args:
        items (dict): Item id -> argument of func
        func (Callable): Pure function of one argument
        jobs (int): Maximum number of worker threads
        description (str): Progress bar label

    Returns:
        dict: Item id -> result, sorted by id

    Raises:
        Exception: The error of the first failing item in sorted order
    """
    keys = sorted(items)
    results = {}
    with Progress(transient = True) as progress_tracker:
        task = progress_tracker.add_task(
            description = f"[cyan]{description}...", total = len(keys))
        if jobs <= 1:
            for key in keys:
                results[key] = func(items[key])
                progress_tracker.advance(task)
        else:
            with ThreadPoolExecutor(max_workers = jobs) as executor:
                futures = {key: executor.submit(func, items[key]) for key in keys}
                for key in keys:
                    results[key] = futures[key].result()
                    progress_tracker.advance(task)
    logging.debug("%s: %s items done with %s jobs", description, len(keys), jobs)
    return results


def _output_path(config: PipelineConfig, video: str, suffix: str) -> Path:
    return Path(config.out) / f"{video}{suffix}"


def _load_weights(config: PipelineConfig) -> BlockWeights:
    """Kernel weights from the weight file, or generated from the seed"""
    kernel = config.kernel
    if config.weights is None:
        return BlockWeights.from_seed(
            kernel.dim, config.seed,
            level_channels = [c for _, _, c in kernel.levels],
            ff_dim = kernel.ff_dim,
            num_self_layers = kernel.num_self_layers,
            heads = kernel.heads,
        )
    tensors = load_tensor_file(config.weights)
    try:
        return BlockWeights.from_tensors(tensors, heads = kernel.heads)
    except KeyError as exc:
        raise MaskFileError(config.weights, exc.args[0]) from exc
    except DimensionMismatchError as exc:
        raise MaskFileError(config.weights, str(exc)) from exc


def _fuse_video(args) -> tuple[list[MaskSequence], dict, int]:
    pred_file, cand_file, fusion_config = args
    candidates = [] if cand_file is None else cand_file.sequences
    num_frames = pred_file.num_frames
    if cand_file is not None:
        num_frames = max(num_frames, cand_file.num_frames)
    candidates = [c.with_length(num_frames) for c in candidates]
    fused, reports = [], {}
    for pred in sorted(pred_file.sequences, key = lambda s: s.object_id):
        pred = pred.with_length(num_frames)
        try:
            result = fuse_expression(pred, candidates, fusion_config)
        except DimensionMismatchError as exc:
            raise MaskFileError(cand_file.path, str(exc), pred.object_id) \
                from exc
        log_sequence_summary(result.fused_frames)
        fused.append(result.fused_frames)
        reports[pred.object_id] = result.report()
    return fused, reports, num_frames


def run_fuse(config: PipelineConfig) -> list[Path]:
    """
    Fuses every referring prediction with the candidate instances of its
    video and writes <out>/<video>.json plus <out>/<video>.fusion.json

    Args:
        config (PipelineConfig): Needs predictions, candidates and out

    Returns:
        list[Path]: Written files, sorted by video

    Raises:
        MaskFileError: If an input fails to load (nothing is written)
    """
    config.require('predictions', 'candidates', 'out')
    predictions = load_mask_files(config.predictions)
    candidates = load_mask_files(config.candidates)
    items = {}
    for video, pred_file in predictions.items():
        cand_file = candidates.get(video)
        if cand_file is None:
            logging.warning(
                "No candidates for video '%s', passing predictions through",
                video)
        items[video] = (pred_file, cand_file, config.fusion)
    results = run_work_items(items, _fuse_video, config.jobs, "Fusing videos")

    written = []
    for video, (fused, reports, num_frames) in results.items():
        pred_file = predictions[video]
        written.append(save_mask_file(
            _output_path(config, video, '.json'), video, fused, num_frames,
            (pred_file.height, pred_file.width)))
        written.append(write_json(
            _output_path(config, video, '.fusion.json'),
            {'video': video, 'expressions': reports}))
    logging.info("Fused %s videos into %s", len(results), config.out)
    return written


def _evaluate_video(args) -> list:
    pred_file, gt_file = args
    predictions = pred_file.by_id()
    entries = []
    for gt in sorted(gt_file.sequences, key = lambda s: s.object_id):
        try:
            entries.append(evaluate_object(
                predictions[gt.object_id], gt,
                f"{gt_file.video}/{gt.object_id}"))
        except DimensionMismatchError as exc:
            raise MaskFileError(pred_file.path, str(exc), gt.object_id) \
                from exc
    return entries


def run_eval(config: PipelineConfig) -> MetricsReport:
    """
    Scores predictions against ground truth and writes the J&F report to
    the file given by out. Object ids are reported as '<video>/<id>'.

    Raises:
        MissingObjectsError: If ground-truth objects have no prediction
    """
    config.require('predictions', 'gt', 'out')
    predictions = load_mask_files(config.predictions)
    ground_truth = load_mask_files(config.gt)
    missing = []
    for video, gt_file in ground_truth.items():
        pred_ids = set(predictions[video].object_ids) \
            if video in predictions else set()
        missing.extend(
            f"{video}/{object_id}" for object_id in gt_file.object_ids
            if object_id not in pred_ids)
    if missing:
        raise MissingObjectsError(missing, config.predictions)
    items = {
        video: (predictions[video], gt_file)
        for video, gt_file in ground_truth.items()
    }
    results = run_work_items(items, _evaluate_video, config.jobs, "Evaluating")
    entries = [entry for video in results for entry in results[video]]
    report = jf_report(entries, [entry.object_id for entry in entries])
    write_json(config.out, report.to_dict())
    logging.info(
        "Evaluated %s objects: J&F %s", len(entries), report.mean_JF)
    return report


def _prompt_video(args) -> list[dict]:
    mask_file, seed, prompt_config = args
    objects = []
    for seq in sorted(mask_file.sequences, key = lambda s: s.object_id):
        prompts = prompts_for_sequence(
            seq, seed, prompt_config.num_positive, prompt_config.num_negative)
        objects.append({
            'id': seq.object_id,
            'prompts': [prompt_set.to_dict(t) for t, prompt_set in prompts],
        })
    return objects


def run_prompts(config: PipelineConfig) -> list[Path]:
    """
    Samples box and point prompts for every frame of every object of the
    prediction masks and writes <out>/<video>.prompts.json
    """
    config.require('predictions', 'out')
    mask_files = load_mask_files(config.predictions)
    items = {
        video: (mask_file, config.seed, config.prompts)
        for video, mask_file in mask_files.items()
    }
    results = run_work_items(items, _prompt_video, config.jobs, "Sampling prompts")
    return [
        write_json(
            _output_path(config, video, '.prompts.json'),
            {'video': video, 'objects': objects})
        for video, objects in results.items()
    ]


def _clip_frames(num_frames: int, config: PipelineConfig) -> list[int]:
    """Frame indices of one sampled clip, clamped to the video length"""
    n = config.sampling.num_frames
    if n > num_frames:
        logging.warning(
            "Sampling %s frames from a video of %s, using all frames",
            n, num_frames)
        n = num_frames
    return sample_frames(num_frames, n, config.sampling.mode, config.seed)


def _features_video(args) -> dict:
    mask_file, config = args
    objects = []
    for seq in sorted(mask_file.sequences, key = lambda s: s.object_id):
        values, valid = trajectory_matrix(positional_features(seq))
        objects.append({
            'object_id': seq.object_id,
            'features': values.tolist(),
            'valid': valid.tolist(),
        })
    return {
        'video': mask_file.video,
        'sampled_frames': _clip_frames(mask_file.num_frames, config),
        'objects': objects,
    }


def run_features(config: PipelineConfig) -> list[Path]:
    """
    Writes the per-frame trajectory descriptors of every candidate instance
    and one sampled clip to <out>/<video>.features.json
    """
    config.require('candidates', 'out')
    mask_files = load_mask_files(config.candidates)
    items = {video: (mask_file, config) for video, mask_file in mask_files.items()}
    results = run_work_items(
        items, _features_video, config.jobs, "Computing trajectories")
    return [
        write_json(_output_path(config, video, '.features.json'), content)
        for video, content in results.items()
    ]


def split_feature_tensors(tensors: dict) -> dict[str, dict[str, list]]:
    """
    Groups precomputed backbone features named '<video>/<object>/<level>'

    Returns:
        dict: video -> object id -> FeatureMap (levels in index order)
    """
    grouped = {}
    for name, array in tensors.items():
        try:
            video, rest = name.split('/', 1)
            object_id, level = rest.rsplit('/', 1)
            level = int(level)
        except ValueError as exc:
            raise ValueError(
                f"Feature tensor '{name}' is not named "
                f"'<video>/<object>/<level>'") from exc
        grouped.setdefault(video, {}).setdefault(object_id, {})[level] = array
    return {
        video: {
            object_id: [levels[j] for j in sorted(levels)]
            for object_id, levels in objects.items()
        }
        for video, objects in grouped.items()
    }


def _query_video(args) -> np.ndarray:
    mask_file, weights, features, config = args
    kernel = config.kernel
    if not kernel.use_instances:
        return initial_query(kernel.num_queries, weights.dim, config.seed)
    features = features or {}
    instances = []
    for seq in mask_file.sequences:
        feature_map = features.get(seq.object_id)
        try:
            instances.append(instance_tokens(
                seq, kernel.levels, weights, kernel.use_trajectory,
                feature_map))
        except DimensionMismatchError as exc:
            if feature_map is not None:
                source = config.features
            else:
                source = config.weights or mask_file.path
            raise MaskFileError(source, str(exc), seq.object_id) from exc
    return aggregate_queries(
        instances, weights, config.seed, kernel.num_queries)


def run_query(config: PipelineConfig) -> list[Path]:
    """
    Aggregates the candidate instances of every video into an instance
    query and writes it as tensor 'query' to <out>/<video>.query.json
    """
    config.require('candidates', 'out')
    mask_files = load_mask_files(config.candidates)
    weights = _load_weights(config)
    features = {}
    if config.features is not None:
        tensors = load_tensor_file(config.features)
        try:
            features = split_feature_tensors(tensors)
        except ValueError as exc:
            raise MaskFileError(config.features, str(exc)) from exc
    items = {
        video: (mask_file, weights, features.get(video), config)
        for video, mask_file in mask_files.items()
    }
    results = run_work_items(items, _query_video, config.jobs, "Building queries")
    return [
        save_tensor_file(_output_path(config, video, '.query.json'),
                         {'query': query})
        for video, query in results.items()
    ]


def run_score(config: PipelineConfig) -> dict:
    """
    Scores candidate token tensors against every language expression of the
    language tensor file and writes the selections to the file given by out

    Returns:
        dict: Expression id -> {"scores", "selected"}
    """
    config.require('candidates', 'language', 'out')
    candidates = load_tensor_file(config.candidates)
    expressions = load_tensor_file(config.language)
    if not candidates:
        raise MaskFileError(config.candidates, "no candidate tensors")
    weights = _load_weights(config)
    candidate_ids = sorted(candidates)
    candidate_feats = [candidates[name] for name in candidate_ids]
    if weights.classifier is None:
        raise MaskFileError(config.weights, "weights carry no classifier")
    for name, tokens in zip(candidate_ids, candidate_feats):
        if tokens.ndim != 2 or tokens.shape[0] < 1 \
                or tokens.shape[1] != weights.dim:
            raise MaskFileError(
                config.candidates, f"tokens have shape {tokens.shape}, "
                f"expected (T >= 1, {weights.dim})", name)

    def score(args) -> dict:
        expression_id, lang_feats = args
        try:
            result = score_candidates(
                candidate_feats, lang_feats, weights,
                threshold = config.kernel.score_threshold,
                mode = config.kernel.score_mode)
        except DimensionMismatchError as exc:
            raise MaskFileError(config.language, str(exc), expression_id) \
                from exc
        return {
            'scores': [float(s) for s in result.scores],
            'selected': [candidate_ids[i] for i in result.selected],
        }

    items = {name: (name, feats) for name, feats in expressions.items()}
    results = run_work_items(items, score, config.jobs, "Scoring")
    write_json(config.out, {'candidates': candidate_ids, 'expressions': results})
    return results
