"""
Command line front end. Settings come from an optional TOML file given with
--config; flags override the file.

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
"""
import argparse
import logging
import sys

from rich.console import Console

from .config import PipelineConfig
from .errors import (
    ConfigError, DimensionMismatchError, MalformedRleError, MaskFileError,
    MissingObjectsError, NumericError
)
from .metrics import print_report
from . import pipeline
from .utils import set_up_logging

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

DATA_ERRORS = (
    MaskFileError, MissingObjectsError, MalformedRleError,
    DimensionMismatchError, NumericError,
)

class ArgumentParser(argparse.ArgumentParser):
    """Argument parser that exits with the usage error code"""
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(parser: argparse.ArgumentParser, out_help: str) -> None:
    parser.add_argument('--config', help = "TOML config file")
    parser.add_argument('--out', help = out_help)
    parser.add_argument('--seed', type = int, help = "Seed of all generators")
    parser.add_argument('--jobs', type = int, help = "Parallel workers")
    parser.add_argument(
        '--log-level', dest = 'log_level',
        help = "Log level, defaults to $RVOSFUSE_LOG or WARNING")


def _add_kernel_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        '--weights', help = "Kernel weight tensor file, seeded if absent")
    parser.add_argument('--dim', dest = 'kernel.dim', type = int,
                        help = "Model width C")
    parser.add_argument('--heads', dest = 'kernel.heads', type = int,
                        help = "Attention heads")


def build_parser() -> argparse.ArgumentParser:
    """Parser with the fuse, eval, prompts, features, query, score commands"""
    parser = ArgumentParser(
        prog = 'rvosfuse',
        description = "Fusion, prompting and evaluation of referring video "
                      "segmentation masks")
    commands = parser.add_subparsers(dest = 'command', required = True)

    fuse = commands.add_parser(
        'fuse', help = "Fuse referring predictions with candidate instances")
    _add_common(fuse, "Output directory")
    fuse.add_argument('--predictions', help = "Prediction mask file or dir")
    fuse.add_argument('--candidates', help = "Candidate mask file or dir")
    fuse.add_argument('--alpha', dest = 'fusion.alpha', type = float,
                      help = "Noise area fraction")
    fuse.add_argument('--tau-f', dest = 'fusion.tau_f', type = float,
                      help = "Frame-level IoU threshold")
    fuse.add_argument('--tau-v', dest = 'fusion.tau_v', type = float,
                      help = "Video-level IoU threshold")
    fuse.add_argument(
        '--frame-level-only', dest = 'fusion.instance_level',
        action = 'store_const', const = False,
        help = "Skip instance-level retrieval")

    evaluate = commands.add_parser('eval', help = "J&F evaluation")
    _add_common(evaluate, "Report file")
    evaluate.add_argument('--predictions', help = "Prediction mask file or dir")
    evaluate.add_argument('--gt', help = "Ground-truth mask file or dir")

    prompts = commands.add_parser(
        'prompts', help = "Sample box and point prompts from masks")
    _add_common(prompts, "Output directory")
    prompts.add_argument('--predictions', help = "Mask file or dir")
    prompts.add_argument('--num-positive', dest = 'prompts.num_positive',
                         type = int, help = "Positive points per mask")
    prompts.add_argument('--num-negative', dest = 'prompts.num_negative',
                         type = int, help = "Negative points per mask")

    features = commands.add_parser(
        'features', help = "Export trajectory descriptors and sampled clips")
    _add_common(features, "Output directory")
    features.add_argument('--candidates', help = "Candidate mask file or dir")
    features.add_argument(
        '--sampling', dest = 'sampling.mode', choices = ('global', 'local'),
        help = "Frame sampling scheme")
    features.add_argument('--num-frames', dest = 'sampling.num_frames',
                          type = int, help = "Frames per sampled clip")

    query = commands.add_parser(
        'query', help = "Aggregate candidate instances into an instance query")
    _add_common(query, "Output directory")
    query.add_argument('--candidates', help = "Candidate mask file or dir")
    query.add_argument(
        '--features', help = "Precomputed feature tensor file "
                             "('<video>/<object>/<level>' tensors)")
    query.add_argument('--num-queries', dest = 'kernel.num_queries',
                       type = int, help = "Number of queries N")
    query.add_argument('--no-trajectory', dest = 'kernel.use_trajectory',
                       action = 'store_const', const = False,
                       help = "Do not inject trajectory descriptors")
    query.add_argument('--no-instances', dest = 'kernel.use_instances',
                       action = 'store_const', const = False,
                       help = "Return the seeded initial query")
    _add_kernel_flags(query)

    score = commands.add_parser(
        'score', help = "Score candidate tokens against language features")
    _add_common(score, "Selection file")
    score.add_argument('--candidates', help = "Candidate token tensor file")
    score.add_argument('--language', help = "Language feature tensor file")
    score.add_argument('--threshold', dest = 'kernel.score_threshold',
                       type = float, help = "Binary selection threshold")
    score.add_argument('--mode', dest = 'kernel.score_mode',
                       choices = ('binary', 'softmax'), help = "Score reading")
    _add_kernel_flags(score)
    return parser


def load_config(args: argparse.Namespace) -> PipelineConfig:
    """Config file (if any) overridden by the given flags"""
    if args.config is not None:
        config = PipelineConfig.from_toml(args.config)
    else:
        config = PipelineConfig()
    config.update_from_args(args)
    return config


def run_command(command: str, config: PipelineConfig) -> None:
    """Dispatches a parsed command to its pipeline stage"""
    if command == 'fuse':
        pipeline.run_fuse(config)
    elif command == 'eval':
        print_report(pipeline.run_eval(config))
    elif command == 'prompts':
        pipeline.run_prompts(config)
    elif command == 'features':
        pipeline.run_features(config)
    elif command == 'query':
        pipeline.run_query(config)
    elif command == 'score':
        pipeline.run_score(config)
    else:
        raise ValueError(f"Unknown command '{command}'")


def main(argv: list[str] | None = None) -> int:
    """
    Entry point of the rvosfuse command

    Args:
        argv (list[str]): Arguments without the program name, defaults to
            sys.argv[1:]

    Returns:
        int: Exit code
    """
    args = build_parser().parse_args(argv)
    console = Console(stderr = True, soft_wrap = True)
    try:
        set_up_logging(args.log_level)
    except ValueError as exc:
        console.print(f"error: {exc}", style = 'red', markup = False,
                      highlight = False)
        return EXIT_USAGE
    try:
        config = load_config(args)
        logging.debug("Running '%s' with %s", args.command, config.to_dict())
        run_command(args.command, config)
    except ConfigError as exc:
        console.print(f"error: {exc}", style = 'red', markup = False,
                      highlight = False)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        console.print(f"error: {exc}", style = 'red', markup = False,
                      highlight = False)
        return EXIT_DATA
    return EXIT_OK
