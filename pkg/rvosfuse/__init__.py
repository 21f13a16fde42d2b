from .config import (
    FusionConfig, KernelConfig, PipelineConfig, PromptConfig, SamplingConfig
)
from .errors import (
    ConfigError, DimensionMismatchError, MalformedRleError, MaskFileError,
    MissingObjectsError, NumericError
)
from .fusion import (
    FusionResult, frame_level_fuse, fuse_expression, instance_level_retrieve,
    noise_filter, video_iou
)
from .mask_core import (
    BinaryMask, Bbox, MaskSequence, RleMask, bbox_from_mask, boundary_map,
    mask_area, mask_iou, rle_decode, rle_encode
)
from .mask_io import (
    MaskFile, load_mask_file, load_mask_files, load_tensor_file,
    save_mask_file, save_tensor_file
)
from .metrics import (
    MetricsReport, ObjectMetrics, contour_accuracy, evaluate_object,
    jf_report, region_similarity
)
from .neural_kernel import (
    BlockWeights, aggregate_queries, attention_block, encode_instance,
    inject_trajectory, instance_query, project_and_pool, score_candidates
)
from .pipeline import (
    run_eval, run_features, run_fuse, run_prompts, run_query, run_score
)
from .prompt_gen import PromptSet, sample_prompts
from .trajectory import TrajectoryFeature, positional_features, sample_frames
from . import utils
