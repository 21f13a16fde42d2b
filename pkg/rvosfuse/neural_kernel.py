"""
Module containing the desk-scale dense kernels that turn instance masks into
an instance query: a stub grid-occupancy mask encoder, trajectory injection,
projection + spatial pooling, the cross/self-attention aggregation block,
and the candidate retrieval scoring head.

Array conventions (all float64, row-major):
    FeatureMap      list with one (T, h_j, w_j, c_j) array per level j
    InstanceTokens  (T * L, C) array, pooled tokens of all L levels
    QuerySet        (N, C) array
"""
from dataclasses import dataclass, field
from typing import NamedTuple
import logging
import math

import numpy as np
from scipy import special

from .errors import DimensionMismatchError, NumericError
from .mask_core import MaskSequence
from .trajectory import FEATURE_NAMES, TrajectoryFeature, positional_features, \
    trajectory_matrix

LAYER_NORM_EPS = 1e-12
QUERY_INIT_STD = 0.02
TRAJECTORY_DIM = len(FEATURE_NAMES)

def as_tensor(values, shape = None) -> np.ndarray:
    """
    Converts values to a finite float64 array, optionally reshaped

    Raises:
        DimensionMismatchError: If the values do not fill the shape
        ValueError: If any value is not finite
    """
    array = np.asarray(values, dtype = float)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if array.size != math.prod(shape):
            raise DimensionMismatchError(
                f"{array.size} values cannot fill shape {shape}")
        array = array.reshape(shape)
    if not np.all(np.isfinite(array)):
        raise ValueError("Tensor contains non-finite values")
    return array


def _check_finite(array: np.ndarray, sublayer: str) -> np.ndarray:
    """Raises NumericError naming the sublayer if array is not finite"""
    if not np.all(np.isfinite(array)):
        raise NumericError(sublayer)
    return array


@dataclass
class AttentionWeights:
    """Projections of one attention layer, each of shape (C, C)"""
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray

    @property
    def dim(self) -> int:
        """Model width C"""
        return self.w_q.shape[0]

    def check_shapes(self, dim: int, name: str) -> None:
        """Raises DimensionMismatchError unless all projections are C x C"""
        for key in ('w_q', 'w_k', 'w_v', 'w_o'):
            shape = getattr(self, key).shape
            if shape != (dim, dim):
                raise DimensionMismatchError(
                    f"{name}.{key} has shape {shape}, expected {(dim, dim)}")


@dataclass
class LayerNormWeights:
    """Scale and shift of one layer norm, each of shape (C,)"""
    gamma: np.ndarray
    beta: np.ndarray

    @classmethod
    def identity(cls, dim: int) -> "LayerNormWeights":
        """Unit scale, zero shift"""
        return cls(np.ones(dim), np.zeros(dim))


@dataclass
class BlockWeights:
    """
    All weights of the query aggregation block and the surrounding kernels

    Attributes:
        cross (AttentionWeights): Cross-attention projections
        cross_norm (LayerNormWeights): Norm after the cross-attention
        self_layers (list[AttentionWeights]): Self-attention layers
        self_norms (list[LayerNormWeights]): Norm after each self-attention
        ffn_w1, ffn_b1, ffn_w2, ffn_b2 (np.ndarray): Feed forward network
            of shapes (C, C_ff), (C_ff,), (C_ff, C), (C,)
        ffn_norm (LayerNormWeights): Norm after the feed forward network
        trajectory (list[np.ndarray]): Per level (8, c_j) trajectory layer
        projections (list[np.ndarray]): Per level (c_j, C) projection
        classifier (np.ndarray): (C, 1) retrieval classifier
        classifier_bias (float): Retrieval classifier bias
        heads (int): Number of attention heads, must divide C
    """
    cross: AttentionWeights
    cross_norm: LayerNormWeights
    self_layers: list
    self_norms: list
    ffn_w1: np.ndarray
    ffn_b1: np.ndarray
    ffn_w2: np.ndarray
    ffn_b2: np.ndarray
    ffn_norm: LayerNormWeights
    trajectory: list = field(default_factory = list)
    projections: list = field(default_factory = list)
    classifier: np.ndarray | None = None
    classifier_bias: float = 0.0
    heads: int = 1

    def __post_init__(self):
        self.check_shapes()

    @property
    def dim(self) -> int:
        """Model width C"""
        return self.cross.dim

    @property
    def ff_dim(self) -> int:
        """Hidden width of the feed forward network"""
        return self.ffn_w1.shape[1]

    def check_shapes(self) -> None:
        """
        Validates that all weights agree on C, C_ff and the level channels

        Raises:
            DimensionMismatchError: On the first inconsistent weight
        """
        dim = self.dim
        if self.heads < 1 or dim % self.heads:
            raise DimensionMismatchError(
                f"{self.heads} heads do not divide model width {dim}")
        self.cross.check_shapes(dim, 'cross')
        if len(self.self_layers) != len(self.self_norms):
            raise DimensionMismatchError(
                f"{len(self.self_layers)} self-attention layers but "
                f"{len(self.self_norms)} norms")
        for i, layer in enumerate(self.self_layers):
            layer.check_shapes(dim, f'self.{i}')
        norms = [self.cross_norm, self.ffn_norm, *self.self_norms]
        for norm in norms:
            if norm.gamma.shape != (dim,) or norm.beta.shape != (dim,):
                raise DimensionMismatchError(
                    f"Layer norm weights must have shape {(dim,)}")
        ff_dim = self.ff_dim
        expected = {
            'ffn.w1': ((dim, ff_dim), self.ffn_w1.shape),
            'ffn.b1': ((ff_dim,), self.ffn_b1.shape),
            'ffn.w2': ((ff_dim, dim), self.ffn_w2.shape),
            'ffn.b2': ((dim,), self.ffn_b2.shape),
        }
        for name, (want, have) in expected.items():
            if want != have:
                raise DimensionMismatchError(
                    f"{name} has shape {have}, expected {want}")
        if len(self.trajectory) != len(self.projections):
            raise DimensionMismatchError(
                f"{len(self.trajectory)} trajectory layers but "
                f"{len(self.projections)} projections")
        for j, (w_p, proj) in enumerate(zip(self.trajectory, self.projections)):
            if w_p.ndim != 2 or w_p.shape[0] != TRAJECTORY_DIM:
                raise DimensionMismatchError(
                    f"trajectory.{j} has shape {w_p.shape}, expected "
                    f"({TRAJECTORY_DIM}, c_{j})")
            if proj.shape != (w_p.shape[1], dim):
                raise DimensionMismatchError(
                    f"projection.{j} has shape {proj.shape}, expected "
                    f"{(w_p.shape[1], dim)}")
        if self.classifier is not None and self.classifier.shape != (dim, 1):
            raise DimensionMismatchError(
                f"classifier has shape {self.classifier.shape}, "
                f"expected {(dim, 1)}")

    @classmethod
    def from_seed(
            cls,
            dim: int,
            seed: int,
            level_channels: list[int] | None = None,
            ff_dim: int | None = None,
            num_self_layers: int = 2,
            heads: int = 1,
            ) -> "BlockWeights":
        """
        Generates weights from a seeded normal distribution. Matrices use a
        standard deviation of 1/sqrt(fan_in); biases start at zero and layer
        norms at the identity.

        Args:
            dim (int): Model width C
            seed (int): Seed of the random generator
            level_channels (list[int]): Channels c_j per feature level
            ff_dim (int): Feed forward width. Defaults to 4*C
            num_self_layers (int): Number of self-attention layers
            heads (int): Number of attention heads
        """
        rng = np.random.default_rng(seed)
        if ff_dim is None:
            ff_dim = 4*dim
        if level_channels is None:
            level_channels = []

        def matrix(rows: int, cols: int) -> np.ndarray:
            return rng.normal(0.0, 1.0/math.sqrt(rows), size = (rows, cols))

        def attention() -> AttentionWeights:
            return AttentionWeights(*(matrix(dim, dim) for _ in range(4)))

        return cls(
            cross = attention(),
            cross_norm = LayerNormWeights.identity(dim),
            self_layers = [attention() for _ in range(num_self_layers)],
            self_norms = [
                LayerNormWeights.identity(dim) for _ in range(num_self_layers)],
            ffn_w1 = matrix(dim, ff_dim),
            ffn_b1 = np.zeros(ff_dim),
            ffn_w2 = matrix(ff_dim, dim),
            ffn_b2 = np.zeros(dim),
            ffn_norm = LayerNormWeights.identity(dim),
            trajectory = [matrix(TRAJECTORY_DIM, c) for c in level_channels],
            projections = [matrix(c, dim) for c in level_channels],
            classifier = matrix(dim, 1),
            heads = heads,
        )

    @classmethod
    def from_tensors(cls, tensors: dict, heads: int = 1) -> "BlockWeights":
        """
        Builds weights from a name -> array mapping as written by
        `to_tensors` (see `save_tensor_file`)

        Raises:
            KeyError: If a required tensor is missing
        """
        def get(name: str) -> np.ndarray:
            if name not in tensors:
                raise KeyError(f"Missing weight tensor '{name}'")
            return as_tensor(tensors[name])

        def attention(prefix: str) -> AttentionWeights:
            return AttentionWeights(*(
                get(f"{prefix}.{key}") for key in ('w_q', 'w_k', 'w_v', 'w_o')))

        def norm(prefix: str) -> LayerNormWeights:
            return LayerNormWeights(get(f"{prefix}.gamma"), get(f"{prefix}.beta"))

        num_self_layers = _count_indexed(tensors, 'self', '.w_q')
        num_levels = _count_indexed(tensors, 'trajectory', '')
        classifier = get('classifier.w') if 'classifier.w' in tensors else None
        bias = 0.0
        if 'classifier.b' in tensors:
            bias = float(get('classifier.b').reshape(-1)[0])
        return cls(
            cross = attention('cross'),
            cross_norm = norm('cross_norm'),
            self_layers = [attention(f'self.{i}') for i in range(num_self_layers)],
            self_norms = [norm(f'self_norm.{i}') for i in range(num_self_layers)],
            ffn_w1 = get('ffn.w1'),
            ffn_b1 = get('ffn.b1'),
            ffn_w2 = get('ffn.w2'),
            ffn_b2 = get('ffn.b2'),
            ffn_norm = norm('ffn_norm'),
            trajectory = [get(f'trajectory.{j}') for j in range(num_levels)],
            projections = [get(f'projection.{j}') for j in range(num_levels)],
            classifier = classifier,
            classifier_bias = bias,
            heads = heads,
        )

    def to_tensors(self) -> dict:
        """Flat name -> array mapping, the inverse of `from_tensors`"""
        tensors = {}

        def add_attention(prefix: str, layer: AttentionWeights) -> None:
            for key in ('w_q', 'w_k', 'w_v', 'w_o'):
                tensors[f"{prefix}.{key}"] = getattr(layer, key)

        def add_norm(prefix: str, norm: LayerNormWeights) -> None:
            tensors[f"{prefix}.gamma"] = norm.gamma
            tensors[f"{prefix}.beta"] = norm.beta

        add_attention('cross', self.cross)
        add_norm('cross_norm', self.cross_norm)
        for i, (layer, norm) in enumerate(zip(self.self_layers, self.self_norms)):
            add_attention(f'self.{i}', layer)
            add_norm(f'self_norm.{i}', norm)
        tensors.update({
            'ffn.w1': self.ffn_w1, 'ffn.b1': self.ffn_b1,
            'ffn.w2': self.ffn_w2, 'ffn.b2': self.ffn_b2,
        })
        add_norm('ffn_norm', self.ffn_norm)
        for j, (w_p, proj) in enumerate(zip(self.trajectory, self.projections)):
            tensors[f'trajectory.{j}'] = w_p
            tensors[f'projection.{j}'] = proj
        if self.classifier is not None:
            tensors['classifier.w'] = self.classifier
            tensors['classifier.b'] = np.array([self.classifier_bias])
        return tensors


def _count_indexed(tensors: dict, prefix: str, suffix: str) -> int:
    """Counts consecutive entries '<prefix>.<i><suffix>' starting at 0"""
    count = 0
    while f"{prefix}.{count}{suffix}" in tensors:
        count += 1
    return count


def _overlap_matrix(cells: int, pixels: int) -> np.ndarray:
    """
    Integer overlap between `cells` equal cells and `pixels` pixels laid on
    the same segment, in units of 1/(cells*pixels). Rows sum to `pixels`.
    """
    cell = np.arange(cells)[:, None]
    pixel = np.arange(pixels)[None, :]
    low = np.maximum(cell*pixels, pixel*cells)
    high = np.minimum((cell + 1)*pixels, (pixel + 1)*cells)
    return np.clip(high - low, 0, None).astype(np.int64)


def encode_instance(
        seq: MaskSequence, levels: list[tuple[int, int, int]]
        ) -> list[np.ndarray]:
    """
    Deterministic stand-in for a visual backbone. Every cell of an
    h_j x w_j grid holds the fraction of its area covered by foreground,
    replicated over c_j channels.

    Args:
        seq (MaskSequence): Instance masks over T frames
        levels (list[tuple]): (h_j, w_j, c_j) per feature level

    Returns:
        list[np.ndarray]: FeatureMap, one (T, h_j, w_j, c_j) array per level
    """
    if not levels:
        raise ValueError("At least one feature level is required")
    dense = seq.to_dense().astype(np.int64)
    height, width = seq.shape
    feature_map = []
    for h_j, w_j, c_j in levels:
        if min(h_j, w_j, c_j) < 1:
            raise ValueError(f"Level dimensions must be positive, are "
                             f"{(h_j, w_j, c_j)}")
        rows = _overlap_matrix(h_j, height)
        cols = _overlap_matrix(w_j, width)
        covered = np.einsum('ar,trc,bc->tab', rows, dense, cols)
        occupancy = covered / (height*width)
        feature_map.append(np.repeat(occupancy[..., None], c_j, axis = -1))
    return feature_map


def inject_trajectory(
        feats: list[np.ndarray],
        traj: list[TrajectoryFeature] | np.ndarray,
        weights: list[np.ndarray],
        ) -> list[np.ndarray]:
    """
    Adds the linearly projected trajectory descriptor of each frame to every
    spatial position of that frame: out[t, y, x] = feats[t, y, x] + p_t W_p

    Args:
        feats (list[np.ndarray]): FeatureMap, (T, h_j, w_j, c_j) per level
        traj (list | np.ndarray): T descriptors or a (T, 8) array
        weights (list[np.ndarray]): (8, c_j) trajectory layer per level

    Returns:
        list[np.ndarray]: FeatureMap with the trajectory injected
    """
    if isinstance(traj, np.ndarray):
        positions = np.asarray(traj, dtype = float)
    else:
        positions, _ = trajectory_matrix(list(traj))
    if len(weights) != len(feats):
        raise DimensionMismatchError(
            f"{len(weights)} trajectory layers for {len(feats)} levels")
    injected = []
    for j, (level, w_p) in enumerate(zip(feats, weights)):
        num_frames, channels = level.shape[0], level.shape[-1]
        if positions.shape != (num_frames, TRAJECTORY_DIM):
            raise DimensionMismatchError(
                f"Trajectory has shape {positions.shape}, expected "
                f"{(num_frames, TRAJECTORY_DIM)}")
        if w_p.shape != (TRAJECTORY_DIM, channels):
            raise DimensionMismatchError(
                f"Trajectory layer {j} has shape {w_p.shape}, expected "
                f"{(TRAJECTORY_DIM, channels)}")
        offsets = positions @ w_p
        injected.append(level + offsets[:, None, None, :])
    return injected


def project_and_pool(
        feats: list[np.ndarray], projections: list[np.ndarray]
        ) -> np.ndarray:
    """
    Projects every spatial feature to width C and averages over space.
    Tokens of all levels are stacked level by level.

    Args:
        feats (list[np.ndarray]): FeatureMap, (T, h_j, w_j, c_j) per level
        projections (list[np.ndarray]): (c_j, C) projection per level

    Returns:
        np.ndarray: InstanceTokens of shape (T * L, C)
    """
    if len(projections) != len(feats):
        raise DimensionMismatchError(
            f"{len(projections)} projections for {len(feats)} levels")
    tokens = []
    for j, (level, proj) in enumerate(zip(feats, projections)):
        num_frames, h_j, w_j, c_j = level.shape
        if proj.ndim != 2 or proj.shape[0] != c_j:
            raise DimensionMismatchError(
                f"Projection {j} has shape {proj.shape}, expected ({c_j}, C)")
        projected = level.reshape(num_frames, h_j*w_j, c_j) @ proj
        tokens.append(projected.mean(axis = 1))
    return np.concatenate(tokens, axis = 0)


def layer_norm(
        x: np.ndarray, norm: LayerNormWeights, eps: float = LAYER_NORM_EPS
        ) -> np.ndarray:
    """Normalises every row to zero mean and unit variance, then scales"""
    mean = x.mean(axis = -1, keepdims = True)
    variance = x.var(axis = -1, keepdims = True)
    return (x - mean) / np.sqrt(variance + eps) * norm.gamma + norm.beta


def attention(
        query: np.ndarray,
        key_value: np.ndarray,
        weights: AttentionWeights,
        heads: int = 1,
        trace: dict | None = None,
        name: str = 'attention',
        ) -> np.ndarray:
    """
    Scaled dot-product attention of query rows over key_value rows,
    softmax(Q W_q (K W_k)^T / sqrt(C/heads)) K W_v, followed by W_o

    Args:
        query (np.ndarray): (N, C) query rows
        key_value (np.ndarray): (T, C) key/value rows
        weights (AttentionWeights): Projections
        heads (int): Number of heads the width is split into
        trace (dict): If given, receives '<name>.weights' (heads, N, T),
            '<name>.readout' (N, C, before W_o) and '<name>.output'
        name (str): Prefix for trace entries

    Returns:
        np.ndarray: (N, C) attention output
    """
    q = query @ weights.w_q
    k = key_value @ weights.w_k
    v = key_value @ weights.w_v
    head_dim = q.shape[-1] // heads
    readouts, probabilities = [], []
    for head in range(heads):
        part = slice(head*head_dim, (head + 1)*head_dim)
        scores = q[:, part] @ k[:, part].T / math.sqrt(head_dim)
        probs = special.softmax(scores, axis = -1)
        probabilities.append(probs)
        readouts.append(probs @ v[:, part])
    readout = np.concatenate(readouts, axis = 1)
    output = readout @ weights.w_o
    if trace is not None:
        trace[f'{name}.weights'] = np.stack(probabilities)
        trace[f'{name}.readout'] = readout
        trace[f'{name}.output'] = output
    return output


def _check_operands(query: np.ndarray, tokens: np.ndarray, dim: int) -> None:
    """Shape checks shared by the attention entry points"""
    if query.ndim != 2 or query.shape[1] != dim or query.shape[0] < 1:
        raise DimensionMismatchError(
            f"Query has shape {query.shape}, expected (N >= 1, {dim})")
    if tokens.ndim != 2 or tokens.shape[1] != dim or tokens.shape[0] < 1:
        raise DimensionMismatchError(
            f"Tokens have shape {tokens.shape}, expected (T >= 1, {dim})")


def attention_block(
        query: np.ndarray,
        tokens: np.ndarray,
        weights: BlockWeights,
        trace: dict | None = None,
        ) -> np.ndarray:
    """
    One aggregation step: cross-attention of the queries over the instance
    tokens, the self-attention layers over the queries, then the feed
    forward network. Every sublayer is followed by residual + layer norm.

    Args:
        query (np.ndarray): QuerySet (N, C)
        tokens (np.ndarray): InstanceTokens (T, C)
        weights (BlockWeights): Block weights
        trace (dict): If given, receives intermediate sublayer outputs

    Returns:
        np.ndarray: Updated QuerySet (N, C)

    Raises:
        DimensionMismatchError: On inconsistent shapes
        NumericError: If a sublayer produces non-finite values
    """
    query = np.asarray(query, dtype = float)
    tokens = np.asarray(tokens, dtype = float)
    _check_operands(query, tokens, weights.dim)
    _check_finite(query, 'query')
    _check_finite(tokens, 'tokens')

    ### Cross-attention: queries read the instance tokens
    cross = attention(
        query, tokens, weights.cross, weights.heads, trace, 'cross')
    x = _check_finite(
        layer_norm(query + cross, weights.cross_norm), 'cross_attention')

    ### Self-attention among the queries
    for i, (layer, norm) in enumerate(
            zip(weights.self_layers, weights.self_norms)):
        update = attention(x, x, layer, weights.heads, trace, f'self.{i}')
        x = _check_finite(layer_norm(x + update, norm), f'self_attention.{i}')

    ### Feed forward network
    hidden = np.maximum(x @ weights.ffn_w1 + weights.ffn_b1, 0.0)
    update = hidden @ weights.ffn_w2 + weights.ffn_b2
    x = _check_finite(layer_norm(x + update, weights.ffn_norm), 'ffn')
    if trace is not None:
        trace['output'] = x
    return x


def initial_query(num_queries: int, dim: int, seed: int) -> np.ndarray:
    """Seeded Q_0 drawn from normal(0, 0.02^2), shape (N, C)"""
    if num_queries < 1 or dim < 1:
        raise ValueError(
            f"Query shape must be positive, is {(num_queries, dim)}")
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, QUERY_INIT_STD, size = (num_queries, dim))


def aggregate_queries(
        instances: list[np.ndarray],
        weights: BlockWeights,
        seed: int,
        num_queries: int = 5,
        ) -> np.ndarray:
    """
    Folds the attention block over the instances in list order, starting
    from the seeded Q_0: Q_i = Block(Q_{i-1}, F'_i)

    Args:
        instances (list[np.ndarray]): InstanceTokens of the K instances
        weights (BlockWeights): Block weights
        seed (int): Seed of Q_0
        num_queries (int): Number of queries N

    Returns:
        np.ndarray: Q_K of shape (N, C), Q_0 if there are no instances
    """
    query = initial_query(num_queries, weights.dim, seed)
    for i, tokens in enumerate(instances):
        logging.debug(
            "Aggregating instance %s/%s (%s tokens)",
            i + 1, len(instances), len(tokens))
        query = attention_block(query, tokens, weights)
    return query


def instance_tokens(
        seq: MaskSequence,
        levels: list[tuple[int, int, int]],
        weights: BlockWeights,
        use_trajectory: bool = True,
        feature_map: list | None = None,
        ) -> np.ndarray:
    """
    Pooled tokens of one candidate instance: its FeatureMap (the stub
    encoder unless precomputed levels are given), with the trajectory
    injected, projected and pooled

    Returns:
        np.ndarray: InstanceFeature (T*L, C)
    """
    if feature_map is None:
        feature_map = encode_instance(seq, levels)
    if use_trajectory:
        feature_map = inject_trajectory(
            feature_map, positional_features(seq), weights.trajectory)
    return project_and_pool(feature_map, weights.projections)


def instance_query(
        sequences: list[MaskSequence],
        levels: list[tuple[int, int, int]],
        weights: BlockWeights,
        seed: int,
        num_queries: int = 5,
        use_trajectory: bool = True,
        use_instances: bool = True,
        features: dict | None = None,
        ) -> np.ndarray:
    """
    End-to-end query initialisation from candidate instance masks: encode,
    inject trajectory, project and pool, then aggregate.

    Args:
        sequences (list[MaskSequence]): Candidate instances
        levels (list[tuple]): (h_j, w_j, c_j) per feature level
        weights (BlockWeights): Kernel weights
        seed (int): Seed of Q_0
        num_queries (int): Number of queries N
        use_trajectory (bool): Inject trajectory descriptors
        use_instances (bool): If False, return the seeded Q_0 unchanged
        features (dict): Optional precomputed FeatureMaps keyed by object
            id, used instead of the stub encoder

    Returns:
        np.ndarray: QuerySet (N, C)
    """
    if not use_instances:
        return initial_query(num_queries, weights.dim, seed)
    features = features or {}
    instances = [
        instance_tokens(
            seq, levels, weights, use_trajectory, features.get(seq.object_id))
        for seq in sequences
    ]
    return aggregate_queries(instances, weights, seed, num_queries)


class CandidateScores(NamedTuple):
    """Retrieval scores in [0, 1] and the selected candidate indices"""
    scores: np.ndarray
    selected: list


def score_candidates(
        candidate_feats: list[np.ndarray],
        lang_feats: np.ndarray,
        weights: BlockWeights,
        threshold: float = 0.5,
        mode: str = 'binary',
        ) -> CandidateScores:
    """
    Scores candidate mask sequences against a language expression. Each
    candidate's tokens attend to the language tokens (residual added),
    are mean pooled and classified.

    binary: sigmoid score per candidate, selection = scores >= threshold,
    falling back to the arg max (lowest index on ties).
    softmax: scores are a softmax over candidates, selection = arg max.

    Args:
        candidate_feats (list[np.ndarray]): (T_i, C) tokens per candidate
        lang_feats (np.ndarray): (L, C) language tokens
        weights (BlockWeights): Uses `cross`, `classifier`, `heads`
        threshold (float): Binary selection threshold
        mode (str): 'binary' or 'softmax'

    Returns:
        CandidateScores: scores (K,) and sorted selected indices
    """
    if not candidate_feats:
        raise ValueError("At least one candidate is required")
    if weights.classifier is None:
        raise DimensionMismatchError("Weights carry no classifier")
    lang_feats = np.asarray(lang_feats, dtype = float)
    logits = []
    for i, tokens in enumerate(candidate_feats):
        tokens = np.asarray(tokens, dtype = float)
        _check_operands(tokens, lang_feats, weights.dim)
        attended = tokens + attention(
            tokens, lang_feats, weights.cross, weights.heads)
        pooled = _check_finite(attended, f'candidate.{i}').mean(axis = 0)
        logits.append(float(pooled @ weights.classifier[:, 0])
                      + weights.classifier_bias)
    logits = np.array(logits)
    if mode == 'binary':
        scores = special.expit(logits)
        selected = [int(i) for i in np.flatnonzero(scores >= threshold)]
        if not selected:
            selected = [int(np.argmax(scores))]
    elif mode == 'softmax':
        scores = special.softmax(logits)
        selected = [int(np.argmax(scores))]
    else:
        raise ValueError(f"Unknown scoring mode '{mode}'")
    logging.debug("Candidate scores %s, selected %s", scores, selected)
    return CandidateScores(scores, selected)
