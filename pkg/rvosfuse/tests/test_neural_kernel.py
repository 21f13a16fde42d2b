import math

import numpy as np
import pytest

from rvosfuse import (
    BlockWeights, DimensionMismatchError, MaskSequence, NumericError,
    aggregate_queries, attention_block, encode_instance, inject_trajectory,
    instance_query, positional_features, project_and_pool, score_candidates
)
from rvosfuse.neural_kernel import (
    AttentionWeights, LayerNormWeights, attention, initial_query, layer_norm
)
from rvosfuse.trajectory import TrajectoryFeature
from rvosfuse.tests.helpers import box_frame, reference_block, sequence

WORKED_EXAMPLE = (0.2, 0.1, 0.6, 0.4, 0.4, 0.25, 0.4, 0.3)

def scalar_weights(cross: float = 1.0, classifier: float = 1.0,
                   bias: float = 0.0) -> BlockWeights:
    """C = 1 weights with every attention projection set to `cross`"""
    one = np.array([[cross]])
    return BlockWeights(
        cross = AttentionWeights(one, one, one, one),
        cross_norm = LayerNormWeights.identity(1),
        self_layers = [],
        self_norms = [],
        ffn_w1 = np.ones((1, 4)),
        ffn_b1 = np.zeros(4),
        ffn_w2 = np.ones((4, 1)),
        ffn_b2 = np.zeros(1),
        ffn_norm = LayerNormWeights.identity(1),
        classifier = np.array([[classifier]]),
        classifier_bias = bias,
    )

def random_weights(rng, dim: int, heads: int = 1, num_self_layers: int = 2):
    """Seeded weights with non-trivial layer norm scale and shift"""
    weights = BlockWeights.from_seed(
        dim, int(rng.integers(0, 2**31)), level_channels = [3],
        num_self_layers = num_self_layers, heads = heads)
    for norm in [weights.cross_norm, weights.ffn_norm, *weights.self_norms]:
        norm.gamma = rng.uniform(0.5, 1.5, size = dim)
        norm.beta = rng.normal(0, 0.1, size = dim)
    weights.ffn_b1 = rng.normal(0, 0.1, size = weights.ff_dim)
    weights.ffn_b2 = rng.normal(0, 0.1, size = dim)
    return weights

def test_encoder_full_and_empty_masks() -> None:
    """Full masks encode to ones, empty masks to zeros"""
    full = sequence('full', [np.ones((6, 10), dtype = bool)]*2)
    empty = MaskSequence('empty', 6, 10, num_frames = 2)
    levels = [(3, 4, 2), (1, 1, 1), (4, 3, 5)]
    for level, values in zip(levels, encode_instance(full, levels)):
        assert values.shape == (2, level[0], level[1], level[2])
        assert np.all(values == 1.0)
    for values in encode_instance(empty, levels):
        assert np.all(values == 0.0)

def test_encoder_left_half() -> None:
    """Left half of a 4x4 mask on a 2x2 grid"""
    seq = sequence('obj', [box_frame(4, 4, (0, 4), (0, 2))])
    (level,) = encode_instance(seq, [(2, 2, 1)])
    assert level[0, :, :, 0].tolist() == [[1.0, 0.0], [1.0, 0.0]]

def test_encoder_uneven_cells() -> None:
    """Cells straddling pixels receive the covered fraction"""
    seq = sequence('obj', [box_frame(1, 3, (0, 1), (0, 1))])
    (level,) = encode_instance(seq, [(1, 2, 1)])
    assert level[0, 0, :, 0] == pytest.approx([2/3, 0.0], abs = 1e-15)

def test_inject_trajectory_examples() -> None:
    """Zero layer is the identity, hand dot products otherwise"""
    feats = [np.random.default_rng(1).normal(size = (2, 3, 3, 4))]
    traj = [TrajectoryFeature(*WORKED_EXAMPLE, True)]*2
    same = inject_trajectory(feats, traj, [np.zeros((8, 4))])
    assert np.array_equal(same[0], feats[0])

    zeros = [np.zeros((1, 2, 2, 1))]
    full_frame = positional_features(
        sequence('obj', [np.ones((4, 4), dtype = bool)]))
    first_only = np.zeros((8, 1))
    first_only[0, 0] = 1.0
    (out,) = inject_trajectory(zeros, full_frame, [first_only])
    assert np.all(out == 0.0)

    (out,) = inject_trajectory(
        zeros, [TrajectoryFeature(*WORKED_EXAMPLE, True)], [np.ones((8, 1))])
    assert out == pytest.approx(np.full((1, 2, 2, 1), 2.65), abs = 1e-12)

def test_invalid_frames_inject_nothing() -> None:
    """Empty frames carry the zero descriptor"""
    feats = [np.ones((1, 2, 2, 3))]
    (out,) = inject_trajectory(
        feats, [TrajectoryFeature.empty()], [np.ones((8, 3))])
    assert np.array_equal(out, feats[0])

def test_inject_trajectory_shape_errors() -> None:
    """Mismatched frame counts and layer shapes are rejected"""
    feats = [np.zeros((2, 2, 2, 3))]
    traj = [TrajectoryFeature.empty()]*2
    with pytest.raises(DimensionMismatchError):
        inject_trajectory(feats, traj[:1], [np.zeros((8, 3))])
    with pytest.raises(DimensionMismatchError):
        inject_trajectory(feats, traj, [np.zeros((8, 2))])
    with pytest.raises(DimensionMismatchError):
        inject_trajectory(feats, traj, [])

def test_project_and_pool_examples() -> None:
    """Constant maps, zeros and the 2x2 hand example"""
    constant = np.broadcast_to(
        np.array([1.5, -2.0, 0.25]), (3, 2, 5, 3)).copy()
    tokens = project_and_pool([constant], [np.eye(3)])
    assert tokens == pytest.approx(np.tile([1.5, -2.0, 0.25], (3, 1)))
    assert np.all(project_and_pool([np.zeros((2, 2, 2, 3))],
                                   [np.ones((3, 4))]) == 0.0)
    values = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 2, 2, 1)
    assert project_and_pool([values], [np.array([[2.0]])]).tolist() == [[5.0]]
    with pytest.raises(DimensionMismatchError):
        project_and_pool([values], [np.ones((2, 1))])

def test_project_and_pool_stacks_levels() -> None:
    """Tokens of all levels are concatenated level by level"""
    levels = [np.ones((2, 2, 2, 1)), 3*np.ones((2, 1, 1, 2))]
    tokens = project_and_pool(levels, [np.ones((1, 4)), np.ones((2, 4))])
    assert tokens.shape == (4, 4)
    assert tokens[:2].tolist() == [[1.0]*4]*2
    assert tokens[2:].tolist() == [[6.0]*4]*2

def test_layer_norm_statistics(rng) -> None:
    """Rows have zero mean and unit variance before scale and shift"""
    x = rng.normal(3.0, 2.0, size = (6, 16))
    out = layer_norm(x, LayerNormWeights.identity(16))
    assert np.abs(out.mean(axis = 1)).max() < 1e-9
    assert np.abs(out.var(axis = 1) - 1).max() < 1e-9

def test_single_token_readout_is_value_projection(rng) -> None:
    """With one key the softmax is 1 and every row reads that value"""
    weights = random_weights(rng, 4)
    query = rng.normal(size = (3, 4))
    token = rng.normal(size = (1, 4))
    trace = {}
    attention_block(query, token, weights, trace = trace)
    expected = np.tile(token @ weights.cross.w_v, (3, 1))
    assert trace['cross.weights'] == pytest.approx(np.ones((1, 3, 1)))
    assert trace['cross.readout'] == pytest.approx(expected, abs = 1e-12)

def test_attention_block_is_deterministic(rng) -> None:
    """Same inputs give bit-identical outputs"""
    weights = random_weights(rng, 6, heads = 2)
    query, tokens = rng.normal(size = (4, 6)), rng.normal(size = (5, 6))
    first = attention_block(query, tokens, weights)
    assert np.array_equal(first, attention_block(query, tokens, weights))
    assert first.shape == (4, 6)

def test_attention_block_hand_weights() -> None:
    """N = T = C = 2 with hand-set weights against the loop reference"""
    w_q = np.array([[1.0, 0.5], [-0.5, 1.0]])
    w_k = np.array([[0.8, 0.0], [0.2, 1.2]])
    w_v = np.array([[1.0, -1.0], [0.5, 2.0]])
    w_o = np.array([[0.3, 0.7], [1.1, -0.4]])
    weights = BlockWeights(
        cross = AttentionWeights(w_q, w_k, w_v, w_o),
        cross_norm = LayerNormWeights(np.array([1.0, 2.0]),
                                      np.array([0.1, -0.1])),
        self_layers = [AttentionWeights(w_k, w_q, w_o, w_v)],
        self_norms = [LayerNormWeights.identity(2)],
        ffn_w1 = np.array([[1.0, -1.0, 0.5], [0.5, 0.5, -2.0]]),
        ffn_b1 = np.array([0.1, 0.0, -0.1]),
        ffn_w2 = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]),
        ffn_b2 = np.array([0.0, 0.2]),
        ffn_norm = LayerNormWeights.identity(2),
    )
    query = np.array([[0.5, -0.25], [1.0, 2.0]])
    tokens = np.array([[2.0, 1.0], [-1.0, 0.5]])
    output = attention_block(query, tokens, weights)
    assert np.abs(output - reference_block(query, tokens, weights)).max() < 1e-9

def test_attention_block_matches_reference(rng) -> None:
    """Random small instances agree with the loop reference"""
    for _ in range(50):
        dim = int(rng.choice([2, 4, 6, 8]))
        heads = int(rng.choice([h for h in (1, 2) if dim % h == 0]))
        weights = random_weights(
            rng, dim, heads, num_self_layers = int(rng.integers(0, 3)))
        query = rng.normal(size = (int(rng.integers(1, 9)), dim))
        tokens = rng.normal(size = (int(rng.integers(1, 9)), dim))
        output = attention_block(query, tokens, weights)
        expected = reference_block(query, tokens, weights)
        assert np.abs(output - expected).max() < 1e-9

def test_softmax_rows_and_convex_readout(rng) -> None:
    """Attention rows sum to one and read-outs lie in the value hull"""
    for _ in range(20):
        dim = 4
        weights = random_weights(rng, dim)
        query = rng.normal(size = (3, dim))
        tokens = rng.normal(size = (5, dim))
        trace = {}
        attention(query, tokens, weights.cross, trace = trace, name = 'x')
        assert np.abs(trace['x.weights'].sum(axis = -1) - 1).max() < 1e-12
        values = tokens @ weights.cross.w_v
        readout = trace['x.readout']
        assert np.all(readout >= values.min(axis = 0) - 1e-9)
        assert np.all(readout <= values.max(axis = 0) + 1e-9)

def test_non_finite_values_name_the_sublayer(rng) -> None:
    """NumericError reports where values stopped being finite"""
    weights = random_weights(rng, 4)
    query = rng.normal(size = (2, 4))
    tokens = rng.normal(size = (3, 4))
    tokens[0, 0] = np.nan
    with pytest.raises(NumericError) as error:
        attention_block(query, tokens, weights)
    assert error.value.sublayer == 'tokens'
    weights.ffn_b1 = np.full_like(weights.ffn_b1, 1e300)
    weights.ffn_w2 = np.full_like(weights.ffn_w2, 1e300)
    tokens[0, 0] = 0.0
    with np.errstate(all = 'ignore'):
        with pytest.raises(NumericError) as error:
            attention_block(query, tokens, weights)
    assert error.value.sublayer == 'ffn'

def test_attention_block_shape_errors(rng) -> None:
    """Operands must have the model width"""
    weights = random_weights(rng, 4)
    with pytest.raises(DimensionMismatchError):
        attention_block(np.zeros((2, 3)), np.zeros((2, 4)), weights)
    with pytest.raises(DimensionMismatchError):
        attention_block(np.zeros((2, 4)), np.zeros((0, 4)), weights)

def test_initial_query_is_seeded() -> None:
    """Q_0 depends only on the seed and has a small spread"""
    first = initial_query(5, 32, seed = 3)
    assert first.shape == (5, 32)
    assert np.array_equal(first, initial_query(5, 32, seed = 3))
    assert not np.array_equal(first, initial_query(5, 32, seed = 4))
    assert np.abs(first).max() < 0.2

def test_aggregate_queries_folds_in_order(rng) -> None:
    """K = 0, 1 and the order dependence of K = 2"""
    weights = random_weights(rng, 4)
    q_0 = initial_query(3, 4, seed = 9)
    assert np.array_equal(aggregate_queries([], weights, 9, 3), q_0)
    first = rng.normal(size = (2, 4))
    second = rng.normal(size = (4, 4)) + 1.0
    single = aggregate_queries([first], weights, 9, 3)
    assert np.array_equal(single, attention_block(q_0, first, weights))
    forward = aggregate_queries([first, second], weights, 9, 3)
    backward = aggregate_queries([second, first], weights, 9, 3)
    assert forward.shape == (3, 4)
    assert not np.allclose(forward, backward)

def test_instance_query_switches(rng) -> None:
    """Ablation switches and precomputed features"""
    levels = [(4, 4, 3)]
    weights = BlockWeights.from_seed(8, 5, level_channels = [3])
    frames = [box_frame(8, 8, (t, t + 3), (1, 5)) for t in range(4)]
    seqs = [sequence('a', frames), sequence('b', frames[::-1])]
    query = instance_query(seqs, levels, weights, seed = 2, num_queries = 4)
    assert query.shape == (4, 8)
    assert np.array_equal(
        instance_query(seqs, levels, weights, 2, 4, use_instances = False),
        initial_query(4, 8, 2))
    no_trajectory = instance_query(
        seqs, levels, weights, 2, 4, use_trajectory = False)
    assert not np.allclose(query, no_trajectory)
    features = {'a': encode_instance(seqs[0], levels),
                'b': encode_instance(seqs[1], levels)}
    assert np.array_equal(
        instance_query(seqs, levels, weights, 2, 4, features = features), query)

def test_from_seed_shapes() -> None:
    """Seeded weights agree on every dimension"""
    weights = BlockWeights.from_seed(
        8, 0, level_channels = [3, 5], ff_dim = 16, num_self_layers = 3,
        heads = 2)
    assert weights.dim == 8 and weights.ff_dim == 16
    assert len(weights.self_layers) == 3
    assert [w.shape for w in weights.trajectory] == [(8, 3), (8, 5)]
    assert [p.shape for p in weights.projections] == [(3, 8), (5, 8)]
    assert weights.classifier.shape == (8, 1)
    rebuilt = BlockWeights.from_tensors(weights.to_tensors(), heads = 2)
    assert np.array_equal(rebuilt.ffn_w2, weights.ffn_w2)
    assert len(rebuilt.self_layers) == 3
    with pytest.raises(DimensionMismatchError):
        BlockWeights.from_seed(8, 0, heads = 3)

def test_from_tensors_reports_missing_tensor() -> None:
    """A missing tensor is named"""
    tensors = BlockWeights.from_seed(4, 0).to_tensors()
    del tensors['ffn.b1']
    with pytest.raises(KeyError, match = 'ffn.b1'):
        BlockWeights.from_tensors(tensors)

def test_single_candidate_is_always_selected() -> None:
    """The fallback keeps the selection non-empty"""
    weights = scalar_weights(bias = -10.0)
    result = score_candidates([np.array([[0.0]])], np.array([[1.0]]), weights)
    assert result.selected == [0]
    assert result.scores[0] < 0.5

def test_identical_candidates_fall_back_to_first() -> None:
    """Equal features give equal scores and the lowest index"""
    weights = scalar_weights(bias = -5.0)
    tokens = np.array([[0.3], [0.1]])
    result = score_candidates([tokens]*3, np.array([[1.0], [0.5]]), weights)
    assert result.scores[0] == result.scores[1] == result.scores[2]
    assert result.selected == [0]

def test_hand_scored_candidates() -> None:
    """Tokens chosen so the sigmoid scores are 0.7 and 0.3"""
    weights = scalar_weights()
    candidates = [np.array([[math.log(7/3) - 1]]),
                  np.array([[math.log(3/7) - 1]])]
    result = score_candidates(candidates, np.array([[1.0]]), weights)
    assert result.scores == pytest.approx([0.7, 0.3], abs = 1e-12)
    assert result.selected == [0]

def test_softmax_reading_selects_arg_max() -> None:
    """K-way reading normalises over candidates"""
    weights = scalar_weights()
    candidates = [np.array([[0.0]]), np.array([[1.0]]), np.array([[1.0]])]
    result = score_candidates(
        candidates, np.array([[1.0]]), weights, mode = 'softmax')
    assert result.scores.sum() == pytest.approx(1.0, abs = 1e-12)
    assert result.selected == [1]
    with pytest.raises(ValueError):
        score_candidates(candidates, np.array([[1.0]]), weights, mode = 'max')

def test_score_candidates_errors() -> None:
    """Empty candidate lists and width mismatches"""
    weights = scalar_weights()
    with pytest.raises(ValueError):
        score_candidates([], np.array([[1.0]]), weights)
    with pytest.raises(DimensionMismatchError):
        score_candidates([np.zeros((1, 2))], np.array([[1.0]]), weights)
