"""
Brute force oracles and scene builders shared by the tests. The oracles work
on dense arrays with numpy counting or plain loops and do not call the code
under test.
"""
import json
import math

import numpy as np

from rvosfuse.mask_core import BinaryMask, MaskSequence, rle_encode

def random_mask(rng: np.random.Generator, max_size: int = 64) -> np.ndarray:
    """Random dense mask of random size, density and blockiness"""
    height = int(rng.integers(1, max_size + 1))
    width = int(rng.integers(1, max_size + 1))
    density = rng.uniform(0.0, 1.0)
    if rng.uniform() < 0.5:
        return rng.uniform(size = (height, width)) < density
    ### Blocky masks produce long runs and wrapped columns
    small = rng.uniform(size = (max(1, height // 4), max(1, width // 4))) < density
    big = np.kron(small, np.ones((4, 4), dtype = bool))
    mask = np.zeros((height, width), dtype = bool)
    h, w = min(height, big.shape[0]), min(width, big.shape[1])
    mask[:h, :w] = big[:h, :w]
    return mask

def random_pair(rng: np.random.Generator, max_size: int = 64):
    """Two random dense masks of the same size"""
    first = random_mask(rng, max_size)
    second = random_mask(rng, max_size)
    second = np.resize(second, first.shape)
    return first, second

def dense_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Pixel counting IoU, empty/empty = 1.0"""
    intersection = int(np.logical_and(a, b).sum())
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        return 1.0
    return intersection / union

def dense_boundary(mask: np.ndarray) -> np.ndarray:
    """Foreground pixels with a background or out-of-image 4-neighbour"""
    height, width = mask.shape
    boundary = np.zeros_like(mask, dtype = bool)
    for row in range(height):
        for col in range(width):
            if not mask[row, col]:
                continue
            for d_row, d_col in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                r, c = row + d_row, col + d_col
                if not (0 <= r < height and 0 <= c < width) or not mask[r, c]:
                    boundary[row, col] = True
                    break
    return boundary

def chebyshev_dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Pixels within Chebyshev distance radius of a set pixel"""
    height, width = mask.shape
    dilated = np.zeros_like(mask, dtype = bool)
    for row, col in zip(*np.nonzero(mask)):
        dilated[max(0, row - radius):row + radius + 1,
                max(0, col - radius):col + radius + 1] = True
    return dilated

def dense_f_measure(pred: np.ndarray, gt: np.ndarray) -> float:
    """Boundary F of one frame with the 0.008 diagonal dilation radius"""
    radius = math.ceil(0.008*math.hypot(*gt.shape))
    pred_b, gt_b = dense_boundary(pred), dense_boundary(gt)
    n_pred, n_gt = int(pred_b.sum()), int(gt_b.sum())
    if n_pred == 0 and n_gt == 0:
        return 1.0
    if n_pred == 0 or n_gt == 0:
        return 0.0
    precision = int((pred_b & chebyshev_dilate(gt_b, radius)).sum()) / n_pred
    recall = int((gt_b & chebyshev_dilate(pred_b, radius)).sum()) / n_gt
    if precision + recall == 0:
        return 0.0
    return 2*precision*recall / (precision + recall)

def loop_layer_norm(x: np.ndarray, gamma, beta, eps: float = 1e-12):
    """Row-wise layer norm with explicit loops"""
    out = np.zeros_like(x)
    for i, row in enumerate(x):
        mean = sum(row) / len(row)
        var = sum((v - mean)**2 for v in row) / len(row)
        for j, v in enumerate(row):
            out[i, j] = (v - mean) / math.sqrt(var + eps)*gamma[j] + beta[j]
    return out

def loop_attention(query, key_value, weights, heads: int = 1):
    """Multi-head scaled dot-product attention with explicit loops"""
    q = query @ weights.w_q
    k = key_value @ weights.w_k
    v = key_value @ weights.w_v
    n, dim = q.shape
    t = k.shape[0]
    head_dim = dim // heads
    readout = np.zeros((n, dim))
    for head in range(heads):
        cols = range(head*head_dim, (head + 1)*head_dim)
        for i in range(n):
            scores = [
                sum(q[i, c]*k[j, c] for c in cols) / math.sqrt(head_dim)
                for j in range(t)
            ]
            top = max(scores)
            exps = [math.exp(s - top) for s in scores]
            total = sum(exps)
            for c in cols:
                readout[i, c] = sum(exps[j]/total*v[j, c] for j in range(t))
    return readout @ weights.w_o

def reference_block(query, tokens, weights):
    """Independent evaluation of cross, self and feed forward sublayers"""
    x = loop_layer_norm(
        query + loop_attention(query, tokens, weights.cross, weights.heads),
        weights.cross_norm.gamma, weights.cross_norm.beta)
    for layer, norm in zip(weights.self_layers, weights.self_norms):
        x = loop_layer_norm(
            x + loop_attention(x, x, layer, weights.heads),
            norm.gamma, norm.beta)
    hidden = x @ weights.ffn_w1 + weights.ffn_b1
    hidden = np.where(hidden > 0, hidden, 0.0)
    return loop_layer_norm(
        x + hidden @ weights.ffn_w2 + weights.ffn_b2,
        weights.ffn_norm.gamma, weights.ffn_norm.beta)

def box_frame(height: int, width: int, rows: tuple, cols: tuple) -> np.ndarray:
    """Dense frame with the half-open block rows x cols set"""
    frame = np.zeros((height, width), dtype = bool)
    frame[rows[0]:rows[1], cols[0]:cols[1]] = True
    return frame

def rle(frame: np.ndarray):
    """RleMask of a dense frame"""
    return rle_encode(BinaryMask(frame))

def sequence(object_id: str, frames: list[np.ndarray]) -> MaskSequence:
    """MaskSequence from a list of dense frames"""
    return MaskSequence.from_dense(object_id, np.stack(frames))

def two_candidate_scene():
    """
    8x8 scene over two frames: candidates A (left half) and B (right half)
    and a prediction over columns 1..6. Both candidates have IoU 3/7 with
    the prediction.
    """
    size = 8
    cand_a = sequence('A', [box_frame(size, size, (0, 8), (0, 4))]*2)
    cand_b = sequence('B', [box_frame(size, size, (0, 8), (4, 8))]*2)
    pred = sequence('expr', [box_frame(size, size, (0, 8), (1, 7))]*2)
    return pred, [cand_a, cand_b]

def mask_file_content(
        video: str, sequences: list[MaskSequence], with_version: bool = True
        ) -> dict:
    """Mask-sequence JSON layout of sequences"""
    content = {
        'video': video,
        'height': sequences[0].height,
        'width': sequences[0].width,
        'num_frames': max(seq.num_frames for seq in sequences),
        'objects': [
            {
                'id': seq.object_id,
                'frames': [
                    {'t': t, 'counts': mask.counts}
                    for t, mask in seq.frames.items()
                ],
            }
            for seq in sequences
        ],
    }
    if with_version:
        content['format_version'] = 1
    return content

def write_mask_file(path, video: str, sequences: list[MaskSequence]):
    """Writes sequences as a mask-sequence file and returns the path"""
    path.parent.mkdir(parents = True, exist_ok = True)
    path.write_text(json.dumps(mask_file_content(video, sequences)))
    return path

def synthetic_corpus(root, num_videos: int = 3, seed: int = 7):
    """
    Writes prediction and candidate directories for num_videos random videos

    Returns:
        tuple: (predictions dir, candidates dir)
    """
    rng = np.random.default_rng(seed)
    pred_dir, cand_dir = root / 'predictions', root / 'candidates'
    for v in range(num_videos):
        height, width, frames = 12, 16, 6
        candidates = []
        for k in range(3):
            top, left = int(rng.integers(0, 6)), int(rng.integers(0, 10))
            masks = [
                box_frame(height, width, (top, top + 5), (left + t % 2,
                                                          left + 5 + t % 2))
                for t in range(frames)
            ]
            masks[int(rng.integers(0, frames))][:] = False
            candidates.append(sequence(f'cand{k}', masks))
        dense = candidates[0].to_dense() | candidates[1].to_dense()
        noise = rng.uniform(size = dense.shape) < 0.05
        predictions = [
            MaskSequence.from_dense('expr0', dense ^ noise),
            MaskSequence.from_dense('expr1', candidates[2].to_dense()),
        ]
        write_mask_file(pred_dir / f'video{v}.json', f'video{v}', predictions)
        write_mask_file(cand_dir / f'video{v}.json', f'video{v}', candidates)
    return pred_dir, cand_dir
