"""NumPy backend for the batch-hard triplet kernels.

Used whenever the compiled extension is unavailable (or forced via
``REIDLAB_KERNELS=numpy``). Distances are vectorized; the subgradient
accumulation is a small per-anchor loop. Callers guarantee C-contiguous
float64 inputs and validated batches.
"""

import numpy as np


def batch_hard_mine(dist: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-anchor hardest positive / hardest negative indices.

    Positive pool excludes the anchor itself. Ties resolve to the first
    index in scan order (argmax/argmin return the first extremum); anchors
    with an empty pool get index -1.
    """
    n = dist.shape[0]
    same = labels[:, None] == labels[None, :]
    eye = np.eye(n, dtype=bool)
    pos_mask = same & ~eye
    neg_mask = ~same
    pos = np.where(pos_mask, dist, -np.inf)
    neg = np.where(neg_mask, dist, np.inf)
    hard_pos = np.argmax(pos, axis=1).astype(np.int64)
    hard_neg = np.argmin(neg, axis=1).astype(np.int64)
    hard_pos[~pos_mask.any(axis=1)] = -1
    hard_neg[~neg_mask.any(axis=1)] = -1
    return hard_pos, hard_neg


def batch_hard_triplet_core(emb: np.ndarray, labels: np.ndarray, margin: float):
    """Batch-hard triplet pass; same contract as the compiled version.

    Returns (mean loss, gradient wrt embeddings, hardest-pos distances,
    hardest-neg distances, hardest-pos indices, hardest-neg indices).
    """
    n = emb.shape[0]
    sq = np.einsum("ij,ij->i", emb, emb)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (emb @ emb.T)
    np.maximum(d2, 0.0, out=d2)
    dist = np.sqrt(d2)
    hard_pos, hard_neg = batch_hard_mine(dist, labels)
    rows = np.arange(n)
    d_ap = dist[rows, hard_pos]
    d_an = dist[rows, hard_neg]
    hinge = margin + d_ap - d_an
    value = float(np.maximum(hinge, 0.0).sum() / n)

    grad = np.zeros_like(emb)
    for i in range(n):
        if hinge[i] <= 0.0:
            continue
        p = hard_pos[i]
        if d_ap[i] > 0.0:
            diff = (emb[i] - emb[p]) / d_ap[i]
            grad[i] += diff
            grad[p] -= diff
        m = hard_neg[i]
        if d_an[i] > 0.0:
            diff = (emb[i] - emb[m]) / d_an[i]
            grad[i] -= diff
            grad[m] += diff
    grad /= n
    return value, grad, d_ap, d_an, hard_pos, hard_neg
