"""Scalar training objectives and their exact gradients.

All losses are batch means. Gradients are taken with respect to the
function's direct input (logits or embeddings); routing them into model
parameters — including the sign flip on the scene branch — is the model
module's job.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .linalg import as_matrix


@dataclass
class LossOutput:
    value: float
    grad: np.ndarray


@dataclass
class TripletStats:
    """Batch diagnostics: share of anchors with positive loss and the mean
    selected-pair distances."""

    active_fraction: float
    mean_hard_pos_dist: float
    mean_hard_neg_dist: float


def _check_labels(labels, n_classes: int, n_rows: int, what: str) -> np.ndarray:
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if labels.shape != (n_rows,):
        raise ValueError(f"{what} labels must have shape ({n_rows},), got {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"{what} label out of range [0, {n_classes})")
    return labels


def softmax_cross_entropy(logits, labels) -> LossOutput:
    """Mean negative log softmax probability of the true class.

    grad = (softmax - onehot) / batch, an exact derivative of the value.
    """
    logits = as_matrix(logits, "logits")
    n, c = logits.shape
    labels = _check_labels(labels, c, n, "class")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1)
    rows = np.arange(n)
    nll = np.log(total) - shifted[rows, labels]
    value = float(nll.mean())
    grad = exp / total[:, None]
    grad[rows, labels] -= 1.0
    grad /= n
    return LossOutput(value, grad)


def scene_adversarial_loss(scene_logits, scene_labels) -> LossOutput:
    """Cross-entropy of the scene classifier over scene types.

    Returned gradient is the plain minimization direction for the scene
    head; the gradient-reversal sign for the shared extractor is applied
    during the model backward pass.
    """
    return softmax_cross_entropy(scene_logits, scene_labels)


def batch_hard_triplet(embeddings, labels, margin: float) -> tuple[LossOutput, TripletStats]:
    """Hinge over each anchor's furthest same-class and nearest other-class sample.

    loss_a = max(0, margin + max_{p != a, same} d(a,p) - min_{n, diff} d(a,n)),
    averaged over all anchors, with Euclidean d. The gradient flows only
    through the selected pair of each strictly-active anchor; ties pick the
    first index in scan order. Pairs at distance exactly 0 contribute no
    gradient (subgradient choice for the square root).
    """
    emb = as_matrix(embeddings, "embeddings")
    n = emb.shape[0]
    labels = _check_labels(labels, np.iinfo(np.int64).max, n, "class")
    uniq, counts = np.unique(labels, return_counts=True)
    if uniq.size < 2:
        raise ValueError("batch-hard triplet needs at least 2 classes in the batch")
    if counts.min() < 2:
        bad = int(uniq[counts.argmin()])
        raise ValueError(f"class {bad} has a single sample in the batch; need >= 2 per class")

    value, grad, d_ap, d_an, _, _ = _kernels.batch_hard_triplet_core(emb, labels, margin)
    active = (margin + d_ap - d_an) > 0.0
    stats = TripletStats(
        active_fraction=float(active.mean()),
        mean_hard_pos_dist=float(d_ap.mean()),
        mean_hard_neg_dist=float(d_an.mean()),
    )
    return LossOutput(float(value), grad), stats


def total_loss(l_id: float, l_triplet: float, l_adv: float,
               triplet_weight: float, lam: float) -> float:
    """Combined objective: l_id + triplet_weight * l_triplet - lam * l_adv."""
    if lam < 0.0:
        raise ValueError(f"adversarial coefficient must be >= 0, got {lam}")
    if triplet_weight < 0.0:
        raise ValueError(f"triplet weight must be >= 0, got {triplet_weight}")
    return l_id + triplet_weight * l_triplet - lam * l_adv
