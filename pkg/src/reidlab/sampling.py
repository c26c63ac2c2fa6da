"""Epoch construction: random PK sampling and similarity-ranked hard batches.

A plan is an ordered list of batches of P classes with K samples each.
Random plans shuffle the class order uniformly; hard-mined plans pick one
anchor class per epoch, rank every class by cosine similarity of the
classifier weight rows to the anchor's row, and group the ranked classes
consecutively — so the most confusable classes land in the same batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix
from .rng import Rng

RANDOM = "random"
HARD_MINED = "hard"


@dataclass
class Batch:
    indices: list[int]  # P*K sample positions, grouped K-consecutive per class
    classes: list[int]  # the P distinct class ids, in batch order


@dataclass
class EpochPlan:
    batches: list[Batch]
    sampler_kind: str
    anchor_class: int | None = None


def _class_index_map(labels) -> dict[int, list[int]]:
    by_class: dict[int, list[int]] = {}
    for pos, lab in enumerate(labels):
        by_class.setdefault(int(lab), []).append(pos)
    return by_class


def _draw_k(rng: Rng, pool: list[int], k: int) -> list[int]:
    """K draws from one class: without replacement when possible, otherwise
    every distinct sample once plus uniform refills."""
    picks = list(pool)
    rng.shuffle(picks)
    if len(pool) >= k:
        return picks[:k]
    extra = [pool[rng.next_int(len(pool))] for _ in range(k - len(pool))]
    return picks + extra


def _build_batches(class_order: list[int], by_class: dict[int, list[int]],
                   p: int, k: int, rng: Rng) -> list[Batch]:
    batches = []
    for g in range(len(class_order) // p):
        group = class_order[g * p:(g + 1) * p]
        indices: list[int] = []
        for c in group:
            indices.extend(_draw_k(rng, by_class[c], k))
        batches.append(Batch(indices=indices, classes=list(group)))
    return batches


def _validate_pk(n_classes: int, p: int, k: int) -> None:
    if p < 2:
        raise ValueError(f"P must be >= 2 for triplet-valid batches, got {p}")
    if k < 2:
        raise ValueError(f"K must be >= 2 for triplet-valid batches, got {k}")
    if n_classes < p:
        raise ValueError(f"need at least P={p} classes with samples, got {n_classes}")


def pk_random_epoch(labels, p: int, k: int, rng: Rng) -> EpochPlan:
    """Uniformly shuffled class order, grouped into batches of P classes.

    Trailing groups of fewer than P classes are dropped, keeping every
    emitted batch triplet-valid.
    """
    by_class = _class_index_map(labels)
    _validate_pk(len(by_class), p, k)
    order = sorted(by_class)
    rng.shuffle(order)
    return EpochPlan(batches=_build_batches(order, by_class, p, k, rng),
                     sampler_kind=RANDOM)


def class_similarity_ranking(class_weights, anchor_class: int) -> list[int]:
    """All classes sorted by cosine similarity to the anchor's weight row,
    descending; the anchor itself first; ties broken by ascending class id."""
    w = as_matrix(class_weights, "class_weights")
    c = w.shape[0]
    if not 0 <= anchor_class < c:
        raise ValueError(f"anchor class {anchor_class} out of range [0, {c})")
    norms = np.sqrt(np.einsum("ij,ij->i", w, w))
    if np.any(norms == 0.0):
        bad = int(np.argmin(norms))
        raise ValueError(f"class weight row {bad} has zero norm")
    sims = (w @ w[anchor_class]) / (norms * norms[anchor_class])
    sims[anchor_class] = 1.0  # cos(w, w) = 1 exactly; pin against rounding
    order = np.lexsort((np.arange(c), -sims))
    return [int(i) for i in order]


def hard_batch_epoch(class_weights, labels, p: int, k: int, rng: Rng,
                     anchor_class: int | None = None) -> EpochPlan:
    """Batches built over the similarity ranking for one anchor class.

    The anchor is drawn uniformly among classes that have samples (or forced
    via ``anchor_class``); classes without samples are skipped while
    preserving rank order. Sample draws follow the same K-draw rule as the
    random sampler.
    """
    by_class = _class_index_map(labels)
    _validate_pk(len(by_class), p, k)
    present = sorted(by_class)
    w = as_matrix(class_weights, "class_weights")
    if max(present) >= w.shape[0]:
        raise ValueError(
            f"labels reference class {max(present)} but class_weights has "
            f"{w.shape[0]} rows")
    if anchor_class is None:
        anchor_class = present[rng.next_int(len(present))]
    ranking = class_similarity_ranking(w, anchor_class)
    order = [c for c in ranking if c in by_class]
    return EpochPlan(batches=_build_batches(order, by_class, p, k, rng),
                     sampler_kind=HARD_MINED, anchor_class=anchor_class)


def schedule(epoch_index: int, warmup_epochs: int) -> str:
    """Random sampling for the warmup epochs, hard mining afterwards."""
    if warmup_epochs < 0:
        raise ValueError(f"warmup_epochs must be >= 0, got {warmup_epochs}")
    return RANDOM if epoch_index < warmup_epochs else HARD_MINED


def intra_batch_similarity(class_weights, batch: Batch) -> float:
    """Mean pairwise cosine similarity among the batch's class weight rows."""
    w = as_matrix(class_weights, "class_weights")
    if len(batch.classes) < 2:
        raise ValueError("intra-batch similarity needs at least 2 classes")
    classes = sorted(batch.classes)  # set statistic: fix the summation order
    rows = w[np.asarray(classes, dtype=np.int64)]
    norms = np.sqrt(np.einsum("ij,ij->i", rows, rows))
    if np.any(norms == 0.0):
        raise ValueError("class weight row with zero norm")
    sims = (rows @ rows.T) / np.outer(norms, norms)
    iu = np.triu_indices(len(classes), k=1)
    return float(sims[iu].mean())
