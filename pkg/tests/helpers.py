"""Independent oracles used across the test suite.

These deliberately avoid the library's own kernels and shortcuts: plain
Python loops, math.sqrt distances, and definitional formulas. They are the
second route of every dual-route check, so keep them dumb.
"""

from __future__ import annotations

import math

import numpy as np

from reidlab import losses, model


def brute_force_ap(relevance) -> float:
    """AP straight from the definition: mean precision at relevant ranks."""
    rel = list(relevance)
    total = sum(rel)
    assert total > 0
    acc = 0.0
    for k in range(len(rel)):
        if rel[k]:
            acc += sum(rel[:k + 1]) / (k + 1)
    return acc / total


def euclidean(u, v) -> float:
    return math.sqrt(sum((float(a) - float(b)) ** 2 for a, b in zip(u, v)))


def exhaustive_batch_hard(embeddings, labels, margin):
    """Enumerate every valid triplet per anchor; first-in-scan-order ties.

    Returns (mean loss, selected (pos, neg) index pairs, active flags).
    The distance table is precomputed once, but selection still scans every
    (positive, negative) combination literally.
    """
    emb = [list(map(float, row)) for row in embeddings]
    labels = [int(x) for x in labels]
    n = len(labels)
    dist = [[euclidean(emb[i], emb[j]) for j in range(n)] for i in range(n)]
    pairs = []
    per_anchor = []
    for a in range(n):
        best = None  # (raw hinge argument, p, n)
        for p in range(n):
            if p == a or labels[p] != labels[a]:
                continue
            for m in range(n):
                if labels[m] == labels[a]:
                    continue
                val = margin + dist[a][p] - dist[a][m]
                if best is None or val > best[0]:
                    best = (val, p, m)
        assert best is not None, "batch must satisfy the triplet precondition"
        pairs.append((best[1], best[2]))
        per_anchor.append(max(0.0, best[0]))
    return sum(per_anchor) / n, pairs, [v > 0.0 for v in per_anchor]


def sort_and_scan_eval(q_emb, q_ids, q_scenes, g_emb, g_ids, g_scenes):
    """Reference retrieval evaluation: explicit sort, scan, and AP/CMC."""
    aps = []
    first_ranks = []
    max_kept = 0
    for i in range(len(q_ids)):
        ranked = []
        for j in range(len(g_ids)):
            if g_ids[j] == q_ids[i] and g_scenes[j] == q_scenes[i]:
                continue
            ranked.append((euclidean(q_emb[i], g_emb[j]), j))
        ranked.sort()  # tuple order: distance, then gallery index
        rel = [1 if g_ids[j] == q_ids[i] else 0 for _, j in ranked]
        assert any(rel)
        aps.append(brute_force_ap(rel))
        first_ranks.append(rel.index(1) + 1)
        max_kept = max(max_kept, len(rel))
    cmc = [sum(1 for f in first_ranks if f <= r) / len(first_ranks)
           for r in range(1, max_kept + 1)]
    return sum(aps) / len(aps), aps, cmc


def composite_loss_value(params, x, y_id, y_scene, margin, triplet_weight, lam):
    """L_total = l_id + w*l_triplet - lam*l_adv from forward values only."""
    trace = model.forward(params, x)
    l_id = losses.softmax_cross_entropy(trace.id_logits, y_id).value
    l_trip = losses.batch_hard_triplet(trace.embeddings, y_id, margin)[0].value
    l_adv = losses.scene_adversarial_loss(trace.scene_logits, y_scene).value
    return losses.total_loss(l_id, l_trip, l_adv, triplet_weight, lam)


def scene_loss_value(params, x, y_scene):
    trace = model.forward(params, x)
    return losses.scene_adversarial_loss(trace.scene_logits, y_scene).value


def fd_param_gradients(params, x, y_id, y_scene, margin, triplet_weight, lam,
                       step=1e-5):
    """Central finite differences of the objective each parameter optimizes.

    Extractor and identity-head parameters differentiate L_total; the scene
    head's parameters differentiate L_adv (it minimizes the adversarial
    loss directly, while the reversal handles the shared path).
    """
    grads = params.zeros_like()
    for (name, arr), (_, out) in zip(params.named_arrays(), grads.named_arrays()):
        scene_param = name.startswith("scene_")
        flat = arr.reshape(-1)
        out_flat = out.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            if scene_param:
                hi = scene_loss_value(params, x, y_scene)
            else:
                hi = composite_loss_value(params, x, y_id, y_scene, margin,
                                          triplet_weight, lam)
            flat[idx] = orig - step
            if scene_param:
                lo = scene_loss_value(params, x, y_scene)
            else:
                lo = composite_loss_value(params, x, y_id, y_scene, margin,
                                          triplet_weight, lam)
            flat[idx] = orig
            out_flat[idx] = (hi - lo) / (2.0 * step)
    return grads


def analytic_param_gradients(params, x, y_id, y_scene, margin, triplet_weight, lam):
    """The library's analytic gradients for the same split of objectives."""
    trace = model.forward(params, x)
    id_out = losses.softmax_cross_entropy(trace.id_logits, y_id)
    trip_out, _ = losses.batch_hard_triplet(trace.embeddings, y_id, margin)
    adv_out = losses.scene_adversarial_loss(trace.scene_logits, y_scene)
    return model.backward(params, trace, triplet_weight * trip_out.grad,
                          id_out.grad, adv_out.grad, lam)


def max_relative_gradient_error(analytic, numeric, floor=1e-6) -> float:
    """max over parameters of |a - n| / max(|a|, |n|, floor)."""
    worst = 0.0
    for (_, a), (_, n) in zip(analytic.named_arrays(), numeric.named_arrays()):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst


def away_from_kinks(params, x, y_id, margin, gap=1e-3) -> bool:
    """True when the configuration is safe for finite differences.

    Requires ReLU pre-activations, hinge slacks, selected-pair margins and
    pair distances to sit farther than ``gap`` from their kink points.
    """
    trace = model.forward(params, x)
    for z in trace.pre_activations[:-1]:
        if np.abs(z).min() < gap:
            return False
    emb = trace.embeddings
    labels = [int(v) for v in y_id]
    n = len(labels)
    for a in range(n):
        pos = sorted((euclidean(emb[a], emb[p]) for p in range(n)
                      if p != a and labels[p] == labels[a]), reverse=True)
        neg = sorted(euclidean(emb[a], emb[m]) for m in range(n)
                     if labels[m] != labels[a])
        if pos[0] < gap or neg[0] < gap:
            return False
        if len(pos) > 1 and pos[0] - pos[1] < gap:
            return False
        if len(neg) > 1 and neg[1] - neg[0] < gap:
            return False
        if abs(margin + pos[0] - neg[0]) < gap:
            return False
    return True


def fit_linear_scene_probe(embeddings, scene_labels, num_scenes,
                           steps=400, lr=0.5) -> float:
    """Train a fresh softmax probe on frozen embeddings; return its accuracy.

    Full-batch gradient descent on standardized inputs — deterministic, no
    library gradients involved.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(scene_labels, dtype=np.int64)
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd[sd == 0.0] = 1.0
    x = (x - mu) / sd
    n, d = x.shape
    w = np.zeros((num_scenes, d))
    b = np.zeros(num_scenes)
    onehot = np.zeros((n, num_scenes))
    onehot[np.arange(n), y] = 1.0
    for _ in range(steps):
        logits = x @ w.T + b
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / n
        w -= lr * (g.T @ x)
        b -= lr * g.sum(axis=0)
    pred = (x @ w.T + b).argmax(axis=1)
    return float((pred == y).mean())
