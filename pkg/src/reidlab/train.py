"""Training orchestration: config, the epoch/step loop, logs, checkpoints.

Everything downstream of (config, seed) is deterministic: sub-streams for
initialization, splitting and per-epoch plans are derived from the root
seed, metrics are line-delimited JSON with shortest-repr floats, and
checkpoints use the bit-exact binary format from the model module.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import losses, model, sampling
from .data import (GALLERY, QUERY, TRAIN, Dataset, SynthSpec, load_jsonl,
                   split_query_gallery, synth_generate)
from .evaluation import EvalResult, RerankParams, evaluate
from .rng import Rng

log = logging.getLogger("reidlab.train")

SAMPLER_MODES = ("schedule", "random", "hard")


@dataclass
class TrainConfig:
    """Run parameters; every field has a default so `{}` plus a dataset
    source is a valid config."""

    # batch geometry and schedule
    p: int = 16
    k: int = 4
    epochs: int = 30
    warmup_epochs: int = 1
    sampler_mode: str = "schedule"
    # optimizer
    base_lr: float = 0.008
    momentum: float = 0.9
    weight_decay: float = 1e-4
    # objectives
    margin: float = 0.3
    triplet_weight: float = 1.0
    lambda_adv: float = 0.1
    scene_head: bool = True
    normalize_embeddings: bool = False
    # model dims
    hidden: list[int] = field(default_factory=lambda: [32])
    embedding_dim: int = 16
    # data
    synth: dict | None = None
    jsonl: str | None = None
    holdout_classes: int = 0
    # bookkeeping
    eval_every: int = 5
    seed: int = 0

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        return model.config_hash(self.to_dict())

    def validate(self) -> None:
        if self.p * self.k < 4 or self.p < 2 or self.k < 2:
            raise ValueError(
                f"batch geometry needs P >= 2, K >= 2 (P*K >= 4), got P={self.p} K={self.k}")
        if self.epochs < 0 or self.warmup_epochs < 0:
            raise ValueError("epochs and warmup_epochs must be >= 0")
        if self.sampler_mode not in SAMPLER_MODES:
            raise ValueError(
                f"sampler_mode must be one of {SAMPLER_MODES}, got {self.sampler_mode!r}")
        if self.base_lr < 0 or self.momentum < 0 or self.weight_decay < 0:
            raise ValueError("optimizer parameters must be >= 0")
        if self.lambda_adv < 0 or self.triplet_weight < 0:
            raise ValueError("loss weights must be >= 0")
        if self.embedding_dim < 1 or any(h < 1 for h in self.hidden):
            raise ValueError("model dims must be >= 1")
        if (self.synth is None) == (self.jsonl is None):
            raise ValueError("config needs exactly one dataset source: 'synth' or 'jsonl'")
        if self.holdout_classes < 0 or self.eval_every < 1:
            raise ValueError("holdout_classes must be >= 0 and eval_every >= 1")


def load_config(path) -> TrainConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return TrainConfig.from_dict(raw)


def build_dataset(config: TrainConfig) -> Dataset:
    """Materialize the configured dataset and, if requested, its eval split.

    Holdout identities are chosen by shuffling the eligible classes (those
    whose per-scene sample counts admit cross-scene queries) with a stream
    derived from the seed, so the split is a pure function of the config.
    """
    if config.synth is not None:
        spec_fields = {f.name for f in dataclasses.fields(SynthSpec)}
        unknown = set(config.synth) - spec_fields
        if unknown:
            raise ValueError(f"unknown synth keys: {sorted(unknown)}")
        dataset = synth_generate(SynthSpec(**{"seed": config.seed, **config.synth}))
    else:
        dataset = load_jsonl(config.jsonl)
        if len(dataset) == 0:
            raise ValueError(f"{config.jsonl}: dataset is empty")

    if config.holdout_classes > 0:
        root = Rng(config.seed)
        eligible = _eligible_holdout_classes(dataset)
        if len(eligible) < config.holdout_classes:
            raise ValueError(
                f"only {len(eligible)} classes are eligible for holdout, "
                f"need {config.holdout_classes}")
        pick_rng = root.derive("holdout")
        order = list(eligible)
        pick_rng.shuffle(order)
        chosen = sorted(order[:config.holdout_classes])
        dataset = split_query_gallery(dataset, chosen, root.derive("split"))
    return dataset


def _eligible_holdout_classes(dataset: Dataset) -> list[int]:
    eligible = []
    for cls in sorted(set(int(c) for c in dataset.class_ids)):
        rows = np.nonzero(dataset.class_ids == cls)[0]
        counts: dict[int, int] = {}
        for r in rows:
            s = int(dataset.scene_ids[r])
            counts[s] = counts.get(s, 0) + 1
        scenes = sorted(counts)
        if len(scenes) < 2:
            continue
        if all(sum(counts[o] - 1 for o in scenes if o != s) >= 1 for s in scenes):
            eligible.append(cls)
    return eligible


@dataclass
class TrainResult:
    params: model.ModelParams
    velocity: model.ModelParams
    dataset: Dataset
    class_to_head: dict[int, int]
    checkpoint_path: str
    metrics_path: str


def _normalize_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    if np.any(norms == 0.0):
        raise ValueError("cannot L2-normalize a zero embedding")
    return x / norms[:, None], norms


def normalization_pullback(grad_normed: np.ndarray, normed: np.ndarray,
                           norms: np.ndarray) -> np.ndarray:
    """Map a gradient wrt x/|x| back to a gradient wrt x.

    Row-wise Jacobian of the L2 normalization: (I - u u^T) / |x| with
    u = x/|x|.
    """
    dots = np.einsum("ij,ij->i", grad_normed, normed)
    return (grad_normed - normed * dots[:, None]) / norms[:, None]


def embed(params: model.ModelParams, features: np.ndarray,
          normalize: bool = False) -> np.ndarray:
    out = model.forward(params, features).embeddings
    if normalize:
        out, _ = _normalize_rows(out)
    return out


def run_training(config: TrainConfig, out_dir) -> TrainResult:
    """Full training loop; writes metrics.jsonl and checkpoint files."""
    config.validate()
    os.makedirs(out_dir, exist_ok=True)
    dataset = build_dataset(config)
    if not dataset.is_vector_backed:
        raise ValueError(
            "training requires a vector-backed dataset; image-backed records "
            "must be featurized before training")

    train_rows = dataset.indices_of(TRAIN)
    if train_rows.size == 0:
        raise ValueError("no training samples after the holdout split")
    train_class_ids = sorted(set(int(c) for c in dataset.class_ids[train_rows]))
    class_to_head = {c: i for i, c in enumerate(train_class_ids)}
    if len(train_class_ids) < config.p:
        raise ValueError(
            f"P={config.p} exceeds the {len(train_class_ids)} training classes")
    # exclude classes that cannot satisfy K >= 2 triplet validity
    counts = {c: 0 for c in train_class_ids}
    for r in train_rows:
        counts[int(dataset.class_ids[r])] += 1
    if min(counts.values()) < 2:
        bad = min(c for c, n in counts.items() if n < 2)
        raise ValueError(f"training class {bad} has fewer than 2 samples")

    train_labels = [class_to_head[int(dataset.class_ids[r])] for r in train_rows]
    scene_labels_all = dataset.scene_ids[train_rows]
    feats_all = dataset.features[train_rows]

    root = Rng(config.seed)
    params = model.init_params(
        root.derive("init"), dataset.feature_dim, list(config.hidden),
        config.embedding_dim, len(train_class_ids), max(2, dataset.num_scenes))
    velocity = params.zeros_like()

    steps_per_epoch = len(train_class_ids) // config.p
    total_steps = config.epochs * steps_per_epoch
    metrics_path = os.path.join(out_dir, "metrics.jsonl")
    checkpoint_path = os.path.join(out_dir, "checkpoint_final.bin")
    cfg_hash = config.hash()
    log.info("training on %d samples, %d classes, %d steps/epoch, %d total steps",
             train_rows.size, len(train_class_ids), steps_per_epoch, total_steps)

    step = 0
    with open(metrics_path, "w", encoding="utf-8") as metrics_log:
        for epoch in range(config.epochs):
            if config.sampler_mode == "schedule":
                kind = sampling.schedule(epoch, config.warmup_epochs)
            else:
                kind = config.sampler_mode
            w_snapshot = params.class_weights.copy()
            epoch_rng = root.derive("epoch", epoch)
            if kind == sampling.RANDOM:
                plan = sampling.pk_random_epoch(train_labels, config.p, config.k, epoch_rng)
            else:
                plan = sampling.hard_batch_epoch(
                    w_snapshot, train_labels, config.p, config.k, epoch_rng)

            for batch in plan.batches:
                rows = np.asarray(batch.indices, dtype=np.int64)
                x = feats_all[rows]
                y_id = np.asarray([train_labels[i] for i in batch.indices], dtype=np.int64)
                y_scene = scene_labels_all[rows]

                trace = model.forward(params, x)
                id_out = losses.softmax_cross_entropy(trace.id_logits, y_id)
                emb = trace.embeddings
                if config.normalize_embeddings:
                    emb_used, norms = _normalize_rows(emb)
                else:
                    emb_used, norms = emb, None
                trip_out, trip_stats = losses.batch_hard_triplet(
                    emb_used, y_id, config.margin)
                grad_emb = config.triplet_weight * trip_out.grad
                if norms is not None:
                    grad_emb = normalization_pullback(grad_emb, emb_used, norms)

                if config.scene_head:
                    adv_out = losses.scene_adversarial_loss(trace.scene_logits, y_scene)
                    grad_scene = adv_out.grad
                    l_adv = adv_out.value
                else:
                    grad_scene = np.zeros_like(trace.scene_logits)
                    l_adv = 0.0

                grads = model.backward(params, trace, grad_emb, id_out.grad,
                                       grad_scene, config.lambda_adv)
                lr = model.cosine_lr(step, total_steps, config.base_lr)
                params, velocity = model.sgd_step(
                    params, grads, lr, config.momentum, config.weight_decay, velocity)

                record = {
                    "epoch": epoch,
                    "step": step,
                    "sampler": kind,
                    "l_id": id_out.value,
                    "l_triplet": trip_out.value,
                    "l_adv": l_adv,
                    "l_total": losses.total_loss(
                        id_out.value, trip_out.value, l_adv,
                        config.triplet_weight, config.lambda_adv),
                    "active_triplet_fraction": trip_stats.active_fraction,
                    "intra_batch_similarity": sampling.intra_batch_similarity(
                        w_snapshot, batch),
                    "lr": lr,
                }
                metrics_log.write(json.dumps(record, separators=(", ", ": ")) + "\n")
                step += 1

            if (epoch + 1) % config.eval_every == 0 and (epoch + 1) < config.epochs:
                model.save_checkpoint(
                    os.path.join(out_dir, f"checkpoint_epoch_{epoch + 1:04d}.bin"),
                    params, velocity, cfg_hash)

    model.save_checkpoint(checkpoint_path, params, velocity, cfg_hash)
    return TrainResult(params=params, velocity=velocity, dataset=dataset,
                       class_to_head=class_to_head, checkpoint_path=checkpoint_path,
                       metrics_path=metrics_path)


def evaluate_split(params: model.ModelParams, dataset: Dataset,
                   rerank: RerankParams | None = None,
                   normalize: bool = False) -> tuple[EvalResult, dict]:
    """Embed the query/gallery split with the model and run the evaluator."""
    q_rows = dataset.indices_of(QUERY)
    g_rows = dataset.indices_of(GALLERY)
    if q_rows.size == 0 or g_rows.size == 0:
        raise ValueError("dataset has no query/gallery split tags")
    if not dataset.is_vector_backed:
        raise ValueError("evaluation requires a vector-backed dataset")
    if dataset.feature_dim != params.input_dim:
        raise ValueError(
            f"checkpoint expects input dim {params.input_dim}, "
            f"dataset has {dataset.feature_dim}")
    q_emb = embed(params, dataset.features[q_rows], normalize)
    g_emb = embed(params, dataset.features[g_rows], normalize)
    result = evaluate(q_emb, dataset.class_ids[q_rows], dataset.scene_ids[q_rows],
                      g_emb, dataset.class_ids[g_rows], dataset.scene_ids[g_rows],
                      rerank)
    return result, result.report(len(q_rows), len(g_rows), rerank)
