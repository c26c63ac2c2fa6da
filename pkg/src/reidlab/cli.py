"""Command-line interface: train, eval, and sampler-stats subcommands.

Exit code 0 on success; contract violations print a named error on stderr
and exit 1. ``REIDLAB_VERBOSE=1`` enables info-level logging.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import losses, model, sampling, train
from .data import TRAIN, load_jsonl
from .evaluation import RerankParams
from .rng import Rng

log = logging.getLogger("reidlab")


def _load_eval_dataset(path):
    """Accept either a tagged .jsonl dataset or a train-config .json that
    regenerates dataset and split deterministically."""
    if path.endswith(".jsonl"):
        return load_jsonl(path)
    config = train.load_config(path)
    return train.build_dataset(config)


def cmd_train(args) -> int:
    config = train.load_config(args.config)
    log.info("config hash %s", config.hash())
    result = train.run_training(config, args.out)
    n_steps = sum(1 for _ in open(result.metrics_path, "r", encoding="utf-8"))
    print(f"trained {config.epochs} epochs ({n_steps} steps)")
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"metrics:    {result.metrics_path}")
    if args.metrics_csv:
        csv_path = export_metrics_csv(result.metrics_path)
        print(f"metrics csv: {csv_path}")
    return 0


def export_metrics_csv(metrics_path) -> str:
    """Plot-ready CSV next to the line-delimited metrics log."""
    csv_path = os.path.splitext(metrics_path)[0] + ".csv"
    fields = ["epoch", "step", "sampler", "l_id", "l_triplet", "l_adv", "l_total",
              "active_triplet_fraction", "intra_batch_similarity", "lr"]
    with open(metrics_path, "r", encoding="utf-8") as src, \
            open(csv_path, "w", encoding="utf-8", newline="") as dst:
        writer = csv.DictWriter(dst, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for line in src:
            record = json.loads(line)
            writer.writerow({k: repr(record[k]) if isinstance(record[k], float)
                             else record[k] for k in fields})
    return csv_path


def cmd_eval(args) -> int:
    params, _, header = model.load_checkpoint(args.checkpoint)
    dataset = _load_eval_dataset(args.data)
    rerank = None
    if args.rerank:
        rerank = RerankParams(k1=args.k1, k2=args.k2, lambda_rr=args.lambda_rr)
    _, report = train.evaluate_split(params, dataset, rerank,
                                     normalize=args.normalize)
    report["checkpoint_config_hash"] = header.get("config_hash", "")
    blob = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(blob + "\n")
    print(blob)
    return 0


def cmd_sampler_stats(args) -> int:
    """Per-batch statistics of both samplers over N epochs, as CSV.

    Columns: sampler, epoch, batch, anchor_class, intra_batch_similarity
    and, with --with-triplet-stats, active_triplet_fraction of the batch
    under the checkpoint's embeddings.
    """
    params, _, _ = model.load_checkpoint(args.checkpoint)
    dataset = _load_eval_dataset(args.data)
    if not dataset.is_vector_backed:
        raise ValueError("sampler-stats requires a vector-backed dataset")
    train_rows = dataset.indices_of(TRAIN)
    train_class_ids = sorted(set(int(c) for c in dataset.class_ids[train_rows]))
    class_to_head = {c: i for i, c in enumerate(train_class_ids)}
    head_to_class = {i: c for c, i in class_to_head.items()}
    if len(train_class_ids) != params.num_classes:
        raise ValueError(
            f"checkpoint was trained with {params.num_classes} classes, "
            f"dataset has {len(train_class_ids)} training classes")
    labels = [class_to_head[int(dataset.class_ids[r])] for r in train_rows]
    feats = dataset.features[train_rows]
    w = params.class_weights

    root = Rng(args.seed)
    rows_out = []
    for kind in (sampling.RANDOM, sampling.HARD_MINED):
        for epoch in range(args.epochs):
            rng = root.derive("stats", kind, epoch)
            if kind == sampling.RANDOM:
                plan = sampling.pk_random_epoch(labels, args.p, args.k, rng)
            else:
                plan = sampling.hard_batch_epoch(w, labels, args.p, args.k, rng)
            for b_idx, batch in enumerate(plan.batches):
                row = {
                    "sampler": kind,
                    "epoch": epoch,
                    "batch": b_idx,
                    "anchor_class": "" if plan.anchor_class is None
                    else head_to_class[plan.anchor_class],
                    "intra_batch_similarity": repr(
                        sampling.intra_batch_similarity(w, batch)),
                }
                if args.with_triplet_stats:
                    emb = train.embed(params, feats[np.asarray(batch.indices)])
                    y = np.asarray([labels[i] for i in batch.indices], dtype=np.int64)
                    _, stats = losses.batch_hard_triplet(emb, y, args.margin)
                    row["active_triplet_fraction"] = repr(stats.active_fraction)
                rows_out.append(row)

    fieldnames = ["sampler", "epoch", "batch", "anchor_class", "intra_batch_similarity"]
    if args.with_triplet_stats:
        fieldnames.append("active_triplet_fraction")
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows_out)
    print(f"wrote {len(rows_out)} rows to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reidlab",
        description="Deterministic desk-scale re-identification lab")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a JSON config")
    p_train.add_argument("--config", required=True, help="path to the JSON config")
    p_train.add_argument("--out", default="out", help="output directory")
    p_train.add_argument("--metrics-csv", action="store_true",
                         help="also export the metrics log as plot-ready CSV")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a query/gallery split")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True,
                        help="tagged .jsonl dataset or a train-config .json")
    p_eval.add_argument("--rerank", action="store_true",
                        help="use k-reciprocal re-ranked distances")
    p_eval.add_argument("--k1", type=int, default=20)
    p_eval.add_argument("--k2", type=int, default=6)
    p_eval.add_argument("--lambda-rr", dest="lambda_rr", type=float, default=0.3)
    p_eval.add_argument("--normalize", action="store_true",
                        help="L2-normalize embeddings before ranking")
    p_eval.add_argument("--out", default="", help="also write the JSON report here")
    p_eval.set_defaults(func=cmd_eval)

    p_stats = sub.add_parser("sampler-stats",
                             help="per-batch sampler statistics for both samplers")
    p_stats.add_argument("--checkpoint", required=True)
    p_stats.add_argument("--data", required=True)
    p_stats.add_argument("--epochs", type=int, default=10)
    p_stats.add_argument("--out", required=True, help="CSV output path")
    p_stats.add_argument("--p", type=int, default=4)
    p_stats.add_argument("--k", type=int, default=4)
    p_stats.add_argument("--seed", type=int, default=0)
    p_stats.add_argument("--margin", type=float, default=0.3)
    p_stats.add_argument("--with-triplet-stats", action="store_true",
                         help="also compute per-batch active triplet fractions")
    p_stats.set_defaults(func=cmd_sampler_stats)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO if os.environ.get("REIDLAB_VERBOSE") else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
