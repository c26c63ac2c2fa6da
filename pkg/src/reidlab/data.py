"""Datasets: controllable synthetic generation, JSONL ingestion, splits.

A dataset is a flat list of samples (feature vector or image path, class
id, scene id) with per-sample split tags. The synthetic generator plants
pairs of near-duplicate classes and an additive per-scene offset, giving
hard-mining and scene-removal experiments a known ground truth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .rng import Rng

TRAIN, QUERY, GALLERY = 0, 1, 2
SPLIT_NAMES = {TRAIN: "train", QUERY: "query", GALLERY: "gallery"}
SPLIT_CODES = {v: k for k, v in SPLIT_NAMES.items()}


@dataclass
class Dataset:
    """Vector- or image-backed sample collection with split tags."""

    class_ids: np.ndarray  # (N,) int64
    scene_ids: np.ndarray  # (N,) int64
    num_classes: int
    num_scenes: int
    features: np.ndarray | None = None  # (N, D) float64 for vector-backed sets
    image_paths: list[str] | None = None
    split: np.ndarray = None  # (N,) int8 of TRAIN/QUERY/GALLERY

    def __post_init__(self):
        if self.split is None:
            self.split = np.full(len(self.class_ids), TRAIN, dtype=np.int8)

    def __len__(self) -> int:
        return len(self.class_ids)

    @property
    def is_vector_backed(self) -> bool:
        return self.features is not None

    @property
    def feature_dim(self) -> int:
        if self.features is None:
            raise ValueError("dataset is image-backed; it has no feature dimension")
        return self.features.shape[1]

    def indices_of(self, split_code: int) -> np.ndarray:
        return np.nonzero(self.split == split_code)[0]

    def validate(self) -> None:
        n = len(self.class_ids)
        if self.scene_ids.shape != (n,) or self.split.shape != (n,):
            raise ValueError("class_ids, scene_ids and split must have equal length")
        if (self.features is None) == (self.image_paths is None):
            raise ValueError("dataset must be exactly one of vector- or image-backed")
        if n:
            if self.class_ids.min() < 0 or self.class_ids.max() >= self.num_classes:
                raise ValueError("class id out of range")
            if self.scene_ids.min() < 0 or self.scene_ids.max() >= self.num_scenes:
                raise ValueError("scene id out of range")
        if self.features is not None and not np.all(np.isfinite(self.features)):
            raise ValueError("features contain non-finite values")


@dataclass
class SynthSpec:
    """Parameters of the synthetic vector dataset.

    ``pair_fraction`` of the classes are planted as near-duplicate pairs
    whose centers sit ``pair_sep`` apart; every sample adds Gaussian noise
    (``cluster_sigma``) and its scene's fixed offset vector of norm
    ``scene_shift_magnitude``. Scenes rotate round-robin within each class.

    ``pair_subspace_dim`` controls how pair offset directions are drawn:
    0 means isotropic (a fresh random direction per pair); w >= 1 restricts
    offsets to a fixed w-dimensional subspace, so confusability axes are
    shared across pairs the way they are across real identities.
    """

    num_classes: int = 40
    num_scenes: int = 2
    dim: int = 16
    samples_per_class: int = 8
    pair_fraction: float = 0.5
    pair_sep: float = 1.0
    cluster_sigma: float = 0.3
    scene_shift_magnitude: float = 0.0
    center_radius: float = 10.0
    pair_subspace_dim: int = 0
    seed: int = 0

    def validate(self) -> None:
        if self.samples_per_class < 2:
            raise ValueError(
                f"samples_per_class must be >= 2, got {self.samples_per_class}")
        if self.num_classes < 2 or self.num_scenes < 1 or self.dim < 1:
            raise ValueError("need num_classes >= 2, num_scenes >= 1, dim >= 1")
        if not 0.0 <= self.pair_fraction <= 1.0:
            raise ValueError(f"pair_fraction must be in [0, 1], got {self.pair_fraction}")
        if self.pair_sep <= 0.0:
            raise ValueError(f"pair_sep must be > 0, got {self.pair_sep}")
        if self.cluster_sigma <= 0.0:
            raise ValueError(f"cluster_sigma must be > 0, got {self.cluster_sigma}")
        if self.scene_shift_magnitude < 0.0 or self.center_radius <= 0.0:
            raise ValueError("scene_shift_magnitude must be >= 0 and center_radius > 0")
        if not 0 <= self.pair_subspace_dim <= self.dim:
            raise ValueError(
                f"pair_subspace_dim must be in [0, dim], got {self.pair_subspace_dim}")


@dataclass
class SynthInfo:
    """Ground truth behind a generated dataset (centers, offsets, pairings)."""

    centers: np.ndarray  # (C, D)
    scene_offsets: np.ndarray  # (T, D)
    paired_classes: list[tuple[int, int]] = field(default_factory=list)


def _gauss_vector(rng: Rng, dim: int) -> np.ndarray:
    return np.array([rng.next_gaussian() for _ in range(dim)])


def _unit_vector(rng: Rng, dim: int) -> np.ndarray:
    while True:
        v = _gauss_vector(rng, dim)
        norm = float(np.linalg.norm(v))
        if norm > 1e-12:
            return v / norm


def synth_generate_full(spec: SynthSpec) -> tuple[Dataset, SynthInfo]:
    """Generate the dataset plus its ground-truth geometry."""
    spec.validate()
    root = Rng(spec.seed)
    center_rng = root.derive("centers")
    pair_rng = root.derive("pairs")
    scene_rng = root.derive("scenes")
    noise_rng = root.derive("noise")

    c, t, d = spec.num_classes, spec.num_scenes, spec.dim
    centers = np.stack([_unit_vector(center_rng, d) * spec.center_radius
                        for _ in range(c)])
    n_pairs = int(spec.pair_fraction * c) // 2
    basis = None
    if spec.pair_subspace_dim > 0:
        # shared confusability axes: Gram-Schmidt over seeded gaussians
        rows = []
        while len(rows) < spec.pair_subspace_dim:
            v = _gauss_vector(pair_rng, d)
            for r in rows:
                v = v - np.dot(v, r) * r
            norm = float(np.linalg.norm(v))
            if norm > 1e-8:
                rows.append(v / norm)
        basis = np.stack(rows)
    pairs = []
    for i in range(n_pairs):
        a, b = 2 * i, 2 * i + 1
        if basis is None:
            direction = _unit_vector(pair_rng, d)
        else:
            coeff = _gauss_vector(pair_rng, basis.shape[0])
            while float(np.linalg.norm(coeff)) <= 1e-12:
                coeff = _gauss_vector(pair_rng, basis.shape[0])
            direction = basis.T @ (coeff / np.linalg.norm(coeff))
        centers[b] = centers[a] + spec.pair_sep * direction
        pairs.append((a, b))

    offsets = np.stack([_unit_vector(scene_rng, d) * spec.scene_shift_magnitude
                        for _ in range(t)])

    n = c * spec.samples_per_class
    feats = np.empty((n, d))
    class_ids = np.empty(n, dtype=np.int64)
    scene_ids = np.empty(n, dtype=np.int64)
    row = 0
    for cls in range(c):
        for s in range(spec.samples_per_class):
            scene = s % t
            feats[row] = (centers[cls] + spec.cluster_sigma * _gauss_vector(noise_rng, d)
                          + offsets[scene])
            class_ids[row] = cls
            scene_ids[row] = scene
            row += 1

    ds = Dataset(class_ids=class_ids, scene_ids=scene_ids, num_classes=c,
                 num_scenes=t, features=feats)
    ds.validate()
    return ds, SynthInfo(centers=centers, scene_offsets=offsets, paired_classes=pairs)


def synth_generate(spec: SynthSpec) -> Dataset:
    return synth_generate_full(spec)[0]


def load_jsonl(path) -> Dataset:
    """Parse the line-delimited JSON sample format.

    Each line holds {"id": int, "scene": int, "features": [float, ...]} or
    {"id": int, "scene": int, "image": "relative/path.ppm"}, optionally with
    "split": "train"|"query"|"gallery" (default train). Vector and image
    records cannot be mixed. Errors name the offending line.
    """
    class_ids: list[int] = []
    scene_ids: list[int] = []
    feats: list[list[float]] = []
    paths: list[str] = []
    splits: list[int] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict):
                raise ValueError(f"{path}: line {lineno}: expected a JSON object")
            for fld in ("id", "scene"):
                if fld not in rec:
                    raise ValueError(f"{path}: line {lineno}: missing field '{fld}'")
                if isinstance(rec[fld], bool) or not isinstance(rec[fld], int) \
                        or rec[fld] < 0:
                    raise ValueError(
                        f"{path}: line {lineno}: field '{fld}' must be a nonnegative integer")
            has_vec = "features" in rec
            has_img = "image" in rec
            if has_vec == has_img:
                raise ValueError(
                    f"{path}: line {lineno}: need exactly one of 'features' or 'image'")
            if feats and has_img or paths and has_vec:
                raise ValueError(
                    f"{path}: line {lineno}: cannot mix vector and image records")
            if has_vec:
                vec = rec["features"]
                if not isinstance(vec, list) or not vec:
                    raise ValueError(
                        f"{path}: line {lineno}: 'features' must be a nonempty list")
                if feats and len(vec) != len(feats[0]):
                    raise ValueError(
                        f"{path}: line {lineno}: feature length {len(vec)} != {len(feats[0])}")
                feats.append([float(x) for x in vec])
            else:
                paths.append(str(rec["image"]))
            split_name = rec.get("split", "train")
            if split_name not in SPLIT_CODES:
                raise ValueError(
                    f"{path}: line {lineno}: unknown split {split_name!r}")
            class_ids.append(rec["id"])
            scene_ids.append(rec["scene"])
            splits.append(SPLIT_CODES[split_name])

    n = len(class_ids)
    ds = Dataset(
        class_ids=np.asarray(class_ids, dtype=np.int64),
        scene_ids=np.asarray(scene_ids, dtype=np.int64),
        num_classes=max(class_ids) + 1 if n else 0,
        num_scenes=max(scene_ids) + 1 if n else 0,
        features=np.asarray(feats, dtype=np.float64) if feats or not paths else None,
        image_paths=paths if paths else None,
        split=np.asarray(splits, dtype=np.int8),
    )
    if n == 0:
        ds.features = np.empty((0, 0))
        ds.image_paths = None
        return ds
    ds.validate()
    return ds


def save_jsonl(path, dataset: Dataset, with_split: bool = True) -> None:
    """Write the dataset in the format read by :func:`load_jsonl`.

    Feature floats round-trip exactly (shortest-repr JSON encoding).
    """
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(len(dataset)):
            rec: dict = {"id": int(dataset.class_ids[i]), "scene": int(dataset.scene_ids[i])}
            if dataset.is_vector_backed:
                rec["features"] = [float(x) for x in dataset.features[i]]
            else:
                rec["image"] = dataset.image_paths[i]
            if with_split:
                rec["split"] = SPLIT_NAMES[int(dataset.split[i])]
            fh.write(json.dumps(rec, separators=(", ", ": ")) + "\n")


def split_query_gallery(dataset: Dataset, holdout_classes, rng: Rng) -> Dataset:
    """Tag held-out identities: one query per (class, scene), rest gallery.

    Holdout classes leave the train split entirely. Every holdout class must
    keep, for each of its scenes, at least one other-scene gallery sample
    (so cross-scene retrieval is well-defined for every query); classes in
    a single scene are rejected outright.
    """
    holdout = sorted(int(c) for c in holdout_classes)
    split = np.full(len(dataset), TRAIN, dtype=np.int8)
    for cls in holdout:
        rows = np.nonzero(dataset.class_ids == cls)[0]
        if rows.size == 0:
            raise ValueError(f"holdout class {cls} has no samples")
        by_scene: dict[int, list[int]] = {}
        for r in rows:
            by_scene.setdefault(int(dataset.scene_ids[r]), []).append(int(r))
        scenes = sorted(by_scene)
        if len(scenes) < 2:
            raise ValueError(
                f"holdout class {cls} appears in a single scene; cross-scene "
                "evaluation is impossible")
        for s in scenes:
            others_left = sum(len(by_scene[o]) - 1 for o in scenes if o != s)
            if others_left < 1:
                raise ValueError(
                    f"holdout class {cls}: query from scene {s} would have no "
                    "cross-scene gallery match")
        for s in scenes:
            group = by_scene[s]
            pick = group[rng.next_int(len(group))]
            for r in group:
                split[r] = QUERY if r == pick else GALLERY

    out = Dataset(class_ids=dataset.class_ids.copy(), scene_ids=dataset.scene_ids.copy(),
                  num_classes=dataset.num_classes, num_scenes=dataset.num_scenes,
                  features=None if dataset.features is None else dataset.features.copy(),
                  image_paths=None if dataset.image_paths is None
                  else list(dataset.image_paths),
                  split=split)
    out.validate()
    return out
