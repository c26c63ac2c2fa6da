"""Small multilayer feature extractor with explicit forward/backward passes.

The extractor is a chain of dense layers (input -> hidden... -> embedding)
with ReLU between stages and a linear final stage. Two heads sit on the
embedding:

* an identity head ``id_logits = x @ W.T`` with no bias, so the rows of the
  class-weight matrix W act as class centers;
* a scene head ``scene_logits = x @ S.T + b`` behind a gradient-reversal
  boundary: its gradient into the shared extractor is scaled by -lambda
  while the head's own parameters receive the plain minimization gradient.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .rng import Rng

CHECKPOINT_MAGIC = b"RLCP"
CHECKPOINT_VERSION = 1


@dataclass
class ModelParams:
    """Parameter container, also reused for gradients and momentum buffers.

    ``layers[k]`` is the (in, out) weight and (out,) bias of stage k along
    the input -> embedding chain; the identity head is bias-free.
    """

    layers: list[tuple[np.ndarray, np.ndarray]]
    class_weights: np.ndarray  # (C, L)
    scene_weights: np.ndarray  # (T, L)
    scene_bias: np.ndarray  # (T,)

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def embedding_dim(self) -> int:
        return self.layers[-1][0].shape[1]

    @property
    def hidden_sizes(self) -> list[int]:
        return [w.shape[1] for w, _ in self.layers[:-1]]

    @property
    def num_classes(self) -> int:
        return self.class_weights.shape[0]

    @property
    def num_scenes(self) -> int:
        return self.scene_weights.shape[0]

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        """All parameter arrays in the fixed serialization order."""
        out = []
        for k, (w, b) in enumerate(self.layers):
            out.append((f"layer{k}.weight", w))
            out.append((f"layer{k}.bias", b))
        out.append(("class_weights", self.class_weights))
        out.append(("scene_weights", self.scene_weights))
        out.append(("scene_bias", self.scene_bias))
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(
            layers=[(w.copy(), b.copy()) for w, b in self.layers],
            class_weights=self.class_weights.copy(),
            scene_weights=self.scene_weights.copy(),
            scene_bias=self.scene_bias.copy(),
        )

    def zeros_like(self) -> "ModelParams":
        return ModelParams(
            layers=[(np.zeros_like(w), np.zeros_like(b)) for w, b in self.layers],
            class_weights=np.zeros_like(self.class_weights),
            scene_weights=np.zeros_like(self.scene_weights),
            scene_bias=np.zeros_like(self.scene_bias),
        )


@dataclass
class ForwardTrace:
    """Caches from one forward pass, sufficient for an exact backward pass."""

    inputs: np.ndarray
    pre_activations: list[np.ndarray] = field(default_factory=list)
    activations: list[np.ndarray] = field(default_factory=list)
    embeddings: np.ndarray = None
    id_logits: np.ndarray = None
    scene_logits: np.ndarray = None


def _fill_uniform(rng: Rng, shape: tuple[int, ...], limit: float) -> np.ndarray:
    flat = np.empty(int(np.prod(shape)), dtype=np.float64)
    for i in range(flat.size):
        flat[i] = (2.0 * rng.next_uniform() - 1.0) * limit
    return flat.reshape(shape)


def init_params(rng: Rng, input_dim: int, hidden: list[int], embedding_dim: int,
                num_classes: int, num_scenes: int) -> ModelParams:
    """Glorot-uniform weights (limit sqrt(6/(fan_in+fan_out))), zero biases.

    Arrays are filled row-major in a fixed order (extractor stages, then
    class weights, then scene weights), so equal seeds give bit-identical
    parameters and the scene head can be ablated without disturbing the
    rest of the stream.
    """
    for name, v in (("input_dim", input_dim), ("embedding_dim", embedding_dim)):
        if v < 1:
            raise ValueError(f"{name} must be >= 1, got {v}")
    if any(h < 1 for h in hidden):
        raise ValueError(f"hidden sizes must all be >= 1, got {hidden}")
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    if num_scenes < 2:
        raise ValueError(f"num_scenes must be >= 2, got {num_scenes}")

    dims = [input_dim, *hidden, embedding_dim]
    layers = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        limit = math.sqrt(6.0 / (d_in + d_out))
        layers.append((_fill_uniform(rng, (d_in, d_out), limit), np.zeros(d_out)))
    cw = _fill_uniform(rng, (num_classes, embedding_dim),
                       math.sqrt(6.0 / (num_classes + embedding_dim)))
    sw = _fill_uniform(rng, (num_scenes, embedding_dim),
                       math.sqrt(6.0 / (num_scenes + embedding_dim)))
    return ModelParams(layers=layers, class_weights=cw, scene_weights=sw,
                       scene_bias=np.zeros(num_scenes))


def forward(params: ModelParams, inputs) -> ForwardTrace:
    """Run the extractor and both heads, caching what backward needs."""
    x = np.ascontiguousarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ValueError(
            f"inputs must be (batch, {params.input_dim}), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("inputs contain non-finite values")

    trace = ForwardTrace(inputs=x)
    a = x
    last = len(params.layers) - 1
    for k, (w, b) in enumerate(params.layers):
        z = a @ w + b
        a = np.maximum(z, 0.0) if k < last else z
        trace.pre_activations.append(z)
        trace.activations.append(a)
    trace.embeddings = a
    trace.id_logits = a @ params.class_weights.T
    trace.scene_logits = a @ params.scene_weights.T + params.scene_bias
    return trace


def backward(params: ModelParams, trace: ForwardTrace, grad_embeddings,
             grad_id_logits, grad_scene_logits, reversal_coeff: float) -> ModelParams:
    """Exact gradients of the composite objective for every parameter.

    The extractor receives d(L_reid)/dtheta - lambda * d(L_adv)/dtheta
    (gradient reversal on the scene branch); the scene head receives the
    unreversed +d(L_adv) so it keeps learning to classify scenes.
    """
    emb = trace.embeddings
    n, L = emb.shape
    g_emb = np.ascontiguousarray(grad_embeddings, dtype=np.float64)
    g_id = np.ascontiguousarray(grad_id_logits, dtype=np.float64)
    g_scene = np.ascontiguousarray(grad_scene_logits, dtype=np.float64)
    if g_emb.shape != (n, L):
        raise ValueError(f"grad_embeddings must be {(n, L)}, got {g_emb.shape}")
    if g_id.shape != trace.id_logits.shape:
        raise ValueError(f"grad_id_logits must be {trace.id_logits.shape}, got {g_id.shape}")
    if g_scene.shape != trace.scene_logits.shape:
        raise ValueError(
            f"grad_scene_logits must be {trace.scene_logits.shape}, got {g_scene.shape}")

    grads = params.zeros_like()
    grads.class_weights = g_id.T @ emb
    grads.scene_weights = g_scene.T @ emb
    grads.scene_bias = g_scene.sum(axis=0)

    g = (g_emb + g_id @ params.class_weights
         - reversal_coeff * (g_scene @ params.scene_weights))

    last = len(params.layers) - 1
    for k in range(last, -1, -1):
        w, _ = params.layers[k]
        gz = g if k == last else g * (trace.pre_activations[k] > 0.0)
        a_prev = trace.inputs if k == 0 else trace.activations[k - 1]
        grads.layers[k] = (a_prev.T @ gz, gz.sum(axis=0))
        if k > 0:
            g = gz @ w.T
    return grads


def sgd_step(params: ModelParams, grads: ModelParams, lr: float, momentum: float,
             weight_decay: float, velocity: ModelParams) -> tuple[ModelParams, ModelParams]:
    """Classic momentum SGD: v <- mu*v + g + wd*p; p <- p - lr*v.

    L2 decay is added to the gradient (not the loss) and applies to weight
    matrices only, never biases.
    """
    if lr < 0.0:
        raise ValueError(f"learning rate must be >= 0, got {lr}")

    def upd(p, g, v, decay):
        d = g + weight_decay * p if decay else g
        v_new = momentum * v + d
        return p - lr * v_new, v_new

    new_p = params.zeros_like()
    new_v = params.zeros_like()
    for k, (w, b) in enumerate(params.layers):
        gw, gb = grads.layers[k]
        vw, vb = velocity.layers[k]
        w2, vw2 = upd(w, gw, vw, True)
        b2, vb2 = upd(b, gb, vb, False)
        new_p.layers[k] = (w2, b2)
        new_v.layers[k] = (vw2, vb2)
    new_p.class_weights, new_v.class_weights = upd(
        params.class_weights, grads.class_weights, velocity.class_weights, True)
    new_p.scene_weights, new_v.scene_weights = upd(
        params.scene_weights, grads.scene_weights, velocity.scene_weights, True)
    new_p.scene_bias, new_v.scene_bias = upd(
        params.scene_bias, grads.scene_bias, velocity.scene_bias, False)
    return new_p, new_v


def cosine_lr(step: int, total_steps: int, base_lr: float) -> float:
    """Cosine decay from base_lr at step 0 to 0 at total_steps."""
    if total_steps < 1:
        raise ValueError(f"total_steps must be >= 1, got {total_steps}")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step must be in [0, {total_steps}], got {step}")
    return base_lr * (1.0 + math.cos(math.pi * step / total_steps)) / 2.0


def config_hash(config_dict: dict) -> str:
    """Stable sha256 of a JSON-serializable config."""
    blob = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def save_checkpoint(path, params: ModelParams, velocity: ModelParams,
                    cfg_hash: str = "") -> None:
    """Write the documented binary checkpoint.

    Layout: magic ``RLCP`` | u32 version | u32 header length | UTF-8 JSON
    header | raw little-endian float64 arrays, row-major, in header order
    (parameters first, then the matching velocity buffers). The format is
    bit-exact under save -> load -> save.
    """
    named = params.named_arrays() + [("velocity." + n, a)
                                     for n, a in velocity.named_arrays()]
    header = {
        "version": CHECKPOINT_VERSION,
        "dims": {
            "input": params.input_dim,
            "hidden": params.hidden_sizes,
            "embedding": params.embedding_dim,
            "classes": params.num_classes,
            "scenes": params.num_scenes,
        },
        "config_hash": cfg_hash,
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in named],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for _, a in named:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ModelParams, ModelParams, dict]:
    """Read a checkpoint written by :func:`save_checkpoint`."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a checkpoint file (bad magic {magic!r})")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        arrays = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise ValueError(f"truncated checkpoint while reading {spec['name']}")
            arrays[spec["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()

    def build(prefix: str) -> ModelParams:
        n_layers = len(header["dims"]["hidden"]) + 1
        layers = [(arrays[f"{prefix}layer{k}.weight"], arrays[f"{prefix}layer{k}.bias"])
                  for k in range(n_layers)]
        return ModelParams(
            layers=layers,
            class_weights=arrays[f"{prefix}class_weights"],
            scene_weights=arrays[f"{prefix}scene_weights"],
            scene_bias=arrays[f"{prefix}scene_bias"],
        )

    return build(""), build("velocity."), header
