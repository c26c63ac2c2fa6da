"""Deterministic desk-scale re-identification laboratory.

Train a small feature extractor with batch-hard triplet + identity
cross-entropy, build batches either uniformly or from classifier-weight
similarity rankings, optionally strip scene information adversarially, and
evaluate with mAP/CMC ranked retrieval (with k-reciprocal re-ranking).
"""

from ._kernels import BACKEND as kernel_backend
from .rng import Rng

__version__ = "0.1.0"

__all__ = ["Rng", "kernel_backend", "__version__"]
