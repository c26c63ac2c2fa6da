"""Runtime-selected compute kernels for the batch-hard triplet hot path.

Profiling puts the fused distance/mining/subgradient pass at the top of
the training step; it is branchy per-element work that NumPy cannot
express in one pass, so it gets a compiled core (``_native``, built from
Cython) with a NumPy fallback selected at import. Dense matmuls stay on
NumPy/BLAS everywhere — naive compiled loops cannot compete there.

``REIDLAB_KERNELS=native`` or ``=numpy`` forces a choice — forcing
``native`` when the extension is missing raises, loudly, instead of
silently degrading. Both backends implement the same contracts;
``benchmarks/bench_kernels.py`` compares their speed.
"""

import os


def load_backend(name: str):
    """Import one backend module by name ('native' or 'numpy')."""
    if name == "native":
        from . import _native

        return _native
    if name == "numpy":
        from . import _numpy

        return _numpy
    raise ValueError(f"unknown kernel backend {name!r} (expected 'native' or 'numpy')")


def available_backends() -> list[str]:
    out = []
    for name in ("native", "numpy"):
        try:
            load_backend(name)
        except ImportError:
            continue
        out.append(name)
    return out


_forced = os.environ.get("REIDLAB_KERNELS", "").strip().lower()
if _forced:
    _impl = load_backend(_forced)
    BACKEND = _forced
else:
    try:
        _impl = load_backend("native")
        BACKEND = "native"
    except ImportError:
        _impl = load_backend("numpy")
        BACKEND = "numpy"

batch_hard_mine = _impl.batch_hard_mine
batch_hard_triplet_core = _impl.batch_hard_triplet_core
