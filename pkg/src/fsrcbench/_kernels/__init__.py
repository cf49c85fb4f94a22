"""Hot numerical kernels with a compiled core and a numpy fallback.

The compiled extension (`_ckern`, Cython) is preferred when it was built;
otherwise the numpy implementations in `_pykern` are used. Set the
environment variable ``FSRC_KERNELS=python`` or ``FSRC_KERNELS=c`` before
import to force a backend (forcing ``c`` raises if the extension is
missing). Both backends implement identical semantics; see `_pykern` for
the contract and ``benchmarks/bench_kernels.py`` for a speed comparison.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykern

FEATURIZER_VERSION = "hashfeat-v1"

_requested = os.environ.get("FSRC_KERNELS", "").strip().lower()
if _requested not in ("", "c", "python"):
    raise ValueError(
        f"FSRC_KERNELS must be 'c' or 'python', got {_requested!r}"
    )

if _requested == "python":
    _impl = _pykern
    BACKEND = "python"
else:
    try:
        from . import _ckern as _impl  # type: ignore[attr-defined]

        BACKEND = "c"
    except ImportError:
        if _requested == "c":
            raise
        _impl = _pykern
        BACKEND = "python"

featurize = _impl.featurize
embed = _impl.embed
embed_batch = _impl.embed_batch
train_block = _impl.train_block


def featurize_text(text: str, hash_dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Lowercase, hash, and L2-normalize a text into sparse features.

    Returns (indices, values); both empty when the text has no tokens.
    """
    idx, val = featurize(text.lower().encode("utf-8"), hash_dim)
    if val.size:
        val = val / np.sqrt(val @ val)
    return idx, val
