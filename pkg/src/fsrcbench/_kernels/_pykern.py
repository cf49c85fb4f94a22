"""Plain numpy implementations of the hot kernels.

These are the reference semantics; the compiled module `_ckern` mirrors
them operation for operation. Any behavioral change here must be applied
to the Cython source as well.

Feature hashing contract (shared with `_ckern`):

* input is the UTF-8 encoding of the already-lowercased text
* tokens are maximal runs of bytes outside ASCII whitespace
  (0x09-0x0D, 0x20)
* each token contributes one word feature (prefix byte 0x01) and the
  character trigrams of b"#" + token + b"#" (prefix byte 0x02)
* feature hash is 64-bit FNV-1a over prefix + feature bytes; the bucket
  is hash % hash_dim and the sign is -1 when the top hash bit is set
* signed counts accumulate per bucket; buckets that cancel to exactly
  0.0 are dropped; output indices are sorted ascending
"""

from __future__ import annotations

import math

import numpy as np

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = (1 << 64) - 1
_WS = frozenset((0x09, 0x0A, 0x0B, 0x0C, 0x0D, 0x20))

WORD_PREFIX = 0x01
TRIGRAM_PREFIX = 0x02


def _fnv1a(prefix: int, token: bytes) -> int:
    h = ((FNV_OFFSET ^ prefix) * FNV_PRIME) & MASK64
    for b in token:
        h = ((h ^ b) * FNV_PRIME) & MASK64
    return h


def featurize(data: bytes, hash_dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Hash a lowercased UTF-8 byte string into signed bucket counts."""
    acc: dict[int, float] = {}
    n = len(data)
    pos = 0
    while pos < n:
        while pos < n and data[pos] in _WS:
            pos += 1
        start = pos
        while pos < n and data[pos] not in _WS:
            pos += 1
        if pos == start:
            continue
        word = data[start:pos]
        h = _fnv1a(WORD_PREFIX, word)
        idx = h % hash_dim
        acc[idx] = acc.get(idx, 0.0) + (-1.0 if h >> 63 else 1.0)
        padded = b"#" + word + b"#"
        for i in range(len(padded) - 2):
            h = _fnv1a(TRIGRAM_PREFIX, padded[i : i + 3])
            idx = h % hash_dim
            acc[idx] = acc.get(idx, 0.0) + (-1.0 if h >> 63 else 1.0)
    items = sorted((i, v) for i, v in acc.items() if v != 0.0)
    if not items:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
    idx_arr = np.array([i for i, _ in items], dtype=np.int64)
    val_arr = np.array([v for _, v in items], dtype=np.float64)
    return idx_arr, val_arr


def embed(projection: np.ndarray, idx: np.ndarray, val: np.ndarray) -> np.ndarray:
    """Dense projection times sparse feature vector."""
    if idx.size == 0:
        return np.zeros(projection.shape[0], dtype=np.float64)
    return projection[:, idx] @ val


def embed_batch(projection: np.ndarray, feats: list) -> np.ndarray:
    """Embed a list of (idx, val) feature pairs into a (n, proj_dim) matrix."""
    out = np.zeros((len(feats), projection.shape[0]), dtype=np.float64)
    for i, (idx, val) in enumerate(feats):
        if idx.size:
            out[i] = projection[:, idx] @ val
    return out


def train_block(
    projection: np.ndarray,
    scale: float,
    idx_list: list,
    val_list: list,
    pair_a: np.ndarray,
    pair_b: np.ndarray,
    pair_same: np.ndarray,
    order: np.ndarray,
    batch_size: int,
    lr: float,
    weight_decay: float,
    margin: float,
) -> tuple[float, float, int]:
    """Run mini-batch contrastive gradient steps over ``order`` in place.

    ``projection`` holds the stored matrix; the effective matrix is
    ``scale * projection``. Decoupled weight decay is applied lazily through
    ``scale`` so a step costs O(active features), not O(hash_dim). Returns
    (new scale, summed pair loss, steps taken).
    """
    loss_sum = 0.0
    steps = 0
    n = order.shape[0]
    pos = 0
    while pos < n:
        batch = order[pos : pos + batch_size]
        pos += batch.shape[0]
        updates = []
        for pid in batch:
            a = int(pair_a[pid])
            b = int(pair_b[pid])
            ia, va = idx_list[a], val_list[a]
            ib, vb = idx_list[b], val_list[b]
            e1 = scale * embed(projection, ia, va)
            e2 = scale * embed(projection, ib, vb)
            diff = e1 - e2
            d = math.sqrt(float(diff @ diff))
            if pair_same[pid]:
                loss_sum += d * d
                updates.append((ia, va, ib, vb, 2.0 * diff))
            else:
                if d < margin:
                    gap = margin - d
                    loss_sum += gap * gap
                    if d > 0.0:
                        updates.append((ia, va, ib, vb, (-2.0 * gap / d) * diff))
        scale *= 1.0 - lr * weight_decay
        coef = -lr / (batch.shape[0] * scale)
        for ia, va, ib, vb, g in updates:
            cg = coef * g
            projection[:, ia] += cg[:, None] * va[None, :]
            projection[:, ib] -= cg[:, None] * vb[None, :]
        steps += 1
    return scale, loss_sum, steps
