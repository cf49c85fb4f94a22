"""Sentence encoders and the contrastive training loop.

Two encoder kinds satisfy the same contract (``dim`` plus ``embed(text)``
returning a float64 vector of exactly ``dim`` entries):

* :class:`ToyEncoder` — hashed lexical features (lowercased word unigrams
  plus within-word character trigrams, signed hashing, L2-normalized)
  through a learned linear projection. Marker tokens are ordinary tokens,
  so span position influences the features. Trains in seconds with no ML
  stack.
* :class:`~fsrcbench.bridge_client.BridgedEncoder` — an external model
  behind the line-delimited process protocol.

Training minimizes the margin contrastive objective: squared distance for
same-relation pairs, squared hinge ``max(0, margin - d)^2`` otherwise,
with plain mini-batch gradient descent and decoupled weight decay. The
learning-rate default (0.01) targets this linear model; transformer-scale
values belong to bridged encoders and are not meaningful here.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels
from ._kernels import FEATURIZER_VERSION, featurize_text
from .errors import (
    DimensionMismatch,
    DivergedLoss,
    EmptyText,
    EmptyTrainingSet,
)
from .splitter import mix_seed

CHECKPOINT_FORMAT = "fsrc-toy-ckpt-v1"


@dataclass
class TrainConfig:
    batch_size: int = 4
    epochs: int = 4
    learning_rate: float = 0.01
    weight_decay: float = 0.1
    eval_every: int = 1000
    seed: int = 0
    optimizer: str = "sgd"  # "sgd" | "adam"

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.learning_rate * self.weight_decay >= 1.0:
            raise ValueError("learning_rate * weight_decay must be < 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


class ToyEncoder:
    """Hashed-feature linear encoder. Immutable once constructed."""

    kind = "toy"

    def __init__(
        self,
        projection: np.ndarray,
        margin: float = 1.0,
        seed: int | None = None,
        metadata: dict | None = None,
    ):
        projection = np.ascontiguousarray(projection, dtype=np.float64)
        if projection.ndim != 2:
            raise ValueError("projection must be a 2-D matrix")
        if not np.all(np.isfinite(projection)):
            raise ValueError("projection entries must be finite")
        self.projection = projection
        self.proj_dim, self.hash_dim = projection.shape
        self.margin = float(margin)
        self.seed = seed
        self.metadata = dict(metadata or {})
        self._feat_cache: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    @property
    def dim(self) -> int:
        return self.proj_dim

    def features(self, text: str) -> tuple[np.ndarray, np.ndarray]:
        cached = self._feat_cache.get(text)
        if cached is None:
            cached = featurize_text(text, self.hash_dim)
            self._feat_cache[text] = cached
        return cached

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise EmptyText("cannot embed an empty text")
        idx, val = self.features(text)
        return _kernels.embed(self.projection, idx, val)

    def embed_many(self, texts: Sequence[str]) -> np.ndarray:
        for t in texts:
            if not t:
                raise EmptyText("cannot embed an empty text")
        feats = [self.features(t) for t in texts]
        return _kernels.embed_batch(self.projection, feats)


def init_toy_encoder(
    hash_dim: int = 65536,
    proj_dim: int = 64,
    margin: float = 1.0,
    seed: int = 0,
) -> ToyEncoder:
    """Fresh encoder with Gaussian projection, std 1/sqrt(proj_dim).

    The scale puts initial embeddings at roughly unit norm for unit-norm
    feature vectors, so the contrastive margin starts active.
    """
    if hash_dim < 1 or proj_dim < 1:
        raise ValueError("hash_dim and proj_dim must be positive")
    rng = np.random.default_rng(seed)
    projection = rng.normal(0.0, 1.0 / math.sqrt(proj_dim), size=(proj_dim, hash_dim))
    return ToyEncoder(projection, margin=margin, seed=seed)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of two vectors; 0.0 when either vector is all zeros."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"vector dims differ: {a.shape} vs {b.shape}")
    na = math.sqrt(float(a @ a))
    nb = math.sqrt(float(b @ b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return min(1.0, max(-1.0, float(a @ b) / (na * nb)))


def contrastive_loss(a: np.ndarray, b: np.ndarray, label: str, margin: float) -> float:
    """Squared distance for SAME pairs, squared hinge for DIFFERENT pairs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"vector dims differ: {a.shape} vs {b.shape}")
    diff = a - b
    d = math.sqrt(float(diff @ diff))
    if label == "SAME":
        return d * d
    return max(0.0, margin - d) ** 2


@dataclass
class _PreparedPairs:
    idx_list: list
    val_list: list
    pair_a: np.ndarray
    pair_b: np.ndarray
    pair_same: np.ndarray


def _prepare_pairs(pairs, hash_dim: int) -> _PreparedPairs:
    text_ids: dict[str, int] = {}
    idx_list: list = []
    val_list: list = []

    def tid(text: str) -> int:
        t = text_ids.get(text)
        if t is None:
            t = len(idx_list)
            text_ids[text] = t
            idx, val = featurize_text(text, hash_dim)
            idx_list.append(idx)
            val_list.append(val)
        return t

    pair_a = np.empty(len(pairs), dtype=np.int64)
    pair_b = np.empty(len(pairs), dtype=np.int64)
    pair_same = np.empty(len(pairs), dtype=np.uint8)
    for i, p in enumerate(pairs):
        pair_a[i] = tid(p.first_text)
        pair_b[i] = tid(p.second_text)
        pair_same[i] = 1 if p.label == "SAME" else 0
    return _PreparedPairs(idx_list, val_list, pair_a, pair_b, pair_same)


def train_toy(
    pairs,
    config: TrainConfig,
    params: ToyEncoder,
    dev_pairs=(),
):
    """Train a toy encoder on labeled pairs.

    Returns ``(encoder, curve)`` where the curve holds one dev-F1 point per
    ``eval_every`` steps (empty when ``dev_pairs`` is empty). Deterministic
    in ``config.seed``: shuffling is seeded and the step loop is
    single-threaded by contract.
    """
    from .evaluator import LearningCurve, evaluate_pairs, select_threshold

    if not pairs:
        raise EmptyTrainingSet("no training pairs")
    if config.optimizer == "adam":
        return _train_adam(pairs, config, params, dev_pairs)

    prep = _prepare_pairs(pairs, params.hash_dim)
    projection = params.projection.copy()
    scale = 1.0
    rng = random.Random(mix_seed(config.seed, 0x7EA12))
    n = len(pairs)
    points: list[tuple[int, float]] = []
    global_step = 0
    next_eval = config.eval_every

    def dev_point() -> None:
        snapshot = ToyEncoder(scale * projection, margin=params.margin)
        threshold = select_threshold(snapshot, dev_pairs)
        report = evaluate_pairs(snapshot, dev_pairs, threshold)
        points.append((global_step, report.f1))

    for _epoch in range(config.epochs):
        order = list(range(n))
        rng.shuffle(order)
        order_arr = np.array(order, dtype=np.int64)
        pos = 0
        while pos < n:
            steps_wanted = next_eval - global_step
            take = min(steps_wanted * config.batch_size, n - pos)
            chunk = order_arr[pos : pos + take]
            pos += take
            scale, loss_sum, steps = _kernels.train_block(
                projection,
                scale,
                prep.idx_list,
                prep.val_list,
                prep.pair_a,
                prep.pair_b,
                prep.pair_same,
                chunk,
                config.batch_size,
                config.learning_rate,
                config.weight_decay,
                params.margin,
            )
            if not math.isfinite(loss_sum):
                raise DivergedLoss(f"loss became non-finite at step {global_step}")
            global_step += steps
            if global_step == next_eval:
                if dev_pairs:
                    dev_point()
                next_eval += config.eval_every

    final = scale * projection
    if not np.all(np.isfinite(final)):
        raise DivergedLoss(f"projection became non-finite after step {global_step}")
    encoder = ToyEncoder(
        final,
        margin=params.margin,
        seed=params.seed,
        metadata={
            "trained_steps": global_step,
            "epochs": config.epochs,
            "optimizer": config.optimizer,
            "train_pairs": n,
        },
    )
    return encoder, LearningCurve(points=tuple(points))


def _train_adam(pairs, config: TrainConfig, params: ToyEncoder, dev_pairs=()):
    """Dense Adam with decoupled weight decay.

    Exact Adam semantics (moments over the full matrix each step), which
    costs O(proj_dim * hash_dim) per step; intended for experimentation at
    reduced hash_dim, not for the default 2^16 feature space.
    """
    from .evaluator import LearningCurve, evaluate_pairs, select_threshold

    beta1, beta2, eps = 0.9, 0.999, 1e-8
    prep = _prepare_pairs(pairs, params.hash_dim)
    P = params.projection.copy()
    m = np.zeros_like(P)
    v = np.zeros_like(P)
    rng = random.Random(mix_seed(config.seed, 0x7EA12))
    n = len(pairs)
    points: list[tuple[int, float]] = []
    global_step = 0

    for _epoch in range(config.epochs):
        order = list(range(n))
        rng.shuffle(order)
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            grad = np.zeros_like(P)
            loss_sum = 0.0
            for pid in batch:
                ia, va = prep.idx_list[prep.pair_a[pid]], prep.val_list[prep.pair_a[pid]]
                ib, vb = prep.idx_list[prep.pair_b[pid]], prep.val_list[prep.pair_b[pid]]
                e1 = _kernels.embed(P, ia, va)
                e2 = _kernels.embed(P, ib, vb)
                diff = e1 - e2
                d = math.sqrt(float(diff @ diff))
                if prep.pair_same[pid]:
                    loss_sum += d * d
                    g = 2.0 * diff
                elif d < params.margin and d > 0.0:
                    loss_sum += (params.margin - d) ** 2
                    g = (-2.0 * (params.margin - d) / d) * diff
                else:
                    if d < params.margin:
                        loss_sum += (params.margin - d) ** 2
                    continue
                grad[:, ia] += g[:, None] * va[None, :]
                grad[:, ib] -= g[:, None] * vb[None, :]
            if not math.isfinite(loss_sum):
                raise DivergedLoss(f"loss became non-finite at step {global_step}")
            grad /= len(batch)
            global_step += 1
            m = beta1 * m + (1 - beta1) * grad
            v = beta2 * v + (1 - beta2) * grad * grad
            mhat = m / (1 - beta1**global_step)
            vhat = v / (1 - beta2**global_step)
            P *= 1.0 - config.learning_rate * config.weight_decay
            P -= config.learning_rate * mhat / (np.sqrt(vhat) + eps)
            if dev_pairs and global_step % config.eval_every == 0:
                snapshot = ToyEncoder(P.copy(), margin=params.margin)
                threshold = select_threshold(snapshot, dev_pairs)
                report = evaluate_pairs(snapshot, dev_pairs, threshold)
                points.append((global_step, report.f1))

    if not np.all(np.isfinite(P)):
        raise DivergedLoss(f"projection became non-finite after step {global_step}")
    encoder = ToyEncoder(
        P,
        margin=params.margin,
        seed=params.seed,
        metadata={
            "trained_steps": global_step,
            "epochs": config.epochs,
            "optimizer": "adam",
            "train_pairs": n,
        },
    )
    return encoder, LearningCurve(points=tuple(points))


def save_toy_checkpoint(encoder: ToyEncoder, path: str | Path) -> None:
    """Single-file checkpoint: one JSON header line + row-major f64 bytes."""
    header = {
        "format": CHECKPOINT_FORMAT,
        "hash_dim": encoder.hash_dim,
        "proj_dim": encoder.proj_dim,
        "margin": encoder.margin,
        "seed": encoder.seed,
        "featurizer": FEATURIZER_VERSION,
        "dtype": "<f8",
        "order": "C",
    }
    with Path(path).open("wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(np.ascontiguousarray(encoder.projection, dtype="<f8").tobytes())


def load_toy_checkpoint(path: str | Path) -> ToyEncoder:
    with Path(path).open("rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"not a toy encoder checkpoint: {path}")
        if header.get("featurizer") != FEATURIZER_VERSION:
            raise ValueError(
                f"checkpoint featurizer {header.get('featurizer')!r} does not match "
                f"this build ({FEATURIZER_VERSION})"
            )
        raw = fh.read()
    proj_dim, hash_dim = header["proj_dim"], header["hash_dim"]
    projection = np.frombuffer(raw, dtype="<f8").reshape(proj_dim, hash_dim).copy()
    return ToyEncoder(
        projection,
        margin=header["margin"],
        seed=header.get("seed"),
        metadata={"checkpoint": str(path)},
    )
