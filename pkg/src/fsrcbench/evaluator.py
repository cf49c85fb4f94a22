"""Evaluation protocols: pair-level F1/P/R and episode accuracy with NOTA.

Pair evaluation treats SAME as the positive class; precision, recall, and
F1 are defined as 0 when their denominator is 0, so degenerate runs yield
comparable numbers instead of errors. Episode evaluation scores a query
against each support relation by the mean (or max) cosine similarity to
its K support embeddings, predicts the argmax, and falls back to NOTA when
the best score is below the NOTA threshold; exact ties break toward the
lexicographically smallest relation label.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .encoder import cosine_similarity
from .errors import DegenerateDevSet, EmptyEvalSet
from .sampler import DIFFERENT, NOTA, SAME, Episode, PairExample


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def metrics_from_counts(counts: ConfusionCounts) -> tuple[float, float, float]:
    """(precision, recall, f1) with the zero-denominator-is-zero convention."""
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    f1 = (
        2 * precision * recall / (precision + recall)
        if precision + recall
        else 0.0
    )
    return precision, recall, f1


@dataclass(frozen=True)
class PairEvalReport:
    counts: ConfusionCounts
    precision: float
    recall: float
    f1: float
    threshold: float
    negative_fraction: float
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": "pair_eval",
            "counts": {
                "tp": self.counts.tp,
                "fp": self.counts.fp,
                "tn": self.counts.tn,
                "fn": self.counts.fn,
            },
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "threshold": self.threshold,
            "negative_fraction": self.negative_fraction,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PairEvalReport":
        c = d["counts"]
        return cls(
            counts=ConfusionCounts(tp=c["tp"], fp=c["fp"], tn=c["tn"], fn=c["fn"]),
            precision=d["precision"],
            recall=d["recall"],
            f1=d["f1"],
            threshold=d["threshold"],
            negative_fraction=d["negative_fraction"],
            provenance=d.get("provenance", {}),
        )


@dataclass(frozen=True)
class EpisodeEvalReport:
    episodes: int
    queries: int
    correct: int
    query_accuracy: float
    per_class: dict  # label (or NOTA) -> {"correct": int, "total": int}
    nota_threshold: float
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": "episode_eval",
            "episodes": self.episodes,
            "queries": self.queries,
            "correct": self.correct,
            "query_accuracy": self.query_accuracy,
            "per_class": self.per_class,
            "nota_threshold": self.nota_threshold,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeEvalReport":
        return cls(
            episodes=d["episodes"],
            queries=d["queries"],
            correct=d["correct"],
            query_accuracy=d["query_accuracy"],
            per_class=d["per_class"],
            nota_threshold=d["nota_threshold"],
            provenance=d.get("provenance", {}),
        )


@dataclass(frozen=True)
class LearningCurve:
    points: tuple[tuple[int, float], ...]  # (step, dev F1), steps increasing

    def __post_init__(self) -> None:
        steps = [s for s, _ in self.points]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("curve steps must be strictly increasing")

    def to_dict(self) -> dict:
        return {"points": [[s, f] for s, f in self.points]}

    @classmethod
    def from_dict(cls, d: dict) -> "LearningCurve":
        return cls(points=tuple((int(s), float(f)) for s, f in d["points"]))


@dataclass(frozen=True)
class CrossDatasetCell:
    train_id: str
    test_id: str
    k: int
    score: float


def embed_texts(encoder, texts: Iterable[str], workers: int = 1) -> dict[str, np.ndarray]:
    """Embed each distinct text once. Deterministic for any worker count.

    Encoders exposing ``embed_many`` (batched kernel, pipelined bridge) are
    used through it directly; bridged encoders in particular share one
    request stream and must not be driven from multiple threads. The
    thread pool only applies to plain per-text embedding.
    """
    unique = list(dict.fromkeys(texts))
    if hasattr(encoder, "embed_many"):
        vectors = list(encoder.embed_many(unique)) if unique else []
    elif workers > 1 and len(unique) > 1:
        chunk = max(1, (len(unique) + workers - 1) // workers)
        parts = [unique[i : i + chunk] for i in range(0, len(unique), chunk)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vec_chunks = list(pool.map(lambda ts: [encoder.embed(t) for t in ts], parts))
        vectors = [v for chunk_vecs in vec_chunks for v in chunk_vecs]
    else:
        vectors = [encoder.embed(t) for t in unique]
    for t, v in zip(unique, vectors):
        if v.shape != (encoder.dim,):
            raise ValueError(
                f"encoder returned shape {v.shape} for dim {encoder.dim}"
            )
    return dict(zip(unique, vectors))


def score_pair(encoder, pair: PairExample) -> float:
    return cosine_similarity(encoder.embed(pair.first_text), encoder.embed(pair.second_text))


def _pair_scores(encoder, pairs: Sequence[PairExample], workers: int = 1) -> list[float]:
    texts = [t for p in pairs for t in (p.first_text, p.second_text)]
    vecs = embed_texts(encoder, texts, workers=workers)
    return [
        cosine_similarity(vecs[p.first_text], vecs[p.second_text]) for p in pairs
    ]


def select_threshold(encoder, dev_pairs: Sequence[PairExample], workers: int = 1) -> float:
    """Midpoint threshold between consecutive dev scores maximizing dev F1.

    Ties break toward the higher threshold (fewer predicted positives).
    When every dev pair scores identically there is no midpoint; the common
    score itself is returned (predicting everything SAME).
    """
    n_same = sum(1 for p in dev_pairs if p.label == SAME)
    n_diff = len(dev_pairs) - n_same
    if n_same == 0 or n_diff == 0:
        raise DegenerateDevSet(
            "threshold selection needs at least one SAME and one DIFFERENT dev pair"
        )
    scores = _pair_scores(encoder, dev_pairs, workers=workers)
    order = sorted(range(len(scores)), key=lambda i: -scores[i])
    best_f1 = -1.0
    best_threshold = scores[order[0]]
    tp = 0
    fp = 0
    for rank, i in enumerate(order[:-1]):
        if dev_pairs[i].label == SAME:
            tp += 1
        else:
            fp += 1
        s_here = scores[i]
        s_next = scores[order[rank + 1]]
        if s_next == s_here:
            continue
        threshold = (s_here + s_next) / 2.0
        fn = n_same - tp
        precision = tp / (tp + fp)
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        if f1 > best_f1 or (f1 == best_f1 and threshold > best_threshold):
            best_f1 = f1
            best_threshold = threshold
    if best_f1 < 0.0:
        # all scores identical
        return scores[0]
    return best_threshold


def evaluate_pairs(
    encoder,
    pairs: Sequence[PairExample],
    threshold: float,
    workers: int = 1,
    provenance: dict | None = None,
) -> PairEvalReport:
    """Predict SAME iff cosine score >= threshold; tally the confusion."""
    if not pairs:
        raise EmptyEvalSet("no pairs to evaluate")
    scores = _pair_scores(encoder, pairs, workers=workers)
    tp = fp = tn = fn = 0
    for p, s in zip(pairs, scores):
        pred_same = s >= threshold
        if p.label == SAME:
            if pred_same:
                tp += 1
            else:
                fn += 1
        else:
            if pred_same:
                fp += 1
            else:
                tn += 1
    counts = ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)
    precision, recall, f1 = metrics_from_counts(counts)
    n_diff = sum(1 for p in pairs if p.label == DIFFERENT)
    return PairEvalReport(
        counts=counts,
        precision=precision,
        recall=recall,
        f1=f1,
        threshold=threshold,
        negative_fraction=n_diff / len(pairs),
        provenance=provenance or {},
    )


def evaluate_episodes(
    encoder,
    episodes: Sequence[Episode],
    nota_threshold: float,
    aggregate: str = "mean",
    workers: int = 1,
    provenance: dict | None = None,
) -> EpisodeEvalReport:
    """Classify every query against its episode's support set."""
    if not episodes:
        raise EmptyEvalSet("no episodes to evaluate")
    if aggregate not in ("mean", "max"):
        raise ValueError(f"unknown aggregate {aggregate!r}")
    texts = [t for ep in episodes for t, _ in ep.support] + [
        t for ep in episodes for t, _ in ep.queries
    ]
    vecs = embed_texts(encoder, texts, workers=workers)
    correct = 0
    total = 0
    per_class: dict[str, dict[str, int]] = {}
    for ep in episodes:
        by_rel: dict[str, list[np.ndarray]] = {}
        for text, rel in ep.support:
            by_rel.setdefault(rel, []).append(vecs[text])
        rel_order = sorted(by_rel)
        for text, gold in ep.queries:
            qv = vecs[text]
            best_rel = None
            best_score = -np.inf
            for rel in rel_order:
                sims = [cosine_similarity(qv, sv) for sv in by_rel[rel]]
                score = sum(sims) / len(sims) if aggregate == "mean" else max(sims)
                if score > best_score:
                    best_score = score
                    best_rel = rel
            pred = best_rel if best_score >= nota_threshold else NOTA
            total += 1
            cls = per_class.setdefault(gold, {"correct": 0, "total": 0})
            cls["total"] += 1
            if pred == gold:
                correct += 1
                cls["correct"] += 1
    return EpisodeEvalReport(
        episodes=len(episodes),
        queries=total,
        correct=correct,
        query_accuracy=correct / total,
        per_class=per_class,
        nota_threshold=nota_threshold,
        provenance=provenance or {},
    )


def learning_curve_eval(
    snapshots: Sequence[tuple[int, object]],
    dev_pairs: Sequence[PairExample],
    workers: int = 1,
) -> LearningCurve:
    """One dev-F1 point per (step, encoder) snapshot.

    The threshold is re-selected on dev for every snapshot so curve shape
    reflects representation quality, not threshold drift.
    """
    points = []
    for step, enc in snapshots:
        threshold = select_threshold(enc, dev_pairs, workers=workers)
        report = evaluate_pairs(enc, dev_pairs, threshold, workers=workers)
        points.append((step, report.f1))
    return LearningCurve(points=tuple(points))


def cross_dataset_matrix(
    encoders: Mapping[str, object],
    episode_suites: Mapping[str, Mapping[int, Sequence[Episode]]],
    nota_threshold: float = 0.0,
    aggregate: str = "mean",
    workers: int = 1,
) -> list[CrossDatasetCell]:
    """Evaluate every (train dataset, test dataset, k) combination."""
    if not encoders or not episode_suites:
        raise EmptyEvalSet("matrix needs at least one encoder and one test suite")
    cells = []
    for train_id in sorted(encoders):
        for test_id in sorted(episode_suites):
            for k in sorted(episode_suites[test_id]):
                report = evaluate_episodes(
                    encoders[train_id],
                    episode_suites[test_id][k],
                    nota_threshold,
                    aggregate=aggregate,
                    workers=workers,
                )
                cells.append(
                    CrossDatasetCell(
                        train_id=train_id,
                        test_id=test_id,
                        k=k,
                        score=report.query_accuracy,
                    )
                )
    return cells


# -- tabular export --


def write_grid_tsv(
    rows: Sequence[dict],
    path: str | Path,
    fractions: Sequence[float] = (0.5, 0.9, 0.99),
) -> None:
    """Rows of {rel_types, data_size, reports: {fraction: PairEvalReport}}.

    Emits one line per row with F1/P/R columns per negative fraction,
    mirroring the ablation-grid table shape.
    """
    def tag(f: float) -> str:
        return f"{f:g}".replace("0.", "")

    header = ["rel_types", "data_size"]
    for f in fractions:
        header += [f"f1_{tag(f)}", f"p_{tag(f)}", f"r_{tag(f)}"]
    lines = ["\t".join(header)]
    for row in rows:
        cells = [str(row["rel_types"]), str(row["data_size"])]
        for f in fractions:
            rep = row["reports"][f]
            cells += [f"{rep.f1:.4f}", f"{rep.precision:.4f}", f"{rep.recall:.4f}"]
        lines.append("\t".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_matrix_tsv(cells: Sequence[CrossDatasetCell], path: str | Path) -> None:
    """K-blocked cross-dataset matrix: one row per (k, test), one column per train."""
    train_ids = sorted({c.train_id for c in cells})
    ks = sorted({c.k for c in cells})
    test_ids = sorted({c.test_id for c in cells})
    by_key = {(c.k, c.test_id, c.train_id): c.score for c in cells}
    lines = ["\t".join(["k", "test"] + train_ids)]
    for k in ks:
        for test_id in test_ids:
            row = [str(k), test_id]
            for train_id in train_ids:
                score = by_key.get((k, test_id, train_id))
                row.append("" if score is None else f"{score:.4f}")
            lines.append("\t".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_report_json(report, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def read_report_json(path: str | Path):
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    if d.get("kind") == "pair_eval":
        return PairEvalReport.from_dict(d)
    if d.get("kind") == "episode_eval":
        return EpisodeEvalReport.from_dict(d)
    raise ValueError(f"unrecognized report file: {path}")
