import json
import math
import random

import numpy as np
import pytest

from fsrcbench.errors import DegenerateDevSet, EmptyEvalSet
from fsrcbench.evaluator import (
    ConfusionCounts,
    CrossDatasetCell,
    EpisodeEvalReport,
    LearningCurve,
    PairEvalReport,
    cross_dataset_matrix,
    evaluate_episodes,
    evaluate_pairs,
    learning_curve_eval,
    metrics_from_counts,
    read_report_json,
    score_pair,
    select_threshold,
    write_report_json,
    write_matrix_tsv,
    write_grid_tsv,
)
from fsrcbench.sampler import DIFFERENT, NOTA, SAME, Episode, PairExample


class ScoreEncoder:
    """Maps text "s:<x>" to a 2-d vector whose cosine with "ref" is x."""

    kind = "toy"
    dim = 2

    def embed(self, text):
        if text == "ref":
            return np.array([1.0, 0.0])
        x = float(text.split(":", 1)[1])
        return np.array([x, math.sqrt(max(0.0, 1.0 - x * x))])


class VectorEncoder:
    """Returns canned vectors by text key."""

    kind = "toy"

    def __init__(self, table):
        self.table = {k: np.asarray(v, dtype=np.float64) for k, v in table.items()}
        self.dim = len(next(iter(self.table.values())))

    def embed(self, text):
        return self.table[text]


def score_pairs(scores_and_labels):
    return [
        PairExample(f"u{i}", f"v{i}", "ref", f"s:{s}", label, "A", "A" if label == SAME else "B")
        for i, (s, label) in enumerate(scores_and_labels)
    ]


def test_score_pair_identity_and_symmetry():
    enc = ScoreEncoder()
    p = score_pairs([(1.0, SAME)])[0]
    assert score_pair(enc, p) == pytest.approx(1.0)
    q = PairExample("a", "b", "s:0.3", "s:0.8", DIFFERENT, "A", "B")
    r = PairExample("a", "b", "s:0.8", "s:0.3", DIFFERENT, "B", "A")
    assert score_pair(enc, q) == pytest.approx(score_pair(enc, r))
    assert -1.0 <= score_pair(enc, q) <= 1.0


def test_metrics_from_counts_arithmetic():
    p, r, f1 = metrics_from_counts(ConfusionCounts(tp=3, fp=1, tn=5, fn=1))
    assert (p, r, f1) == (0.75, 0.75, 0.75)


def test_metrics_zero_denominators():
    assert metrics_from_counts(ConfusionCounts(tp=0, fp=0, tn=5, fn=2)) == (0.0, 0.0, 0.0)
    assert metrics_from_counts(ConfusionCounts(tp=0, fp=3, tn=0, fn=0)) == (0.0, 0.0, 0.0)


def brute_force_confusion(labels, predictions):
    tp = tn = fp = fn = 0
    for lab, pred in zip(labels, predictions):
        if pred and lab == SAME:
            tp += 1
        if pred and lab == DIFFERENT:
            fp += 1
        if not pred and lab == SAME:
            fn += 1
        if not pred and lab == DIFFERENT:
            tn += 1
    return tp, fp, tn, fn


def test_evaluate_pairs_matches_brute_force_oracle():
    rng = random.Random(0)
    enc = ScoreEncoder()
    for _ in range(200):
        n = rng.randint(1, 40)
        items = [
            (round(rng.uniform(-1, 1), 3), rng.choice((SAME, DIFFERENT)))
            for _ in range(n)
        ]
        threshold = round(rng.uniform(-1, 1), 3)
        report = evaluate_pairs(enc, score_pairs(items), threshold)
        preds = [s >= threshold for s, _ in items]
        tp, fp, tn, fn = brute_force_confusion([l for _, l in items], preds)
        assert (report.counts.tp, report.counts.fp, report.counts.tn, report.counts.fn) == (
            tp, fp, tn, fn,
        )
        assert report.precision == (tp / (tp + fp) if tp + fp else 0.0)
        assert report.recall == (tp / (tp + fn) if tp + fn else 0.0)


def test_evaluate_pairs_threshold_above_all():
    pairs = score_pairs([(0.2, SAME), (0.4, DIFFERENT)])
    report = evaluate_pairs(ScoreEncoder(), pairs, threshold=0.9)
    assert report.counts.tp == 0 and report.counts.fp == 0
    assert report.precision == report.recall == report.f1 == 0.0


def test_evaluate_pairs_empty():
    with pytest.raises(EmptyEvalSet):
        evaluate_pairs(ScoreEncoder(), [], 0.5)


def test_select_threshold_separable_midpoint():
    pairs = score_pairs([(0.9, SAME), (0.1, DIFFERENT)])
    assert select_threshold(ScoreEncoder(), pairs) == pytest.approx(0.5)


def test_select_threshold_degenerate():
    with pytest.raises(DegenerateDevSet):
        select_threshold(ScoreEncoder(), score_pairs([(0.5, SAME), (0.7, SAME)]))


def test_select_threshold_all_equal_scores():
    pairs = score_pairs([(0.5, SAME), (0.5, DIFFERENT)])
    assert select_threshold(ScoreEncoder(), pairs) == pytest.approx(0.5)


def sweep_oracle(scores, labels):
    """Exhaustive search over midpoints, ties toward the higher threshold."""
    uniq = sorted(set(scores))
    candidates = [(a + b) / 2 for a, b in zip(uniq, uniq[1:])]
    if not candidates:
        return uniq[0], None
    best = None
    for t in candidates:
        tp = sum(1 for s, l in zip(scores, labels) if s >= t and l == SAME)
        fp = sum(1 for s, l in zip(scores, labels) if s >= t and l == DIFFERENT)
        fn = sum(1 for s, l in zip(scores, labels) if s < t and l == SAME)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        if best is None or f1 > best[1] or (f1 == best[1] and t > best[0]):
            best = (t, f1)
    return best


def test_select_threshold_matches_exhaustive_sweep():
    rng = random.Random(7)
    enc = ScoreEncoder()
    for trial in range(150):
        n = rng.randint(2, 100)
        items = [
            (round(rng.uniform(-1, 1), 2), rng.choice((SAME, DIFFERENT)))
            for _ in range(n)
        ]
        labels = [l for _, l in items]
        if SAME not in labels or DIFFERENT not in labels:
            continue
        pairs = score_pairs(items)
        got = select_threshold(enc, pairs)
        scores = [s for s, _ in items]
        want, _f1 = sweep_oracle(scores, labels)
        assert got == pytest.approx(want, abs=1e-9)


def episode(support, queries, m=None, k=None):
    rels = [r for _, r in support]
    return Episode(
        m=m or len(set(rels)),
        k=k or rels.count(rels[0]),
        support=tuple(support),
        queries=tuple(queries),
        support_uids=frozenset(),
        query_uids=frozenset(),
    )


def test_episode_forced_argmax():
    enc = VectorEncoder(
        {"qa": [1.0, 0.0, 0.0], "sa": [1.0, 0.0, 0.0], "sb": [0.0, 1.0, 0.0]}
    )
    ep = episode([("sa", "A"), ("sb", "B")], [("qa", "A")])
    report = evaluate_episodes(enc, [ep], nota_threshold=0.0)
    assert report.query_accuracy == 1.0


def test_episode_all_nota_when_threshold_above_one():
    enc = VectorEncoder(
        {"qa": [1.0, 0.0], "qb": [0.0, 1.0], "sa": [1.0, 0.0], "sb": [0.0, 1.0]}
    )
    eps = [
        episode([("sa", "A"), ("sb", "B")], [("qa", "A"), ("qb", NOTA)]),
    ]
    report = evaluate_episodes(enc, eps, nota_threshold=1.5)
    assert report.query_accuracy == 0.5  # only the NOTA query is right
    assert report.per_class[NOTA] == {"correct": 1, "total": 1}


def test_episode_tie_breaks_to_lowest_label():
    enc = VectorEncoder({"q": [1.0, 0.0], "s1": [1.0, 0.0], "s2": [1.0, 0.0]})
    ep = episode([("s1", "Z"), ("s2", "B")], [("q", "B")])
    report = evaluate_episodes(enc, [ep], nota_threshold=0.0)
    assert report.query_accuracy == 1.0  # B beats Z on the exact tie


def test_episode_scale_invariance():
    rng = np.random.default_rng(3)
    table = {f"t{i}": rng.normal(size=4) for i in range(12)}
    support = [(f"t{i}", "A" if i < 2 else "B") for i in range(4)]
    queries = [(f"t{i}", "A") for i in range(4, 8)] + [(f"t{i}", NOTA) for i in range(8, 12)]
    eps = [episode(support, queries, m=2, k=2)]
    base = evaluate_episodes(VectorEncoder(table), eps, nota_threshold=0.1)
    scaled_table = {k: v * rng.uniform(0.1, 9.0) for k, v in table.items()}
    scaled = evaluate_episodes(VectorEncoder(scaled_table), eps, nota_threshold=0.1)
    assert base.query_accuracy == scaled.query_accuracy
    assert base.per_class == scaled.per_class


def test_episode_relabeling_permutes_predictions():
    rng = np.random.default_rng(4)
    table = {f"t{i}": rng.normal(size=4) for i in range(8)}
    support = [("t0", "A"), ("t1", "B")]
    queries = [(f"t{i}", "A") for i in range(2, 8)]
    base = evaluate_episodes(VectorEncoder(table), [episode(support, queries)], 0.0)
    swapped_support = [("t0", "B"), ("t1", "A")]
    swapped_queries = [(f"t{i}", "B") for i in range(2, 8)]
    swapped = evaluate_episodes(
        VectorEncoder(table), [episode(swapped_support, swapped_queries)], 0.0
    )
    assert base.query_accuracy == swapped.query_accuracy


def test_episode_aggregate_modes_differ_when_supports_spread():
    enc = VectorEncoder(
        {
            "q": [1.0, 0.0],
            "a1": [1.0, 0.0],
            "a2": [-1.0, 0.0],
            "b1": [0.6, 0.8],
            "b2": [0.6, 0.8],
        }
    )
    ep = episode([("a1", "A"), ("a2", "A"), ("b1", "B"), ("b2", "B")], [("q", "A")], m=2, k=2)
    mean_report = evaluate_episodes(enc, [ep], 0.0, aggregate="mean")
    max_report = evaluate_episodes(enc, [ep], 0.0, aggregate="max")
    assert mean_report.query_accuracy == 0.0  # mean(A) = 0 < 0.6
    assert max_report.query_accuracy == 1.0  # max(A) = 1 > 0.6


def test_worker_counts_do_not_change_results():
    rng = random.Random(5)
    enc = ScoreEncoder()
    items = [
        (round(rng.uniform(-1, 1), 3), rng.choice((SAME, DIFFERENT))) for _ in range(200)
    ]
    pairs = score_pairs(items)
    a = evaluate_pairs(enc, pairs, 0.1, workers=1)
    b = evaluate_pairs(enc, pairs, 0.1, workers=8)
    assert a.counts == b.counts


def test_learning_curve_eval():
    enc = ScoreEncoder()
    dev = score_pairs([(0.9, SAME), (0.2, DIFFERENT), (0.8, SAME)])
    curve = learning_curve_eval([(10, enc), (20, enc)], dev)
    assert [s for s, _ in curve.points] == [10, 20]
    assert curve.points[0][1] == curve.points[1][1]
    empty = learning_curve_eval([], dev)
    assert empty.points == ()


def test_learning_curve_requires_increasing_steps():
    with pytest.raises(ValueError):
        LearningCurve(points=((5, 0.5), (5, 0.6)))


def test_cross_dataset_matrix_counts_and_diagonal():
    rng = np.random.default_rng(6)
    table = {f"t{i}": rng.normal(size=3) for i in range(20)}
    enc_a, enc_b = VectorEncoder(table), VectorEncoder(
        {k: -v for k, v in table.items()}
    )
    support = [("t0", "A"), ("t1", "B")]
    queries = [(f"t{i}", "A") for i in range(2, 6)]
    suite = {1: [episode(support, queries)], 5: [episode(support, queries)]}
    cells = cross_dataset_matrix(
        {"da": enc_a, "db": enc_b}, {"da": suite, "db": suite}, nota_threshold=0.0
    )
    assert len(cells) == 8  # 2 train x 2 test x 2 k
    diag = [c for c in cells if c.train_id == c.test_id == "da" and c.k == 1]
    direct = evaluate_episodes(enc_a, suite[1], 0.0)
    assert diag[0].score == direct.query_accuracy


def test_single_cell_matrix():
    enc = VectorEncoder({"t0": [1.0, 0.0], "t1": [0.0, 1.0], "q": [1.0, 0.0]})
    suite = {1: [episode([("t0", "A"), ("t1", "B")], [("q", "A")])]}
    cells = cross_dataset_matrix({"d": enc}, {"d": suite})
    assert len(cells) == 1
    assert cells[0] == CrossDatasetCell("d", "d", 1, 1.0)


def test_report_round_trips(tmp_path):
    report = PairEvalReport(
        counts=ConfusionCounts(tp=3, fp=1, tn=5, fn=1),
        precision=0.75,
        recall=0.75,
        f1=0.75,
        threshold=0.123,
        negative_fraction=0.6,
        provenance={"corpus_hash": "aa", "rel_types": 40},
    )
    path = tmp_path / "rep.json"
    write_report_json(report, path)
    assert read_report_json(path) == report

    ereport = EpisodeEvalReport(
        episodes=2,
        queries=10,
        correct=7,
        query_accuracy=0.7,
        per_class={"A": {"correct": 4, "total": 5}, NOTA: {"correct": 3, "total": 5}},
        nota_threshold=0.25,
        provenance={"k": 5},
    )
    epath = tmp_path / "erep.json"
    write_report_json(ereport, epath)
    assert read_report_json(epath) == ereport


def test_grid_tsv_shape(tmp_path):
    def rep(f1):
        return PairEvalReport(
            counts=ConfusionCounts(1, 1, 1, 1),
            precision=f1,
            recall=f1,
            f1=f1,
            threshold=0.0,
            negative_fraction=0.5,
        )

    rows = [
        {"rel_types": 29, "data_size": 1000, "reports": {0.5: rep(0.8), 0.9: rep(0.4), 0.99: rep(0.1)}},
        {"rel_types": 79, "data_size": 1000, "reports": {0.5: rep(0.9), 0.9: rep(0.5), 0.99: rep(0.2)}},
    ]
    path = tmp_path / "grid.tsv"
    write_grid_tsv(rows, path)
    lines = path.read_text().splitlines()
    assert lines[0].split("\t") == [
        "rel_types", "data_size",
        "f1_5", "p_5", "r_5", "f1_9", "p_9", "r_9", "f1_99", "p_99", "r_99",
    ]
    assert len(lines) == 3
    assert lines[1].split("\t")[0] == "29"
    assert all(len(line.split("\t")) == 11 for line in lines)


def test_matrix_tsv_shape(tmp_path):
    cells = [
        CrossDatasetCell(train, test, k, 0.5)
        for k in (1, 5)
        for train in ("d1", "d2")
        for test in ("d1", "d2")
    ]
    path = tmp_path / "matrix.tsv"
    write_matrix_tsv(cells, path)
    lines = path.read_text().splitlines()
    assert lines[0].split("\t") == ["k", "test", "d1", "d2"]
    assert len(lines) == 5  # header + 2 k-blocks x 2 test rows


def test_curve_on_own_training_data_non_decreasing():
    # overfitting-monitor mechanics: with dev = train, F1 can only climb
    # (within noise tolerance) as training progresses
    from fsrcbench.encoder import TrainConfig, init_toy_encoder, train_toy
    from fsrcbench.sampler import PairDatasetConfig, generate_pairs
    from fsrcbench.splitter import SplitConfig, frequency_split, top_n_relations
    from fsrcbench.synth import SynthConfig, generate_synthetic_corpus

    corpus = generate_synthetic_corpus(SynthConfig(relation_counts=(60,) * 10, seed=42))
    split = frequency_split(corpus, SplitConfig(train_min_count=40, dev_relation_count=0))
    part = top_n_relations(split, 10)
    pairs = generate_pairs(part, PairDatasetConfig(size=600, negative_fraction=0.5, seed=7))
    init = init_toy_encoder(hash_dim=8192, proj_dim=32, margin=2.0, seed=3)
    config = TrainConfig(
        epochs=4, eval_every=30, learning_rate=0.1, weight_decay=0.0, seed=9
    )
    _, curve = train_toy(pairs, config, init, dev_pairs=pairs)
    f1s = [f for _, f in curve.points]
    assert len(f1s) == 20
    assert all(b >= a - 0.02 for a, b in zip(f1s, f1s[1:]))
    assert f1s[-1] > f1s[0]
