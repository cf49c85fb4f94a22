"""Acceptance suite: one test per exit criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines. The REBEL threshold-set check needs an external dump (see
``FSRC_REBEL_PATH`` below) and reports differences without failing, since
dump versions vary.
"""

import json
import math
import os
import random
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from fsrcbench import _kernels
from fsrcbench._kernels import featurize_text
from fsrcbench.cli import main as cli_main
from fsrcbench.corpus import load_corpus
from fsrcbench.encoder import TrainConfig, init_toy_encoder, train_toy
from fsrcbench.evaluator import (
    ConfusionCounts,
    evaluate_pairs,
    metrics_from_counts,
    select_threshold,
)
from fsrcbench.renderer import render, strip_markers
from fsrcbench.sampler import (
    DIFFERENT,
    NOTA,
    SAME,
    EpisodeConfig,
    PairDatasetConfig,
    PairExample,
    generate_episode_batch,
    generate_pairs,
    round_half_up,
)
from fsrcbench.splitter import (
    SplitConfig,
    diversity_subset,
    frequency_split,
    top_n_relations,
)
from fsrcbench.synth import SynthConfig, generate_synthetic_corpus

from conftest import corpus_with_counts

REBEL_ENV_VAR = "FSRC_REBEL_PATH"


def ok(name: str, detail: str = "") -> None:
    suffix = f" ({detail})" if detail else ""
    print(f"ACCEPTANCE {name}: PASS{suffix}")


def test_split_correctness():
    start = time.time()
    # planted counts: 25 relations at/above the threshold, 35 below
    counts = {f"hi{i:02d}": 40 + 7 * i for i in range(25)}
    counts.update({f"lo{i:02d}": 1 + i % 39 for i in range(35)})
    assert len(counts) == 60
    corpus = corpus_with_counts(counts)
    split = frequency_split(corpus, SplitConfig(train_min_count=40, dev_relation_count=10))

    expected_train = {r for r, c in counts.items() if c >= 40}
    assert split.train.relations == expected_train
    remaining = sorted(
        (r for r in counts if r not in expected_train),
        key=lambda r: (-counts[r], r),
    )
    expected_dev, expected_test = set(), set()
    for i, r in enumerate(remaining):
        if len(expected_dev) < 10 and i % 2 == 0:
            expected_dev.add(r)
        else:
            expected_test.add(r)
    assert split.dev.relations == expected_dev
    assert split.test.relations == expected_test

    rng = random.Random(0)
    for trial in range(100):
        rngc = {
            f"r{j}": rng.randint(1, 120)
            for j in range(rng.randint(1, 25))
        }
        rsplit = frequency_split(
            corpus_with_counts(rngc),
            SplitConfig(
                train_min_count=rng.randint(1, 100),
                dev_relation_count=rng.randint(0, 10),
            ),
        )
        parts = (rsplit.train.relations, rsplit.dev.relations, rsplit.test.relations)
        assert parts[0] | parts[1] | parts[2] == set(rngc)
        assert not (parts[0] & parts[1] or parts[0] & parts[2] or parts[1] & parts[2])
    elapsed = time.time() - start
    assert elapsed < 5.0
    ok("split-correctness", f"{elapsed:.2f}s")


def test_rebel_threshold_sets_nonblocking():
    path = os.environ.get(REBEL_ENV_VAR)
    if not path:
        ok("rebel-threshold-sets", f"skipped: {REBEL_ENV_VAR} not set")
        pytest.skip(f"external REBEL dump not provided via {REBEL_ENV_VAR}")
    corpus = load_corpus(path, strict=False, on_skip=lambda *_: None)
    split = frequency_split(corpus, SplitConfig(train_min_count=40, dev_relation_count=100))
    expected = {5000: 29, 1000: 79, 500: 233, 100: 461, 40: 576}
    diffs = []
    for min_count, want in expected.items():
        got = len(diversity_subset(split, min_count).relations)
        if got != want:
            diffs.append(f"M={min_count}: expected {want}, got {got}")
    if diffs:
        print(f"ACCEPTANCE rebel-threshold-sets: MISMATCH (non-blocking): {'; '.join(diffs)}")
    else:
        ok("rebel-threshold-sets")


def test_ratio_exactness():
    start = time.time()
    part = diversity_subset(
        frequency_split(
            corpus_with_counts({f"r{i}": 60 for i in range(30)}),
            SplitConfig(train_min_count=40, dev_relation_count=0),
        ),
        40,
    )
    for size in (100, 1000, 10_000):
        for fraction in (0.5, 0.9, 0.99):
            pairs = generate_pairs(
                part,
                PairDatasetConfig(size=size, negative_fraction=fraction, seed=size + int(fraction * 100)),
            )
            n_neg = sum(1 for p in pairs if p.label == DIFFERENT)
            assert n_neg == round_half_up(size * fraction), (size, fraction)
            assert len(pairs) == size
    elapsed = time.time() - start
    assert elapsed < 10.0
    ok("ratio-exactness", f"9 grid cells, {elapsed:.2f}s")


def test_episode_invariants_bulk():
    start = time.time()
    part = diversity_subset(
        frequency_split(
            corpus_with_counts({f"r{i:02d}": 40 + (i % 3) * 10 for i in range(12)}),
            SplitConfig(train_min_count=40, dev_relation_count=0),
        ),
        40,
    )
    rng = random.Random(2024)
    violations = 0
    total = 0
    batches = 100
    per_batch = 100
    for b in range(batches):
        config = EpisodeConfig(
            m=rng.randint(1, 5),
            k=rng.randint(1, 4),
            q=rng.randint(1, 6),
            nota_rate=rng.choice((0.0, 0.25, 0.5, 0.75, 1.0)),
            seed=rng.randrange(2**32),
        )
        for ep in generate_episode_batch(part, config, per_batch):
            total += 1
            if len(ep.support) != config.m * config.k:
                violations += 1
            if len(ep.support_relations) != config.m:
                violations += 1
            if ep.support_uids & ep.query_uids:
                violations += 1
            for _text, gold in ep.queries:
                if (gold == NOTA) != (gold not in ep.support_relations):
                    violations += 1
    assert total == batches * per_batch == 10_000
    assert violations == 0
    elapsed = time.time() - start
    assert elapsed < 30.0
    ok("episode-invariants", f"{total} episodes, 0 violations, {elapsed:.1f}s")


def test_rendering_bit_exactness():
    from fsrcbench.corpus import EntitySpan, RelationInstance

    ref = RelationInstance(
        uid="ref",
        text="Bill Gates worked at Microsoft.",
        head=EntitySpan(0, 10),
        tail=EntitySpan(21, 30),
        relation="P108",
    )
    rendered = render(ref)
    assert rendered == "<s> Bill Gates </s> worked at <o> Microsoft </o>."
    assert rendered.startswith("<s> Bill Gates </s> worked at <o> Microsoft </o>")

    rng = random.Random(7)
    alphabet = "abcdefghijklmnopqrstuvwxyz ÄÖüß.,'- "
    checked = 0
    for _ in range(10_000):
        n = rng.randint(4, 80)
        text = "".join(rng.choice(alphabet) for _ in range(n))
        cuts = sorted(rng.sample(range(n + 1), 4))
        if cuts[0] == cuts[1] or cuts[2] == cuts[3]:
            continue
        head = (cuts[0], cuts[1])
        tail = (cuts[2], cuts[3])
        if rng.random() < 0.5:
            head, tail = tail, head
        inst = RelationInstance("x", text, EntitySpan(*head), EntitySpan(*tail), "r")
        assert strip_markers(render(inst)) == text
        checked += 1
    assert checked > 9000
    ok("rendering-bit-exactness", f"{checked} round-trips")


def test_metric_oracle():
    rng = random.Random(99)
    for _ in range(1000):
        n = rng.randint(1, 60)
        labels = [rng.choice((SAME, DIFFERENT)) for _ in range(n)]
        preds = [rng.random() < 0.5 for _ in range(n)]
        tp = sum(1 for l, p in zip(labels, preds) if p and l == SAME)
        fp = sum(1 for l, p in zip(labels, preds) if p and l == DIFFERENT)
        fn = sum(1 for l, p in zip(labels, preds) if not p and l == SAME)
        tn = sum(1 for l, p in zip(labels, preds) if not p and l == DIFFERENT)
        precision, recall, f1 = metrics_from_counts(
            ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)
        )
        want_p = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
        want_r = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
        assert Fraction(precision).limit_denominator(10**12) == want_p or precision == float(want_p)
        assert recall == float(want_r) or Fraction(recall).limit_denominator(10**12) == want_r
        if want_p + want_r:
            want_f1 = 2 * want_p * want_r / (want_p + want_r)
            assert math.isclose(f1, float(want_f1), rel_tol=0, abs_tol=1e-15)
        else:
            assert f1 == 0.0

    # threshold selection equals the exhaustive candidate sweep
    class ScoreEncoder:
        dim = 2
        kind = "toy"

        def embed(self, text):
            if text == "ref":
                return np.array([1.0, 0.0])
            x = float(text.split(":", 1)[1])
            return np.array([x, math.sqrt(max(0.0, 1.0 - x * x))])

    enc = ScoreEncoder()
    for trial in range(100):
        n = rng.randint(2, 100)
        items = [
            (round(rng.uniform(-1, 1), 2), rng.choice((SAME, DIFFERENT)))
            for _ in range(n)
        ]
        labels = [l for _, l in items]
        if SAME not in labels or DIFFERENT not in labels:
            continue
        pairs = [
            PairExample(f"u{i}", f"v{i}", "ref", f"s:{s}", l, "A", "A" if l == SAME else "B")
            for i, (s, l) in enumerate(items)
        ]
        got = select_threshold(enc, pairs)
        uniq = sorted({s for s, _ in items})
        candidates = [(a + b) / 2 for a, b in zip(uniq, uniq[1:])] or [uniq[0]]
        best = None
        for t in candidates:
            tp = sum(1 for s, l in items if s >= t and l == SAME)
            fp = sum(1 for s, l in items if s >= t and l == DIFFERENT)
            fn = sum(1 for s, l in items if s < t and l == SAME)
            p = tp / (tp + fp) if tp + fp else 0.0
            r = tp / (tp + fn) if tp + fn else 0.0
            f1 = 2 * p * r / (p + r) if p + r else 0.0
            if best is None or f1 > best[1] or (f1 == best[1] and t > best[0]):
                best = (t, f1)
        assert got == pytest.approx(best[0], abs=1e-12)
    ok("metric-oracle", "1000 confusion sets + 100 threshold sweeps")


def test_gradient_check_50_configs():
    rng = np.random.default_rng(1234)
    vocab = ["ala", "bex", "cor", "dun", "eke", "fip", "gor", "hux"]
    hash_dim, proj_dim = 32, 4
    checked = 0
    for trial in range(50):
        t1 = " ".join(rng.choice(vocab, size=rng.integers(1, 4)))
        t2 = " ".join(rng.choice(vocab, size=rng.integers(1, 4)))
        fa = featurize_text(t1, hash_dim)
        fb = featurize_text(t2, hash_dim)
        same = bool(rng.integers(0, 2))
        margin = float(rng.uniform(0.5, 2.0))
        P = rng.normal(0, 0.6, size=(proj_dim, hash_dim))

        lr = 1e-7
        P1 = P.copy()
        _kernels.train_block(
            P1, 1.0, [fa[0], fb[0]], [fa[1], fb[1]],
            np.array([0], dtype=np.int64), np.array([1], dtype=np.int64),
            np.array([1 if same else 0], dtype=np.uint8),
            np.array([0], dtype=np.int64), 1, lr, 0.0, margin,
        )
        analytic = (P - P1) / lr

        def loss_of(M):
            da = np.zeros(hash_dim)
            da[fa[0]] = fa[1]
            db = np.zeros(hash_dim)
            db[fb[0]] = fb[1]
            d = np.linalg.norm(M @ da - M @ db)
            return d * d if same else max(0.0, margin - d) ** 2

        h = 1e-6
        fd = np.zeros_like(P)
        for r in range(proj_dim):
            for c in range(hash_dim):
                Pp, Pm = P.copy(), P.copy()
                Pp[r, c] += h
                Pm[r, c] -= h
                fd[r, c] = (loss_of(Pp) - loss_of(Pm)) / (2 * h)

        norm = max(np.linalg.norm(fd), np.linalg.norm(analytic))
        if norm < 1e-12:
            assert np.linalg.norm(analytic - fd) < 1e-10  # both zero (satisfied hinge)
        else:
            assert np.linalg.norm(analytic - fd) / norm < 1e-4
        checked += 1
    assert checked == 50
    ok("gradient-check", "50 configurations within 1e-4")


def test_cli_determinism(tmp_path, monkeypatch):
    corpus_src = tmp_path / "c.jsonl"
    assert cli_main(["--seed", "5", "synth", "--profile", "6x50,4x12",
                     "--out-file", str(corpus_src)]) == 0

    def produce(run_dir, workers):
        run_dir.mkdir()
        (run_dir / "c.jsonl").write_bytes(corpus_src.read_bytes())
        monkeypatch.chdir(run_dir)
        assert cli_main(["--out", "art", "split", "--corpus", "c.jsonl"]) == 0
        assert cli_main(["--seed", "4", "--workers", workers, "--out", "art", "pairs",
                         "--corpus", "c.jsonl", "--manifest", "art/split.json",
                         "--part", "train", "--size", "400", "--neg-fraction", "0.9"]) == 0
        assert cli_main(["--seed", "5", "--workers", workers, "--out", "art", "episodes",
                         "--corpus", "c.jsonl", "--manifest", "art/split.json",
                         "--part", "train", "--m", "3", "--k", "2", "--q", "4",
                         "--nota-rate", "0.25", "--count", "50"]) == 0
        assert cli_main(["--seed", "6", "--workers", workers, "--out", "art", "train",
                         "--pairs", "art/pairs.jsonl", "--dev-pairs", "art/pairs.jsonl",
                         "--hash-dim", "1024", "--proj-dim", "8", "--epochs", "1",
                         "--eval-every", "30", "--weight-decay", "0.0"]) == 0
        assert cli_main(["--workers", workers, "--out", "art", "eval",
                         "--encoder", "art/encoder.ckpt", "--pairs", "art/pairs.jsonl",
                         "--threshold", "0.1"]) == 0
        monkeypatch.chdir(tmp_path)

    produce(tmp_path / "one", "1")
    produce(tmp_path / "two", "1")
    produce(tmp_path / "eight", "8")
    artifacts = [
        "split.json", "pairs.jsonl", "pairs.jsonl.meta.json", "episodes.jsonl",
        "encoder.ckpt", "curve.json", "curve.csv", "eval_report.json",
    ]
    for name in artifacts:
        base = (tmp_path / "one/art" / name).read_bytes()
        assert (tmp_path / "two/art" / name).read_bytes() == base, name
        assert (tmp_path / "eight/art" / name).read_bytes() == base, name
    ok("determinism", f"{len(artifacts)} artifacts, reruns and workers 1/8")


def test_diversity_smoke_trend():
    start = time.time()
    corpus = generate_synthetic_corpus(
        SynthConfig(relation_counts=(130,) * 40 + (30,) * 20, seed=101)
    )
    split = frequency_split(corpus, SplitConfig(train_min_count=40, dev_relation_count=10))
    assert len(split.train.relations) == 40
    assert len(split.test.relations) == 10

    def held_out_f1(n_rel: int, seed: int) -> float:
        subset = top_n_relations(split, n_rel)
        pairs = generate_pairs(
            subset, PairDatasetConfig(size=5000, negative_fraction=0.5, seed=seed)
        )
        init = init_toy_encoder(hash_dim=65536, proj_dim=64, margin=2.0, seed=seed)
        config = TrainConfig(
            epochs=8, learning_rate=0.2, batch_size=4, weight_decay=0.0, seed=seed
        )
        encoder, _ = train_toy(pairs, config, init)
        dev = generate_pairs(
            split.dev, PairDatasetConfig(size=400, negative_fraction=0.5, seed=seed + 50)
        )
        test = generate_pairs(
            split.test, PairDatasetConfig(size=600, negative_fraction=0.5, seed=seed + 99)
        )
        threshold = select_threshold(encoder, dev)
        return evaluate_pairs(encoder, test, threshold).f1

    f1_narrow = [held_out_f1(5, seed) for seed in (1, 2, 3)]
    f1_diverse = [held_out_f1(40, seed) for seed in (1, 2, 3)]
    gap = float(np.mean(f1_diverse)) - float(np.mean(f1_narrow))
    elapsed = time.time() - start
    assert gap >= 0.05, (f1_narrow, f1_diverse)
    assert elapsed < 180.0
    ok(
        "diversity-smoke-trend",
        f"5-rel F1 {np.mean(f1_narrow):.3f} vs 40-rel F1 {np.mean(f1_diverse):.3f}, "
        f"gap +{gap:.3f}, {elapsed:.0f}s",
    )


def test_table_shapes(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert cli_main(["--seed", "11", "synth", "--profile", "8x60,6x20",
                     "--out-file", "c.jsonl"]) == 0
    grid = {
        "corpus": "c.jsonl",
        "split": {"train_min_count": 40, "dev_relation_count": 3},
        "rows": [{"min_count": 60}, {"min_count": 40, "cap": 250}],
        "neg_fractions": [0.5, 0.9, 0.99],
        "train_pairs": 300,
        "dev_pairs": 150,
        "eval_pairs": 200,
        "encoder": {"hash_dim": 1024, "proj_dim": 16},
        "train": {"epochs": 1, "weight_decay": 0.0},
        "seed": 3,
    }
    Path("grid.json").write_text(json.dumps(grid))
    assert cli_main(["--out", "art", "eval", "--grid", "grid.json"]) == 0
    lines = Path("art/grid.tsv").read_text().splitlines()
    assert lines[0].split("\t") == [
        "rel_types", "data_size",
        "f1_5", "p_5", "r_5", "f1_9", "p_9", "r_9", "f1_99", "p_99", "r_99",
    ]
    assert len(lines) == 1 + len(grid["rows"])
    for line in lines[1:]:
        assert len(line.split("\t")) == 11

    # 4 datasets x 4 test suites x k in {1, 5} -> 32 matrix cells
    spec = {"datasets": {}, "nota_threshold": 0.0}
    for i in range(4):
        name = f"d{i}"
        assert cli_main(["--seed", str(20 + i), "synth", "--profile", "6x40",
                         "--out-file", f"{name}.jsonl"]) == 0
        assert cli_main(["--out", name, "split", "--corpus", f"{name}.jsonl",
                         "--train-min-count", "30", "--dev-relations", "0"]) == 0
        assert cli_main(["--seed", "1", "--out", name, "pairs",
                         "--corpus", f"{name}.jsonl", "--manifest", f"{name}/split.json",
                         "--part", "train", "--size", "200", "--neg-fraction", "0.5"]) == 0
        assert cli_main(["--seed", "2", "--out", name, "train",
                         "--pairs", f"{name}/pairs.jsonl", "--hash-dim", "1024",
                         "--proj-dim", "8", "--epochs", "1", "--weight-decay", "0.0"]) == 0
        entry = {"encoder": f"{name}/encoder.ckpt", "episodes": {}}
        for k in (1, 5):
            out_file = f"{name}/episodes_k{k}.jsonl"
            assert cli_main(["--seed", "3", "--out", name, "episodes",
                             "--corpus", f"{name}.jsonl", "--manifest", f"{name}/split.json",
                             "--part", "train", "--m", "2", "--k", str(k),
                             "--q", "2", "--nota-rate", "0.5", "--count", "10",
                             "--out-file", out_file]) == 0
            entry["episodes"][str(k)] = out_file
        spec["datasets"][name] = entry
    Path("matrix.json").write_text(json.dumps(spec))
    assert cli_main(["--out", "art", "matrix", "--spec", "matrix.json"]) == 0
    cells = json.loads(Path("art/matrix_cells.json").read_text())["cells"]
    assert len(cells) == 32
    combos = {(c["train"], c["test"], c["k"]) for c in cells}
    assert len(combos) == 32
    lines = Path("art/matrix.tsv").read_text().splitlines()
    assert lines[0].split("\t") == ["k", "test", "d0", "d1", "d2", "d3"]
    assert len(lines) == 1 + 4 * 2
    ok("table-shapes", "grid.tsv 11 columns; matrix.tsv 4x4 x k in {1,5}")
