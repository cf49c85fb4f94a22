"""Frequency-based corpus splitting and diversity-controlled train subsets.

The split rule: relations with at least ``train_min_count`` instances form
the training set. The remaining relations, ordered by (count descending,
label ascending), are dealt alternately to dev and test until dev holds its
configured number of relations; everything after that goes to test. The
rule is deterministic and needs no seed.

Subsets restrict the train part either to all relations with at least M
instances (the diversity axis) or to the top-N most frequent relations,
optionally capped to a total example budget by stratified proportional
sampling.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Corpus, RelationInstance, RelationLabel
from .errors import CapTooSmall, EmptyCorpus, NOutOfRange

MASK64 = (1 << 64) - 1


def mix_seed(seed: int, salt: int) -> int:
    """Derive a decorrelated 64-bit sub-seed from (seed, salt). splitmix64."""
    x = (seed + 0x9E3779B97F4A7C15 * (salt + 1)) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class SplitConfig:
    train_min_count: int = 40
    dev_relation_count: int = 100
    seed: int = 0

    def __post_init__(self) -> None:
        if self.train_min_count < 1:
            raise ValueError("train_min_count must be >= 1")
        if self.dev_relation_count < 0:
            raise ValueError("dev_relation_count must be >= 0")


@dataclass(frozen=True)
class SplitPart:
    """One side of a split: a relation set plus its instances, corpus-ordered."""

    relations: frozenset[RelationLabel]
    instances: tuple[RelationInstance, ...]

    def counts(self) -> dict[RelationLabel, int]:
        out: dict[RelationLabel, int] = {}
        for inst in self.instances:
            out[inst.relation] = out.get(inst.relation, 0) + 1
        return out


@dataclass(frozen=True)
class CorpusSplit:
    train: SplitPart
    dev: SplitPart
    test: SplitPart
    config: SplitConfig

    def part(self, name: str) -> SplitPart:
        try:
            return {"train": self.train, "dev": self.dev, "test": self.test}[name]
        except KeyError:
            raise ValueError(f"unknown split part {name!r}") from None


@dataclass(frozen=True)
class SubsetProvenance:
    """How a subset was built, sufficient to re-derive its instances."""

    method: str  # "threshold" | "top_n" | "random_n" | "relations"
    value: object = None
    seed: int | None = None
    cap: int | None = None
    cap_seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "value": self.value,
            "seed": self.seed,
            "cap": self.cap,
            "cap_seed": self.cap_seed,
        }


@dataclass(frozen=True)
class TrainSubset:
    relations: frozenset[RelationLabel]
    instances: tuple[RelationInstance, ...]
    provenance: SubsetProvenance = field(
        default_factory=lambda: SubsetProvenance(method="relations")
    )

    def counts(self) -> dict[RelationLabel, int]:
        out: dict[RelationLabel, int] = {}
        for inst in self.instances:
            out[inst.relation] = out.get(inst.relation, 0) + 1
        return out


def _part_for(corpus: Corpus, relations: set[RelationLabel]) -> SplitPart:
    insts = tuple(inst for inst in corpus if inst.relation in relations)
    return SplitPart(relations=frozenset(relations), instances=insts)


def frequency_split(corpus: Corpus, config: SplitConfig = SplitConfig()) -> CorpusSplit:
    """Partition relations into train/dev/test by instance frequency."""
    if len(corpus) == 0:
        raise EmptyCorpus("cannot split an empty corpus")
    counts = {r: len(ps) for r, ps in corpus.relation_index.items()}
    train = {r for r, c in counts.items() if c >= config.train_min_count}
    remaining = sorted(
        (r for r in counts if r not in train), key=lambda r: (-counts[r], r)
    )
    dev: set[RelationLabel] = set()
    test: set[RelationLabel] = set()
    for i, r in enumerate(remaining):
        if len(dev) < config.dev_relation_count and i % 2 == 0:
            dev.add(r)
        else:
            test.add(r)
    return CorpusSplit(
        train=_part_for(corpus, train),
        dev=_part_for(corpus, dev),
        test=_part_for(corpus, test),
        config=config,
    )


def diversity_subset(split: CorpusSplit, min_count: int) -> TrainSubset:
    """Train relations having at least ``min_count`` instances."""
    counts = split.train.counts()
    relations = {r for r, c in counts.items() if c >= min_count}
    insts = tuple(i for i in split.train.instances if i.relation in relations)
    return TrainSubset(
        relations=frozenset(relations),
        instances=insts,
        provenance=SubsetProvenance(method="threshold", value=min_count),
    )


def top_n_relations(split: CorpusSplit, n: int) -> TrainSubset:
    """The n most frequent train relations, ties broken by label ascending."""
    counts = split.train.counts()
    if not 1 <= n <= len(counts):
        raise NOutOfRange(
            f"n must be in [1, {len(counts)}] for this split, got {n}"
        )
    ranked = sorted(counts, key=lambda r: (-counts[r], r))
    relations = set(ranked[:n])
    insts = tuple(i for i in split.train.instances if i.relation in relations)
    return TrainSubset(
        relations=frozenset(relations),
        instances=insts,
        provenance=SubsetProvenance(method="top_n", value=n),
    )


def random_n_relations(split: CorpusSplit, n: int, seed: int) -> TrainSubset:
    """Seeded uniform choice of n train relations (sensitivity-analysis mode)."""
    labels = sorted(split.train.relations)
    if not 1 <= n <= len(labels):
        raise NOutOfRange(f"n must be in [1, {len(labels)}] for this split, got {n}")
    rng = random.Random(mix_seed(seed, 0x5E1EC7))
    relations = set(rng.sample(labels, n))
    insts = tuple(i for i in split.train.instances if i.relation in relations)
    return TrainSubset(
        relations=frozenset(relations),
        instances=insts,
        provenance=SubsetProvenance(method="random_n", value=n, seed=seed),
    )


def cap_examples(subset: TrainSubset, max_total: int, seed: int) -> TrainSubset:
    """Cap a subset to ``max_total`` instances, stratified by relation.

    Allocation is proportional to relation counts with largest-remainder
    rounding; every relation keeps at least one instance. Instances within a
    relation are sampled uniformly without replacement; the result preserves
    corpus order and is deterministic in ``seed``.
    """
    counts = subset.counts()
    total = len(subset.instances)
    if max_total >= total:
        return subset
    if max_total < len(counts):
        raise CapTooSmall(
            f"max_total={max_total} is below the relation count {len(counts)}"
        )
    labels = sorted(counts)
    quotas = {r: max_total * counts[r] / total for r in labels}
    alloc = {r: min(counts[r], max(1, int(quotas[r]))) for r in labels}
    deficit = max_total - sum(alloc.values())
    # Largest-remainder correction; ties broken by label so the result is
    # independent of dict ordering.
    if deficit > 0:
        order = sorted(labels, key=lambda r: (-(quotas[r] - int(quotas[r])), r))
        while deficit > 0:
            progressed = False
            for r in order:
                if deficit == 0:
                    break
                if alloc[r] < counts[r]:
                    alloc[r] += 1
                    deficit -= 1
                    progressed = True
            if not progressed:
                break
    elif deficit < 0:
        order = sorted(labels, key=lambda r: (quotas[r] - int(quotas[r]), r))
        while deficit < 0:
            progressed = False
            for r in order:
                if deficit == 0:
                    break
                if alloc[r] > 1:
                    alloc[r] -= 1
                    deficit += 1
                    progressed = True
            if not progressed:
                break
    by_relation: dict[RelationLabel, list[RelationInstance]] = {r: [] for r in labels}
    for inst in subset.instances:
        by_relation[inst.relation].append(inst)
    keep: set[str] = set()
    for r in labels:
        rng = random.Random(mix_seed(seed, hash_label(r)))
        keep.update(i.uid for i in rng.sample(by_relation[r], alloc[r]))
    insts = tuple(i for i in subset.instances if i.uid in keep)
    prov = subset.provenance
    return TrainSubset(
        relations=subset.relations,
        instances=insts,
        provenance=SubsetProvenance(
            method=prov.method,
            value=prov.value,
            seed=prov.seed,
            cap=max_total,
            cap_seed=seed,
        ),
    )


def hash_label(label: str) -> int:
    """Stable 64-bit hash of a relation label (process-independent)."""
    h = 0xCBF29CE484222325
    for b in label.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & MASK64
    return h


# -- manifests --


def split_manifest(split: CorpusSplit, corpus_hash: str | None = None) -> dict:
    counts: dict[str, int] = {}
    for part in (split.train, split.dev, split.test):
        counts.update(part.counts())
    manifest = {
        "config": {
            "train_min_count": split.config.train_min_count,
            "dev_relation_count": split.config.dev_relation_count,
            "seed": split.config.seed,
        },
        "train": sorted(split.train.relations),
        "dev": sorted(split.dev.relations),
        "test": sorted(split.test.relations),
        "counts": {r: counts[r] for r in sorted(counts)},
    }
    if corpus_hash is not None:
        manifest["corpus_hash"] = corpus_hash
    return manifest


def split_from_manifest(corpus: Corpus, manifest: dict) -> CorpusSplit:
    cfg = manifest.get("config", {})
    config = SplitConfig(
        train_min_count=cfg.get("train_min_count", 40),
        dev_relation_count=cfg.get("dev_relation_count", 100),
        seed=cfg.get("seed", 0),
    )
    return CorpusSplit(
        train=_part_for(corpus, set(manifest["train"])),
        dev=_part_for(corpus, set(manifest["dev"])),
        test=_part_for(corpus, set(manifest["test"])),
        config=config,
    )


def subset_manifest(subset: TrainSubset, corpus_hash: str | None = None) -> dict:
    manifest = {
        "relations": sorted(subset.relations),
        "counts": {r: c for r, c in sorted(subset.counts().items())},
        "provenance": subset.provenance.to_dict(),
    }
    if corpus_hash is not None:
        manifest["corpus_hash"] = corpus_hash
    return manifest


def subset_from_manifest(corpus: Corpus, manifest: dict) -> TrainSubset:
    """Re-derive a subset's instances from the corpus and its manifest."""
    relations = set(manifest["relations"])
    prov_d = manifest.get("provenance", {})
    prov = SubsetProvenance(
        method=prov_d.get("method", "relations"),
        value=prov_d.get("value"),
        seed=prov_d.get("seed"),
        cap=prov_d.get("cap"),
        cap_seed=prov_d.get("cap_seed"),
    )
    insts = tuple(i for i in corpus if i.relation in relations)
    base = TrainSubset(
        relations=frozenset(relations),
        instances=insts,
        provenance=SubsetProvenance(method=prov.method, value=prov.value, seed=prov.seed),
    )
    if prov.cap is not None:
        return cap_examples(base, prov.cap, prov.cap_seed or 0)
    return base


def write_manifest(manifest: dict, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def read_manifest(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
