"""Siamese pair datasets and M-way K-shot episodes with NOTA queries.

Negative/positive counts are exact, not in expectation: a dataset of
``size`` pairs holds precisely ``round_half_up(size * negative_fraction)``
DIFFERENT pairs. Episodes draw M relations, K support instances each, and
Q queries of which ``round_half_up(q * nota_rate)`` have a gold label of
NOTA (their true relation lies outside the M support relations).

All sampling is deterministic in the configured seed. Each pair position
and each episode derives its own sub-seed, so generation can be chunked or
parallelized without changing the output.
"""

from __future__ import annotations

import json
import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .corpus import RelationInstance, RelationLabel
from .errors import (
    InsufficientInstances,
    InsufficientRelations,
    NoNotaSource,
    UnsatisfiableConfig,
)
from .renderer import DEFAULT_SCHEME, MarkerScheme, render
from .splitter import mix_seed

SAME = "SAME"
DIFFERENT = "DIFFERENT"
NOTA = "NOTA"

MAX_ATTEMPTS = 1000


def round_half_up(x: float) -> int:
    """Round to nearest integer, halves away from zero (0.5 -> 1)."""
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class PairExample:
    first_uid: str
    second_uid: str
    first_text: str
    second_text: str
    label: str  # SAME | DIFFERENT
    first_relation: RelationLabel
    second_relation: RelationLabel

    def to_record(self) -> dict:
        return {
            "first_uid": self.first_uid,
            "second_uid": self.second_uid,
            "first_text": self.first_text,
            "second_text": self.second_text,
            "label": self.label,
            "first_relation": self.first_relation,
            "second_relation": self.second_relation,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "PairExample":
        return cls(
            first_uid=rec["first_uid"],
            second_uid=rec["second_uid"],
            first_text=rec["first_text"],
            second_text=rec["second_text"],
            label=rec["label"],
            first_relation=rec["first_relation"],
            second_relation=rec["second_relation"],
        )


@dataclass(frozen=True)
class PairDatasetConfig:
    size: int
    negative_fraction: float
    seed: int = 0
    # "pairs" weights relations by C(count, 2), i.e. uniform over all valid
    # positive pairs; "relations" picks the relation uniformly first.
    positive_weighting: str = "pairs"
    # "instance" draws both sides instance-uniformly (second by rejection);
    # "relation" draws two distinct relations first.
    negative_sampling: str = "instance"
    allow_duplicate_pairs: bool = False

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValueError("size must be >= 1")
        if not 0.0 <= self.negative_fraction <= 1.0:
            raise ValueError("negative_fraction must be in [0, 1]")
        if self.positive_weighting not in ("pairs", "relations"):
            raise ValueError(f"unknown positive_weighting {self.positive_weighting!r}")
        if self.negative_sampling not in ("instance", "relation"):
            raise ValueError(f"unknown negative_sampling {self.negative_sampling!r}")


@dataclass(frozen=True)
class EpisodeConfig:
    m: int
    k: int
    q: int
    nota_rate: float
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.m, self.k, self.q) < 1:
            raise ValueError("m, k, q must be positive")
        if not 0.0 <= self.nota_rate <= 1.0:
            raise ValueError("nota_rate must be in [0, 1]")


@dataclass(frozen=True)
class Episode:
    m: int
    k: int
    support: tuple[tuple[str, RelationLabel], ...]  # (rendered text, relation)
    queries: tuple[tuple[str, str], ...]  # (rendered text, relation or NOTA)
    support_uids: frozenset[str]
    query_uids: frozenset[str]

    @property
    def support_relations(self) -> set[RelationLabel]:
        return {r for _, r in self.support}

    def to_record(self) -> dict:
        return {
            "m": self.m,
            "k": self.k,
            "support": [{"text": t, "relation": r} for t, r in self.support],
            "queries": [{"text": t, "gold": g} for t, g in self.queries],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Episode":
        return cls(
            m=rec["m"],
            k=rec["k"],
            support=tuple((s["text"], s["relation"]) for s in rec["support"]),
            queries=tuple((q["text"], q["gold"]) for q in rec["queries"]),
            support_uids=frozenset(),
            query_uids=frozenset(),
        )


class _Pools:
    """Per-part instance grouping shared across sampling calls."""

    def __init__(self, part):
        self.instances: list[RelationInstance] = list(part.instances)
        by_rel: dict[RelationLabel, list[RelationInstance]] = {}
        for inst in self.instances:
            by_rel.setdefault(inst.relation, []).append(inst)
        self.by_relation = by_rel
        self.labels = sorted(by_rel)


def generate_pairs(
    part,
    config: PairDatasetConfig,
    scheme: MarkerScheme = DEFAULT_SCHEME,
) -> list[PairExample]:
    """Generate a pair dataset with an exact negative count."""
    pools = _Pools(part)
    n = len(pools.instances)
    n_neg = round_half_up(config.size * config.negative_fraction)
    n_pos = config.size - n_neg

    if n_neg > 0 and len(pools.labels) < 2:
        raise InsufficientRelations(
            "negative pairs require at least 2 relations in the source part"
        )
    pos_eligible = [r for r in pools.labels if len(pools.by_relation[r]) >= 2]
    if n_pos > 0 and not pos_eligible:
        raise InsufficientInstances(
            "positive pairs require a relation with at least 2 instances"
        )
    total_pos = sum(
        len(pools.by_relation[r]) * (len(pools.by_relation[r]) - 1) // 2
        for r in pools.labels
    )
    total_neg = n * (n - 1) // 2 - total_pos
    if not config.allow_duplicate_pairs:
        if n_pos > total_pos:
            raise UnsatisfiableConfig(
                f"{n_pos} duplicate-free positive pairs requested but only "
                f"{total_pos} exist"
            )
        if n_neg > total_neg:
            raise UnsatisfiableConfig(
                f"{n_neg} duplicate-free negative pairs requested but only "
                f"{total_neg} exist"
            )

    cum_weights: list[int] = []
    acc = 0
    for r in pos_eligible:
        c = len(pools.by_relation[r])
        acc += c * (c - 1) // 2 if config.positive_weighting == "pairs" else 1
        cum_weights.append(acc)

    labels = [SAME] * n_pos + [DIFFERENT] * n_neg
    random.Random(mix_seed(config.seed, 0)).shuffle(labels)

    rendered: dict[str, str] = {}

    def text_of(inst: RelationInstance) -> str:
        t = rendered.get(inst.uid)
        if t is None:
            t = render(inst, scheme)
            rendered[inst.uid] = t
        return t

    def draw_positive(rng: random.Random) -> tuple[RelationInstance, RelationInstance]:
        ticket = rng.random() * acc
        lo, hi = 0, len(cum_weights) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if ticket < cum_weights[mid]:
                hi = mid
            else:
                lo = mid + 1
        insts = pools.by_relation[pos_eligible[lo]]
        i, j = rng.sample(range(len(insts)), 2)
        return insts[i], insts[j]

    def draw_negative(rng: random.Random) -> tuple[RelationInstance, RelationInstance]:
        if config.negative_sampling == "relation":
            ra, rb = rng.sample(pools.labels, 2)
            return rng.choice(pools.by_relation[ra]), rng.choice(pools.by_relation[rb])
        a = pools.instances[rng.randrange(n)]
        for _ in range(MAX_ATTEMPTS):
            b = pools.instances[rng.randrange(n)]
            if b.relation != a.relation:
                return a, b
        raise UnsatisfiableConfig(
            f"could not draw a different-relation partner for relation "
            f"{a.relation!r} within {MAX_ATTEMPTS} attempts"
        )

    out: list[PairExample] = []
    seen: set[tuple[str, str]] = set()
    for i, label in enumerate(labels):
        rng = random.Random(mix_seed(config.seed, i + 1))
        for _ in range(MAX_ATTEMPTS):
            a, b = draw_positive(rng) if label == SAME else draw_negative(rng)
            key = (a.uid, b.uid) if a.uid < b.uid else (b.uid, a.uid)
            if config.allow_duplicate_pairs or key not in seen:
                break
        else:
            raise UnsatisfiableConfig(
                f"could not draw a fresh {label} pair within {MAX_ATTEMPTS} attempts"
            )
        seen.add(key)
        out.append(
            PairExample(
                first_uid=a.uid,
                second_uid=b.uid,
                first_text=text_of(a),
                second_text=text_of(b),
                label=label,
                first_relation=a.relation,
                second_relation=b.relation,
            )
        )
    return out


def _episode_from_pools(
    pools: _Pools,
    config: EpisodeConfig,
    scheme: MarkerScheme,
    rng: random.Random,
) -> Episode:
    if len(pools.labels) < config.m:
        raise InsufficientRelations(
            f"episode needs {config.m} relations, part has {len(pools.labels)}"
        )
    eligible = [
        r for r in pools.labels if len(pools.by_relation[r]) >= config.k + 1
    ]
    if len(eligible) < config.m:
        raise InsufficientInstances(
            f"episode needs {config.m} relations with at least {config.k + 1} "
            f"instances, part has {len(eligible)}"
        )
    chosen = rng.sample(eligible, config.m)
    chosen_set = set(chosen)
    support: list[tuple[str, RelationLabel]] = []
    support_uids: set[str] = set()
    for r in chosen:
        for inst in rng.sample(pools.by_relation[r], config.k):
            support.append((render(inst, scheme), r))
            support_uids.add(inst.uid)

    n_nota = round_half_up(config.q * config.nota_rate)
    n_pos = config.q - n_nota
    query_insts: list[tuple[RelationInstance, str]] = []
    if n_pos > 0:
        pos_pool = [
            inst
            for r in chosen
            for inst in pools.by_relation[r]
            if inst.uid not in support_uids
        ]
        if n_pos > len(pos_pool):
            raise InsufficientInstances(
                f"episode needs {n_pos} non-NOTA queries, only {len(pos_pool)} "
                "non-support instances of the chosen relations exist"
            )
        query_insts += [(inst, inst.relation) for inst in rng.sample(pos_pool, n_pos)]
    if n_nota > 0:
        nota_pool = [
            inst for inst in pools.instances if inst.relation not in chosen_set
        ]
        if not nota_pool:
            raise NoNotaSource(
                "nota_rate > 0 but the part has no relations outside the support set"
            )
        if n_nota > len(nota_pool):
            raise InsufficientInstances(
                f"episode needs {n_nota} NOTA queries, only {len(nota_pool)} "
                "out-of-support instances exist"
            )
        query_insts += [(inst, NOTA) for inst in rng.sample(nota_pool, n_nota)]
    rng.shuffle(query_insts)

    return Episode(
        m=config.m,
        k=config.k,
        support=tuple(support),
        queries=tuple((render(inst, scheme), gold) for inst, gold in query_insts),
        support_uids=frozenset(support_uids),
        query_uids=frozenset(inst.uid for inst, _ in query_insts),
    )


def generate_episode(
    part,
    config: EpisodeConfig,
    scheme: MarkerScheme = DEFAULT_SCHEME,
) -> Episode:
    return _episode_from_pools(
        _Pools(part), config, scheme, random.Random(config.seed)
    )


def generate_episode_batch(
    part,
    config: EpisodeConfig,
    count: int,
    scheme: MarkerScheme = DEFAULT_SCHEME,
    workers: int = 1,
) -> list[Episode]:
    """``count`` independent episodes; episode i uses seed ``seed + i``.

    Episodes are independent units, so worker count never changes the
    output.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    pools = _Pools(part)

    def one(i: int) -> Episode:
        return _episode_from_pools(
            pools, config, scheme, random.Random(config.seed + i)
        )

    if workers > 1 and count > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, range(count)))
    return [one(i) for i in range(count)]


# -- serialization --


def write_pairs(pairs: list[PairExample], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps(p.to_record(), ensure_ascii=False) + "\n")


def read_pairs(path: str | Path) -> list[PairExample]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(PairExample.from_record(json.loads(line)))
    return out


def write_episodes(episodes: list[Episode], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for ep in episodes:
            fh.write(json.dumps(ep.to_record(), ensure_ascii=False) + "\n")


def read_episodes(path: str | Path) -> list[Episode]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(Episode.from_record(json.loads(line)))
    return out
