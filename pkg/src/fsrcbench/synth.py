"""Synthetic relation corpus generator for tests and demos.

Templated sentences over configurable relation/entity vocabularies. Each
relation owns a disjoint family of trigger words built on a relation-unique
stem (mimicking the lexical families real relations exhibit), entities come
from a shared pool, and templates vary word order (including
tail-before-head) so the renderer sees both span orderings. This is test
fixture machinery; the generated text carries no linguistic claim.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .corpus import Corpus, EntitySpan, RelationInstance
from .splitter import mix_seed

_CONSONANTS = "bcdfglmnprstvz"
_VOWELS = "aeiou"
_FILLERS = ("the", "was", "of", "in", "by", "at")
_SUFFIXES = ("", "ed", "ing", "er", "est", "s", "ly", "ion")


@dataclass(frozen=True)
class SynthConfig:
    # one entry per relation: number of instances to generate for it
    relation_counts: tuple[int, ...] = field(default_factory=lambda: (60,) * 20)
    entity_pool: int = 200
    triggers_per_relation: int = 6
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.relation_counts or min(self.relation_counts) < 1:
            raise ValueError("relation_counts must be non-empty positive ints")
        if self.entity_pool < 2:
            raise ValueError("entity_pool must be >= 2")
        if not 1 <= self.triggers_per_relation <= len(_SUFFIXES):
            raise ValueError(
                f"triggers_per_relation must be in [1, {len(_SUFFIXES)}]"
            )


def parse_profile(profile: str) -> tuple[int, ...]:
    """Parse "40x130,10x30" into 40 relations of 130 plus 10 of 30."""
    counts: list[int] = []
    for chunk in profile.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if "x" in chunk:
            reps, per = chunk.split("x", 1)
            counts.extend([int(per)] * int(reps))
        else:
            counts.append(int(chunk))
    if not counts:
        raise ValueError(f"empty profile {profile!r}")
    return tuple(counts)


def _pseudo_word(rng: random.Random, syllables: int) -> str:
    return "".join(
        rng.choice(_CONSONANTS) + rng.choice(_VOWELS) for _ in range(syllables)
    )


def _unique_words(rng: random.Random, count: int, syllables: int) -> list[str]:
    words: list[str] = []
    seen: set[str] = set()
    while len(words) < count:
        w = _pseudo_word(rng, syllables)
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def generate_synthetic_corpus(config: SynthConfig) -> Corpus:
    n_rel = len(config.relation_counts)
    vocab_rng = random.Random(mix_seed(config.seed, 0xFACE))
    entities = [
        w.capitalize() for w in _unique_words(vocab_rng, config.entity_pool, 3)
    ]
    # each relation's triggers are inflections of a relation-unique stem,
    # so the trigger families stay disjoint across relations
    stems = _unique_words(vocab_rng, n_rel, 2)
    triggers = [
        [stem + suffix for suffix in _SUFFIXES[: config.triggers_per_relation]]
        for stem in stems
    ]

    instances: list[RelationInstance] = []
    uid_counter = 0
    for rel_idx, count in enumerate(config.relation_counts):
        relation = f"P{1000 + rel_idx}"
        rng = random.Random(mix_seed(config.seed, rel_idx + 1))
        for _ in range(count):
            head = rng.choice(entities)
            tail = rng.choice(entities)
            while tail == head:
                tail = rng.choice(entities)
            t1 = rng.choice(triggers[rel_idx])
            t2 = rng.choice(triggers[rel_idx])
            filler = rng.choice(_FILLERS)
            template = rng.randrange(5)
            if template == 0:
                words = [head, t1, tail]
                head_i, tail_i = 0, 2
            elif template == 1:
                words = [head, filler, t1, tail]
                head_i, tail_i = 0, 3
            elif template == 2:
                words = [head, t1, filler, tail]
                head_i, tail_i = 0, 3
            elif template == 3:
                words = [head, t1, t2, tail]
                head_i, tail_i = 0, 3
            else:
                words = [tail, filler, t1, head]
                head_i, tail_i = 3, 0
            text = " ".join(words) + "."
            offsets = []
            pos = 0
            for w in words:
                offsets.append((pos, pos + len(w)))
                pos += len(w) + 1
            uid_counter += 1
            instances.append(
                RelationInstance(
                    uid=f"s{uid_counter:06d}",
                    text=text,
                    head=EntitySpan(*offsets[head_i]),
                    tail=EntitySpan(*offsets[tail_i]),
                    relation=relation,
                )
            )
    return Corpus(instances)
