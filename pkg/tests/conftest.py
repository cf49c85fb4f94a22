import random

import pytest

from fsrcbench.corpus import Corpus, EntitySpan, RelationInstance


def make_instance(uid, relation, head_word="Alpha", tail_word="Omega", trigger="links"):
    text = f"{head_word} {trigger} {tail_word}."
    return RelationInstance(
        uid=uid,
        text=text,
        head=EntitySpan(0, len(head_word)),
        tail=EntitySpan(len(head_word) + len(trigger) + 2, len(text) - 1),
        relation=relation,
    )


def corpus_with_counts(counts: dict[str, int], seed: int = 0) -> Corpus:
    """Corpus with the given per-relation instance counts."""
    rng = random.Random(seed)
    words = ["Vela", "Mira", "Nashira", "Altair", "Sadir", "Rigel", "Atlas", "Polaris"]
    instances = []
    n = 0
    for relation in sorted(counts):
        for _ in range(counts[relation]):
            n += 1
            instances.append(
                make_instance(
                    f"u{n:05d}",
                    relation,
                    head_word=rng.choice(words),
                    tail_word=rng.choice(words),
                    trigger=f"t{relation.lower()}",
                )
            )
    return Corpus(instances)


@pytest.fixture
def tiny_corpus():
    return corpus_with_counts({"A": 5, "B": 3, "C": 2})
