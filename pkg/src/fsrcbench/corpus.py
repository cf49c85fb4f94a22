"""Corpus ingestion, validation, and indexing.

The on-disk format is UTF-8, line-delimited JSON. Each line is one object
with exactly the keys ``uid`` (string), ``text`` (string), ``head`` and
``tail`` (two-integer arrays ``[start, end]``) and ``relation`` (string).
Unknown keys are ignored. Span offsets are character offsets (Unicode
scalar values), 0-based, end-exclusive. Records with identical sentence
text but different entity pairs are kept as distinct instances.
"""

from __future__ import annotations

import json
from collections.abc import Callable, Iterable, Iterator
from dataclasses import dataclass
from pathlib import Path

from .errors import DuplicateUid, MalformedRecord, SpanOutOfBounds

RelationLabel = str

RECORD_KEYS = ("uid", "text", "head", "tail", "relation")


@dataclass(frozen=True)
class EntitySpan:
    """Character span, start inclusive, end exclusive."""

    start: int
    end: int

    def overlaps(self, other: "EntitySpan") -> bool:
        return not (self.end <= other.start or other.end <= self.start)


@dataclass(frozen=True)
class RelationInstance:
    """One sentence with head/tail entity spans and a relation label."""

    uid: str
    text: str
    head: EntitySpan
    tail: EntitySpan
    relation: RelationLabel

    def validate(self) -> None:
        """Raise if spans fall outside the text or overlap each other."""
        n = len(self.text)
        for name, span in (("head", self.head), ("tail", self.tail)):
            if not (0 <= span.start < span.end <= n):
                raise SpanOutOfBounds(
                    f"instance {self.uid!r}: {name} span ({span.start},{span.end}) "
                    f"out of bounds for text of length {n}"
                )
        if self.head.overlaps(self.tail):
            raise SpanOutOfBounds(
                f"instance {self.uid!r}: head and tail spans overlap"
            )

    def to_record(self) -> dict:
        return {
            "uid": self.uid,
            "text": self.text,
            "head": [self.head.start, self.head.end],
            "tail": [self.tail.start, self.tail.end],
            "relation": self.relation,
        }


@dataclass(frozen=True)
class RelationHistogram:
    counts: dict[RelationLabel, int]
    total: int


class Corpus:
    """Immutable ordered collection of instances with a per-relation index.

    Iteration order is ingestion order. ``relation_index`` maps each label to
    the positions of its instances, covering every instance exactly once.
    """

    def __init__(self, instances: Iterable[RelationInstance]):
        self._instances: tuple[RelationInstance, ...] = tuple(instances)
        index: dict[RelationLabel, list[int]] = {}
        for pos, inst in enumerate(self._instances):
            index.setdefault(inst.relation, []).append(pos)
        self._index: dict[RelationLabel, tuple[int, ...]] = {
            r: tuple(ps) for r, ps in index.items()
        }

    def __len__(self) -> int:
        return len(self._instances)

    def __iter__(self) -> Iterator[RelationInstance]:
        return iter(self._instances)

    def __getitem__(self, pos: int) -> RelationInstance:
        return self._instances[pos]

    @property
    def instances(self) -> tuple[RelationInstance, ...]:
        return self._instances

    @property
    def relation_index(self) -> dict[RelationLabel, tuple[int, ...]]:
        return dict(self._index)

    @property
    def relations(self) -> set[RelationLabel]:
        return set(self._index)

    def instances_for(self, relation: RelationLabel) -> tuple[RelationInstance, ...]:
        return tuple(self._instances[p] for p in self._index.get(relation, ()))


def _parse_record(line_no: int, line: str) -> RelationInstance:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(line_no, f"invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise MalformedRecord(line_no, "record is not a JSON object")
    for key in RECORD_KEYS:
        if key not in obj:
            raise MalformedRecord(line_no, f"missing key {key!r}")
    uid, text, relation = obj["uid"], obj["text"], obj["relation"]
    if not isinstance(uid, str) or not uid:
        raise MalformedRecord(line_no, "uid must be a non-empty string")
    if not isinstance(text, str):
        raise MalformedRecord(line_no, "text must be a string")
    if not isinstance(relation, str) or not relation:
        raise MalformedRecord(line_no, "relation must be a non-empty string")
    spans = {}
    for key in ("head", "tail"):
        val = obj[key]
        if (
            not isinstance(val, list)
            or len(val) != 2
            or not all(isinstance(v, int) and not isinstance(v, bool) for v in val)
        ):
            raise MalformedRecord(line_no, f"{key} must be a two-integer array")
        spans[key] = EntitySpan(val[0], val[1])
    inst = RelationInstance(uid, text, spans["head"], spans["tail"], relation)
    try:
        inst.validate()
    except SpanOutOfBounds as exc:
        raise SpanOutOfBounds(f"line {line_no}: {exc}") from exc
    return inst


def load_corpus(
    path: str | Path,
    strict: bool = True,
    on_skip: Callable[[int, str], None] | None = None,
) -> Corpus:
    """Load a line-delimited corpus file.

    In strict mode any invalid record aborts the load. In lenient mode
    invalid records (malformed JSON, bad spans, duplicate uids) are skipped;
    ``on_skip(line_no, reason)`` is called for each skipped line. Blank
    lines are ignored in both modes.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"corpus file not found: {path}")
    instances: list[RelationInstance] = []
    seen_uids: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                inst = _parse_record(line_no, line)
                if inst.uid in seen_uids:
                    raise DuplicateUid(f"line {line_no}: duplicate uid {inst.uid!r}")
            except (MalformedRecord, SpanOutOfBounds, DuplicateUid) as exc:
                if strict:
                    raise
                if on_skip is not None:
                    on_skip(line_no, str(exc))
                continue
            seen_uids.add(inst.uid)
            instances.append(inst)
    return Corpus(instances)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write the corpus in the canonical line-delimited format."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for inst in corpus:
            fh.write(json.dumps(inst.to_record(), ensure_ascii=False) + "\n")


def histogram(corpus: Corpus) -> RelationHistogram:
    """Count instances per relation label."""
    counts = {r: len(ps) for r, ps in corpus.relation_index.items()}
    return RelationHistogram(counts=counts, total=len(corpus))


def relations_with_at_least(hist: RelationHistogram, k: int) -> set[RelationLabel]:
    """Labels whose instance count is at least ``k``."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return {r for r, c in hist.counts.items() if c >= k}
