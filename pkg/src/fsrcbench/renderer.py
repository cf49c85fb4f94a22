"""Marker-annotated surface rendering of relation instances.

An instance renders to its sentence with the head span wrapped in head
markers and the tail span wrapped in tail markers, e.g.::

    <s> Bill Gates </s> worked at <o> Microsoft </o>.

Markers are separated from the span text by the scheme separator (a single
space by default); characters outside the spans are preserved verbatim,
including sentence-final punctuation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

from .corpus import RelationInstance
from .errors import OverlappingSpans


class MarkerCollisionWarning(UserWarning):
    """A marker string already occurs literally in the sentence text."""


@dataclass(frozen=True)
class MarkerScheme:
    head_open: str = "<s>"
    head_close: str = "</s>"
    tail_open: str = "<o>"
    tail_close: str = "</o>"
    separator: str = " "

    def __post_init__(self) -> None:
        markers = (self.head_open, self.head_close, self.tail_open, self.tail_close)
        if any(not m for m in markers):
            raise ValueError("marker strings must be non-empty")
        if len(set(markers)) != 4:
            raise ValueError("marker strings must be pairwise distinct")

    @property
    def markers(self) -> tuple[str, str, str, str]:
        return (self.head_open, self.head_close, self.tail_open, self.tail_close)


DEFAULT_SCHEME = MarkerScheme()


def render(instance: RelationInstance, scheme: MarkerScheme = DEFAULT_SCHEME) -> str:
    """Wrap the head and tail spans of ``instance.text`` in markers.

    Insertions happen in ascending offset order, so head-before-tail and
    tail-before-head sentences are both handled; adjacent spans produce
    back-to-back close/open markers with no extra separator between them.
    """
    if instance.head.overlaps(instance.tail):
        raise OverlappingSpans(
            f"instance {instance.uid!r}: head and tail spans overlap"
        )
    text = instance.text
    for marker in scheme.markers:
        if marker in text:
            warnings.warn(
                f"marker {marker!r} occurs in the text of instance {instance.uid!r}; "
                "rendering is not reversible for this instance",
                MarkerCollisionWarning,
                stacklevel=2,
            )
    sep = scheme.separator
    if instance.head.start <= instance.tail.start:
        first = (instance.head, scheme.head_open, scheme.head_close)
        second = (instance.tail, scheme.tail_open, scheme.tail_close)
    else:
        first = (instance.tail, scheme.tail_open, scheme.tail_close)
        second = (instance.head, scheme.head_open, scheme.head_close)
    (s1, open1, close1), (s2, open2, close2) = first, second
    return "".join(
        (
            text[: s1.start],
            open1,
            sep,
            text[s1.start : s1.end],
            sep,
            close1,
            text[s1.end : s2.start],
            open2,
            sep,
            text[s2.start : s2.end],
            sep,
            close2,
            text[s2.end :],
        )
    )


def strip_markers(rendered: str, scheme: MarkerScheme = DEFAULT_SCHEME) -> str:
    """Remove markers and their separators, recovering the original sentence.

    Exact inverse of :func:`render` whenever no marker string occurs in the
    original text.
    """
    sep = scheme.separator
    out = rendered
    for opener in (scheme.head_open, scheme.tail_open):
        out = out.replace(opener + sep, "")
    for closer in (scheme.head_close, scheme.tail_close):
        out = out.replace(sep + closer, "")
    return out


def rendered_length(instance: RelationInstance, scheme: MarkerScheme = DEFAULT_SCHEME) -> int:
    """Length of the rendered string: input + 4 markers + 4 separators."""
    return (
        len(instance.text)
        + sum(len(m) for m in scheme.markers)
        + 4 * len(scheme.separator)
    )
