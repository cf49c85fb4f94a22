"""Encoder bridge server: line-delimited JSON over standard streams.

Wire format (UTF-8, one object per line, newline-terminated, flushed per
response):

* handshake, first line: ``{"protocol_version": 1, "dim": D, "model_name": S}``
* request: ``{"id": I, "text": T}``
* response: ``{"id": I, "vec": [...]}`` or ``{"id": I, "error": E}``

Responses may leave in a different order than requests arrive when
``--batch N`` is above 1 (internal batching for models that want it);
clients correlate by id. On end of input every pending response is flushed
and the process exits 0. Startup failures (unknown model, bad dim) exit
nonzero with a message on stderr.

The bundled ``echo`` model produces deterministic hash-derived vectors
with no ML dependency: each token contributes a pseudo-random unit-scale
vector seeded by its SHA-256, summed and L2-normalized. Identical texts
always map to identical vectors, and texts sharing tokens land nearby,
which is enough to exercise any cosine-similarity pipeline end to end.
Real encoders plug in by implementing ``embed(text) -> list[float]`` and
registering in ``MODELS``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from typing import Callable

PROTOCOL_VERSION = 1


class EchoModel:
    """Deterministic hash-based reference encoder."""

    name_prefix = "echo"

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.model_name = f"echo-{dim}"

    def _token_vector(self, token: str) -> list[float]:
        out: list[float] = []
        counter = 0
        while len(out) < self.dim:
            digest = hashlib.sha256(f"{token}:{counter}".encode("utf-8")).digest()
            for i in range(0, len(digest) - 1, 2):
                if len(out) == self.dim:
                    break
                value = int.from_bytes(digest[i : i + 2], "big")
                out.append(value / 32767.5 - 1.0)
            counter += 1
        return out

    def embed(self, text: str) -> list[float]:
        tokens = text.lower().split()
        if not tokens:
            return [0.0] * self.dim
        acc = [0.0] * self.dim
        for token in tokens:
            for i, v in enumerate(self._token_vector(token)):
                acc[i] += v
        norm = math.sqrt(sum(v * v for v in acc))
        if norm == 0.0:
            return acc
        return [v / norm for v in acc]


MODELS: dict[str, Callable[[int], EchoModel]] = {
    "echo": EchoModel,
}


def _emit(obj: dict) -> None:
    # one write + flush per line so no response can be torn mid-record
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def serve(model_name: str, dim: int, batch: int = 1) -> int:
    try:
        factory = MODELS[model_name]
    except KeyError:
        print(
            f"fsrc-bridge: unknown model {model_name!r} (available: {sorted(MODELS)})",
            file=sys.stderr,
        )
        return 2
    try:
        model = factory(dim)
    except ValueError as exc:
        print(f"fsrc-bridge: {exc}", file=sys.stderr)
        return 2
    if batch < 1:
        print("fsrc-bridge: --batch must be >= 1", file=sys.stderr)
        return 2

    _emit(
        {
            "protocol_version": PROTOCOL_VERSION,
            "dim": model.dim,
            "model_name": model.model_name,
        }
    )

    pending: list[dict] = []

    def flush_pending() -> None:
        # batched responses leave newest-first: harmless by contract
        # (id-correlated) and it exercises client reordering
        while pending:
            _emit(pending.pop())

    for line in sys.stdin:
        if not line.strip():
            continue
        try:
            request = json.loads(line)
            rid = request["id"]
        except (json.JSONDecodeError, TypeError, KeyError):
            print(f"fsrc-bridge: unparseable request line skipped", file=sys.stderr)
            continue
        try:
            text = request["text"]
            if not isinstance(text, str):
                raise TypeError("text must be a string")
            pending.append({"id": rid, "vec": model.embed(text)})
        except Exception as exc:  # per-request failures must not kill the stream
            pending.append({"id": rid, "error": f"{type(exc).__name__}: {exc}"})
        if len(pending) >= batch:
            flush_pending()
    flush_pending()
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fsrc-bridge",
        description="Serve a sentence encoder over the line-delimited JSON protocol",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("serve", help="start answering requests on stdin")
    p.add_argument("--model", default="echo", help="model name (bundled: echo)")
    p.add_argument("--dim", type=int, default=64, help="embedding dimension")
    p.add_argument(
        "--batch",
        type=int,
        default=1,
        help="answer in batches of N (N>1 assumes a pipelining client)",
    )
    args = parser.parse_args(argv)
    return serve(args.model, args.dim, args.batch)


if __name__ == "__main__":
    sys.exit(main())
