"""Client for external encoder processes speaking the line protocol.

The bridge executable (named by the ``FSRC_BRIDGE_CMD`` environment
variable) prints one handshake line and then answers each request line
``{"id": I, "text": T}`` with ``{"id": I, "vec": [...]}`` or
``{"id": I, "error": E}``, one JSON object per line, flushed per response.
Responses may arrive out of order; this client correlates them by id and
keeps at most ``window`` requests in flight.
"""

from __future__ import annotations

import json
import os
import shlex
import subprocess
from typing import Sequence

import numpy as np

from .errors import BridgeError, BridgeUnavailable, EmptyText

BRIDGE_ENV_VAR = "FSRC_BRIDGE_CMD"
DEFAULT_WINDOW = 256
PROTOCOL_VERSION = 1


class BridgedEncoder:
    """Encoder backed by a bridge subprocess."""

    kind = "bridged"

    def __init__(self, command: str | None = None, window: int = DEFAULT_WINDOW):
        if command is None:
            command = os.environ.get(BRIDGE_ENV_VAR, "").strip()
        if not command:
            raise BridgeUnavailable(
                f"no bridge command given and {BRIDGE_ENV_VAR} is not set"
            )
        self.command = command
        self.window = window
        try:
            self._proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                encoding="utf-8",
            )
        except OSError as exc:
            raise BridgeUnavailable(f"cannot start bridge {command!r}: {exc}") from exc
        handshake_line = self._proc.stdout.readline()
        if not handshake_line:
            raise BridgeUnavailable(
                f"bridge {command!r} exited before handshake: {self._stderr_tail()}"
            )
        try:
            handshake = json.loads(handshake_line)
        except json.JSONDecodeError as exc:
            raise BridgeUnavailable(
                f"bridge handshake is not valid JSON: {handshake_line!r}"
            ) from exc
        if handshake.get("protocol_version") != PROTOCOL_VERSION:
            raise BridgeUnavailable(
                f"unsupported bridge protocol version: {handshake!r}"
            )
        self.dim = int(handshake["dim"])
        self.model_name = str(handshake.get("model_name", ""))
        self.metadata = {"command": command, "model_name": self.model_name}
        self._next_id = 0
        self._pending: dict[int, np.ndarray] = {}

    def _stderr_tail(self) -> str:
        if self._proc.stderr is None:
            return ""
        try:
            return self._proc.stderr.read()[-500:].strip()
        except (OSError, ValueError):
            return ""

    def _read_response(self) -> None:
        line = self._proc.stdout.readline()
        if not line:
            raise BridgeUnavailable(
                f"bridge {self.command!r} closed its output: {self._stderr_tail()}"
            )
        rec = json.loads(line)
        rid = rec["id"]
        if "error" in rec:
            raise BridgeError(f"bridge error for request {rid}: {rec['error']}")
        vec = np.asarray(rec["vec"], dtype=np.float64)
        if vec.shape != (self.dim,):
            raise BridgeError(
                f"bridge returned {vec.shape[0] if vec.ndim == 1 else vec.shape} "
                f"values, handshake promised dim {self.dim}"
            )
        self._pending[rid] = vec

    def _send(self, text: str) -> int:
        rid = self._next_id
        self._next_id += 1
        self._proc.stdin.write(json.dumps({"id": rid, "text": text}) + "\n")
        self._proc.stdin.flush()
        return rid

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise EmptyText("cannot embed an empty text")
        rid = self._send(text)
        while rid not in self._pending:
            self._read_response()
        return self._pending.pop(rid)

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        for t in texts:
            if not t:
                raise EmptyText("cannot embed an empty text")
        ids: list[int] = []
        results: dict[int, np.ndarray] = {}
        sent = 0
        while len(results) < len(texts):
            while sent < len(texts) and sent - len(results) < self.window:
                ids.append(self._send(texts[sent]))
                sent += 1
            self._read_response()
            for rid in list(self._pending):
                results[rid] = self._pending.pop(rid)
        return [results[rid] for rid in ids]

    def close(self) -> int:
        """Close the request stream and wait for a clean exit."""
        if self._proc.stdin and not self._proc.stdin.closed:
            self._proc.stdin.close()
        return self._proc.wait()

    def __enter__(self) -> "BridgedEncoder":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
