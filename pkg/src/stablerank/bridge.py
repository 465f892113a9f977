"""Client for external model servers speaking the line-delimited JSON protocol.

One JSON document per line over the child process's stdin/stdout:

    -> {"op": "hello", "d": <int>}          <- {"ok": true, "d": <int>}
    -> {"op": "predict", "x": [[...], ...]} <- {"y": [...]}

Responses arrive in request order; a malformed request yields
{"error": "..."} and the server keeps running. Requests are serialized, so
the handle declares itself serialized and the engine queues evaluations.
"""

from __future__ import annotations

import json
import shlex
import subprocess

import numpy as np

from .errors import BridgeHandshakeError, EvaluationFailure
from .models import ModelHandle

_MAX_ROWS_PER_REQUEST = 10_000


class BridgeModel:
    """Spawns the bridge command and evaluates batches over the wire."""

    def __init__(self, command, d: int):
        if isinstance(command, str):
            command = shlex.split(command)
        self.command = list(command)
        self.d = int(d)
        try:
            self._proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, bufsize=1)
        except OSError as exc:
            raise BridgeHandshakeError(f"could not spawn bridge command: {exc}") from exc
        reply = self._roundtrip({"op": "hello", "d": self.d}, handshake=True)
        if not reply.get("ok") or reply.get("d") != self.d:
            self.close()
            raise BridgeHandshakeError(f"handshake rejected: {reply!r}")

    def _roundtrip(self, request: dict, handshake: bool = False) -> dict:
        line = json.dumps(request, separators=(",", ":"))
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
            response = self._proc.stdout.readline()
        except (BrokenPipeError, OSError, ValueError) as exc:
            raise EvaluationFailure(f"bridge pipe failed: {exc}") from exc
        if not response:
            err = BridgeHandshakeError if handshake else EvaluationFailure
            raise err("bridge closed its output stream")
        try:
            return json.loads(response)
        except json.JSONDecodeError as exc:
            err = BridgeHandshakeError if handshake else EvaluationFailure
            raise err(f"bridge sent invalid JSON: {response!r}") from exc

    def __call__(self, batch: np.ndarray) -> np.ndarray:
        outputs = []
        for lo in range(0, batch.shape[0], _MAX_ROWS_PER_REQUEST):
            chunk = batch[lo:lo + _MAX_ROWS_PER_REQUEST]
            reply = self._roundtrip({"op": "predict", "x": chunk.tolist()})
            if "error" in reply:
                raise EvaluationFailure(f"bridge error: {reply['error']}")
            y = reply.get("y")
            if y is None or len(y) != chunk.shape[0]:
                raise EvaluationFailure(f"bridge returned a malformed prediction: {reply!r}")
            outputs.append(np.asarray(y, dtype=np.float64))
        return np.concatenate(outputs) if outputs else np.empty(0)

    def as_handle(self, output_kind: str = "regression") -> ModelHandle:
        return ModelHandle(self, n_features=self.d, output_kind=output_kind,
                           serialized=True)

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


def connect_bridge(command, d: int, output_kind: str = "regression") -> ModelHandle:
    """Spawn a bridge and return its ModelHandle (kept open for the process life)."""
    return BridgeModel(command, d).as_handle(output_kind)
