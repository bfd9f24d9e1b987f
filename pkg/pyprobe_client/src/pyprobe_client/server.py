"""Probe-protocol server: wrap a callable, speak JSON lines until shutdown.

Protocol version 1. One JSON object per line; the server sends a hello frame
first, then answers every request line with exactly one response line.
Model exceptions become per-request error frames and the session continues;
a declared-dimension violation is a contract breach and aborts the session.
"""

from __future__ import annotations

import json
import re
import socketserver
import sys
from dataclasses import dataclass, field
from typing import Callable, Mapping, TextIO

import numpy as np

from ._wire import dumps_decimal

__all__ = ["PROTOCOL_VERSION", "WrappedModel", "ContractError", "serve", "serve_tcp"]

PROTOCOL_VERSION = 1

_ID_RE = re.compile(r'"id"\s*:\s*(\d+)')

# four generic points; used by the startup determinism self-check unless the
# wrapped model supplies its own representative input
_DEFAULT_CHECK_POSITIONS = [
    [0.1, 0.2, 0.3],
    [1.0, -0.4, 0.7],
    [-0.6, 0.8, -0.2],
    [0.25, 0.5, -0.125],
]


class ContractError(RuntimeError):
    """The wrapped model violated its declaration (dimension or determinism)."""


@dataclass
class Cloud:
    """Decoded request payload: positions plus optional per-point attributes."""

    positions: np.ndarray
    scalar_attrs: dict[str, np.ndarray] = field(default_factory=dict)
    vector_attrs: dict[str, np.ndarray] = field(default_factory=dict)
    cell: np.ndarray | None = None
    info: dict[str, float] = field(default_factory=dict)

    @classmethod
    def from_wire(cls, payload: Mapping) -> "Cloud":
        return cls(
            np.asarray(payload["positions"], dtype=float),
            {k: np.asarray(v, dtype=float)
             for k, v in payload.get("scalar_attrs", {}).items()},
            {k: np.asarray(v, dtype=float)
             for k, v in payload.get("vector_attrs", {}).items()},
            None if payload.get("cell") is None
            else np.asarray(payload["cell"], dtype=float),
            {k: float(v) for k, v in payload.get("info", {}).items()},
        )


class WrappedModel:
    """A user callable plus its declared tap schema.

    The callable receives a Cloud and returns a mapping from tap name to a
    flat array of the declared dimension. No framework assumptions: wrap
    torch/jax/sklearn models by closing over them in a plain function.
    """

    def __init__(
        self,
        fn: Callable[[Cloud], Mapping[str, np.ndarray]],
        taps: Mapping[str, int],
        check_cloud: Cloud | None = None,
    ):
        if not taps:
            raise ValueError("tap schema must be non-empty")
        self.fn = fn
        self.taps = {k: int(v) for k, v in taps.items()}
        self.check_cloud = check_cloud

    def evaluate(self, cloud: Cloud, names) -> dict[str, np.ndarray]:
        out = self.fn(cloud)
        vectors = {}
        for name in names:
            if name not in self.taps:
                raise ValueError(
                    f"unknown tap {name!r}; served taps: {sorted(self.taps)}"
                )
            v = np.asarray(out[name], dtype=float).ravel()
            if v.size != self.taps[name]:
                raise ContractError(
                    f"tap {name!r} returned dimension {v.size}, "
                    f"declared {self.taps[name]}"
                )
            vectors[name] = v
        return vectors

    def verify_determinism(self) -> None:
        """Evaluate twice on a representative input and compare serialized bytes.

        The handshake advertises statelessness; a model with hidden state or
        unseeded randomness must be caught before any client trusts it.
        """
        cloud = self.check_cloud or Cloud(np.array(_DEFAULT_CHECK_POSITIONS))
        first = dumps_decimal(self.evaluate(cloud, sorted(self.taps)))
        second = dumps_decimal(self.evaluate(cloud, sorted(self.taps)))
        if first != second:
            raise ContractError(
                "wrapped callable is not deterministic: two evaluations of the "
                "same input produced different outputs; seed its randomness or "
                "freeze its state before serving"
            )


def _hello_line(model: WrappedModel) -> str:
    return dumps_decimal(
        {"type": "hello", "version": PROTOCOL_VERSION,
         "taps": model.taps, "stateless": True}
    )


def _handle_line(model: WrappedModel, line: str) -> str | None:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        m = _ID_RE.search(line)
        rid = int(m.group(1)) if m else None
        return dumps_decimal(
            {"type": "result", "id": rid, "error": f"malformed frame: {exc}"}
        )
    if msg.get("type") == "shutdown":
        return None
    rid = msg.get("id")
    try:
        taps = msg.get("taps") or []
        if msg.get("type") == "probe":
            vectors = model.evaluate(Cloud.from_wire(msg["cloud"]), taps)
            return dumps_decimal({"type": "result", "id": rid, "vectors": vectors})
        if msg.get("type") == "probe_batch":
            vectors_list = [
                model.evaluate(Cloud.from_wire(c), taps) for c in msg["clouds"]
            ]
            return dumps_decimal(
                {"type": "result", "id": rid, "vectors_list": vectors_list}
            )
        raise ValueError(f"unknown message type {msg.get('type')!r}")
    except ContractError:
        raise  # breaking the declared schema poisons the whole session
    except Exception as exc:  # user-model failures stay isolated per request
        return dumps_decimal({"type": "result", "id": rid, "error": str(exc)})


def serve(model: WrappedModel, stdin: TextIO = None, stdout: TextIO = None) -> None:
    """Run one protocol session over text streams until shutdown or EOF."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    model.verify_determinism()
    stdout.write(_hello_line(model) + "\n")
    stdout.flush()
    for line in stdin:
        if not line.strip():
            continue
        response = _handle_line(model, line)
        if response is None:
            break
        stdout.write(response + "\n")
        stdout.flush()


def serve_tcp(model: WrappedModel, host: str = "127.0.0.1", port: int = 0):
    """TCP variant, one session per connection; returns (server, bound_port)."""
    model.verify_determinism()

    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            self.wfile.write((_hello_line(model) + "\n").encode())
            self.wfile.flush()
            for raw in self.rfile:
                line = raw.decode()
                if not line.strip():
                    continue
                response = _handle_line(model, line)
                if response is None:
                    break
                self.wfile.write((response + "\n").encode())
                self.wfile.flush()

    class Server(socketserver.ThreadingTCPServer):
        allow_reuse_address = True
        daemon_threads = True

    server = Server((host, port), Handler)
    return server, server.server_address[1]
