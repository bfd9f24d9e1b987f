"""Newline-delimited JSON probe protocol for external model processes.

A server wraps a model as named taps; the client side exposes the session as
a ProbeFunction, so every metric in this package runs unchanged against a
remote model. The client drives all group transformations locally and only
ever sends transformed clouds; servers never see group elements.

Frame format (one JSON object per line, floats at 17 significant digits):

    server -> client   {"type": "hello", "version": 1,
                        "taps": {"name": dim, ...}, "stateless": bool}
    client -> server   {"type": "probe", "id": n, "taps": [...], "cloud": {...}}
    client -> server   {"type": "probe_batch", "id": n, "taps": [...],
                        "clouds": [{...}, ...]}
    server -> client   {"type": "result", "id": n, "vectors": {...}}
                       {"type": "result", "id": n, "vectors_list": [{...}, ...]}
                       {"type": "result", "id": n, "error": "message"}
    client -> server   {"type": "shutdown"}
"""

from __future__ import annotations

import json
import re
import socket
import socketserver
import subprocess
import sys
from typing import Callable, Mapping, Sequence, TextIO

import numpy as np

from .cloud import DecoratedPointCloud
from .metrics import ProbeFunction
from .o3 import IrrepLabel
from .serialize import dumps_decimal

__all__ = [
    "PROTOCOL_VERSION",
    "ProtocolError",
    "ProbeSession",
    "RemoteProbeFunction",
    "cloud_to_wire",
    "cloud_from_wire",
    "serve_stdio",
    "serve_tcp",
    "connect_tcp",
    "connect_subprocess",
]

PROTOCOL_VERSION = 1

_ID_RE = re.compile(r'"id"\s*:\s*(\d+)')


class ProtocolError(RuntimeError):
    """Fatal session-level failure: version mismatch, schema drift, dead peer."""


def cloud_to_wire(x: DecoratedPointCloud) -> dict:
    payload: dict = {"positions": x.positions}
    if x.scalar_attrs:
        payload["scalar_attrs"] = dict(x.scalar_attrs)
    if x.vector_attrs:
        payload["vector_attrs"] = dict(x.vector_attrs)
    if x.cell is not None:
        payload["cell"] = x.cell
    if x.info:
        payload["info"] = dict(x.info)
    return payload


def cloud_from_wire(payload: Mapping) -> DecoratedPointCloud:
    return DecoratedPointCloud(
        np.asarray(payload["positions"], dtype=float),
        {k: np.asarray(v, dtype=float) for k, v in payload.get("scalar_attrs", {}).items()},
        {k: np.asarray(v, dtype=float) for k, v in payload.get("vector_attrs", {}).items()},
        None if payload.get("cell") is None else np.asarray(payload["cell"], dtype=float),
        {k: float(v) for k, v in payload.get("info", {}).items()},
    )


class ProbeSession:
    """Server-side session logic, independent of any transport.

    Feed it request lines; it returns response lines (or None for shutdown).
    Keeping this pure makes the TCP and stdio servers one loop each and lets
    tests replay transcripts byte for byte.
    """

    def __init__(
        self,
        model: Callable[[DecoratedPointCloud], Mapping[str, np.ndarray]],
        taps: Mapping[str, int],
        stateless: bool = True,
    ):
        if not taps:
            raise ValueError("tap schema must be non-empty")
        self.model = model
        self.taps = dict(taps)
        self.stateless = stateless

    def hello_line(self) -> str:
        return dumps_decimal(
            {
                "type": "hello",
                "version": PROTOCOL_VERSION,
                "taps": self.taps,
                "stateless": self.stateless,
            }
        )

    def _evaluate(self, cloud_payload: Mapping, taps: Sequence[str]) -> dict[str, np.ndarray]:
        cloud = cloud_from_wire(cloud_payload)
        out = self.model(cloud)
        vectors = {}
        for name in taps:
            if name not in self.taps:
                raise ValueError(f"unknown tap {name!r}; served taps: {sorted(self.taps)}")
            v = np.asarray(out[name], dtype=float).ravel()
            if v.size != self.taps[name]:
                raise ProtocolError(
                    f"tap {name!r} returned dimension {v.size}, declared {self.taps[name]}"
                )
            vectors[name] = v
        return vectors

    def handle_line(self, line: str) -> str | None:
        """One response line per request line; None means shut the session down."""
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
                return dumps_decimal(
                    {"type": "result", "id": rid,
                     "vectors": self._evaluate(msg["cloud"], taps)}
                )
            if msg.get("type") == "probe_batch":
                return dumps_decimal(
                    {"type": "result", "id": rid,
                     "vectors_list": [self._evaluate(c, taps) for c in msg["clouds"]]}
                )
            raise ValueError(f"unknown message type {msg.get('type')!r}")
        except ProtocolError:
            raise  # schema drift is fatal, not a per-request error
        except Exception as exc:  # user-model failures stay isolated per request
            return dumps_decimal({"type": "result", "id": rid, "error": str(exc)})


def serve_stdio(session: ProbeSession, stdin: TextIO = None, stdout: TextIO = None) -> None:
    """Run one session over text streams until shutdown or EOF."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    stdout.write(session.hello_line() + "\n")
    stdout.flush()
    for line in stdin:
        if not line.strip():
            continue
        response = session.handle_line(line)
        if response is None:
            break
        stdout.write(response + "\n")
        stdout.flush()


def serve_tcp(session_factory: Callable[[], ProbeSession], host: str = "127.0.0.1",
              port: int = 0):
    """TCP server, one session per connection; returns (server, bound_port).

    Call server.serve_forever() (typically on a thread) and server.shutdown()
    when done. port=0 binds an ephemeral port.
    """

    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            session = session_factory()
            out = self.wfile
            out.write((session.hello_line() + "\n").encode())
            out.flush()
            for raw in self.rfile:
                line = raw.decode()
                if not line.strip():
                    continue
                response = session.handle_line(line)
                if response is None:
                    break
                out.write((response + "\n").encode())
                out.flush()

    class Server(socketserver.ThreadingTCPServer):
        allow_reuse_address = True
        daemon_threads = True

    server = Server((host, port), Handler)
    return server, server.server_address[1]


class RemoteProbeFunction:
    """ProbeFunction-compatible client over a protocol session.

    Synchronous: at most one in-flight request. Dimensions are checked against
    the handshake schema on every response.
    """

    def __init__(self, reader: TextIO, writer: TextIO,
                 declared_irreps: Mapping[str, IrrepLabel] | None = None,
                 close=None):
        self._reader = reader
        self._writer = writer
        self._close = close
        self._next_id = 0
        hello_line = reader.readline()
        if not hello_line:
            raise ProtocolError("connection closed before handshake")
        hello = json.loads(hello_line)
        if hello.get("type") != "hello":
            raise ProtocolError(f"expected hello frame, got {hello.get('type')!r}")
        if hello.get("version") != PROTOCOL_VERSION:
            raise ProtocolError(
                f"protocol version mismatch: server speaks {hello.get('version')}, "
                f"this client requires {PROTOCOL_VERSION}"
            )
        self.taps: dict[str, int] = {k: int(v) for k, v in hello["taps"].items()}
        self.stateless = bool(hello.get("stateless", False))
        self.declared_irreps = dict(declared_irreps or {})

    def _roundtrip(self, request: dict) -> dict:
        self._writer.write(dumps_decimal(request) + "\n")
        self._writer.flush()
        line = self._reader.readline()
        if not line:
            raise ProtocolError("server closed the connection mid-request")
        response = json.loads(line)
        if response.get("id") != request["id"]:
            raise ProtocolError(
                f"response id {response.get('id')} does not match request {request['id']}"
            )
        if response.get("error"):
            raise RuntimeError(f"remote probe error: {response['error']}")
        return response

    def _check(self, vectors: Mapping[str, Sequence[float]]) -> dict[str, np.ndarray]:
        out = {}
        for name, vals in vectors.items():
            v = np.asarray(vals, dtype=float)
            if v.size != self.taps[name]:
                raise ProtocolError(
                    f"tap {name!r} dimension changed mid-session: "
                    f"{v.size} != {self.taps[name]}"
                )
            out[name] = v
        return out

    def __call__(self, x: DecoratedPointCloud) -> dict[str, np.ndarray]:
        self._next_id += 1
        response = self._roundtrip(
            {"type": "probe", "id": self._next_id,
             "taps": sorted(self.taps), "cloud": cloud_to_wire(x)}
        )
        return self._check(response["vectors"])

    def probe_batch(self, clouds: Sequence[DecoratedPointCloud]) -> list[dict[str, np.ndarray]]:
        self._next_id += 1
        response = self._roundtrip(
            {"type": "probe_batch", "id": self._next_id,
             "taps": sorted(self.taps),
             "clouds": [cloud_to_wire(c) for c in clouds]}
        )
        return [self._check(v) for v in response["vectors_list"]]

    def as_probe(self) -> ProbeFunction:
        return ProbeFunction(self.__call__, self.declared_irreps)

    def close(self) -> None:
        try:
            self._writer.write(dumps_decimal({"type": "shutdown"}) + "\n")
            self._writer.flush()
        except (OSError, ValueError):
            pass
        if self._close is not None:
            self._close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def connect_tcp(host: str, port: int,
                declared_irreps: Mapping[str, IrrepLabel] | None = None) -> RemoteProbeFunction:
    sock = socket.create_connection((host, port))
    reader = sock.makefile("r")
    writer = sock.makefile("w")

    def close():
        reader.close()
        writer.close()
        sock.close()

    return RemoteProbeFunction(reader, writer, declared_irreps, close)


def connect_subprocess(argv: Sequence[str],
                       declared_irreps: Mapping[str, IrrepLabel] | None = None
                       ) -> RemoteProbeFunction:
    """Spawn a stdio server process and attach a client to its pipes."""
    proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True)

    def close():
        try:
            proc.stdin.close()
        except OSError:
            pass
        proc.wait(timeout=10)

    return RemoteProbeFunction(proc.stdout, proc.stdin, declared_irreps, close)
