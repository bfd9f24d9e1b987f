"""Console entry point: serve a wrapped callable over stdio or TCP.

    pyprobe-serve pyprobe_client.examples:centroid_r2
    pyprobe-serve mypkg.mymodel:predict --tap energy=1 --tap forces=15 --tcp 7777

The model spec is `module:attribute`. The attribute may be a WrappedModel, a
zero-argument factory returning one, or a bare callable (then --tap is
required to declare the output schema).
"""

from __future__ import annotations

import argparse
import importlib
import sys

from .server import WrappedModel, serve, serve_tcp

__all__ = ["main"]


def _resolve(spec: str, tap_args: list[str]) -> WrappedModel:
    module_name, _, attr = spec.partition(":")
    if not module_name or not attr:
        raise SystemExit(f"error: model spec must be module:attribute, got {spec!r}")
    try:
        obj = getattr(importlib.import_module(module_name), attr)
    except (ImportError, AttributeError) as exc:
        raise SystemExit(f"error: cannot import {spec!r}: {exc}")
    if isinstance(obj, WrappedModel):
        return obj
    taps = {}
    for arg in tap_args:
        name, _, dim = arg.partition("=")
        try:
            taps[name] = int(dim)
        except ValueError:
            raise SystemExit(f"error: --tap needs name=dim, got {arg!r}")
    if not taps and callable(obj):
        candidate = obj()
        if isinstance(candidate, WrappedModel):
            return candidate
        raise SystemExit(
            "error: bare callables need at least one --tap name=dim declaration"
        )
    return WrappedModel(obj, taps)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pyprobe-serve",
        description="Serve a Python callable over the probe protocol.",
    )
    parser.add_argument("model", help="model spec as module:attribute")
    parser.add_argument("--tap", action="append", default=[], metavar="NAME=DIM",
                        help="declare an output tap (repeatable)")
    parser.add_argument("--tcp", type=int, metavar="PORT",
                        help="listen on TCP PORT instead of stdio (0 = ephemeral)")
    args = parser.parse_args(argv)

    model = _resolve(args.model, args.tap)
    if args.tcp is None:
        serve(model)
        return 0
    server, port = serve_tcp(model, port=args.tcp)
    print(f"listening on 127.0.0.1:{port}", file=sys.stderr, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
