"""Wrap any Python callable as a probe-protocol server.

The adapter speaks the newline-delimited JSON probe protocol (version 1)
documented in the diagnostics toolkit's docs/protocol.md, so any model — a
plain function, a torch module behind a closure, anything returning named
flat arrays — can be probed for equivariance from another process without
that process importing this code.
"""

from .server import (
    PROTOCOL_VERSION,
    Cloud,
    ContractError,
    WrappedModel,
    serve,
    serve_tcp,
)

__version__ = "1.0.0"

__all__ = [
    "PROTOCOL_VERSION",
    "Cloud",
    "ContractError",
    "WrappedModel",
    "serve",
    "serve_tcp",
]
