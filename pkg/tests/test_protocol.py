import io
import json
import os
import threading

import numpy as np
import pytest

from equicheck import (
    DecoratedPointCloud,
    IrrepLabel,
    ProbeSession,
    ProtocolError,
    RemoteProbeFunction,
    cloud_from_wire,
    cloud_to_wire,
    connect_tcp,
    equivariance_error,
    serve_stdio,
    serve_tcp,
)
from equicheck.serialize import dumps_decimal

TRANSCRIPT = os.path.join(os.path.dirname(__file__), "..", "docs", "golden_transcript.txt")


def r2_model(x):
    u = x.positions - x.centroid
    return {"r2": np.array([float(np.sum(u * u))])}


def r2_session():
    return ProbeSession(r2_model, {"r2": 1}, stateless=True)


def pipe_client(session, **kwargs):
    """Drive a session through in-memory text streams, no sockets."""
    hello = session.hello_line() + "\n"
    reader = io.StringIO(hello)

    class Writer(io.StringIO):
        def flush(inner):
            pending = inner.getvalue()
            if not pending:
                return
            inner.truncate(0)
            inner.seek(0)
            for line in pending.splitlines():
                response = session.handle_line(line)
                if response is not None:
                    pos = reader.tell()
                    reader.seek(0, io.SEEK_END)
                    reader.write(response + "\n")
                    reader.seek(pos)

    return RemoteProbeFunction(reader, Writer(), **kwargs)


@pytest.fixture
def cloud(rng):
    return DecoratedPointCloud(rng.normal(size=(5, 3)))


class TestWireFormat:
    def test_cloud_round_trip(self, rng):
        x = DecoratedPointCloud(
            rng.normal(size=(4, 3)),
            {"species": np.array([1.0, 6.0, 6.0, 8.0])},
            {"moment": rng.normal(size=(4, 3))},
            info={"Q": 0.25},
        )
        y = cloud_from_wire(json.loads(dumps_decimal(cloud_to_wire(x))))
        assert np.array_equal(x.positions, y.positions)
        assert np.array_equal(x.scalar_attrs["species"], y.scalar_attrs["species"])
        assert np.array_equal(x.vector_attrs["moment"], y.vector_attrs["moment"])
        assert y.info == {"Q": 0.25}

    def test_decimals_survive_17_digits(self):
        x = DecoratedPointCloud(np.array([[0.1, 1 / 3, np.pi]]))
        y = cloud_from_wire(json.loads(dumps_decimal(cloud_to_wire(x))))
        assert np.array_equal(x.positions, y.positions)


class TestSession:
    def test_echo_round_trip(self, cloud):
        with pipe_client(r2_session()) as remote:
            assert remote.taps == {"r2": 1}
            assert remote.stateless
            local = r2_model(cloud)["r2"]
            assert np.max(np.abs(remote(cloud)["r2"] - local)) <= 1e-15

    def test_remote_invariant_error_small(self, cloud, grid2):
        with pipe_client(
            r2_session(), declared_irreps={"r2": IrrepLabel(0, +1)}
        ) as remote:
            a = equivariance_error(
                remote.as_probe(), "r2", IrrepLabel(0, +1), cloud, grid2
            )
            assert a <= 1e-8

    def test_batch_matches_single(self, rng):
        clouds = [DecoratedPointCloud(rng.normal(size=(4, 3))) for _ in range(3)]
        with pipe_client(r2_session()) as remote:
            batch = remote.probe_batch(clouds)
            for c, vecs in zip(clouds, batch):
                assert np.array_equal(vecs["r2"], remote(c)["r2"])

    def test_error_isolated_per_request(self, cloud):
        calls = {"n": 0}

        def flaky(x):
            calls["n"] += 1
            if calls["n"] == 1:
                raise RuntimeError("transient failure")
            return r2_model(x)

        with pipe_client(ProbeSession(flaky, {"r2": 1})) as remote:
            with pytest.raises(RuntimeError, match="transient failure"):
                remote(cloud)
            # session survives: the next request succeeds
            assert remote(cloud)["r2"].shape == (1,)

    def test_unknown_tap_is_request_error(self, cloud):
        session = r2_session()
        line = dumps_decimal(
            {"type": "probe", "id": 1, "taps": ["nope"], "cloud": cloud_to_wire(cloud)}
        )
        response = json.loads(session.handle_line(line))
        assert "unknown tap" in response["error"]
        assert response["id"] == 1

    def test_malformed_frame_recovers_id(self):
        session = r2_session()
        response = json.loads(session.handle_line('{"type": "probe", "id": 7, bad'))
        assert response["id"] == 7
        assert "malformed" in response["error"]

    def test_unknown_type_is_request_error(self):
        session = r2_session()
        response = json.loads(session.handle_line('{"type": "dance", "id": 2}'))
        assert "unknown message type" in response["error"]

    def test_shutdown_returns_none(self):
        assert r2_session().handle_line('{"type": "shutdown"}') is None

    def test_dimension_drift_is_fatal(self, cloud):
        session = ProbeSession(lambda x: {"r2": np.zeros(2)}, {"r2": 1})
        line = dumps_decimal(
            {"type": "probe", "id": 1, "taps": ["r2"], "cloud": cloud_to_wire(cloud)}
        )
        with pytest.raises(ProtocolError):
            session.handle_line(line)

    def test_empty_tap_schema_rejected(self):
        with pytest.raises(ValueError):
            ProbeSession(r2_model, {})

    def test_deterministic_responses(self, cloud):
        session = r2_session()
        line = dumps_decimal(
            {"type": "probe", "id": 1, "taps": ["r2"], "cloud": cloud_to_wire(cloud)}
        )
        assert session.handle_line(line) == session.handle_line(line)


class TestClient:
    def test_version_mismatch_rejected(self):
        reader = io.StringIO('{"type":"hello","version":2,"taps":{"r2":1}}\n')
        with pytest.raises(ProtocolError, match="version"):
            RemoteProbeFunction(reader, io.StringIO())

    def test_missing_hello_rejected(self):
        reader = io.StringIO('{"type":"result","id":0}\n')
        with pytest.raises(ProtocolError, match="hello"):
            RemoteProbeFunction(reader, io.StringIO())

    def test_closed_before_handshake(self):
        with pytest.raises(ProtocolError, match="closed"):
            RemoteProbeFunction(io.StringIO(""), io.StringIO())

    def test_response_dimension_drift_fatal(self, cloud):
        hello = '{"type":"hello","version":1,"taps":{"r2":1},"stateless":true}\n'
        reply = '{"type":"result","id":1,"vectors":{"r2":[1.0,2.0]}}\n'
        remote = RemoteProbeFunction(io.StringIO(hello + reply), io.StringIO())
        with pytest.raises(ProtocolError, match="dimension"):
            remote(cloud)

    def test_id_mismatch_fatal(self, cloud):
        hello = '{"type":"hello","version":1,"taps":{"r2":1},"stateless":true}\n'
        reply = '{"type":"result","id":99,"vectors":{"r2":[1.0]}}\n'
        remote = RemoteProbeFunction(io.StringIO(hello + reply), io.StringIO())
        with pytest.raises(ProtocolError, match="id"):
            remote(cloud)


class TestTransports:
    def test_tcp_round_trip_matches_in_process(self, cloud, grid2):
        server, port = serve_tcp(r2_session)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            with connect_tcp("127.0.0.1", port) as remote:
                local = r2_model(cloud)["r2"]
                assert np.max(np.abs(remote(cloud)["r2"] - local)) <= 1e-12
                transformed = [
                    remote(DecoratedPointCloud(cloud.positions @ g.matrix().T))["r2"]
                    for g in grid2.nodes[:5]
                ]
                for t, g in zip(transformed, grid2.nodes[:5]):
                    direct = r2_model(
                        DecoratedPointCloud(cloud.positions @ g.matrix().T)
                    )["r2"]
                    assert np.max(np.abs(t - direct)) <= 1e-12
        finally:
            server.shutdown()
            server.server_close()

    def test_stdio_loop_round_trip(self, cloud):
        requests = [
            dumps_decimal(
                {"type": "probe", "id": 1, "taps": ["r2"], "cloud": cloud_to_wire(cloud)}
            ),
            "",  # blank lines are skipped
            dumps_decimal({"type": "shutdown"}),
            "this line must never be read",
        ]
        stdin = io.StringIO("\n".join(requests) + "\n")
        stdout = io.StringIO()
        serve_stdio(r2_session(), stdin=stdin, stdout=stdout)
        lines = stdout.getvalue().splitlines()
        assert len(lines) == 2  # hello + one result, nothing after shutdown
        assert json.loads(lines[0])["type"] == "hello"
        vec = json.loads(lines[1])["vectors"]["r2"]
        assert np.max(np.abs(np.asarray(vec) - r2_model(cloud)["r2"])) <= 1e-15


class TestGoldenTranscript:
    def test_session_replays_byte_for_byte(self):
        with open(TRANSCRIPT) as f:
            lines = [line.rstrip("\n") for line in f if line.strip()]
        session = r2_session()
        assert lines[0] == "< " + session.hello_line()
        i = 1
        while i < len(lines):
            assert lines[i].startswith("> ")
            response = session.handle_line(lines[i][2:])
            if i + 1 < len(lines) and lines[i + 1].startswith("< "):
                assert response == lines[i + 1][2:]
                i += 2
            else:
                assert response is None  # shutdown closes without a reply
                i += 1
