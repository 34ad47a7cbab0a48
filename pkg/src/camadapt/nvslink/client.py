"""Client side of the view-synthesis protocol."""

from __future__ import annotations

import itertools
import socket
import time

from .protocol import MAX_PAYLOAD, NvsRequest, NvsResponse, ProtocolError, decode_response_payload, encode_request, read_frame

DEFAULT_TIMEOUT_MS = 200.0


class RemoteError(Exception):
    """Base class for failures talking to the synthesis service."""


class RemoteTimeout(RemoteError):
    pass


class RemoteConnectionError(RemoteError):
    pass


class RemoteProtocolError(RemoteError):
    def __init__(self, err: ProtocolError):
        super().__init__(str(err))
        self.code = err.code


class RemoteServerError(RemoteError):
    """The service answered with a coded error response."""

    def __init__(self, resp: NvsResponse):
        super().__init__(f"{resp.error_code.name}: {resp.message}")
        self.code = resp.error_code
        self.response = resp


def parse_endpoint(endpoint) -> tuple[str, int]:
    if isinstance(endpoint, tuple):
        return endpoint[0], int(endpoint[1])
    host, sep, port = str(endpoint).rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"endpoint must look like host:port, got {endpoint!r}")
    return host or "127.0.0.1", int(port)


class NvsClient:
    """One persistent connection; not meant to be shared between threads."""

    _ids = itertools.count(1)

    def __init__(self, endpoint, timeout_ms: float = DEFAULT_TIMEOUT_MS, max_payload: int = MAX_PAYLOAD):
        self.address = parse_endpoint(endpoint)
        self.timeout_ms = timeout_ms
        self.max_payload = max_payload
        self._sock: socket.socket | None = None
        self._rfile = None

    def _connect(self, deadline: float) -> None:
        remaining = max(1e-3, deadline - time.monotonic())
        try:
            sock = socket.create_connection(self.address, timeout=remaining)
        except socket.timeout as exc:
            raise RemoteTimeout(f"connecting to {self.address} timed out") from exc
        except OSError as exc:
            raise RemoteConnectionError(f"cannot connect to {self.address}: {exc}") from exc
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._sock = sock
        self._rfile = sock.makefile("rb")

    def close(self) -> None:
        if self._rfile is not None:
            self._rfile.close()
        if self._sock is not None:
            self._sock.close()
        self._sock = self._rfile = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def synthesize(self, req: NvsRequest) -> NvsResponse:
        """Send one request and wait for its response.

        The returned response carries the monotonic round-trip time in
        ``latency_ms``. Any transport failure closes the connection; the
        next call reconnects.
        """
        if req.request_id == 0:
            req.request_id = next(self._ids)
        data = encode_request(req)
        t0 = time.monotonic()
        deadline = t0 + self.timeout_ms / 1e3
        try:
            if self._sock is None:
                self._connect(deadline)
            self._sock.settimeout(max(1e-3, deadline - time.monotonic()))
            self._sock.sendall(data)
            payload = read_frame(self._rfile, self.max_payload)
            if payload is None:
                raise RemoteConnectionError("service closed the connection")
            resp = decode_response_payload(payload)
        except socket.timeout as exc:
            self.close()
            raise RemoteTimeout(f"no response within {self.timeout_ms} ms") from exc
        except ProtocolError as exc:
            self.close()
            raise RemoteProtocolError(exc) from exc
        except RemoteError:
            self.close()
            raise
        except OSError as exc:
            self.close()
            raise RemoteConnectionError(str(exc)) from exc
        resp.latency_ms = (time.monotonic() - t0) * 1e3
        if not resp.ok:
            raise RemoteServerError(resp)
        if resp.request_id != req.request_id:
            self.close()
            raise RemoteProtocolError(ProtocolError(5, f"response id {resp.request_id} != {req.request_id}"))
        if len(resp.images) != len(req.targets) or any(
            img.shape[:2] != t.intrinsics.shape for img, t in zip(resp.images, req.targets)
        ):
            raise RemoteProtocolError(ProtocolError(5, "response images do not match the requested targets"))
        return resp


def synthesize_remote(endpoint, req: NvsRequest, timeout_ms: float = DEFAULT_TIMEOUT_MS) -> NvsResponse:
    """One-shot request over a fresh connection."""
    with NvsClient(endpoint, timeout_ms) as client:
        return client.synthesize(req)
