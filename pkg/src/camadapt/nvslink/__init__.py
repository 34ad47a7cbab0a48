"""Remote novel-view synthesis: wire protocol, client and mock service."""

from .client import (
    DEFAULT_TIMEOUT_MS,
    NvsClient,
    RemoteConnectionError,
    RemoteError,
    RemoteProtocolError,
    RemoteServerError,
    RemoteTimeout,
    synthesize_remote,
)
from .protocol import (
    MAGIC,
    MAX_PAYLOAD,
    PROTOCOL_VERSION,
    ErrorCode,
    NvsRequest,
    NvsResponse,
    ProtocolError,
    SourceView,
    TargetCamera,
    decode_request,
    decode_response,
    encode_request,
    encode_response,
    request_size,
)
from .server import MockConfig, MockServer, mock_server

__all__ = [name for name in dir() if not name.startswith("_")]
