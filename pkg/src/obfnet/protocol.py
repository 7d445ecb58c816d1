"""Length-prefixed binary protocol between edge devices and the backend.

Every frame is a u32 little-endian byte count followed by that many
bytes.  Three frame bodies exist (all integers little-endian):

    request   "OBFR" | u8 version | u64 request_id | u8 rank
              | rank * u32 dims | prod(dims) * f32 payload
    response  "OBFS" | u8 version | u64 request_id | u16 label
              | u16 num_classes | num_classes * f32 probabilities
    error     "OBFE" | u8 version | u64 request_id | u16 code

A request carries a single sample, raw or obfuscated; nothing in the
frame indicates which, and the backend has no way to tell.  The server
answers each connection's requests in order and never reorders across a
connection.  Malformed frames produce an error frame and the connection
stays open; oversized frames produce an error frame and a close.

Example request frame for a 2x2 sample, request id 7 (hex):

    11 00 00 00            length = 17
    4f 42 46 52            "OBFR"
    01                     version
    07 00 00 00 00 00 00 00
    02                     rank
    02 00 00 00  02 00 00 00
    ... 16 payload bytes ...
"""

from __future__ import annotations

import socket
import socketserver
import struct
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import modelio
from .engine import Network
from .errors import DataError, ProtocolError
from .manifest import ObfSetManifest

PROTOCOL_VERSION = 1
REQUEST_MAGIC = b"OBFR"
RESPONSE_MAGIC = b"OBFS"
ERROR_MAGIC = b"OBFE"

DEFAULT_FRAME_CAP = 16 * 1024 * 1024
DEFAULT_TIMEOUT = 10.0

ERR_BAD_MAGIC = 1
ERR_BAD_VERSION = 2
ERR_MALFORMED = 3
ERR_SHAPE_MISMATCH = 4
ERR_OVERSIZED = 5
ERR_INTERNAL = 6

ERROR_NAMES = {
    ERR_BAD_MAGIC: "bad magic",
    ERR_BAD_VERSION: "unsupported version",
    ERR_MALFORMED: "malformed frame",
    ERR_SHAPE_MISMATCH: "sample shape does not match model input",
    ERR_OVERSIZED: "frame exceeds size cap",
    ERR_INTERNAL: "internal server error",
}


def encode_request(request_id: int, sample: np.ndarray) -> bytes:
    sample = np.ascontiguousarray(sample, dtype="<f4")
    head = REQUEST_MAGIC + struct.pack("<BQB", PROTOCOL_VERSION, request_id,
                                       sample.ndim)
    dims = b"".join(struct.pack("<I", d) for d in sample.shape)
    return head + dims + sample.tobytes()


def decode_request(body: bytes):
    """Returns (request_id, sample array). Raises ProtocolError with a code."""
    if len(body) < 4:
        raise ProtocolError("frame shorter than a magic field", ERR_MALFORMED)
    if body[:4] != REQUEST_MAGIC:
        raise ProtocolError(f"bad request magic {body[:4]!r}", ERR_BAD_MAGIC)
    if len(body) < 14:
        raise ProtocolError("truncated request header", ERR_MALFORMED)
    version, request_id, rank = struct.unpack("<BQB", body[4:14])
    if version != PROTOCOL_VERSION:
        raise ProtocolError(f"unsupported protocol version {version}", ERR_BAD_VERSION)
    need = 14 + 4 * rank
    if len(body) < need:
        raise ProtocolError("truncated dims", ERR_MALFORMED)
    dims = struct.unpack(f"<{rank}I", body[14:need]) if rank else ()
    count = 1
    for d in dims:
        count *= d
    if len(body) != need + 4 * count:
        raise ProtocolError(
            f"payload is {len(body) - need} bytes but dims {dims} require "
            f"{4 * count}", ERR_MALFORMED)
    payload = np.frombuffer(body, dtype="<f4", offset=need).reshape(dims).copy()
    return request_id, payload


def encode_response(request_id: int, label: int, probs: np.ndarray) -> bytes:
    probs = np.ascontiguousarray(probs, dtype="<f4").ravel()
    return (RESPONSE_MAGIC
            + struct.pack("<BQHH", PROTOCOL_VERSION, request_id, label, probs.size)
            + probs.tobytes())


def decode_response(body: bytes):
    if len(body) < 4:
        raise ProtocolError("frame shorter than a magic field", ERR_MALFORMED)
    if body[:4] == ERROR_MAGIC:
        _, request_id, code = struct.unpack("<BQH", body[4:15])
        raise ProtocolError(
            f"server error for request {request_id}: "
            f"{ERROR_NAMES.get(code, 'unknown')} (code {code})", code)
    if body[:4] != RESPONSE_MAGIC:
        raise ProtocolError(f"bad response magic {body[:4]!r}", ERR_BAD_MAGIC)
    version, request_id, label, n = struct.unpack("<BQHH", body[4:17])
    if version != PROTOCOL_VERSION:
        raise ProtocolError(f"unsupported protocol version {version}", ERR_BAD_VERSION)
    if len(body) != 17 + 4 * n:
        raise ProtocolError("response payload length mismatch", ERR_MALFORMED)
    probs = np.frombuffer(body, dtype="<f4", offset=17).copy()
    return request_id, label, probs


def encode_error(request_id: int, code: int) -> bytes:
    return ERROR_MAGIC + struct.pack("<BQH", PROTOCOL_VERSION, request_id, code)


def describe_frame(body: bytes) -> dict:
    """Structural schema of a frame, excluding payload values.

    Two frames are schema-identical iff these dicts are equal; used to
    demonstrate obfuscated and raw requests are indistinguishable by
    structure.
    """
    if len(body) < 4:
        return {"kind": "short", "length": len(body)}
    magic = body[:4]
    desc = {"magic": magic.decode("ascii", "replace"), "length": len(body)}
    if magic == REQUEST_MAGIC:
        version, request_id, rank = struct.unpack("<BQB", body[4:14])
        dims = struct.unpack(f"<{rank}I", body[14:14 + 4 * rank]) if rank else ()
        desc.update(kind="request", version=version, rank=rank, dims=dims,
                    header_bytes=14 + 4 * rank,
                    payload_bytes=len(body) - 14 - 4 * rank)
    elif magic == RESPONSE_MAGIC:
        version, _, label, n = struct.unpack("<BQHH", body[4:17])
        desc.update(kind="response", version=version, num_classes=n,
                    header_bytes=17, payload_bytes=len(body) - 17)
    elif magic == ERROR_MAGIC:
        version, _, code = struct.unpack("<BQH", body[4:15])
        desc.update(kind="error", version=version, code=code)
    return desc


def _read_exact(sock: socket.socket, n: int) -> bytes | None:
    """Read exactly n bytes; None on a clean EOF at a frame boundary."""
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            if remaining == n:
                return None
            raise ProtocolError("connection closed mid-frame", ERR_MALFORMED)
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket, cap=DEFAULT_FRAME_CAP):
    """Returns the frame body, None on clean EOF; oversized raises."""
    header = _read_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack("<I", header)
    if length > cap:
        raise ProtocolError(f"frame of {length} bytes exceeds cap {cap}",
                            ERR_OVERSIZED)
    return _read_exact(sock, length)


def write_frame(sock: socket.socket, body: bytes):
    sock.sendall(struct.pack("<I", len(body)) + body)


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        server = self.server
        sock = self.request
        while True:
            try:
                body = read_frame(sock, cap=server.frame_cap)
            except ProtocolError as exc:
                if exc.code == ERR_OVERSIZED:
                    write_frame(sock, encode_error(0, ERR_OVERSIZED))
                return  # close on oversize or mid-frame EOF
            if body is None:
                return
            write_frame(sock, self._respond(server.model, body))

    @staticmethod
    def _respond(model: Network, body: bytes) -> bytes:
        try:
            request_id, sample = decode_request(body)
        except ProtocolError as exc:
            return encode_error(0, exc.code or ERR_MALFORMED)
        if sample.shape != model.input_shape:
            return encode_error(request_id, ERR_SHAPE_MISMATCH)
        try:
            probs = model.forward(sample[None], training=False)[0]
        except Exception:
            return encode_error(request_id, ERR_INTERNAL)
        label = int(probs.argmax())
        return encode_response(request_id, label, probs)


class _TCPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class InferenceServer:
    """Serves a loaded model over TCP; one handler thread per connection.

    The model is shared read-only across connections (inference-mode
    forward never writes layer state).  Requests within one connection
    are answered strictly in order.
    """

    def __init__(self, model, bind=("127.0.0.1", 0), frame_cap=DEFAULT_FRAME_CAP):
        if isinstance(model, (str, Path)):
            model = modelio.load(model)
        self._server = _TCPServer(tuple(bind), _Handler)
        self._server.model = model
        self._server.frame_cap = frame_cap
        self._thread = None
        self.model = model

    @property
    def address(self):
        return self._server.server_address

    def start(self):
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        daemon=True)
        self._thread.start()
        return self

    def serve_forever(self):
        self._server.serve_forever()

    def stop(self):
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


@dataclass
class InferenceResult:
    request_id: int
    label: int
    probabilities: np.ndarray


class RemoteClient:
    """Blocking client for the inference protocol."""

    def __init__(self, address, timeout=DEFAULT_TIMEOUT, frame_cap=DEFAULT_FRAME_CAP):
        self.address = parse_address(address)
        self.timeout = timeout
        self.frame_cap = frame_cap
        self._sock = None
        self._next_id = 1

    def connect(self):
        if self._sock is None:
            self._sock = socket.create_connection(self.address, timeout=self.timeout)
        return self

    def close(self):
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    def __enter__(self):
        return self.connect()

    def __exit__(self, *exc):
        self.close()

    def infer(self, sample, request_id=None) -> InferenceResult:
        self.connect()
        if request_id is None:
            request_id = self._next_id
            self._next_id += 1
        write_frame(self._sock, encode_request(request_id, sample))
        body = read_frame(self._sock, cap=self.frame_cap)
        if body is None:
            raise ProtocolError("server closed the connection", ERR_MALFORMED)
        rid, label, probs = decode_response(body)
        return InferenceResult(request_id=rid, label=label, probabilities=probs)


def parse_address(address):
    if isinstance(address, (tuple, list)):
        return (address[0], int(address[1]))
    host, _, port = str(address).rpartition(":")
    if not host or not port.isdigit():
        raise DataError(f"cannot parse address {address!r}; expected host:port")
    return (host, int(port))


def select_obfnet(set_size: int, rng) -> int:
    """Uniform fresh draw of a member index for one sample."""
    if set_size < 1:
        raise DataError("cannot select from an empty obfuscator set")
    return int(rng.integers(set_size))


@dataclass
class EdgeConfig:
    server: str
    manifest_path: str | None = None
    mode: str = "opt-out"
    selection_seed: int = 0
    timeout: float = DEFAULT_TIMEOUT

    def __post_init__(self):
        if self.mode not in ("opt-in", "opt-out"):
            raise DataError(f"mode must be opt-in or opt-out, got {self.mode!r}")
        if self.mode == "opt-in" and not self.manifest_path:
            raise DataError("opt-in mode requires an obfuscator-set manifest")


class EdgeDevice:
    """An edge endpoint that may obfuscate samples before transmission.

    In opt-in mode a member obfuscator is drawn uniformly at random for
    every sample; in opt-out mode samples go out raw.  Both modes build
    requests through the same encoder, so the frames differ only in
    payload values.
    """

    def __init__(self, cfg: EdgeConfig):
        self.cfg = cfg
        self.obfnets = []
        if cfg.mode == "opt-in":
            manifest_path = Path(cfg.manifest_path)
            manifest = ObfSetManifest.load(manifest_path)
            self.obfnets = manifest.load_networks(manifest_path.parent)
            if not self.obfnets:
                raise DataError("opt-in mode requires a non-empty obfuscator set")
        self._rng = np.random.default_rng(cfg.selection_seed)
        self._client = RemoteClient(cfg.server, timeout=cfg.timeout)

    def prepare(self, sample: np.ndarray) -> np.ndarray:
        """The payload that would be transmitted for this sample."""
        if self.cfg.mode == "opt-out":
            return np.ascontiguousarray(sample, dtype=np.float32)
        index = select_obfnet(len(self.obfnets), self._rng)
        return self.obfnets[index].forward(sample[None], training=False)[0]

    def infer(self, sample) -> InferenceResult:
        return self._client.infer(self.prepare(sample))

    def close(self):
        self._client.close()

    def __enter__(self):
        self._client.connect()
        return self

    def __exit__(self, *exc):
        self.close()


def edge_infer(cfg: EdgeConfig, sample) -> InferenceResult:
    """One-shot convenience wrapper: connect, infer, close."""
    device = EdgeDevice(cfg)
    try:
        return device.infer(sample)
    finally:
        device.close()
