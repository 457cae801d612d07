"""TCP client and wire codec for remote denoiser evaluation.

Frames are little-endian.  Request:

    "DCR1" | u32 header_len | UTF-8 JSON header | batch*dim float32 payload

with header {"batch": B, "dim": d, "t": t, "param": "eps"|"x0"|"v",
"cond": int|null}.  Response:

    "DCS1" | u8 status | u32 header_len | UTF-8 JSON header | body

where status 0 carries a batch*dim float32 payload and any other status
carries u32 msg_len + UTF-8 message.  Status codes: 1 malformed frame,
2 protocol-version mismatch, 3 dimension mismatch, 4 evaluation failure.
The server keeps a connection usable after well-framed but invalid requests;
only an unrecognizable magic forfeits the framing.
"""
from __future__ import annotations

import json
import socket
import struct
import time

import numpy as np

from .errors import (
    ConnectionFailure,
    ContractError,
    DimensionMismatch,
    ProtocolError,
    ServerError,
    VersionMismatch,
)
from .model import DenoisingModel, ModelOutput

MAGIC_REQUEST = b"DCR1"
MAGIC_RESPONSE = b"DCS1"

STATUS_OK = 0
STATUS_MALFORMED = 1
STATUS_VERSION = 2
STATUS_DIMENSION = 3
STATUS_EVAL = 4

MAX_HEADER = 1 << 20

# wire names for the parameterizations
_TO_WIRE = {"noise_pred": "eps", "data_pred": "x0", "v_pred": "v"}
_FROM_WIRE = {w: p for p, w in _TO_WIRE.items()}


def encode_request(x: np.ndarray, t: float, param: str, cond: int | None = None) -> bytes:
    if param not in _TO_WIRE:
        raise ContractError(f"unknown parameterization {param!r}")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ProtocolError(f"batch must be a non-empty (B, d) array, got shape {x.shape}")
    if cond is not None and not isinstance(cond, int):
        raise ContractError(f"cond must be an int or None, got {type(cond).__name__}")
    header = json.dumps(
        {
            "batch": x.shape[0],
            "dim": x.shape[1],
            "t": float(t),
            "param": _TO_WIRE[param],
            "cond": cond,
        }
    ).encode("utf-8")
    payload = np.ascontiguousarray(x, dtype="<f4").tobytes()
    return MAGIC_REQUEST + struct.pack("<I", len(header)) + header + payload


def decode_request(read_exactly) -> tuple[dict, np.ndarray]:
    """Parse one request frame from a read_exactly(n) -> bytes callable.

    Raises VersionMismatch on a foreign magic (framing is lost after that) and
    ProtocolError for anything malformed inside a recognizable frame.
    """
    magic = read_exactly(4)
    if magic != MAGIC_REQUEST:
        raise VersionMismatch(f"bad request magic {magic!r}")
    (hlen,) = struct.unpack("<I", read_exactly(4))
    if hlen == 0 or hlen > MAX_HEADER:
        raise ProtocolError(f"header length {hlen} out of bounds")
    try:
        header = json.loads(read_exactly(hlen).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ProtocolError(f"unparseable request header: {e}") from e
    if not isinstance(header, dict):
        raise ProtocolError("request header must be a JSON object")
    missing = {"batch", "dim", "t", "param"} - header.keys()
    if missing:
        raise ProtocolError(f"request header missing {sorted(missing)}")
    batch, dim = header["batch"], header["dim"]
    if not isinstance(batch, int) or not isinstance(dim, int) or batch < 1 or dim < 1:
        raise ProtocolError(f"bad batch/dim: {batch!r}/{dim!r}")
    if header["param"] not in _FROM_WIRE:
        raise ProtocolError(f"unknown wire parameterization {header['param']!r}")
    cond = header.get("cond")
    if cond is not None and not isinstance(cond, int):
        raise ProtocolError(f"cond must be an integer or null, got {cond!r}")
    if not isinstance(header["t"], (int, float)):
        raise ProtocolError(f"t must be a number, got {header['t']!r}")
    raw = read_exactly(batch * dim * 4)
    x = np.frombuffer(raw, dtype="<f4").reshape(batch, dim)
    return header, x


def encode_response(param: str, values: np.ndarray) -> bytes:
    if param not in _TO_WIRE:
        raise ContractError(f"unknown parameterization {param!r}")
    header = json.dumps({"param": _TO_WIRE[param]}).encode("utf-8")
    payload = np.ascontiguousarray(np.atleast_2d(values), dtype="<f4").tobytes()
    return MAGIC_RESPONSE + struct.pack("<BI", STATUS_OK, len(header)) + header + payload


def encode_error(status: int, message: str) -> bytes:
    if status == STATUS_OK:
        raise ContractError("error frames need a non-zero status")
    msg = message.encode("utf-8")
    return MAGIC_RESPONSE + struct.pack("<BI", status, 2) + b"{}" + struct.pack("<I", len(msg)) + msg


def decode_response(read_exactly, batch: int, dim: int) -> tuple[str, np.ndarray]:
    """Parse one response frame; returns (param, float32 values as float64)."""
    magic = read_exactly(4)
    if magic != MAGIC_RESPONSE:
        raise VersionMismatch(f"bad response magic {magic!r}")
    status, hlen = struct.unpack("<BI", read_exactly(5))
    if hlen > MAX_HEADER:
        raise ProtocolError(f"header length {hlen} out of bounds")
    try:
        header = json.loads(read_exactly(hlen).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ProtocolError(f"unparseable response header: {e}") from e
    if status == STATUS_OK:
        wire_param = header.get("param") if isinstance(header, dict) else None
        if wire_param not in _FROM_WIRE:
            raise ProtocolError(f"response carries unknown parameterization {wire_param!r}")
        raw = read_exactly(batch * dim * 4)
        values = np.frombuffer(raw, dtype="<f4").reshape(batch, dim)
        return _FROM_WIRE[wire_param], values
    (mlen,) = struct.unpack("<I", read_exactly(4))
    if mlen > MAX_HEADER:
        raise ProtocolError(f"error message length {mlen} out of bounds")
    message = read_exactly(mlen).decode("utf-8", errors="replace")
    if status == STATUS_VERSION:
        raise VersionMismatch(message)
    if status == STATUS_DIMENSION:
        raise DimensionMismatch(message)
    raise ServerError(status, message)


def _parse_endpoint(endpoint) -> tuple[str, int]:
    if isinstance(endpoint, tuple):
        return endpoint[0], int(endpoint[1])
    host, _, port = str(endpoint).rpartition(":")
    if not host or not port.isdigit():
        raise ContractError(f"endpoint must be host:port, got {endpoint!r}")
    return host, int(port)


class _Connection:
    def __init__(self, host: str, port: int, timeout: float):
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as e:
            raise ConnectionFailure(f"cannot connect to {host}:{port}: {e}") from e

    def read_exactly(self, n: int) -> bytes:
        chunks = []
        remaining = n
        while remaining > 0:
            try:
                chunk = self.sock.recv(remaining)
            except OSError as e:
                raise ConnectionFailure(f"recv failed: {e}") from e
            if not chunk:
                raise ConnectionFailure("connection closed mid-frame")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def send(self, data: bytes):
        try:
            self.sock.sendall(data)
        except OSError as e:
            raise ConnectionFailure(f"send failed: {e}") from e

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass


class RemoteDenoiser(DenoisingModel):
    """DenoisingModel backed by a TCP endpoint; reuses one connection when it can."""

    def __init__(self, endpoint, dim: int, timeout: float = 10.0):
        self.host, self.port = _parse_endpoint(endpoint)
        self.dim = int(dim)
        self.timeout = timeout
        self._conn: _Connection | None = None

    def _connection(self) -> _Connection:
        if self._conn is None:
            self._conn = _Connection(self.host, self.port, self.timeout)
        return self._conn

    def close(self):
        if self._conn is not None:
            self._conn.close()
            self._conn = None

    def evaluate(self, x: np.ndarray, t: float, cond: int | None = None) -> ModelOutput:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise DimensionMismatch(f"x has dim {x.shape[-1]}, endpoint serves {self.dim}")
        flat = np.atleast_2d(x.reshape(-1, self.dim))
        request = encode_request(flat, t, "noise_pred", cond)
        conn = self._connection()
        try:
            conn.send(request)
            param, values = decode_response(conn.read_exactly, flat.shape[0], self.dim)
        except Exception:
            self.close()
            raise
        return ModelOutput(param=param, value=values.astype(np.float64).reshape(x.shape), t=float(t))


def remote_evaluate(endpoint, x, t: float, cond: int | None = None) -> ModelOutput:
    """One-shot evaluation against a remote endpoint."""
    x = np.asarray(x, dtype=np.float64)
    model = RemoteDenoiser(endpoint, dim=x.shape[-1])
    try:
        return model.evaluate(x, t, cond)
    finally:
        model.close()


def serve_check(endpoint, dim: int = 1, t: float = 0.5, timeout: float = 5.0) -> dict:
    """Round-trip a tiny request; returns the response parameterization and latency."""
    model = RemoteDenoiser(endpoint, dim=dim, timeout=timeout)
    begin = time.perf_counter()
    try:
        out = model.evaluate(np.zeros(dim), t)
    finally:
        model.close()
    return {
        "endpoint": f"{model.host}:{model.port}",
        "param": out.param,
        "dim": dim,
        "latency_s": time.perf_counter() - begin,
    }
