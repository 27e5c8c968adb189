"""Length-prefixed binary wire protocol for publisher, cache, and client.

Frame layout: 4-byte big-endian payload length, then the payload.  Payload
layout: 1-byte message type followed by fixed-order big-endian fields.
Variable-length data is length-prefixed (u16 for strings, u32 for blobs).
Every message round-trips bit-exactly through encode/decode.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import Union

from .crypto import Envelope
from .params import HASH_SIZE, PuzzleParams
from .puzzle import Challenge

# a chunk reply carries chunk_size + 32 bytes; this caps chunk_size at 256 MiB
MAX_FRAME = (256 << 20) + 4096

T_CONTENT_REQUEST = 1
T_REQUEST_BUNDLE = 2
T_CHUNK_REQUEST = 3
T_CHUNK_REPLY = 4
T_TOKEN_REPORT = 5
T_TOKEN_ACK = 6
T_ERROR = 7

E_NOT_FOUND = 1
E_CAPACITY = 2
E_BAD_REQUEST = 3
E_INTERNAL = 4


class WireError(Exception):
    """Malformed frame, unknown message type, or oversize payload."""


# --- primitive readers/writers ----------------------------------------------


def _pack_u8(v: int) -> bytes:
    return struct.pack(">B", v)


def _pack_u16(v: int) -> bytes:
    return struct.pack(">H", v)


def _pack_u32(v: int) -> bytes:
    return struct.pack(">I", v)


def _pack_u64(v: int) -> bytes:
    return struct.pack(">Q", v)


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise WireError("string too long")
    return _pack_u16(len(raw)) + raw


def _pack_blob(b: bytes) -> bytes:
    if len(b) > MAX_FRAME:
        raise WireError("blob too long")
    return _pack_u32(len(b)) + b


class _Reader:
    def __init__(self, payload: bytes):
        self._buf = io.BytesIO(payload)
        self._len = len(payload)

    def take(self, n: int) -> bytes:
        data = self._buf.read(n)
        if len(data) != n:
            raise WireError("truncated message")
        return data

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def string(self) -> str:
        return self.take(self.u16()).decode("utf-8")

    def blob(self) -> bytes:
        n = self.u32()
        if n > MAX_FRAME:
            raise WireError("blob length exceeds frame cap")
        return self.take(n)

    def done(self) -> None:
        if self._buf.tell() != self._len:
            raise WireError("trailing bytes after message")


# --- message types -----------------------------------------------------------


@dataclass(frozen=True)
class ContentRequest:
    """Client asks the publisher for one bundle's worth of chunks."""

    object_id: str
    first_chunk: int
    count: int

    def encode_body(self) -> bytes:
        return _pack_str(self.object_id) + _pack_u32(self.first_chunk) + _pack_u32(self.count)

    @classmethod
    def decode_body(cls, r: _Reader) -> "ContentRequest":
        return cls(r.string(), r.u32(), r.u32())


@dataclass(frozen=True)
class CacheAssignment:
    cache_id: int
    address: str
    chunk_index: int


@dataclass(frozen=True)
class RequestBundle:
    """Everything a client needs to fetch and prove one request."""

    request_number: int
    client_ip: bytes
    object_id: str
    first_chunk: int
    count: int
    assignments: tuple[CacheAssignment, ...]
    challenge: Challenge
    key_envelope: Envelope
    token_envelope: Envelope
    params: PuzzleParams

    def encode_body(self) -> bytes:
        out = [
            _pack_u64(self.request_number),
            _pack_u8(len(self.client_ip)),
            self.client_ip,
            _pack_str(self.object_id),
            _pack_u32(self.first_chunk),
            _pack_u32(self.count),
            _pack_u16(len(self.assignments)),
        ]
        for a in self.assignments:
            out.append(_pack_u32(a.cache_id))
            out.append(_pack_str(a.address))
            out.append(_pack_u32(a.chunk_index))
        out.append(self.challenge.value)
        out.append(_pack_blob(self.key_envelope.pack()))
        out.append(_pack_blob(self.token_envelope.pack()))
        p = self.params
        out.append(_pack_u32(p.n) + _pack_u32(p.r_puzzle) + _pack_u64(p.chunk_size) + _pack_u32(p.piece_size))
        return b"".join(out)

    @classmethod
    def decode_body(cls, r: _Reader) -> "RequestBundle":
        request_number = r.u64()
        ip_len = r.u8()
        if ip_len not in (4, 16):
            raise WireError("client_ip must be 4 or 16 bytes")
        client_ip = r.take(ip_len)
        object_id = r.string()
        first_chunk = r.u32()
        count = r.u32()
        assignments = tuple(
            CacheAssignment(r.u32(), r.string(), r.u32()) for _ in range(r.u16())
        )
        challenge = Challenge(r.take(HASH_SIZE))
        key_envelope = Envelope.unpack(r.blob())
        token_envelope = Envelope.unpack(r.blob())
        n, r_puzzle = r.u32(), r.u32()
        chunk_size, piece_size = r.u64(), r.u32()
        try:
            params = PuzzleParams(n=n, r_puzzle=r_puzzle, chunk_size=chunk_size, piece_size=piece_size)
        except ValueError as exc:
            raise WireError("bad puzzle parameters: %s" % exc) from exc
        if len(assignments) != params.n:
            raise WireError("assignment count does not match n")
        if not 1 <= count <= params.n:
            raise WireError("logical count out of range")
        return cls(
            request_number, client_ip, object_id, first_chunk, count,
            assignments, challenge, key_envelope, token_envelope, params,
        )


@dataclass(frozen=True)
class ChunkRequest:
    """Client asks a cache for one chunk under a specific request context."""

    object_id: str
    chunk_index: int
    request_number: int
    client_ip: bytes

    def encode_body(self) -> bytes:
        return (
            _pack_str(self.object_id)
            + _pack_u32(self.chunk_index)
            + _pack_u64(self.request_number)
            + _pack_u8(len(self.client_ip))
            + self.client_ip
        )

    @classmethod
    def decode_body(cls, r: _Reader) -> "ChunkRequest":
        object_id = r.string()
        chunk_index = r.u32()
        request_number = r.u64()
        ip_len = r.u8()
        if ip_len not in (4, 16):
            raise WireError("client_ip must be 4 or 16 bytes")
        return cls(object_id, chunk_index, request_number, r.take(ip_len))


@dataclass(frozen=True)
class ChunkReply:
    """Masked chunk payload (double-encrypted chunk + trailing mask)."""

    payload: bytes

    def encode_body(self) -> bytes:
        return _pack_blob(self.payload)

    @classmethod
    def decode_body(cls, r: _Reader) -> "ChunkReply":
        return cls(r.blob())


@dataclass(frozen=True)
class TokenReport:
    request_number: int
    token: bytes

    def encode_body(self) -> bytes:
        if len(self.token) != 32:
            raise WireError("token must be 32 bytes")
        return _pack_u64(self.request_number) + self.token

    @classmethod
    def decode_body(cls, r: _Reader) -> "TokenReport":
        return cls(r.u64(), r.take(32))


@dataclass(frozen=True)
class TokenAck:
    accept: bool

    def encode_body(self) -> bytes:
        return _pack_u8(1 if self.accept else 0)

    @classmethod
    def decode_body(cls, r: _Reader) -> "TokenAck":
        v = r.u8()
        if v not in (0, 1):
            raise WireError("accept flag must be 0 or 1")
        return cls(bool(v))


@dataclass(frozen=True)
class ErrorReply:
    code: int
    detail: str

    def encode_body(self) -> bytes:
        return _pack_u8(self.code) + _pack_str(self.detail)

    @classmethod
    def decode_body(cls, r: _Reader) -> "ErrorReply":
        return cls(r.u8(), r.string())


Message = Union[
    ContentRequest, RequestBundle, ChunkRequest, ChunkReply,
    TokenReport, TokenAck, ErrorReply,
]

_TYPE_BY_CLASS = {
    ContentRequest: T_CONTENT_REQUEST,
    RequestBundle: T_REQUEST_BUNDLE,
    ChunkRequest: T_CHUNK_REQUEST,
    ChunkReply: T_CHUNK_REPLY,
    TokenReport: T_TOKEN_REPORT,
    TokenAck: T_TOKEN_ACK,
    ErrorReply: T_ERROR,
}
_CLASS_BY_TYPE = {v: k for k, v in _TYPE_BY_CLASS.items()}


def encode_message(msg: Message) -> bytes:
    """Full frame: length prefix, type byte, body."""
    mtype = _TYPE_BY_CLASS.get(type(msg))
    if mtype is None:
        raise WireError("unknown message class %r" % type(msg).__name__)
    payload = _pack_u8(mtype) + msg.encode_body()
    if len(payload) > MAX_FRAME:
        raise WireError("frame too large")
    return _pack_u32(len(payload)) + payload


def decode_payload(payload: bytes) -> Message:
    """Decode a frame payload (everything after the length prefix)."""
    if not payload:
        raise WireError("empty frame")
    r = _Reader(payload[1:])
    cls = _CLASS_BY_TYPE.get(payload[0])
    if cls is None:
        raise WireError("unknown message type %d" % payload[0])
    msg = cls.decode_body(r)
    r.done()
    return msg


def send_message(stream, msg: Message) -> None:
    """Write one framed message to a binary file-like stream."""
    stream.write(encode_message(msg))
    stream.flush()


def recv_message(stream) -> Message:
    """Read one framed message. Raises WireError on EOF or bad framing."""
    header = stream.read(4)
    if len(header) == 0:
        raise WireError("connection closed")
    if len(header) != 4:
        raise WireError("truncated length prefix")
    length = struct.unpack(">I", header)[0]
    if length == 0 or length > MAX_FRAME:
        raise WireError("frame length %d out of bounds" % length)
    payload = stream.read(length)
    if len(payload) != length:
        raise WireError("truncated frame")
    return decode_payload(payload)
