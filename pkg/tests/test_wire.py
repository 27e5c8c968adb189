"""Wire codec round trips and malformed-input handling."""

import io
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cachepuzzle import wire
from cachepuzzle.crypto import Envelope
from cachepuzzle.params import PuzzleParams
from cachepuzzle.puzzle import Challenge
from cachepuzzle.wire import (
    CacheAssignment,
    ChunkReply,
    ChunkRequest,
    ContentRequest,
    ErrorReply,
    RequestBundle,
    TokenAck,
    TokenReport,
    WireError,
    decode_payload,
    encode_message,
    recv_message,
    send_message,
)

ips = st.one_of(st.binary(min_size=4, max_size=4), st.binary(min_size=16, max_size=16))
u32 = st.integers(0, (1 << 32) - 1)
u64 = st.integers(0, (1 << 64) - 1)
object_ids = st.text(
    alphabet="abcdefghijklmnopqrstuvwxyz0123456789._-", min_size=1, max_size=40
)
addresses = st.builds(
    lambda h, p: "%s:%d" % (h, p),
    st.text(alphabet="abcdefghijklmnopqrstuvwxyz.", min_size=1, max_size=20),
    st.integers(1, 65535),
)


def envelopes():
    return st.builds(
        Envelope,
        st.binary(min_size=16, max_size=16),
        st.binary(max_size=200),
        st.binary(min_size=32, max_size=32),
    )


def bundles():
    def build(req, ip, oid, first, n, count_seed, assignment_seed, challenge,
              key_env, tok_env, r_puzzle, pieces):
        params = PuzzleParams(
            n=n, r_puzzle=r_puzzle, chunk_size=pieces * 16, piece_size=16
        )
        count = count_seed % n + 1
        assignments = tuple(
            CacheAssignment(
                cache_id=(assignment_seed + i) % (1 << 32),
                address="cache%d.example:900%d" % (i, i),
                chunk_index=first + min(i, count - 1),
            )
            for i in range(n)
        )
        return RequestBundle(
            request_number=req,
            client_ip=ip,
            object_id=oid,
            first_chunk=first,
            count=count,
            assignments=assignments,
            challenge=Challenge(challenge),
            key_envelope=key_env,
            token_envelope=tok_env,
            params=params,
        )

    return st.builds(
        build,
        u64,
        ips,
        object_ids,
        st.integers(0, 1000),
        st.integers(1, 6),
        st.integers(0, 100),
        st.integers(0, 1 << 40),
        st.binary(min_size=32, max_size=32),
        envelopes(),
        envelopes(),
        st.integers(1, 10),
        st.integers(2, 64),
    )


messages = st.one_of(
    st.builds(ContentRequest, object_ids, u32, u32),
    bundles(),
    st.builds(ChunkRequest, object_ids, u32, u64, ips),
    st.builds(ChunkReply, st.binary(max_size=500)),
    st.builds(TokenReport, u64, st.binary(min_size=32, max_size=32)),
    st.builds(TokenAck, st.booleans()),
    st.builds(ErrorReply, st.integers(0, 255), st.text(max_size=60)),
)


@settings(max_examples=200, deadline=None)
@given(messages)
def test_codec_round_trip(msg):
    frame = encode_message(msg)
    length = struct.unpack(">I", frame[:4])[0]
    assert length == len(frame) - 4
    assert decode_payload(frame[4:]) == msg


@settings(max_examples=50, deadline=None)
@given(messages)
def test_stream_round_trip(msg):
    buf = io.BytesIO()
    send_message(buf, msg)
    send_message(buf, msg)
    buf.seek(0)
    assert recv_message(buf) == msg
    assert recv_message(buf) == msg
    with pytest.raises(WireError, match="closed"):
        recv_message(buf)


def test_rejects_malformed_frames():
    with pytest.raises(WireError):
        decode_payload(b"")
    with pytest.raises(WireError):
        decode_payload(bytes([99]))  # unknown type
    good = encode_message(TokenAck(True))[4:]
    with pytest.raises(WireError):
        decode_payload(good + b"\0")  # trailing garbage
    with pytest.raises(WireError):
        decode_payload(good[:-1])  # truncated body
    with pytest.raises(WireError):
        decode_payload(bytes([wire.T_TOKEN_ACK, 2]))  # bad flag value


def test_recv_guards_length_prefix():
    with pytest.raises(WireError):
        recv_message(io.BytesIO(b"\x00\x00"))
    with pytest.raises(WireError):
        recv_message(io.BytesIO(struct.pack(">I", 0)))
    with pytest.raises(WireError):
        recv_message(io.BytesIO(struct.pack(">I", wire.MAX_FRAME + 1) + b"x"))
    with pytest.raises(WireError):
        recv_message(io.BytesIO(struct.pack(">I", 10) + b"\x06\x01"))


def test_chunk_request_rejects_bad_ip_length():
    msg = ChunkRequest("o", 0, 1, b"\x7f\x00\x00\x01")
    raw = bytearray(encode_message(msg)[4:])
    # ip length byte sits right before the trailing address bytes
    raw[-5] = 7
    with pytest.raises(WireError):
        decode_payload(bytes(raw))


def _sample_bundle() -> RequestBundle:
    params = PuzzleParams(n=2, r_puzzle=1, chunk_size=64, piece_size=16)
    env = Envelope(bytes(16), b"ct", bytes(32))
    return RequestBundle(
        request_number=9,
        client_ip=b"\x7f\x00\x00\x01",
        object_id="obj",
        first_chunk=0,
        count=2,
        assignments=(
            CacheAssignment(1, "a.example:9001", 0),
            CacheAssignment(2, "b.example:9002", 1),
        ),
        challenge=Challenge(bytes(32)),
        key_envelope=env,
        token_envelope=env,
        params=params,
    )


def test_bundle_decode_enforces_consistency():
    bundle = _sample_bundle()
    raw = encode_message(bundle)[4:]
    assert decode_payload(raw) == bundle

    # logical count above n must not decode
    broken = RequestBundle(
        request_number=bundle.request_number,
        client_ip=bundle.client_ip,
        object_id=bundle.object_id,
        first_chunk=bundle.first_chunk,
        count=bundle.params.n + 1,
        assignments=bundle.assignments,
        challenge=bundle.challenge,
        key_envelope=bundle.key_envelope,
        token_envelope=bundle.token_envelope,
        params=bundle.params,
    )
    with pytest.raises(WireError):
        decode_payload(encode_message(broken)[4:])


def test_string_too_long_rejected_on_encode():
    with pytest.raises(WireError):
        encode_message(ContentRequest("x" * 70000, 0, 1))
