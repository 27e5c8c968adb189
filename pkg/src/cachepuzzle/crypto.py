"""Keyed primitives: key/counter/token derivation, chunk encryption, the
completion-mask layer, and solution-keyed envelopes.

All PRFs are HMAC-SHA256 with short ASCII labels ("sk", "ctr", "tok", "env")
for domain separation.  Content encryption is AES-128-CTR; the mask and
envelope layers use AES-256-CTR because their keys are hash-sized anyway.
Everything here is deterministic given its inputs except mask_chunk and
seal_envelope, which draw fresh randomness per call.
"""

from __future__ import annotations

import hashlib
import hmac
import os
from dataclasses import dataclass

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .params import CIPHER_BLOCK
from .puzzle import Solution

_LABEL_SESSION = b"sk"
_LABEL_COUNTER = b"ctr"
_LABEL_TOKEN = b"tok"
_LABEL_ENVELOPE = b"env"

_MASK128 = (1 << 128) - 1

SESSION_KEY_SIZE = 16
MASK_SIZE = 32
TOKEN_SIZE = 32
NONCE_SIZE = 16
TAG_SIZE = 32


class EnvelopeAuthError(Exception):
    """Envelope tag did not verify: wrong solution or tampered bytes."""


@dataclass(frozen=True)
class RequestContext:
    """What a session is keyed on: the request number and the client address."""

    request_number: int
    client_ip: bytes

    def __post_init__(self) -> None:
        if not 0 <= self.request_number < 1 << 64:
            raise ValueError("request_number must fit in 64 bits")
        if len(self.client_ip) not in (4, 16):
            raise ValueError("client_ip must be 4 or 16 raw address bytes")

    def pack(self) -> bytes:
        return self.request_number.to_bytes(8, "big") + self.client_ip


def new_master_key() -> bytes:
    """Fresh 32-byte master key for cache registration."""
    return os.urandom(32)


def _prf(key: bytes, label: bytes, data: bytes = b"") -> bytes:
    return hmac.new(key, label + data, hashlib.sha256).digest()


def derive_session_key(master: bytes, ctx: RequestContext) -> bytes:
    """Per-request AES-128 key: HMAC(master, "sk" || ctx), truncated."""
    return _prf(master, _LABEL_SESSION, ctx.pack())[:SESSION_KEY_SIZE]


def derive_initial_counter(session_key: bytes) -> int:
    """Starting 128-bit CTR block for a session key."""
    return int.from_bytes(_prf(session_key, _LABEL_COUNTER)[:16], "big")


def derive_token(publisher_secret: bytes, ctx: RequestContext) -> bytes:
    """Per-request secret token the cache must echo back to get credit."""
    return _prf(publisher_secret, _LABEL_TOKEN, ctx.pack())


def _aes128_ctr(key: bytes, counter: int, data: bytes) -> bytes:
    nonce = (counter & _MASK128).to_bytes(16, "big")
    enc = Cipher(algorithms.AES(key), modes.CTR(nonce)).encryptor()
    return enc.update(data) + enc.finalize()


def _aes256_ctr(key: bytes, nonce: bytes, data: bytes) -> bytes:
    enc = Cipher(algorithms.AES(key), modes.CTR(nonce)).encryptor()
    return enc.update(data) + enc.finalize()


def encrypt_piece(session_key: bytes, ictr: int, index: int, piece: bytes) -> bytes:
    """Encrypt one piece at its in-chunk position.

    The counter block is ictr + index * (piece_size / 16) mod 2^128, so the
    result is bit-identical to the matching slice of encrypt_chunk.
    """
    if len(piece) % CIPHER_BLOCK != 0:
        raise ValueError("piece length must be a multiple of 16")
    if index < 0:
        raise ValueError("index must be non-negative")
    blocks_per_piece = len(piece) // CIPHER_BLOCK
    return _aes128_ctr(session_key, ictr + index * blocks_per_piece, piece)


def encrypt_chunk(session_key: bytes, ictr: int, chunk: bytes) -> bytes:
    """AES-128-CTR over a whole chunk starting at the initial counter."""
    if len(chunk) % CIPHER_BLOCK != 0:
        raise ValueError("chunk length must be a multiple of 16")
    return _aes128_ctr(session_key, ictr, chunk)


# CTR is an involution, so decryption is the same keystream XOR
decrypt_chunk = encrypt_chunk


def mask_chunk(encrypted_chunk: bytes) -> tuple[bytes, bytes]:
    """Apply the second encryption layer under a fresh 32-byte mask.

    Returns (payload, mask) where payload is the re-encrypted chunk with the
    mask appended at the very end, so a receiver cannot unmask anything until
    the transfer completes.
    """
    mask = os.urandom(MASK_SIZE)
    body = _aes256_ctr(mask, bytes(NONCE_SIZE), encrypted_chunk)
    return body + mask, mask


def strip_mask(payload: bytes) -> bytes:
    """Undo mask_chunk: split off the trailing mask and decrypt with it."""
    if len(payload) < MASK_SIZE + 1:
        raise ValueError("payload too short to carry a trailing mask")
    body, mask = payload[:-MASK_SIZE], payload[-MASK_SIZE:]
    return _aes256_ctr(mask, bytes(NONCE_SIZE), body)


@dataclass(frozen=True)
class Envelope:
    """Authenticated ciphertext openable only with the puzzle solution."""

    nonce: bytes
    ciphertext: bytes
    tag: bytes

    def __post_init__(self) -> None:
        if len(self.nonce) != NONCE_SIZE:
            raise ValueError("nonce must be %d bytes" % NONCE_SIZE)
        if len(self.tag) != TAG_SIZE:
            raise ValueError("tag must be %d bytes" % TAG_SIZE)

    def pack(self) -> bytes:
        return self.nonce + self.ciphertext + self.tag

    @classmethod
    def unpack(cls, raw: bytes) -> "Envelope":
        if len(raw) < NONCE_SIZE + TAG_SIZE:
            raise ValueError("envelope too short")
        return cls(raw[:NONCE_SIZE], raw[NONCE_SIZE:-TAG_SIZE], raw[-TAG_SIZE:])


def _envelope_key(solution: Solution) -> bytes:
    return hashlib.sha256(_LABEL_ENVELOPE + solution.value).digest()


def seal_envelope(solution: Solution, payload: bytes) -> Envelope:
    """Encrypt-then-MAC under a key derived from the solution value."""
    key = _envelope_key(solution)
    nonce = os.urandom(NONCE_SIZE)
    ciphertext = _aes256_ctr(key, nonce, payload)
    tag = hmac.new(key, nonce + ciphertext, hashlib.sha256).digest()
    return Envelope(nonce, ciphertext, tag)


def open_envelope(solution: Solution, env: Envelope) -> bytes:
    """Verify the tag, then decrypt. Raises EnvelopeAuthError on mismatch."""
    key = _envelope_key(solution)
    expect = hmac.new(key, env.nonce + env.ciphertext, hashlib.sha256).digest()
    if not hmac.compare_digest(expect, env.tag):
        raise EnvelopeAuthError("envelope tag mismatch")
    return _aes256_ctr(key, env.nonce, env.ciphertext)
