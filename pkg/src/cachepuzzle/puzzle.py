"""Retrieval puzzle core: challenge generation, solving, verification.

A puzzle is a hash chain over encrypted content pieces.  The chain starts at
a secret piece index, and each step hashes the current location together with
the piece it points at; the digest becomes the next location, and its value
mod pieces_total picks the next piece from the next chunk (round robin).  The
challenge published to the solver is the hash of the final location, so the
only way to reproduce it is to walk the chain, which requires having the
encrypted pieces at hand.

Two interchangeable backends do the walking: a compiled extension
(cachepuzzle._kernels, built against libcrypto) and a pure-Python fallback
(cachepuzzle._purepy).  Selection happens at import time and may be forced
with the CACHEPUZZLE_BACKEND environment variable ("c" or "py") or at runtime
via set_backend().
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from . import _purepy
from .params import HASH_SIZE, PuzzleParams

try:
    from . import _kernels
except ImportError:
    _kernels = None

# chains always start from the all-zero location
ZERO_LOCATION = bytes(HASH_SIZE)

# the compiled modulus routine reduces byte by byte in a 64-bit accumulator,
# which is exact only while (rem << 8) cannot overflow
_C_BACKEND_MAX_PIECES = 1 << 48


class SolutionNotFound(Exception):
    """No starting index in range reproduces the challenge."""


@dataclass(frozen=True)
class Challenge:
    """Public puzzle statement: hash of the final chain location."""

    value: bytes

    def __post_init__(self) -> None:
        if len(self.value) != HASH_SIZE:
            raise ValueError("challenge value must be %d bytes" % HASH_SIZE)


@dataclass(frozen=True)
class Solution:
    """Final chain location plus the starting piece index that produced it."""

    value: bytes
    start_index: int

    def __post_init__(self) -> None:
        if len(self.value) != HASH_SIZE:
            raise ValueError("solution value must be %d bytes" % HASH_SIZE)
        if self.start_index < 0:
            raise ValueError("start_index must be non-negative")


def map_location_to_index(location: bytes, pieces_total: int) -> int:
    """Reduce a chain location to a piece index: big-endian value mod total."""
    if len(location) != HASH_SIZE:
        raise ValueError("location must be %d bytes" % HASH_SIZE)
    if pieces_total < 1:
        raise ValueError("pieces_total must be positive")
    return int.from_bytes(location, "big") % pieces_total


def next_location(prev: bytes, encrypted_piece: bytes) -> bytes:
    """One chain step: SHA256(prev || encrypted_piece)."""
    return hashlib.sha256(prev + encrypted_piece).digest()


def _check_chunks(chunks: Sequence[bytes], params: PuzzleParams) -> None:
    if len(chunks) != params.n:
        raise ValueError("expected %d chunks, got %d" % (params.n, len(chunks)))
    for i, c in enumerate(chunks):
        if len(c) != params.chunk_size:
            raise ValueError(
                "chunk %d is %d bytes, expected %d" % (i, len(c), params.chunk_size)
            )


def _check_start(start_index: int, pieces_total: int) -> None:
    if not 0 <= start_index < pieces_total:
        raise ValueError("start_index out of range")


def generate_challenge(
    chunks: Sequence[bytes],
    keys: Sequence[bytes],
    counters: Sequence[int],
    params: PuzzleParams,
    start_index: int,
    encrypt_piece: Optional[Callable[[int, int, bytes], bytes]] = None,
) -> tuple[Challenge, Solution]:
    """Build a puzzle over raw (plaintext) chunks.

    Each visited piece is encrypted on the fly with the chunk's session key
    and counter before being hashed, so no ciphertext buffer is ever
    materialised.  ``encrypt_piece(chunk_idx, piece_idx, piece) -> bytes``
    overrides the built-in cipher; passing one forces the pure-Python walk.
    """
    _check_chunks(chunks, params)
    if len(keys) != params.n or len(counters) != params.n:
        raise ValueError("need one key and one counter per chunk")
    pieces_total = params.pieces_total
    _check_start(start_index, pieces_total)

    if encrypt_piece is None:
        backend = _backend_for(pieces_total)
        final = backend.generate_chain(
            [bytes(c) for c in chunks],
            [bytes(k) for k in keys],
            list(counters),
            params.piece_size,
            pieces_total,
            params.steps,
            start_index,
        )
    else:
        final = _generate_chain_custom(
            chunks, params.piece_size, pieces_total, params.steps,
            start_index, encrypt_piece,
        )
    return Challenge(hashlib.sha256(final).digest()), Solution(final, start_index)


def _generate_chain_custom(chunks, piece_size, pieces_total, steps, start_index,
                           encrypt_piece):
    loc = ZERO_LOCATION
    idx = start_index
    j = 0
    n = len(chunks)
    for _ in range(steps):
        off = idx * piece_size
        piece = encrypt_piece(j, idx, chunks[j][off:off + piece_size])
        loc = next_location(loc, piece)
        idx = map_location_to_index(loc, pieces_total)
        j = (j + 1) % n
    return loc


def solve_challenge(
    encrypted_chunks: Sequence[bytes],
    challenge: Challenge,
    params: PuzzleParams,
) -> Solution:
    """Recover the solution by scanning candidate start indices in order.

    Works directly on the encrypted chunks a cache serves, so solving needs
    no keys.  Raises SolutionNotFound after pieces_total failed candidates.
    """
    _check_chunks(encrypted_chunks, params)
    pieces_total = params.pieces_total
    backend = _backend_for(pieces_total)
    hit = backend.solve_scan(
        [bytes(c) for c in encrypted_chunks],
        params.piece_size,
        pieces_total,
        params.steps,
        challenge.value,
    )
    if hit is None:
        raise SolutionNotFound("no start index in [0, %d) matches" % pieces_total)
    start_index, final = hit
    return Solution(final, start_index)


def trial_location(
    encrypted_chunks: Sequence[bytes],
    params: PuzzleParams,
    start_index: int,
) -> bytes:
    """Final chain location for one candidate start index over ciphertext."""
    _check_chunks(encrypted_chunks, params)
    pieces_total = params.pieces_total
    _check_start(start_index, pieces_total)
    backend = _backend_for(pieces_total)
    return backend.chain_location(
        [bytes(c) for c in encrypted_chunks],
        params.piece_size,
        pieces_total,
        params.steps,
        start_index,
    )


def check_solution(challenge: Challenge, candidate: Solution) -> bool:
    """A solution checks out iff its value hashes to the challenge."""
    return hashlib.sha256(candidate.value).digest() == challenge.value


# --- backend selection -----------------------------------------------------

_BACKENDS = {"py": _purepy}
if _kernels is not None:
    _BACKENDS["c"] = _kernels

_active_name = "c" if "c" in _BACKENDS else "py"
_env = os.environ.get("CACHEPUZZLE_BACKEND")
if _env:
    if _env not in _BACKENDS:
        raise ImportError(
            "CACHEPUZZLE_BACKEND=%r but available backends are %s"
            % (_env, sorted(_BACKENDS))
        )
    _active_name = _env


def available_backends() -> list[str]:
    """Names of usable backends ("c" only if the extension imported)."""
    return sorted(_BACKENDS)


def active_backend() -> str:
    """Name of the backend used for default dispatch."""
    return _active_name


def set_backend(name: str) -> None:
    """Force a backend ("c" or "py") for subsequent calls."""
    global _active_name
    if name not in _BACKENDS:
        raise ValueError(
            "unknown backend %r; available: %s" % (name, sorted(_BACKENDS))
        )
    _active_name = name


def _backend_for(pieces_total: int):
    if _active_name == "c" and pieces_total < _C_BACKEND_MAX_PIECES:
        return _BACKENDS["c"]
    return _purepy
