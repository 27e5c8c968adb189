"""Pure-Python hash-chain kernels.

Fallback used when the compiled extension (cachepuzzle._kernels) is not
available. Both backends expose the same three functions and must produce
bit-identical output; the test suite asserts parity.

All functions assume pre-validated arguments (see cachepuzzle.puzzle).
"""

from __future__ import annotations

import hashlib

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

_MASK128 = (1 << 128) - 1


def chain_location(chunks, piece_size, pieces_total, steps, start_index):
    """Walk the chain over already-encrypted chunks; return the final location."""
    sha = hashlib.sha256
    n = len(chunks)
    loc = b"\x00" * 32
    idx = start_index
    for i in range(steps):
        off = idx * piece_size
        loc = sha(loc + chunks[i % n][off : off + piece_size]).digest()
        idx = int.from_bytes(loc, "big") % pieces_total
    return loc


def solve_scan(chunks, piece_size, pieces_total, steps, challenge, start_at=0):
    """Try candidate starting pieces in ascending order until one chains to
    ``challenge``. Returns (start_index, final_location) or None."""
    sha = hashlib.sha256
    n = len(chunks)
    for t in range(start_at, pieces_total):
        loc = b"\x00" * 32
        idx = t
        for i in range(steps):
            off = idx * piece_size
            loc = sha(loc + chunks[i % n][off : off + piece_size]).digest()
            idx = int.from_bytes(loc, "big") % pieces_total
        if sha(loc).digest() == challenge:
            return t, loc
    return None


def generate_chain(chunks, keys, counters, piece_size, pieces_total, steps, start_index):
    """Walk the chain over raw chunks, encrypting each visited piece with
    AES-128-CTR before hashing. ``counters`` are 128-bit ints; the counter
    block for piece ``idx`` is ictr + idx * (piece_size // 16) mod 2**128."""
    sha = hashlib.sha256
    n = len(chunks)
    blocks_per_piece = piece_size // 16
    loc = b"\x00" * 32
    idx = start_index
    for i in range(steps):
        j = i % n
        off = idx * piece_size
        piece = chunks[j][off : off + piece_size]
        ctr = ((counters[j] + idx * blocks_per_piece) & _MASK128).to_bytes(16, "big")
        enc = Cipher(algorithms.AES(keys[j]), modes.CTR(ctr)).encryptor()
        loc = sha(loc + enc.update(piece)).digest()
        idx = int.from_bytes(loc, "big") % pieces_total
    return loc
