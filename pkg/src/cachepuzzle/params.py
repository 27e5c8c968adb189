"""Puzzle parameter set shared by every component.

A service request covers ``n`` chunks of ``chunk_size`` bytes; the puzzle
walks ``n * r_puzzle`` pieces of ``piece_size`` bytes through a SHA256
chain, so ``pieces_total = chunk_size // piece_size`` is the number of
candidate starting pieces a solver may have to try.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

HASH_SIZE = 32
CIPHER_BLOCK = 16


@dataclass(frozen=True)
class PuzzleParams:
    """Tunables for one deployment: caches per request, rounds, chunk geometry."""

    n: int
    r_puzzle: int
    chunk_size: int
    piece_size: int
    h_size: int = HASH_SIZE

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.r_puzzle < 1:
            raise ValueError(f"r_puzzle must be >= 1, got {self.r_puzzle}")
        if self.piece_size < 1 or self.piece_size % CIPHER_BLOCK != 0:
            raise ValueError(
                f"piece_size must be a positive multiple of {CIPHER_BLOCK}, got {self.piece_size}"
            )
        if self.chunk_size < 1 or self.chunk_size % self.piece_size != 0:
            raise ValueError(
                f"chunk_size ({self.chunk_size}) must be a positive multiple of "
                f"piece_size ({self.piece_size})"
            )
        if self.h_size != HASH_SIZE:
            raise ValueError(f"h_size must be {HASH_SIZE} (SHA256), got {self.h_size}")

    @property
    def pieces_total(self) -> int:
        return self.chunk_size // self.piece_size

    @property
    def steps(self) -> int:
        """Chain length of one puzzle: every chunk visited once per round."""
        return self.n * self.r_puzzle

    def hash_exchange_safe_m(self) -> int:
        """Largest count of colluding caches for which shipping a chain hash
        costs at least as much as shipping the pieces it unlocks
        (piece_size * m <= h_size)."""
        return self.h_size // self.piece_size

    def warn_if_hash_exchange_viable(self, m: int) -> bool:
        """Emit a config warning when ``m`` colluders could profitably trade
        hashes instead of pieces. Returns True when the warning fired."""
        if m > self.hash_exchange_safe_m():
            warnings.warn(
                f"piece_size={self.piece_size} exceeds h_size/m={self.h_size}/{m}; "
                f"hash exchange may undercut piece transfer for m={m} colluders "
                f"(safe up to m={self.hash_exchange_safe_m()})",
                ConfigWarning,
                stacklevel=2,
            )
            return True
        return False


class ConfigWarning(UserWarning):
    """Configuration is legal but weakens a stated guarantee."""
