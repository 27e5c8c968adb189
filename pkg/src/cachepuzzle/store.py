"""Content storage, the cache registry, and plain-text config files.

Objects are plain files in a content directory, identified by file name and
served as fixed-size chunks (the last chunk zero-padded).  The registry is
one line per cache: cache_id, host:port, hex master key.  Config files are
key=value lines with # comments.
"""

from __future__ import annotations

import binascii
import math
import re
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .params import PuzzleParams

_OBJECT_ID_RE = re.compile(r"^[A-Za-z0-9._-]{1,255}$")
_CHUNK_CACHE_SLOTS = 32


class StoreError(Exception):
    """Unknown object, bad object id, or out-of-range chunk."""


class ConfigError(Exception):
    """Malformed config or registry file."""


def valid_object_id(object_id: str) -> bool:
    # no separators, no traversal; ids are bare file names
    return bool(_OBJECT_ID_RE.match(object_id)) and object_id not in (".", "..")


@dataclass(frozen=True)
class CacheDescriptor:
    cache_id: int
    address: str
    master_key: Optional[bytes] = None

    def __post_init__(self) -> None:
        if not 0 <= self.cache_id < 1 << 32:
            raise ValueError("cache_id must fit in 32 bits")
        if self.master_key is not None and len(self.master_key) != 32:
            raise ValueError("master key must be 32 bytes")


class Registry:
    """Publisher-side table of registered caches."""

    def __init__(self, caches: Optional[list[CacheDescriptor]] = None):
        self._by_id: dict[int, CacheDescriptor] = {}
        self._addresses: set[str] = set()
        for c in caches or []:
            self.add(c)

    def add(self, cache: CacheDescriptor) -> None:
        if cache.cache_id in self._by_id:
            raise ConfigError("duplicate cache_id %d" % cache.cache_id)
        if cache.address in self._addresses:
            raise ConfigError("duplicate cache address %s" % cache.address)
        self._by_id[cache.cache_id] = cache
        self._addresses.add(cache.address)

    def __len__(self) -> int:
        return len(self._by_id)

    def __iter__(self):
        return iter(sorted(self._by_id.values(), key=lambda c: c.cache_id))

    def get(self, cache_id: int) -> CacheDescriptor:
        try:
            return self._by_id[cache_id]
        except KeyError:
            raise StoreError("unknown cache_id %d" % cache_id) from None

    def all(self) -> list[CacheDescriptor]:
        return list(self)

    @classmethod
    def load(cls, path) -> "Registry":
        reg = cls()
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p for p in re.split(r"[,\s]+", line) if p]
            if len(parts) != 3:
                raise ConfigError(
                    "%s:%d: expected 'cache_id address hexkey'" % (path, lineno)
                )
            try:
                cache_id = int(parts[0])
                key = binascii.unhexlify(parts[2])
            except (ValueError, binascii.Error) as exc:
                raise ConfigError("%s:%d: %s" % (path, lineno, exc)) from exc
            reg.add(CacheDescriptor(cache_id, parts[1], key))
        return reg

    def save(self, path) -> None:
        lines = [
            "%d %s %s" % (c.cache_id, c.address, c.master_key.hex())
            for c in self
        ]
        Path(path).write_text("\n".join(lines) + "\n")


class ContentStore:
    """Chunked read access to files under one directory."""

    def __init__(self, root, chunk_size: int):
        if chunk_size < 1:
            raise ValueError("chunk_size must be positive")
        self.root = Path(root)
        self.chunk_size = chunk_size
        self._lru: OrderedDict[tuple[str, int], bytes] = OrderedDict()

    def _path(self, object_id: str) -> Path:
        if not valid_object_id(object_id):
            raise StoreError("invalid object id %r" % object_id)
        p = self.root / object_id
        if not p.is_file():
            raise StoreError("unknown object %r" % object_id)
        return p

    def object_size(self, object_id: str) -> int:
        return self._path(object_id).stat().st_size

    def chunk_count(self, object_id: str) -> int:
        return max(1, math.ceil(self.object_size(object_id) / self.chunk_size))

    def get_chunk(self, object_id: str, index: int) -> bytes:
        """Chunk `index`, zero-padded to exactly chunk_size bytes."""
        key = (object_id, index)
        hit = self._lru.get(key)
        if hit is not None:
            self._lru.move_to_end(key)
            return hit
        path = self._path(object_id)
        if not 0 <= index < self.chunk_count(object_id):
            raise StoreError("chunk %d out of range for %r" % (index, object_id))
        with path.open("rb") as fh:
            fh.seek(index * self.chunk_size)
            data = fh.read(self.chunk_size)
        data = data.ljust(self.chunk_size, b"\0")
        self._lru[key] = data
        if len(self._lru) > _CHUNK_CACHE_SLOTS:
            self._lru.popitem(last=False)
        return data

    def list_objects(self) -> list[str]:
        return sorted(
            p.name for p in self.root.iterdir()
            if p.is_file() and valid_object_id(p.name)
        )


# --- config files -------------------------------------------------------------


def parse_config(path) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("%s:%d: expected key=value" % (path, lineno))
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            raise ConfigError("%s:%d: empty key" % (path, lineno))
        if key in values:
            raise ConfigError("%s:%d: duplicate key %r" % (path, lineno, key))
        values[key] = value
    return values


def _require(values: dict[str, str], key: str, path) -> str:
    try:
        return values[key]
    except KeyError:
        raise ConfigError("%s: missing required key %r" % (path, key)) from None


def _parse_int(values: dict[str, str], key: str, path) -> int:
    raw = _require(values, key, path)
    try:
        return int(raw, 0)
    except ValueError:
        raise ConfigError("%s: key %r is not an integer" % (path, key)) from None


def _parse_params(values: dict[str, str], path) -> PuzzleParams:
    try:
        return PuzzleParams(
            n=_parse_int(values, "n", path),
            r_puzzle=_parse_int(values, "r_puzzle", path),
            chunk_size=_parse_int(values, "chunk_size", path),
            piece_size=_parse_int(values, "piece_size", path),
        )
    except ValueError as exc:
        raise ConfigError("%s: %s" % (path, exc)) from exc


@dataclass(frozen=True)
class PublisherConfig:
    listen: str
    registry: str
    content_dir: str
    params: PuzzleParams
    secret: Optional[bytes] = None  # PRF key for tokens; fresh if omitted

    @classmethod
    def load(cls, path) -> "PublisherConfig":
        v = parse_config(path)
        secret = None
        if "secret" in v:
            try:
                secret = binascii.unhexlify(v["secret"])
            except binascii.Error as exc:
                raise ConfigError("%s: bad secret hex" % path) from exc
            if len(secret) != 32:
                raise ConfigError("%s: secret must be 32 hex-encoded bytes" % path)
        return cls(
            listen=_require(v, "listen", path),
            registry=_require(v, "registry", path),
            content_dir=_require(v, "content_dir", path),
            params=_parse_params(v, path),
            secret=secret,
        )


@dataclass(frozen=True)
class CacheConfig:
    listen: str
    content_dir: str
    cache_id: int
    master_key: bytes = field(repr=False)
    chunk_size: int

    @classmethod
    def load(cls, path) -> "CacheConfig":
        v = parse_config(path)
        try:
            key = binascii.unhexlify(_require(v, "master_key", path))
        except binascii.Error as exc:
            raise ConfigError("%s: bad master_key hex" % path) from exc
        if len(key) != 32:
            raise ConfigError("%s: master_key must be 32 hex-encoded bytes" % path)
        return cls(
            listen=_require(v, "listen", path),
            content_dir=_require(v, "content_dir", path),
            cache_id=_parse_int(v, "cache_id", path),
            master_key=key,
            chunk_size=_parse_int(v, "chunk_size", path),
        )
