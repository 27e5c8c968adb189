from dataclasses import dataclass, field

import pytest

from cachepuzzle import crypto
from cachepuzzle.nodes import CacheNode, NodeServer, Publisher
from cachepuzzle.params import PuzzleParams
from cachepuzzle.store import CacheDescriptor, ContentStore, Registry


@dataclass
class Deployment:
    """A live loopback publisher plus its caches."""

    publisher: Publisher
    publisher_server: NodeServer
    cache_servers: list
    cache_nodes: list
    registry: Registry
    content_dir: object
    params: PuzzleParams
    secret: bytes
    stopped: bool = field(default=False)

    @property
    def address(self) -> str:
        return self.publisher_server.address

    def stop(self) -> None:
        if self.stopped:
            return
        self.stopped = True
        for srv in self.cache_servers + [self.publisher_server]:
            srv.shutdown()
            srv.server_close()

    def restart_publisher(self) -> None:
        """Replace the publisher process-equivalent: same secret, same port."""
        listen = self.publisher_server.address
        self.publisher_server.shutdown()
        self.publisher_server.server_close()
        self.publisher = Publisher(
            self.registry,
            ContentStore(self.content_dir, self.params.chunk_size),
            self.params,
            secret=self.secret,
        )
        self.publisher_server = NodeServer(listen, self.publisher)
        self.publisher_server.start_background()


@pytest.fixture
def deployment_factory(tmp_path):
    """Builds loopback deployments; tears every one down after the test."""
    live = []
    counter = [0]

    def build(content: dict, params: PuzzleParams, cache_count=None, secret=None):
        counter[0] += 1
        cdir = tmp_path / ("content%d" % counter[0])
        cdir.mkdir()
        for name, blob in content.items():
            (cdir / name).write_bytes(blob)
        registry = Registry()
        cache_servers, cache_nodes = [], []
        for i in range(cache_count if cache_count is not None else params.n):
            key = crypto.new_master_key()
            node = CacheNode(i, key, ContentStore(cdir, params.chunk_size))
            srv = NodeServer("127.0.0.1:0", node)
            srv.start_background()
            registry.add(CacheDescriptor(i, srv.address, key))
            cache_servers.append(srv)
            cache_nodes.append(node)
        secret = secret if secret is not None else crypto.new_master_key()
        publisher = Publisher(
            registry, ContentStore(cdir, params.chunk_size), params, secret=secret
        )
        psrv = NodeServer("127.0.0.1:0", publisher)
        psrv.start_background()
        dep = Deployment(
            publisher=publisher,
            publisher_server=psrv,
            cache_servers=cache_servers,
            cache_nodes=cache_nodes,
            registry=registry,
            content_dir=cdir,
            params=params,
            secret=secret,
        )
        live.append(dep)
        return dep

    yield build
    for dep in live:
        dep.stop()


@pytest.fixture
def small_params():
    return PuzzleParams(n=3, r_puzzle=2, chunk_size=64 * 16, piece_size=16)


def random_chunks(params: PuzzleParams, seed: int = 0) -> list:
    import numpy as np

    rng = np.random.default_rng(seed)
    return [rng.bytes(params.chunk_size) for _ in range(params.n)]


def keyed_setup(params: PuzzleParams, seed: int = 0):
    """Chunks, per-chunk keys, and counters for puzzle tests."""
    import numpy as np

    rng = np.random.default_rng(seed)
    chunks = [rng.bytes(params.chunk_size) for _ in range(params.n)]
    keys = [rng.bytes(16) for _ in range(params.n)]
    counters = [crypto.derive_initial_counter(k) for k in keys]
    return chunks, keys, counters
