"""Publisher, cache, and client roles over the TCP wire protocol.

The publisher issues request bundles and verifies reported tokens; caches
serve masked encrypted chunks; the client glues the whole retrieval together:
bundle, parallel chunk fetches, unmasking, solving, envelope opening,
decryption, and the final token report.

Node objects are transport-free and fully testable in process; thin
socketserver wrappers put them on real sockets.
"""

from __future__ import annotations

import ipaddress
import secrets
import socket
import socketserver
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass

from . import crypto, puzzle, wire
from .params import PuzzleParams
from .store import ContentStore, Registry, StoreError

CONNECT_TIMEOUT = 10.0
FETCH_ATTEMPTS = 3
RETRY_DELAY = 0.2


class ProtocolError(Exception):
    """Base for client-visible retrieval failures."""


class RemoteError(ProtocolError):
    """Peer answered with an error reply."""

    def __init__(self, code: int, detail: str):
        super().__init__("remote error %d: %s" % (code, detail))
        self.code = code
        self.detail = detail


class CorruptTransfer(ProtocolError):
    """Chunks do not solve the challenge, or an envelope failed to open."""


class VerificationRejected(ProtocolError):
    """Publisher rejected the reported token."""


class UnreachablePeer(ProtocolError):
    """Connection or transfer kept failing after retries."""


def canonical_ip_bytes(host: str) -> bytes:
    """Packed address bytes; IPv4-mapped IPv6 collapses to 4 bytes."""
    addr = ipaddress.ip_address(host)
    if isinstance(addr, ipaddress.IPv6Address) and addr.ipv4_mapped is not None:
        return addr.ipv4_mapped.packed
    return addr.packed


def parse_hostport(address: str) -> tuple[str, int]:
    """Split host:port, allowing [v6]:port."""
    host, sep, port = address.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError("address must be host:port, got %r" % address)
    if host.startswith("[") and host.endswith("]"):
        host = host[1:-1]
    if not host:
        raise ValueError("address must be host:port, got %r" % address)
    return host, int(port)


# --- publisher ----------------------------------------------------------------


class Publisher:
    """Issues bundles over registered caches and verifies tokens statelessly."""

    def __init__(
        self,
        registry: Registry,
        store: ContentStore,
        params: PuzzleParams,
        secret: bytes | None = None,
    ):
        self.registry = registry
        self.store = store
        self.params = params
        self.secret = secret if secret is not None else crypto.new_master_key()
        self._counter = 0
        self._lock = threading.Lock()
        self._rand = secrets.SystemRandom()

    def _next_request_number(self) -> int:
        with self._lock:
            self._counter += 1
            return self._counter

    def issue_bundle(
        self, object_id: str, first_chunk: int, count: int, client_ip: bytes
    ) -> wire.RequestBundle:
        """Build one request bundle covering `count` logical chunks.

        Picks n caches uniformly at random without replacement and assigns
        the chunks first_chunk..first_chunk+count-1 in order; when count < n
        the remaining slots repeat the last chunk so that every cache still
        serves exactly one chunk.  A count larger than one bundle can carry
        is clamped (the client reads the granted count from the bundle and
        asks again for the rest).
        """
        params = self.params
        if count < 1:
            raise RemoteError(wire.E_BAD_REQUEST, "count must be positive")
        total = self.store.chunk_count(object_id)
        if not 0 <= first_chunk < total:
            raise RemoteError(
                wire.E_BAD_REQUEST,
                "first chunk %d out of range (object has %d)" % (first_chunk, total),
            )
        count = min(count, params.n, total - first_chunk)
        caches = self.registry.all()
        if len(caches) < params.n:
            raise RemoteError(
                wire.E_CAPACITY,
                "need %d caches, registry has %d" % (params.n, len(caches)),
            )
        chosen = self._rand.sample(caches, params.n)
        request_number = self._next_request_number()
        ctx = crypto.RequestContext(request_number, client_ip)

        indices = [first_chunk + min(i, count - 1) for i in range(params.n)]
        keys = [crypto.derive_session_key(c.master_key, ctx) for c in chosen]
        counters = [crypto.derive_initial_counter(k) for k in keys]
        chunks = [self.store.get_chunk(object_id, idx) for idx in indices]

        start = self._rand.randrange(params.pieces_total)
        challenge, solution = puzzle.generate_challenge(
            chunks, keys, counters, params, start
        )
        key_envelope = crypto.seal_envelope(solution, b"".join(keys))
        token = crypto.derive_token(self.secret, ctx)
        token_envelope = crypto.seal_envelope(solution, token)

        assignments = tuple(
            wire.CacheAssignment(c.cache_id, c.address, idx)
            for c, idx in zip(chosen, indices)
        )
        return wire.RequestBundle(
            request_number=request_number,
            client_ip=client_ip,
            object_id=object_id,
            first_chunk=first_chunk,
            count=count,
            assignments=assignments,
            challenge=challenge,
            key_envelope=key_envelope,
            token_envelope=token_envelope,
            params=params,
        )

    def verify_token(self, request_number: int, client_ip: bytes, token: bytes) -> bool:
        """Accept iff the token matches the PRF for this exact context."""
        try:
            ctx = crypto.RequestContext(request_number, client_ip)
        except ValueError:
            return False
        expect = crypto.derive_token(self.secret, ctx)
        return secrets.compare_digest(expect, token)

    def dispatch(self, msg: wire.Message, peer_ip: bytes) -> wire.Message:
        if isinstance(msg, wire.ContentRequest):
            try:
                return self.issue_bundle(
                    msg.object_id, msg.first_chunk, msg.count, peer_ip
                )
            except StoreError as exc:
                return wire.ErrorReply(wire.E_NOT_FOUND, str(exc))
            except RemoteError as exc:
                return wire.ErrorReply(exc.code, exc.detail)
        if isinstance(msg, wire.TokenReport):
            return wire.TokenAck(
                self.verify_token(msg.request_number, peer_ip, msg.token)
            )
        return wire.ErrorReply(wire.E_BAD_REQUEST, "unexpected message for publisher")


def publisher_handle_content_request(
    req: wire.ContentRequest, state: Publisher, client_ip: bytes
) -> wire.RequestBundle:
    return state.issue_bundle(req.object_id, req.first_chunk, req.count, client_ip)


def publisher_verify_token(
    state: Publisher, request_number: int, client_ip: bytes, token: bytes
) -> bool:
    return state.verify_token(request_number, client_ip, token)


# --- cache ----------------------------------------------------------------------


class CacheNode:
    """Serves masked, per-request-encrypted chunks for one master key."""

    def __init__(self, cache_id: int, master_key: bytes, store: ContentStore):
        if len(master_key) != 32:
            raise ValueError("master key must be 32 bytes")
        self.cache_id = cache_id
        self.master_key = master_key
        self.store = store

    def handle_chunk_request(
        self, req: wire.ChunkRequest, peer_ip: bytes | None = None
    ) -> wire.ChunkReply:
        """Encrypt the chunk for this request context and mask it.

        When peer_ip is given, the connection's source address must equal the
        context address; a colluder cannot pull chunks keyed to someone else.
        """
        if peer_ip is not None and peer_ip != req.client_ip:
            raise RemoteError(wire.E_BAD_REQUEST, "source address mismatch")
        ctx = crypto.RequestContext(req.request_number, req.client_ip)
        chunk = self.store.get_chunk(req.object_id, req.chunk_index)
        session_key = crypto.derive_session_key(self.master_key, ctx)
        ictr = crypto.derive_initial_counter(session_key)
        encrypted = crypto.encrypt_chunk(session_key, ictr, chunk)
        payload, _mask = crypto.mask_chunk(encrypted)
        return wire.ChunkReply(payload)

    def dispatch(self, msg: wire.Message, peer_ip: bytes) -> wire.Message:
        if isinstance(msg, wire.ChunkRequest):
            try:
                return self.handle_chunk_request(msg, peer_ip)
            except StoreError as exc:
                return wire.ErrorReply(wire.E_NOT_FOUND, str(exc))
            except RemoteError as exc:
                return wire.ErrorReply(exc.code, exc.detail)
            except ValueError as exc:
                return wire.ErrorReply(wire.E_BAD_REQUEST, str(exc))
        return wire.ErrorReply(wire.E_BAD_REQUEST, "unexpected message for cache")


def cache_handle_chunk_request(
    req: wire.ChunkRequest, state: CacheNode, peer_ip: bytes | None = None
) -> wire.ChunkReply:
    return state.handle_chunk_request(req, peer_ip)


# --- socket plumbing -------------------------------------------------------------


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        peer = canonical_ip_bytes(self.client_address[0])
        while True:
            try:
                msg = wire.recv_message(self.rfile)
            except (wire.WireError, OSError):
                return
            try:
                reply = self.server.node.dispatch(msg, peer)
            except Exception as exc:  # never kill the connection loop
                reply = wire.ErrorReply(wire.E_INTERNAL, str(exc))
            try:
                wire.send_message(self.wfile, reply)
            except OSError:
                return


class NodeServer(socketserver.ThreadingTCPServer):
    """TCP front for a Publisher or CacheNode."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, listen: str, node):
        self.node = node
        super().__init__(parse_hostport(listen), _Handler)

    @property
    def address(self) -> str:
        host, port = self.server_address[0], self.server_address[1]
        if ":" in host:
            host = "[%s]" % host
        return "%s:%d" % (host, port)

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


# --- client -----------------------------------------------------------------------


@contextmanager
def _connect(address: str, timeout: float = CONNECT_TIMEOUT):
    host, port = parse_hostport(address)
    with socket.create_connection((host, port), timeout=timeout) as sock:
        stream = sock.makefile("rwb")
        try:
            yield stream
        finally:
            stream.close()


def _request(address: str, msg: wire.Message) -> wire.Message:
    with _connect(address) as stream:
        wire.send_message(stream, msg)
        reply = wire.recv_message(stream)
    if isinstance(reply, wire.ErrorReply):
        raise RemoteError(reply.code, reply.detail)
    return reply


def _request_retry(address: str, msg: wire.Message) -> wire.Message:
    last: Exception | None = None
    for attempt in range(FETCH_ATTEMPTS):
        try:
            return _request(address, msg)
        except (OSError, wire.WireError) as exc:
            last = exc
            if attempt + 1 < FETCH_ATTEMPTS:
                time.sleep(RETRY_DELAY * (attempt + 1))
    raise UnreachablePeer("giving up on %s: %s" % (address, last))


@dataclass
class FetchResult:
    chunks: list[bytes]  # raw logical chunks, padding duplicates dropped
    request_numbers: list[int]
    accepted: bool  # False only when gating was disabled


@dataclass
class BundleOutcome:
    """One bundle's retrieval: raw chunks plus the proof material."""

    chunks: list[bytes]
    token: bytes
    request_number: int
    accepted: bool


class Client:
    """Reference retrieval client."""

    def __init__(self, publisher_address: str, gate: bool = True):
        self.publisher_address = publisher_address
        self.gate = gate

    def fetch_bundle(self, object_id: str, first_chunk: int, count: int) -> wire.RequestBundle:
        reply = _request(
            self.publisher_address, wire.ContentRequest(object_id, first_chunk, count)
        )
        if not isinstance(reply, wire.RequestBundle):
            raise ProtocolError("expected a request bundle, got %r" % type(reply).__name__)
        return reply

    def _fetch_masked(self, bundle: wire.RequestBundle) -> list[bytes]:
        def one(assignment: wire.CacheAssignment) -> bytes:
            req = wire.ChunkRequest(
                bundle.object_id,
                assignment.chunk_index,
                bundle.request_number,
                bundle.client_ip,
            )
            reply = _request_retry(assignment.address, req)
            if not isinstance(reply, wire.ChunkReply):
                raise ProtocolError("expected a chunk reply, got %r" % type(reply).__name__)
            expect = bundle.params.chunk_size + crypto.MASK_SIZE
            if len(reply.payload) != expect:
                raise CorruptTransfer(
                    "masked payload is %d bytes, expected %d" % (len(reply.payload), expect)
                )
            return reply.payload

        workers = min(len(bundle.assignments), 8)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, bundle.assignments))

    def retrieve_bundle(self, bundle: wire.RequestBundle) -> BundleOutcome:
        """Fetch, unmask, solve, unseal, decrypt, and (optionally) report.

        With gating on, the outcome is only returned after TokenAck(accept);
        a reject raises VerificationRejected.  With gating off the token is
        not reported and the outcome carries accepted=False.
        """
        params = bundle.params
        masked = self._fetch_masked(bundle)
        encrypted = [crypto.strip_mask(p) for p in masked]
        try:
            solution = puzzle.solve_challenge(encrypted, bundle.challenge, params)
        except puzzle.SolutionNotFound as exc:
            raise CorruptTransfer("challenge unsolvable over received chunks") from exc
        try:
            key_blob = crypto.open_envelope(solution, bundle.key_envelope)
            token = crypto.open_envelope(solution, bundle.token_envelope)
        except crypto.EnvelopeAuthError as exc:
            raise CorruptTransfer("envelope failed to authenticate") from exc
        if len(key_blob) != params.n * crypto.SESSION_KEY_SIZE:
            raise CorruptTransfer("key envelope has wrong size")

        raw = []
        for j in range(bundle.count):
            key = key_blob[j * 16 : (j + 1) * 16]
            ictr = crypto.derive_initial_counter(key)
            raw.append(crypto.decrypt_chunk(key, ictr, encrypted[j]))

        accepted = False
        if self.gate:
            if not self.report_token(bundle.request_number, token):
                raise VerificationRejected("publisher rejected the token")
            accepted = True
        return BundleOutcome(
            chunks=raw, token=token, request_number=bundle.request_number,
            accepted=accepted,
        )

    def report_token(self, request_number: int, token: bytes) -> bool:
        """Report a recovered token; True iff the publisher accepts it."""
        ack = _request(self.publisher_address, wire.TokenReport(request_number, token))
        if not isinstance(ack, wire.TokenAck):
            raise ProtocolError("expected a token ack, got %r" % type(ack).__name__)
        return ack.accept

    def fetch(self, object_id: str, first_chunk: int, count: int) -> FetchResult:
        """Fetch `count` chunks starting at first_chunk, in bundle-size steps."""
        if count < 1:
            raise ValueError("count must be positive")
        chunks: list[bytes] = []
        numbers: list[int] = []
        accepted = True
        done = 0
        while done < count:
            bundle = self.fetch_bundle(object_id, first_chunk + done, count - done)
            outcome = self.retrieve_bundle(bundle)
            chunks.extend(outcome.chunks)
            numbers.append(bundle.request_number)
            accepted = accepted and outcome.accepted
            done += bundle.count
        return FetchResult(chunks=chunks, request_numbers=numbers, accepted=accepted)


def client_fetch(
    object_id: str,
    chunk_range: tuple[int, int],
    publisher_address: str,
    gate: bool = True,
) -> list[bytes]:
    """Fetch chunks [first, first+count) and return the raw chunk list."""
    first, count = chunk_range
    client = Client(publisher_address, gate=gate)
    return client.fetch(object_id, first, count).chunks
