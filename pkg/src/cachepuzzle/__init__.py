"""Cache accountability puzzles for peer-assisted content delivery.

A publisher hands each content request a puzzle spanning the encrypted
chunks its caches will serve; only a client that actually retrieved the
chunks can solve it, unlock the session keys and the secret token, and
prove the transfer happened.  The package also ships the collusion
simulator that quantifies the leftover-bandwidth bound delta, and a
benchmark harness for the generator/solver hot paths.
"""

from .params import ConfigWarning, PuzzleParams
from .puzzle import (
    Challenge,
    Solution,
    SolutionNotFound,
    active_backend,
    available_backends,
    check_solution,
    generate_challenge,
    map_location_to_index,
    next_location,
    set_backend,
    solve_challenge,
)
from .crypto import (
    Envelope,
    EnvelopeAuthError,
    RequestContext,
    derive_initial_counter,
    derive_session_key,
    derive_token,
    encrypt_chunk,
    encrypt_piece,
    decrypt_chunk,
    mask_chunk,
    new_master_key,
    open_envelope,
    seal_envelope,
    strip_mask,
)
from .sim import (
    CollusionScenario,
    SimResult,
    choose_solver_role,
    simulate_delta,
    simulate_run,
    sweep,
)
from .store import CacheConfig, CacheDescriptor, ContentStore, PublisherConfig, Registry
from .nodes import CacheNode, Client, NodeServer, Publisher, client_fetch

__version__ = "0.1.0"

__all__ = [
    "CacheConfig",
    "CacheDescriptor",
    "CacheNode",
    "Challenge",
    "Client",
    "CollusionScenario",
    "ConfigWarning",
    "ContentStore",
    "Envelope",
    "EnvelopeAuthError",
    "NodeServer",
    "Publisher",
    "PublisherConfig",
    "PuzzleParams",
    "Registry",
    "RequestContext",
    "SimResult",
    "Solution",
    "SolutionNotFound",
    "active_backend",
    "available_backends",
    "check_solution",
    "choose_solver_role",
    "client_fetch",
    "decrypt_chunk",
    "derive_initial_counter",
    "derive_session_key",
    "derive_token",
    "encrypt_chunk",
    "encrypt_piece",
    "generate_challenge",
    "map_location_to_index",
    "mask_chunk",
    "new_master_key",
    "next_location",
    "open_envelope",
    "seal_envelope",
    "set_backend",
    "simulate_delta",
    "simulate_run",
    "solve_challenge",
    "strip_mask",
    "sweep",
    "__version__",
]
