"""Unified command-line entry point.

Subcommands: publisher serve, cache serve, client fetch, sim delta,
sim sweep, bench.  All output intended for machines (sim/bench sweeps) is
CSV; everything else prints short human-readable lines.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import sys

from . import __version__, bench, sim
from .nodes import CacheNode, Client, NodeServer, ProtocolError, Publisher
from .params import PuzzleParams
from .store import (
    CacheConfig, ConfigError, ContentStore, PublisherConfig, Registry, StoreError,
)
from .wire import WireError


def _int_list(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(part, 0) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated integers") from None
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def _chunk_range(text: str) -> tuple[int, int]:
    first, sep, last = text.partition("..")
    if not sep:
        raise argparse.ArgumentTypeError("range must look like A..B")
    try:
        a, b = int(first), int(last)
    except ValueError:
        raise argparse.ArgumentTypeError("range must look like A..B") from None
    if a < 0 or b < a:
        raise argparse.ArgumentTypeError("range must satisfy 0 <= A <= B")
    return a, b - a + 1


def _serve(server: NodeServer, banner: str) -> int:
    print(banner, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def _cmd_publisher_serve(args) -> int:
    cfg = PublisherConfig.load(args.config)
    registry = Registry.load(cfg.registry)
    store = ContentStore(cfg.content_dir, cfg.params.chunk_size)
    node = Publisher(registry, store, cfg.params, secret=cfg.secret)
    server = NodeServer(cfg.listen, node)
    return _serve(
        server,
        "publisher listening on %s (n=%d, %d caches registered)"
        % (server.address, cfg.params.n, len(registry)),
    )


def _cmd_cache_serve(args) -> int:
    cfg = CacheConfig.load(args.config)
    store = ContentStore(cfg.content_dir, cfg.chunk_size)
    node = CacheNode(cfg.cache_id, cfg.master_key, store)
    server = NodeServer(cfg.listen, node)
    return _serve(
        server,
        "cache %d listening on %s" % (cfg.cache_id, server.address),
    )


def _cmd_client_fetch(args) -> int:
    first, count = args.range
    client = Client(args.publisher, gate=not args.no_gate)
    result = client.fetch(args.object, first, count)
    blob = b"".join(result.chunks)
    if args.out:
        with open(args.out, "wb") as fh:
            fh.write(blob)
        sink = args.out
    else:
        sink = "(discarded; pass --out to save)"
    print(
        "fetched %d chunks (%d bytes) of %r -> %s"
        % (len(result.chunks), len(blob), args.object, sink)
    )
    print("sha256 %s" % hashlib.sha256(blob).hexdigest())
    print(
        "requests %s, token %s"
        % (
            ",".join(str(r) for r in result.request_numbers),
            "accepted" if result.accepted else "not reported (gating off)",
        )
    )
    return 0


def _positions(text: str):
    if text == "random":
        return "random"
    return _int_list(text)


def _cmd_sim_delta(args) -> int:
    scenario = sim.CollusionScenario(
        n=args.n,
        m=args.m,
        r_puzzle=args.rounds,
        pieces_total=args.pieces,
        runs=args.runs,
        seed=args.seed,
        malicious_positions=args.positions,
        piece_size=args.piece_size,
    )
    result = sim.simulate_delta(scenario)
    print(
        "n=%d m=%d rounds=%d pieces_total=%d runs=%d delta_mean=%.6f "
        "delta_std=%.6f expected_y=%.1f solver_role=%s"
        % (
            args.n, args.m, args.rounds, args.pieces, args.runs,
            result.delta_mean, result.delta_std, result.expected_y,
            result.solver_role,
        )
    )
    return 0


def _write_dict_csv(rows: list[dict], columns, out_path) -> None:
    fh = open(out_path, "w", newline="") if out_path else sys.stdout
    try:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if out_path:
            fh.close()


def _cmd_sim_sweep(args) -> int:
    if args.table2:
        scenarios = sim.full_grid(
            pieces_total=args.pieces, runs=args.runs, seed=args.seed
        )
    else:
        scenarios = [
            sim.CollusionScenario(
                n=args.n, m=m, r_puzzle=r, pieces_total=args.pieces,
                runs=args.runs, seed=args.seed,
            )
            for r in args.rounds
            for m in args.m
        ]
    rows = sim.sweep(scenarios)
    _write_dict_csv(rows, sim.CSV_COLUMNS, args.out)
    if args.out:
        print("wrote %d rows to %s" % (len(rows), args.out))
    return 0


def _cmd_bench(args) -> int:
    cfg = bench.BenchConfig(
        role=args.role,
        n_values=args.n,
        r_values=args.rounds,
        chunk_sizes=args.chunk_size,
        piece_sizes=args.piece_size,
        iterations=args.iterations,
        warmup=args.warmup,
        fixture=args.fixture,
        backend=args.backend,
        seed=args.seed,
    )
    rows = bench.run_bench(cfg)
    bench.write_csv(rows, args.out if args.out else sys.stdout)
    if args.out:
        print("wrote %d rows to %s" % (len(rows), args.out))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cachepuzzle",
        description="Accountable peer-assisted content delivery: puzzle "
        "publisher/cache/client nodes, collusion simulator, benchmarks.",
    )
    parser.add_argument("--version", action="version", version="cachepuzzle %s" % __version__)
    sub = parser.add_subparsers(dest="command", required=True)

    pub = sub.add_parser("publisher", help="publisher node")
    pub_sub = pub.add_subparsers(dest="action", required=True)
    pub_serve = pub_sub.add_parser("serve", help="serve bundles and verify tokens")
    pub_serve.add_argument("--config", required=True, help="key=value config file")
    pub_serve.set_defaults(func=_cmd_publisher_serve)

    cache = sub.add_parser("cache", help="cache node")
    cache_sub = cache.add_subparsers(dest="action", required=True)
    cache_serve = cache_sub.add_parser("serve", help="serve masked encrypted chunks")
    cache_serve.add_argument("--config", required=True, help="key=value config file")
    cache_serve.set_defaults(func=_cmd_cache_serve)

    client = sub.add_parser("client", help="retrieval client")
    client_sub = client.add_subparsers(dest="action", required=True)
    fetch = client_sub.add_parser("fetch", help="fetch a chunk range end to end")
    fetch.add_argument("--publisher", required=True, help="publisher HOST:PORT")
    fetch.add_argument("--object", required=True, help="object id (file name)")
    fetch.add_argument("--range", required=True, type=_chunk_range,
                       help="inclusive chunk range A..B")
    fetch.add_argument("--no-gate", action="store_true",
                       help="skip the token report; do not wait for the ack")
    fetch.add_argument("--out", help="write fetched bytes to this file")
    fetch.set_defaults(func=_cmd_client_fetch)

    simp = sub.add_parser("sim", help="collusion simulator")
    sim_sub = simp.add_subparsers(dest="action", required=True)

    delta = sim_sub.add_parser("delta", help="estimate delta for one scenario")
    delta.add_argument("--n", type=int, required=True, help="caches per request")
    delta.add_argument("--m", type=int, required=True, help="malicious cache count")
    delta.add_argument("--rounds", type=int, required=True, help="puzzle rounds")
    delta.add_argument("--pieces", type=int, required=True, help="pieces per chunk")
    delta.add_argument("--runs", type=int, required=True, help="simulation repeats")
    delta.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    delta.add_argument("--positions", type=_positions, default="random",
                       help="malicious chunk indices, comma-separated, or 'random'")
    delta.add_argument("--piece-size", type=int, default=None,
                       help="piece size in bytes; enables the hash-shipping warning")
    delta.set_defaults(func=_cmd_sim_delta)

    swp = sim_sub.add_parser("sweep", help="grid of scenarios to CSV")
    swp.add_argument("--table2", action="store_true",
                     help="built-in reference grid: n=6, m=0..6, rounds=1..10")
    swp.add_argument("--n", type=int, default=6, help="caches per request")
    swp.add_argument("--m", type=_int_list, default=(0, 1, 2, 3, 4, 5, 6),
                     help="malicious counts, comma-separated")
    swp.add_argument("--rounds", type=_int_list, default=tuple(range(1, 11)),
                     help="round values, comma-separated")
    swp.add_argument("--pieces", type=int, default=65536, help="pieces per chunk")
    swp.add_argument("--runs", type=int, default=1000, help="repeats per point")
    swp.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    swp.add_argument("--out", help="output CSV path (default stdout)")
    swp.set_defaults(func=_cmd_sim_sweep)

    bch = sub.add_parser("bench", help="single-core generator/solver benchmarks")
    bch.add_argument("--role", choices=("generator", "solver"), required=True)
    bch.add_argument("--rounds", type=_int_list, default=(5,),
                     help="puzzle round values, comma-separated")
    bch.add_argument("--n", type=_int_list, default=(4,),
                     help="caches per request, comma-separated")
    bch.add_argument("--chunk-size", type=_int_list, default=(1 << 20,),
                     help="chunk sizes in bytes, comma-separated")
    bch.add_argument("--piece-size", type=_int_list, default=(16,),
                     help="piece sizes in bytes, comma-separated")
    bch.add_argument("--iterations", type=int, default=1000,
                     help="timed calls per sweep point")
    bch.add_argument("--warmup", type=int, default=100,
                     help="untimed calls before measuring")
    bch.add_argument("--fixture", choices=("warm", "rotate", "both"), default="warm",
                     help="reuse one fixture, rotate four, or measure both")
    bch.add_argument("--backend", choices=("auto", "c", "py", "both"), default="auto",
                     help="chain backend to measure")
    bch.add_argument("--seed", type=int, default=None,
                     help="fixture/sim seed (default: $CACHEPUZZLE_SEED or 0)")
    bch.add_argument("--out", help="output CSV path (default stdout)")
    bch.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 130
    except (ConfigError, StoreError, ProtocolError, WireError, ValueError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
