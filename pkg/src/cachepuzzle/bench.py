"""Single-core throughput benchmarks for the puzzle generator and solver.

Methodology: every sweep point runs `warmup` untimed calls, then `iterations`
timed calls grouped into batches of up to 100; per-call time is the batch
wall time divided by batch size, and the row reports mean/std across batches.
Fixtures are seeded pseudorandom chunks created before timing starts; "warm"
reuses one fixture for every call, "rotate" cycles through four fixtures so
successive calls touch different memory.  Nothing inside the timed region
allocates proportionally to the iteration count.

Bitrate converts puzzle throughput into the content bandwidth it can gate:
requests_per_second * n * chunk_size * 8 for the generator, and
n * chunk_size * 8 / mean_solve_time for the solver.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from . import crypto, puzzle
from .params import PuzzleParams
from .sim import CollusionScenario, simulate_delta

BATCH_CALLS = 100
ROTATE_FIXTURES = 4
SEED_ENV = "CACHEPUZZLE_SEED"

CSV_COLUMNS = (
    "role", "backend", "fixture", "n", "r_puzzle", "chunk_size", "piece_size",
    "pieces_total", "iterations", "warmup", "mean_call_s", "std_call_s",
    "calls_per_second", "bitrate_bits_per_second", "trials_mean", "delta_m1",
)


@dataclass(frozen=True)
class BenchConfig:
    role: str  # "generator" or "solver"
    n_values: tuple[int, ...] = (4,)
    r_values: tuple[int, ...] = (5,)
    chunk_sizes: tuple[int, ...] = (1 << 20,)
    piece_sizes: tuple[int, ...] = (16,)
    iterations: int = 1000
    warmup: int = 100
    fixture: str = "warm"  # warm | rotate | both
    backend: str = "auto"  # auto | c | py | both
    seed: Optional[int] = None
    delta_runs: int = 60

    def __post_init__(self) -> None:
        if self.role not in ("generator", "solver"):
            raise ValueError("role must be 'generator' or 'solver'")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.warmup < 0:
            raise ValueError("warmup cannot be negative")
        for name in ("n_values", "r_values", "chunk_sizes", "piece_sizes"):
            if not getattr(self, name):
                raise ValueError("%s must be non-empty" % name)
        if self.fixture not in ("warm", "rotate", "both"):
            raise ValueError("fixture must be warm, rotate, or both")
        if self.backend not in ("auto", "c", "py", "both"):
            raise ValueError("backend must be auto, c, py, or both")

    def resolved_seed(self) -> int:
        if self.seed is not None:
            return self.seed
        env = os.environ.get(SEED_ENV)
        return int(env) if env else 0


@dataclass(frozen=True)
class BenchRow:
    role: str
    backend: str
    fixture: str
    n: int
    r_puzzle: int
    chunk_size: int
    piece_size: int
    pieces_total: int
    iterations: int
    warmup: int
    mean_call_s: float
    std_call_s: float
    calls_per_second: float
    bitrate_bits_per_second: float
    trials_mean: float  # NaN for the generator
    delta_m1: float

    def as_csv_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class _Fixture:
    """Pre-generated raw chunks with per-chunk keys and counters."""

    def __init__(self, params: PuzzleParams, rng: np.random.Generator):
        self.chunks = [rng.bytes(params.chunk_size) for _ in range(params.n)]
        self.keys = [rng.bytes(16) for _ in range(params.n)]
        self.counters = [crypto.derive_initial_counter(k) for k in self.keys]
        self.encrypted = [
            crypto.encrypt_chunk(self.keys[j], self.counters[j], self.chunks[j])
            for j in range(params.n)
        ]


def _fixture_pool(params: PuzzleParams, fixture: str, seed: int) -> list[_Fixture]:
    rng = np.random.default_rng([seed, params.n, params.r_puzzle,
                                 params.chunk_size, params.piece_size])
    count = 1 if fixture == "warm" else ROTATE_FIXTURES
    return [_Fixture(params, rng) for _ in range(count)]


def _delta_at_m1(params: PuzzleParams, cfg: BenchConfig) -> float:
    # collusion bound these parameters buy, at the weakest level (one
    # malicious cache); n=1 has no honest/malicious split worth simulating
    if params.n < 2:
        return 1.0
    sc = CollusionScenario(
        n=params.n,
        m=1,
        r_puzzle=params.r_puzzle,
        pieces_total=params.pieces_total,
        runs=cfg.delta_runs,
        seed=cfg.resolved_seed(),
    )
    return simulate_delta(sc).delta_mean


def _batch_sizes(iterations: int) -> list[int]:
    out = [BATCH_CALLS] * (iterations // BATCH_CALLS)
    if iterations % BATCH_CALLS:
        out.append(iterations % BATCH_CALLS)
    return out


def _backends(cfg: BenchConfig) -> list[str]:
    avail = puzzle.available_backends()
    if cfg.backend == "auto":
        return [puzzle.active_backend()]
    if cfg.backend == "both":
        return avail
    if cfg.backend not in avail:
        raise ValueError("backend %r not available (have %s)" % (cfg.backend, avail))
    return [cfg.backend]


def _sweep_points(cfg: BenchConfig):
    for n in cfg.n_values:
        for r in cfg.r_values:
            for cs in cfg.chunk_sizes:
                for ps in cfg.piece_sizes:
                    yield PuzzleParams(n=n, r_puzzle=r, chunk_size=cs, piece_size=ps)


def _time_batches(call, iterations: int, warmup: int) -> tuple[float, float]:
    """Mean and std of per-call seconds, batched; warmup excluded."""
    for _ in range(warmup):
        call()
    per_call = []
    for size in _batch_sizes(iterations):
        t0 = time.perf_counter()
        for _ in range(size):
            call()
        per_call.append((time.perf_counter() - t0) / size)
    arr = np.asarray(per_call)
    std = float(arr.std(ddof=1)) if len(per_call) > 1 else 0.0
    return float(arr.mean()), std


def _generator_rows(cfg: BenchConfig, params: PuzzleParams, backend: str,
                    fixture_kind: str, delta: float) -> BenchRow:
    pool = _fixture_pool(params, fixture_kind, cfg.resolved_seed())
    starts = np.random.default_rng(cfg.resolved_seed() + 1).integers(
        0, params.pieces_total, size=len(pool) * 64
    )
    state = {"i": 0}

    def call():
        i = state["i"]
        fx = pool[i % len(pool)]
        puzzle.generate_challenge(
            fx.chunks, fx.keys, fx.counters, params, int(starts[i % len(starts)])
        )
        state["i"] = i + 1

    mean, std = _time_batches(call, cfg.iterations, cfg.warmup)
    rate = 1.0 / mean if mean > 0 else float("inf")
    return BenchRow(
        role="generator", backend=backend, fixture=fixture_kind,
        n=params.n, r_puzzle=params.r_puzzle, chunk_size=params.chunk_size,
        piece_size=params.piece_size, pieces_total=params.pieces_total,
        iterations=cfg.iterations, warmup=cfg.warmup,
        mean_call_s=mean, std_call_s=std, calls_per_second=rate,
        bitrate_bits_per_second=rate * params.n * params.chunk_size * 8,
        trials_mean=float("nan"), delta_m1=delta,
    )


def _solver_rows(cfg: BenchConfig, params: PuzzleParams, backend: str,
                 fixture_kind: str, delta: float) -> BenchRow:
    pool = _fixture_pool(params, fixture_kind, cfg.resolved_seed())
    rng = np.random.default_rng(cfg.resolved_seed() + 2)
    total_calls = cfg.warmup + cfg.iterations
    starts = rng.integers(0, params.pieces_total, size=total_calls)
    challenges = []
    for i in range(total_calls):
        fx = pool[i % len(pool)]
        ch, _sol = puzzle.generate_challenge(
            fx.chunks, fx.keys, fx.counters, params, int(starts[i])
        )
        challenges.append(ch)

    state = {"i": 0, "trials": 0}

    def call():
        i = state["i"]
        fx = pool[i % len(pool)]
        sol = puzzle.solve_challenge(fx.encrypted, challenges[i], params)
        state["i"] = i + 1
        state["trials"] += sol.start_index + 1

    mean, std = _time_batches(call, cfg.iterations, cfg.warmup)
    timed_trials = state["trials"]
    for i in range(cfg.warmup):
        timed_trials -= int(starts[i]) + 1
    rate = 1.0 / mean if mean > 0 else float("inf")
    return BenchRow(
        role="solver", backend=backend, fixture=fixture_kind,
        n=params.n, r_puzzle=params.r_puzzle, chunk_size=params.chunk_size,
        piece_size=params.piece_size, pieces_total=params.pieces_total,
        iterations=cfg.iterations, warmup=cfg.warmup,
        mean_call_s=mean, std_call_s=std, calls_per_second=rate,
        bitrate_bits_per_second=params.n * params.chunk_size * 8 / mean,
        trials_mean=timed_trials / cfg.iterations, delta_m1=delta,
    )


def run_bench(cfg: BenchConfig) -> list[BenchRow]:
    """All sweep points crossed with backends and fixture kinds."""
    fixtures = ("warm", "rotate") if cfg.fixture == "both" else (cfg.fixture,)
    rows = []
    previous = puzzle.active_backend()
    try:
        for params in _sweep_points(cfg):
            delta = _delta_at_m1(params, cfg)
            for backend in _backends(cfg):
                puzzle.set_backend(backend)
                for fixture_kind in fixtures:
                    fn = _generator_rows if cfg.role == "generator" else _solver_rows
                    rows.append(fn(cfg, params, backend, fixture_kind, delta))
    finally:
        puzzle.set_backend(previous)
    return rows


def bench_generator(cfg: BenchConfig) -> list[BenchRow]:
    if cfg.role != "generator":
        raise ValueError("config role is %r" % cfg.role)
    return run_bench(cfg)


def bench_solver(cfg: BenchConfig) -> list[BenchRow]:
    if cfg.role != "solver":
        raise ValueError("config role is %r" % cfg.role)
    return run_bench(cfg)


def write_csv(rows: list[BenchRow], out) -> None:
    """Write rows with the stable CSV schema to a path or text stream."""
    own = isinstance(out, (str, os.PathLike))
    fh = open(out, "w", newline="") if own else out
    try:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row.as_csv_dict())
    finally:
        if own:
            fh.close()
