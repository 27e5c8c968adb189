"""Acceptance suite: the eight checks this package must pass to ship.

Every test prints exactly one verdict line to the real stdout (visible even
under pytest capture) with the measured values and the tolerance it was held
to, then asserts.  Tolerances live next to each check, not in a config.
"""

import math
import random
import time

import pytest

from cachepuzzle import crypto, puzzle
from cachepuzzle.bench import BenchConfig, run_bench
from cachepuzzle.nodes import Client
from cachepuzzle.params import PuzzleParams
from cachepuzzle.sim import CollusionScenario, simulate_delta
from cachepuzzle.wire import ChunkRequest

from test_crypto import RFC4231_CASES, SP800_38A_CT, SP800_38A_CTR, SP800_38A_KEY, SP800_38A_PT

IP = b"\x7f\x00\x00\x01"


def _verdict(capsys, num: int, name: str, ok: bool, detail: str) -> None:
    line = "ACCEPTANCE %d (%s): %s  [%s]" % (
        num, name, "PASS" if ok else "FAIL", detail,
    )
    with capsys.disabled():
        print(line, flush=True)
    assert ok, line


# --- 1: generator/solver round trip ------------------------------------------


def test_acceptance_1_round_trip_property(capsys):
    """200 random configs (n 1..8, rounds 1..10, pieces 64/256/4096): the
    solver must recover the generator's exact solution every time, < 2 min."""
    t0 = time.monotonic()
    rng = random.Random(1)
    failures = 0
    for _ in range(200):
        n = rng.randint(1, 8)
        r = rng.randint(1, 10)
        pieces = rng.choice((64, 256, 4096))
        params = PuzzleParams(n=n, r_puzzle=r, chunk_size=pieces * 16, piece_size=16)
        chunks = [rng.randbytes(params.chunk_size) for _ in range(n)]
        keys = [rng.randbytes(16) for _ in range(n)]
        counters = [crypto.derive_initial_counter(k) for k in keys]
        start = rng.randrange(pieces)
        challenge, solution = puzzle.generate_challenge(
            chunks, keys, counters, params, start
        )
        encrypted = [
            crypto.encrypt_chunk(keys[j], counters[j], chunks[j]) for j in range(n)
        ]
        try:
            got = puzzle.solve_challenge(encrypted, challenge, params)
        except puzzle.SolutionNotFound:
            failures += 1
            continue
        if got != solution or not puzzle.check_solution(challenge, got):
            failures += 1
    elapsed = time.monotonic() - t0
    _verdict(
        capsys,
        1, "round-trip property, 200 random configs",
        failures == 0 and elapsed < 120,
        "failures=%d/200 elapsed=%.1fs budget=120s" % (failures, elapsed),
    )


# --- 2: encryption consistency ------------------------------------------------


def test_acceptance_2_encryption_consistency(capsys):
    """Per-piece encryption equals the matching whole-chunk slice for all 64
    pieces of a chunk across 20 random keys; the cipher and MAC primitives
    reproduce their published vectors (SP 800-38A F.5.1, RFC 4231)."""
    rng = random.Random(2)
    mismatches = 0
    for _ in range(20):
        key = rng.randbytes(16)
        ictr = crypto.derive_initial_counter(key)
        chunk = rng.randbytes(64 * 16)
        whole = crypto.encrypt_chunk(key, ictr, chunk)
        for idx in range(64):
            piece = chunk[idx * 16 : (idx + 1) * 16]
            if crypto.encrypt_piece(key, ictr, idx, piece) != whole[idx * 16 : (idx + 1) * 16]:
                mismatches += 1
    ctr_ok = crypto.encrypt_chunk(SP800_38A_KEY, SP800_38A_CTR, SP800_38A_PT) == SP800_38A_CT
    mac_ok = all(crypto._prf(key, msg).hex() == want for key, msg, want in RFC4231_CASES)
    _verdict(
        capsys,
        2, "piece/chunk encryption consistency + published vectors",
        mismatches == 0 and ctr_ok and mac_ok,
        "slice_mismatches=%d/1280 aes_ctr_vector=%s hmac_vectors=%s"
        % (mismatches, ctr_ok, mac_ok),
    )


# --- 3: end-to-end loopback -----------------------------------------------------


def test_acceptance_3_end_to_end_loopback(capsys, deployment_factory):
    """1 publisher + 4 caches + 1 client over loopback sockets with 1 MiB
    chunks, n=4, 5 rounds: content byte-identical, token accepted, and a
    publisher restart between bundle and report still accepts; < 1 min."""
    t0 = time.monotonic()
    params = PuzzleParams(n=4, r_puzzle=5, chunk_size=1 << 20, piece_size=16)
    blob = random.Random(3).randbytes(4 << 20)
    dep = deployment_factory({"movie": blob}, params)

    result = Client(dep.address).fetch("movie", 0, 4)
    bytes_ok = b"".join(result.chunks) == blob
    ack_ok = result.accepted

    # hold the token across a publisher replacement, then report it
    quiet = Client(dep.address, gate=False)
    outcome = quiet.retrieve_bundle(quiet.fetch_bundle("movie", 0, 4))
    dep.restart_publisher()
    restart_ok = quiet.report_token(outcome.request_number, outcome.token)

    elapsed = time.monotonic() - t0
    _verdict(
        capsys,
        3, "end-to-end loopback, 1 MiB chunks",
        bytes_ok and ack_ok and restart_ok and elapsed < 60,
        "byte_identical=%s token_accepted=%s accepted_after_restart=%s "
        "elapsed=%.1fs budget=60s" % (bytes_ok, ack_ok, restart_ok, elapsed),
    )


# --- 4: collusion bound reference cells ------------------------------------------


def test_acceptance_4_collusion_reference_cells(capsys):
    """Reference operating points at n=6.  Full preset: pieces=2^16, 300 runs,
    tolerance 0.05.  Reduced preset: pieces=2^12, 100 runs, tolerance 0.08.
    Boundary cells (m=0 -> 1.0, m=6 -> 0.0) must be exact in both."""
    cells = ((1, 4, 0.45), (5, 3, 0.93), (10, 1, 0.97))
    presets = (("reduced", 4096, 100, 0.08), ("full", 65536, 300, 0.05))
    worst = 0.0
    failed = []
    for label, pieces, runs, tol in presets:
        for r, m, target in cells:
            res = simulate_delta(CollusionScenario(
                n=6, m=m, r_puzzle=r, pieces_total=pieces, runs=runs, seed=0
            ))
            dev = abs(res.delta_mean - target)
            worst = max(worst, dev)
            if dev > tol:
                failed.append("%s R=%d m=%d got %.4f want %.2f+-%.2f"
                              % (label, r, m, res.delta_mean, target, tol))
        for m, want in ((0, 1.0), (6, 0.0)):
            res = simulate_delta(CollusionScenario(
                n=6, m=m, r_puzzle=1, pieces_total=pieces, runs=runs, seed=0
            ))
            if res.delta_mean != want:
                failed.append("%s m=%d got %r want exactly %r"
                              % (label, m, res.delta_mean, want))
    _verdict(
        capsys,
        4, "collusion bound reference cells, both presets",
        not failed,
        "worst_quantitative_dev=%.4f (tol 0.08 reduced / 0.05 full)%s"
        % (worst, ("; " + "; ".join(failed)) if failed else ""),
    )


# --- 5: monotonicity and symmetry ---------------------------------------------------


def test_acceptance_5_monotonicity_and_symmetry(capsys):
    """At n=6 (pieces=2^12, 300 runs): delta non-decreasing in rounds at fixed
    m and non-increasing in m at fixed rounds, within 2 combined standard
    errors; mean over rounds of delta(m=2)-delta(m=4) equals 0.33 within the
    target's rounding quantum (0.005) plus 2 combined standard errors."""
    r_values = (1, 2, 3, 5, 7, 10)
    runs, pieces = 300, 4096
    grid = {}
    for m in range(7):
        for r in r_values:
            res = simulate_delta(CollusionScenario(
                n=6, m=m, r_puzzle=r, pieces_total=pieces, runs=runs, seed=0
            ))
            grid[(m, r)] = (res.delta_mean, res.delta_std / math.sqrt(runs))

    violations = []
    for m in range(7):
        for a, b in zip(r_values, r_values[1:]):
            da, ea = grid[(m, a)]
            db, eb = grid[(m, b)]
            if db < da - 2 * math.hypot(ea, eb):
                violations.append("m=%d R %d->%d: %.4f -> %.4f" % (m, a, b, da, db))
    for r in r_values:
        for m in range(6):
            da, ea = grid[(m, r)]
            db, eb = grid[(m + 1, r)]
            if db > da + 2 * math.hypot(ea, eb):
                violations.append("R=%d m %d->%d: %.4f -> %.4f" % (r, m, m + 1, da, db))

    diffs = [grid[(2, r)][0] - grid[(4, r)][0] for r in r_values]
    mean_diff = sum(diffs) / len(diffs)
    comb_se = math.sqrt(sum(
        grid[(2, r)][1] ** 2 + grid[(4, r)][1] ** 2 for r in r_values
    )) / len(r_values)
    sym_tol = 0.005 + 2 * comb_se
    sym_ok = abs(mean_diff - 0.33) <= sym_tol
    _verdict(
        capsys,
        5, "monotonic in rounds/m + 0.33 symmetry gap",
        not violations and sym_ok,
        "violations=%d mean_gap(m2-m4)=%.4f want 0.33+-%.4f%s"
        % (len(violations), mean_diff, sym_tol,
           ("; " + "; ".join(violations)) if violations else ""),
    )


# --- 6: solver average case -----------------------------------------------------------


def test_acceptance_6_solver_average_case(capsys):
    """Mean solver trial count over 500 solves with uniform random starts at
    pieces_total=4096 equals 4096/2 within 5%."""
    params = PuzzleParams(n=2, r_puzzle=1, chunk_size=4096 * 16, piece_size=16)
    rng = random.Random(0)
    chunks = [rng.randbytes(params.chunk_size) for _ in range(2)]
    keys = [rng.randbytes(16) for _ in range(2)]
    counters = [crypto.derive_initial_counter(k) for k in keys]
    encrypted = [crypto.encrypt_chunk(keys[j], counters[j], chunks[j]) for j in range(2)]
    total_trials = 0
    for _ in range(500):
        start = rng.randrange(4096)
        challenge, _sol = puzzle.generate_challenge(chunks, keys, counters, params, start)
        got = puzzle.solve_challenge(encrypted, challenge, params)
        total_trials += got.start_index + 1
    mean_trials = total_trials / 500
    target = 4096 / 2
    _verdict(
        capsys,
        6, "solver mean trials = pieces/2",
        abs(mean_trials - target) <= 0.05 * target,
        "mean_trials=%.1f want %.0f+-%.1f (5%%)" % (mean_trials, target, 0.05 * target),
    )


# --- 7: throughput trends ----------------------------------------------------------------


def _median_sweep(metric: str, repeats: int = 3, **cfg_kwargs) -> list:
    """Per-point medians of one row metric across repeated passes.

    A single contention burst on a shared core can skew any one pass by 2x;
    the median of three keeps the relational checks meaningful."""
    passes = []
    for _ in range(repeats):
        rows = run_bench(BenchConfig(**cfg_kwargs))
        passes.append([getattr(row, metric) for row in rows])
    return [sorted(col)[len(col) // 2] for col in zip(*passes)]


def test_acceptance_7_throughput_trends(capsys):
    """Relational benchmark checks only (absolute figures are hardware-bound):
    generator rate invariant to chunk size within 25%; generator bitrate
    strictly increasing with n; solver bitrate strictly decreasing with
    rounds; solver bitrate at fixed rounds within 30% across chunk sizes."""
    g1_rates = _median_sweep(
        "calls_per_second",
        role="generator", n_values=(4,), r_values=(5,),
        chunk_sizes=(1 << 16, 1 << 18, 1 << 20), piece_sizes=(16,),
        iterations=300, warmup=30, seed=0, delta_runs=2,
    )
    g1_spread = max(g1_rates) / min(g1_rates)
    g1_ok = g1_spread <= 1.25

    g2_bits = _median_sweep(
        "bitrate_bits_per_second",
        role="generator", n_values=(1, 2, 4, 8), r_values=(5,),
        chunk_sizes=(1 << 16,), piece_sizes=(16,),
        iterations=500, warmup=50, seed=0, delta_runs=2,
    )
    g2_ok = all(b > a for a, b in zip(g2_bits, g2_bits[1:]))

    s1_bits = _median_sweep(
        "bitrate_bits_per_second",
        role="solver", n_values=(2,), r_values=(1, 2, 4),
        chunk_sizes=(1 << 16,), piece_sizes=(16,),
        iterations=40, warmup=4, seed=0, delta_runs=2,
    )
    s1_ok = all(a > b for a, b in zip(s1_bits, s1_bits[1:]))

    s2_bits = _median_sweep(
        "bitrate_bits_per_second",
        role="solver", n_values=(2,), r_values=(2,),
        chunk_sizes=(1 << 16, 1 << 18), piece_sizes=(16,),
        iterations=40, warmup=4, seed=0, delta_runs=2,
    )
    s2_spread = max(s2_bits) / min(s2_bits)
    s2_ok = s2_spread <= 1.30

    _verdict(
        capsys,
        7, "throughput trends",
        g1_ok and g2_ok and s1_ok and s2_ok,
        "gen_chunk_spread=%.3f (tol 1.25); gen_bitrate_vs_n=%s increasing=%s; "
        "solver_bitrate_vs_rounds=%s decreasing=%s; solver_chunk_spread=%.3f (tol 1.30)"
        % (
            g1_spread,
            "/".join("%.2e" % b for b in g2_bits), g2_ok,
            "/".join("%.2e" % b for b in s1_bits), s1_ok,
            s2_spread,
        ),
    )


# --- 8: negative paths -----------------------------------------------------------------


def test_acceptance_8_negative_paths(capsys, tmp_path):
    """Four rejection classes, 2500 randomized attempts each (10^4 total):
    corrupted transfers, forged envelope solutions, flipped token bits, and
    token replay from a different address.  Zero false accepts allowed."""
    from cachepuzzle.nodes import CacheNode, Publisher
    from cachepuzzle.store import CacheDescriptor, ContentStore, Registry

    params = PuzzleParams(n=2, r_puzzle=1, chunk_size=1024, piece_size=16)
    cdir = tmp_path / "content"
    cdir.mkdir()
    rng = random.Random(8)
    (cdir / "obj").write_bytes(rng.randbytes(2 * params.chunk_size))
    registry = Registry()
    nodes = {}
    for i in range(2):
        key = crypto.new_master_key()
        nodes[i] = CacheNode(i, key, ContentStore(cdir, params.chunk_size))
        registry.add(CacheDescriptor(i, "10.0.0.%d:1" % i, key))
    pub = Publisher(registry, ContentStore(cdir, params.chunk_size), params)

    per_class = 2500
    accepts = 0

    # corrupted transfer: garble one payload (mask bit flip or ciphertext
    # replacement, both of which damage data the chain walk must cross)
    for _ in range(per_class):
        bundle = pub.issue_bundle("obj", 0, 2, IP)
        masked = []
        for a in bundle.assignments:
            req = ChunkRequest("obj", a.chunk_index, bundle.request_number, IP)
            masked.append(bytearray(nodes[a.cache_id].handle_chunk_request(req).payload))
        victim = rng.randrange(2)
        if rng.random() < 0.5:
            pos = len(masked[victim]) - 1 - rng.randrange(crypto.MASK_SIZE)
            masked[victim][pos] ^= 1 << rng.randrange(8)
        else:
            masked[victim][: params.chunk_size] = rng.randbytes(params.chunk_size)
        encrypted = [crypto.strip_mask(bytes(p)) for p in masked]
        try:
            sol = puzzle.solve_challenge(encrypted, bundle.challenge, params)
            token = crypto.open_envelope(sol, bundle.token_envelope)
        except (puzzle.SolutionNotFound, crypto.EnvelopeAuthError):
            continue
        if pub.verify_token(bundle.request_number, IP, token):
            accepts += 1

    # forged solution: guess the envelope opener without solving
    bundle = pub.issue_bundle("obj", 0, 2, IP)
    for _ in range(per_class):
        fake = puzzle.Solution(rng.randbytes(32), rng.randrange(params.pieces_total))
        try:
            crypto.open_envelope(fake, bundle.token_envelope)
            accepts += 1
        except crypto.EnvelopeAuthError:
            pass

    # flipped token bit
    for i in range(per_class):
        ctx = crypto.RequestContext(i + 1, IP)
        token = bytearray(crypto.derive_token(pub.secret, ctx))
        token[rng.randrange(32)] ^= 1 << rng.randrange(8)
        if pub.verify_token(i + 1, IP, bytes(token)):
            accepts += 1

    # replayed token from a different source address
    for i in range(per_class):
        ctx = crypto.RequestContext(i + 1, IP)
        token = crypto.derive_token(pub.secret, ctx)
        other = bytes(rng.randrange(256) for _ in range(4))
        if other == IP:
            other = b"\x0a\x00\x00\x01"
        if pub.verify_token(i + 1, other, token):
            accepts += 1

    _verdict(
        capsys,
        8, "negative paths, zero false accepts",
        accepts == 0,
        "attempts=%d false_accepts=%d" % (4 * per_class, accepts),
    )
