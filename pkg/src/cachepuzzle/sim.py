"""Monte-Carlo estimation of the bandwidth bound delta under collusion.

Models a client colluding with m of the n caches serving a request.  The
colluding side splits into a solver (who computes trial chains) and a piece
provider (who ships pieces the solver is missing); whichever side holds
fewer chunks ships, so the client solves when m < n/2 and the caches solve
when m > n/2.  Honest chunks always cost their full size: an honest cache
only ever sends the complete masked chunk.

The simulation is symbolic.  Pieces are (chunk, index) identities, chain
indices are drawn uniformly at random instead of hashed, and the provider
follows the greedy strategy: always ship the not-yet-shipped piece that the
most trial chains touch, until the solver can finish the true trial.  A run
returns Y, the total pieces the colluding group moved; delta = E[Y] divided
by n * pieces_total, the honest-retrieval cost.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .params import HASH_SIZE, ConfigWarning

ROLE_CLIENT = "client"
ROLE_CACHES = "caches"
ROLE_EITHER = "either"


@dataclass(frozen=True)
class CollusionScenario:
    """One simulated parameter point.

    malicious_positions is "random" (fresh placement per run) or an explicit
    tuple of chunk indices.  piece_size is only used to warn when shipping
    hashes instead of pieces would be the cheaper collusion strategy, which
    this simulator does not model.
    """

    n: int
    m: int
    r_puzzle: int
    pieces_total: int
    runs: int
    seed: int
    malicious_positions: Union[str, tuple[int, ...]] = "random"
    piece_size: Optional[int] = None

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if not 0 <= self.m <= self.n:
            raise ValueError("m must be in [0, n]")
        if self.r_puzzle < 1:
            raise ValueError("r_puzzle must be at least 1")
        if self.pieces_total < 1:
            raise ValueError("pieces_total must be positive")
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if self.malicious_positions != "random":
            pos = tuple(self.malicious_positions)
            if len(pos) != self.m:
                raise ValueError("need exactly m malicious positions")
            if len(set(pos)) != len(pos):
                raise ValueError("malicious positions must be distinct")
            if any(not 0 <= p < self.n for p in pos):
                raise ValueError("malicious positions must be chunk indices")
            object.__setattr__(self, "malicious_positions", pos)


@dataclass(frozen=True)
class SimResult:
    delta_mean: float
    delta_std: float
    expected_y: float
    solver_role: str


def choose_solver_role(n: int, m: int) -> str:
    """Cheaper solver side: client below n/2 malicious, caches above."""
    if not 0 <= m <= n:
        raise ValueError("m must be in [0, n]")
    if 2 * m < n:
        return ROLE_CLIENT
    if 2 * m > n:
        return ROLE_CACHES
    return ROLE_EITHER


def _provider_chunks(scenario: CollusionScenario, rng: np.random.Generator) -> np.ndarray:
    """Chunk indices on the shipping side, ascending."""
    if scenario.malicious_positions == "random":
        malicious = rng.choice(scenario.n, size=scenario.m, replace=False)
    else:
        malicious = np.asarray(scenario.malicious_positions, dtype=np.int64)
    malicious = np.sort(malicious)
    # at m = n/2 both splits cost the same; fix the malicious side as provider
    if choose_solver_role(scenario.n, scenario.m) == ROLE_CACHES:
        return np.setdiff1d(np.arange(scenario.n), malicious)
    return malicious


def simulate_run(
    scenario: CollusionScenario,
    rng: np.random.Generator,
    strategy: str = "greedy",
) -> int:
    """One run: Y, the number of pieces the colluding group transferred.

    Honest chunks are charged in full up front.  Provider-side pieces are
    then shipped one at a time, by descending trial frequency (ties broken
    by lowest (chunk, index)), until every provider-side piece on the true
    trial's chain has been shipped.  strategy="random" replaces the greedy
    order with a uniform shuffle; it exists as a baseline for tests.
    """
    if strategy not in ("greedy", "random"):
        raise ValueError("strategy must be 'greedy' or 'random'")
    n, m = scenario.n, scenario.m
    pieces = scenario.pieces_total
    cols_total = n * scenario.r_puzzle

    provider = _provider_chunks(scenario, rng)
    y = (n - m) * pieces
    if provider.size == 0:
        return y

    # column k of the trial table is step k (chunk k mod n); column 0 is the
    # trial's own start index, every other column is uniform.  only provider
    # chunks' columns are ever needed, so only those are drawn.
    col_ids = [k for k in range(cols_total) if (k % n) in set(provider.tolist())]
    random_cols = [k for k in col_ids if k != 0]
    drawn = rng.integers(0, pieces, size=(len(random_cols), pieces), dtype=np.int64)
    true_trial = int(rng.integers(pieces))

    columns = {}
    for row, k in enumerate(random_cols):
        columns[k] = drawn[row]
    if 0 in col_ids:
        columns[0] = np.arange(pieces, dtype=np.int64)

    chunk_pos = {int(c): i for i, c in enumerate(provider)}
    freq = np.zeros((provider.size, pieces), dtype=np.int64)
    for k, vals in columns.items():
        freq[chunk_pos[k % n]] += np.bincount(vals, minlength=pieces)

    needed = np.unique(
        [chunk_pos[k % n] * pieces + int(vals[true_trial]) for k, vals in columns.items()]
    )

    total = provider.size * pieces
    if strategy == "greedy":
        order = np.argsort(-freq.reshape(total), kind="stable")
    else:
        order = rng.permutation(total)
    rank = np.empty(total, dtype=np.int64)
    rank[order] = np.arange(total, dtype=np.int64)
    return y + int(rank[needed].max()) + 1


def simulate_delta(scenario: CollusionScenario) -> SimResult:
    """Mean and spread of delta over scenario.runs independent runs.

    Each run gets its own RNG stream seeded by (seed, run index), so results
    do not depend on execution order.
    """
    if scenario.piece_size is not None and scenario.m * scenario.piece_size > HASH_SIZE:
        warnings.warn(
            "piece_size %d with m=%d makes shipping hashes cheaper than "
            "shipping pieces; this simulator does not model that strategy"
            % (scenario.piece_size, scenario.m),
            ConfigWarning,
            stacklevel=2,
        )
    denom = scenario.n * scenario.pieces_total
    ys = np.empty(scenario.runs, dtype=np.float64)
    for i in range(scenario.runs):
        rng = np.random.default_rng([scenario.seed, i])
        ys[i] = simulate_run(scenario, rng)
    deltas = ys / denom
    std = float(deltas.std(ddof=1)) if scenario.runs > 1 else 0.0
    return SimResult(
        delta_mean=float(deltas.mean()),
        delta_std=std,
        expected_y=float(ys.mean()),
        solver_role=choose_solver_role(scenario.n, scenario.m),
    )


CSV_COLUMNS = ("n", "m", "rounds", "pieces_total", "runs", "delta_mean", "delta_std")


def sweep(scenarios: Sequence[CollusionScenario]) -> list[dict]:
    """simulate_delta over a scenario list, one CSV-shaped row dict each."""
    rows = []
    for sc in scenarios:
        res = simulate_delta(sc)
        rows.append(
            {
                "n": sc.n,
                "m": sc.m,
                "rounds": sc.r_puzzle,
                "pieces_total": sc.pieces_total,
                "runs": sc.runs,
                "delta_mean": res.delta_mean,
                "delta_std": res.delta_std,
            }
        )
    return rows


def full_grid(
    pieces_total: int = 65536,
    runs: int = 1000,
    seed: int = 0,
    n: int = 6,
    rounds: Sequence[int] = tuple(range(1, 11)),
) -> list[CollusionScenario]:
    """The reference grid: all m in [0, n] crossed with the given rounds."""
    return [
        CollusionScenario(
            n=n, m=m, r_puzzle=r, pieces_total=pieces_total, runs=runs, seed=seed
        )
        for r in rounds
        for m in range(n + 1)
    ]
