"""Monte Carlo runs and coincidence tables.

Every run draws one uniform number from a Philox4x64 stream keyed by the
seed; run ``i`` uses the ``i``-th draw (counter block ``i // 4``, lane
``i % 4``).  Any worker can therefore jump straight to its share of run
indices, and a table is the same whatever the partition.
"""

from __future__ import annotations

import io
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import MixedConfigurations
from .evolution import OutcomeDistribution

__all__ = [
    "CoincidenceTable",
    "RunRecord",
    "aggregate_coincidences",
    "coincidence_table",
    "run_uniforms",
    "sample_indices",
    "sample_runs",
]

_U64 = (1 << 64) - 1


def run_uniforms(seed: int, start: int, count: int) -> NDArray[np.float64]:
    """Uniforms in [0, 1) for runs ``start .. start + count - 1``."""
    if not 0 <= seed <= _U64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    block, lane = divmod(start, 4)
    bitgen = np.random.Philox(key=seed, counter=block)
    gen = np.random.Generator(bitgen)
    if lane:
        gen.random(lane)
    return gen.random(count)


def _cdf(dist: OutcomeDistribution) -> tuple[NDArray[np.float64], int]:
    p = dist.clamped()
    nonzero = np.flatnonzero(p)
    if nonzero.size == 0:
        raise ValueError("distribution has no mass")
    return np.cumsum(p), int(nonzero[-1])


def sample_indices(dist: OutcomeDistribution, n: int, seed: int, start: int = 0) -> NDArray[np.intp]:
    """Cell indices for runs ``start .. start + n - 1`` by inverse CDF."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if n == 0:
        return np.zeros(0, dtype=np.intp)
    cdf, last = _cdf(dist)
    u = run_uniforms(seed, start, n) * cdf[-1]
    idx = np.searchsorted(cdf, u, side="right")
    # a zero-width cell has cdf[i] == cdf[i-1] and is never selected
    return np.minimum(idx, last)


@dataclass(frozen=True)
class RunRecord:
    run: int
    detector: str
    bits: str
    probes: tuple[str, ...] = ()
    timestamps: tuple[tuple[str, int], ...] = ()


def sample_runs(dist: OutcomeDistribution, n: int, seed: int, start: int = 0) -> list[RunRecord]:
    """``n`` independent runs drawn from the exact final distribution.

    Probes are read after the detector click; a triggered probe is stamped
    with its coupling slot.
    """
    idx = sample_indices(dist, n, seed, start)
    slots = dist.probe_slots or (0,) * len(dist.probes)
    records = []
    for i, k in enumerate(idx.tolist()):
        det, bits = dist.cells[k]
        stamps = tuple((name, s) for name, s, b in zip(dist.probes, slots, bits) if b == "1")
        records.append(RunRecord(start + i, det, bits, dist.probes, stamps))
    return records


def _natural_key(cell: tuple[str, str]):
    det, bits = cell
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", det)], bits


@dataclass
class CoincidenceTable:
    """Counts over (detector, probe bitstring) cells.

    ``cells`` fixes the row order and may include cells never observed.
    """

    probes: tuple[str, ...]
    counts: dict[tuple[str, str], int] = field(default_factory=dict)
    total: int = 0
    cells: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.cells:
            self.cells = tuple(sorted(self.counts, key=_natural_key))

    def __getitem__(self, cell: tuple[str, str]) -> int:
        return self.counts.get(cell, 0)

    def frequency(self, cell: tuple[str, str]) -> float:
        return self[cell] / self.total if self.total else 0.0

    def conditional(self, probe: str, value: int) -> dict[str, float]:
        """Detector frequencies among runs where ``probe`` read ``value``."""
        k = self.probes.index(probe)
        sub: dict[str, int] = {}
        for (det, bits) in self.cells:
            sub.setdefault(det, 0)
            if bits[k] == str(value):
                sub[det] += self[(det, bits)]
        n = sum(sub.values())
        return {d: (c / n if n else 0.0) for d, c in sub.items()}

    def merge(self, other: CoincidenceTable) -> CoincidenceTable:
        if self.probes != other.probes:
            raise MixedConfigurations(f"probe sets differ: {self.probes} vs {other.probes}")
        counts = dict(self.counts)
        for cell, c in other.counts.items():
            counts[cell] = counts.get(cell, 0) + c
        cells = tuple(sorted(set(self.cells) | set(other.cells), key=_natural_key))
        return CoincidenceTable(self.probes, counts, self.total + other.total, cells)

    def __add__(self, other: CoincidenceTable) -> CoincidenceTable:
        return self.merge(other)

    def to_csv(self) -> str:
        """``detector,bits,count,frequency`` rows; header only when empty."""
        buf = io.StringIO()
        buf.write("detector,bits,count,frequency\n")
        if self.total:
            for det, bits in self.cells:
                label = ";".join(f"{n}={b}" for n, b in zip(self.probes, bits))
                count = self[(det, bits)]
                buf.write(f"{det},{label},{count},{count / self.total:.17g}\n")
        return buf.getvalue()


def aggregate_coincidences(records, cells: tuple[tuple[str, str], ...] = ()) -> CoincidenceTable:
    """Count run records; every record must come from the same probe register."""
    records = list(records)
    probes = records[0].probes if records else ()
    counts: dict[tuple[str, str], int] = {}
    for r in records:
        if r.probes != probes:
            raise MixedConfigurations(f"run {r.run} has probes {r.probes}, expected {probes}")
        counts[(r.detector, r.bits)] = counts.get((r.detector, r.bits), 0) + 1
    return CoincidenceTable(probes, counts, len(records), tuple(cells))


def _chunk_table(dist: OutcomeDistribution, start: int, n: int, seed: int) -> CoincidenceTable:
    idx = sample_indices(dist, n, seed, start)
    hist = np.bincount(idx, minlength=len(dist.cells))
    counts = {cell: int(c) for cell, c in zip(dist.cells, hist) if c}
    return CoincidenceTable(dist.probes, counts, n, dist.cells)


def coincidence_table(
    dist: OutcomeDistribution, n: int, seed: int, workers: int = 1, chunk: int = 1 << 18
) -> CoincidenceTable:
    """Sample ``n`` runs and tabulate them, optionally across threads.

    The result depends only on ``(dist, n, seed)``.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    workers = max(1, int(workers))
    # contiguous run-index ranges, one per worker
    edges = [n * w // workers for w in range(workers + 1)]

    def work(w: int) -> CoincidenceTable:
        lo, hi = edges[w], edges[w + 1]
        table = CoincidenceTable(dist.probes, {}, 0, dist.cells)
        for s in range(lo, hi, chunk):
            table = table.merge(_chunk_table(dist, s, min(chunk, hi - s), seed))
        return table

    if workers == 1:
        parts = [work(0)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, range(workers)))
    table = CoincidenceTable(dist.probes, {}, 0, dist.cells)
    for part in parts:
        table = table.merge(part)
    return table
