"""Access traces: loading, synthetic generation and frequency profiling.

A trace is stored the way embedding-bag operators consume it, as one flat
``indices`` array plus ``offsets`` (sample ``i`` owns
``indices[offsets[i]:offsets[i + 1]]``). Every sample is kept in canonical
form: sorted ascending, no duplicates.

Trace file format, one sample per line::

    # comment
    <sample_ordinal>,<space separated indices>
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import TraceFormatError

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AccessTrace:
    table_id: int
    indices: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        idx = np.ascontiguousarray(self.indices, dtype=np.int64)
        off = np.ascontiguousarray(self.offsets, dtype=np.int64)
        if off.ndim != 1 or off.size < 1 or off[0] != 0 or off[-1] != idx.size:
            raise ValueError("offsets must start at 0 and end at len(indices)")
        if np.any(np.diff(off) < 0):
            raise ValueError("offsets must be non-decreasing")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "offsets", off)

    @classmethod
    def from_samples(cls, samples: Iterable[Iterable[int]],
                     table_id: int = 0) -> AccessTrace:
        """Build a trace from lists of indices, canonicalizing each sample."""
        parts = [np.unique(np.asarray(list(s), dtype=np.int64)) for s in samples]
        offsets = np.zeros(len(parts) + 1, dtype=np.int64)
        if parts:
            np.cumsum([p.size for p in parts], out=offsets[1:])
        flat = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
        if flat.size and flat.min() < 0:
            raise ValueError("indices must be non-negative")
        return cls(table_id, flat, offsets)

    def __len__(self) -> int:
        return self.offsets.size - 1

    def __getitem__(self, i: int) -> np.ndarray:
        return self.indices[self.offsets[i]:self.offsets[i + 1]]

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, AccessTrace):
            return NotImplemented
        return (self.table_id == other.table_id
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.offsets, other.offsets))

    @property
    def samples(self) -> list[list[int]]:
        return [s.tolist() for s in self]

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.offsets)

    def sample_ids(self) -> np.ndarray:
        """Sample ordinal of every entry of ``indices``."""
        return np.repeat(np.arange(len(self)), self.lengths)

    def slice(self, start: int, stop: int) -> AccessTrace:
        stop = min(stop, len(self))
        lo, hi = self.offsets[start], self.offsets[stop]
        return AccessTrace(self.table_id, self.indices[lo:hi],
                           self.offsets[start:stop + 1] - lo)

    def batches(self, batch_size: int):
        for start in range(0, len(self), batch_size):
            yield self.slice(start, start + batch_size)

    def max_index(self) -> int:
        return int(self.indices.max()) if self.indices.size else -1


@dataclass(frozen=True, eq=False)
class FrequencyProfile:
    counts: np.ndarray
    total_samples: int
    avg_red: float
    table_id: int = 0

    @property
    def n_items(self) -> int:
        return self.counts.size

    @property
    def total_accesses(self) -> int:
        return int(self.counts.sum())

    def order(self) -> np.ndarray:
        """Items by descending count, ties broken by ascending item id."""
        return np.lexsort((np.arange(self.n_items), -self.counts))


def load_trace(path, table_id: int = 0, n_rows: int | None = None) -> AccessTrace:
    text = Path(path).read_text(encoding="utf-8")
    samples = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        ordinal, sep, rest = line.partition(",")
        if not sep:
            raise TraceFormatError("expected '<ordinal>,<indices>'", lineno)
        try:
            int(ordinal)
            idx = [int(tok) for tok in rest.split()]
        except ValueError as exc:
            raise TraceFormatError(f"bad integer ({exc})", lineno) from None
        for i in idx:
            if i < 0 or (n_rows is not None and i >= n_rows):
                raise TraceFormatError(
                    f"index {i} out of range [0, {n_rows})", lineno)
        samples.append(idx)
    return AccessTrace.from_samples(samples, table_id)


def write_trace(trace: AccessTrace, path) -> None:
    lines = [f"{i}," + " ".join(map(str, s.tolist())) for i, s in enumerate(trace)]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def _zipf_cdf(n_items: int, zipf_s: float) -> np.ndarray:
    weights = 1.0 / np.arange(1, n_items + 1, dtype=np.float64) ** zipf_s
    cdf = np.cumsum(weights)
    return cdf / cdf[-1]


def _draw_distinct(rng, cdf, k, exclude=None) -> np.ndarray:
    # successive sampling: first k distinct items in draw order
    n = cdf.size
    chosen = np.zeros(0, dtype=np.int64) if exclude is None else exclude
    base = chosen.size
    target = base + k
    while chosen.size < target:
        need = target - chosen.size
        draw = np.searchsorted(cdf, rng.random(2 * need + 8), side="right")
        pool = np.concatenate([chosen, np.minimum(draw, n - 1)])
        _, first = np.unique(pool, return_index=True)
        chosen = pool[np.sort(first)][:target]
    return chosen[base:]


def _streams(seed: int):
    length_seq, item_seq, plant_seq = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(length_seq), np.random.default_rng(item_seq),
            np.random.default_rng(plant_seq))


def _check_gen(n_items, n_samples, avg_red, zipf_s):
    if n_items < 1:
        raise ValueError("n_items must be >= 1")
    if n_samples < 0:
        raise ValueError("n_samples must be >= 0")
    if not 0 < avg_red <= n_items:
        raise ValueError("avg_red must lie in (0, n_items]")
    if zipf_s < 0:
        raise ValueError("zipf_s must be >= 0")


def generate_zipf_trace(n_items: int, n_samples: int, avg_red: float,
                        zipf_s: float, seed: int, table_id: int = 0) -> AccessTrace:
    """Synthetic multi-hot trace with Zipf item popularity.

    Sample lengths are Poisson(avg_red) clamped to ``[1, n_items]``; each
    sample then holds that many distinct items drawn from a Zipf(zipf_s) law
    where item 0 is the most popular. ``zipf_s=0`` is the balanced case.
    """
    return generate_cooccur_trace(n_items, n_samples, avg_red, [], 0.0, seed,
                                  zipf_s=zipf_s, table_id=table_id)


def generate_cooccur_trace(n_items: int, n_samples: int, avg_red: float,
                           groups: Sequence[Sequence[int]], group_prob: float,
                           seed: int, zipf_s: float = 0.0,
                           table_id: int = 0) -> AccessTrace:
    """Zipf trace with planted co-occurring item groups.

    With probability ``group_prob`` a sample contains one of ``groups``
    (picked uniformly) in full; it is padded with Zipf-drawn items up to its
    Poisson length. Randomness is split into independent streams, so
    ``group_prob=0`` reproduces :func:`generate_zipf_trace` exactly.
    """
    _check_gen(n_items, n_samples, avg_red, zipf_s)
    if not 0.0 <= group_prob <= 1.0:
        raise ValueError("group_prob must lie in [0, 1]")
    planted = [np.unique(np.asarray(g, dtype=np.int64)) for g in groups]
    for g in planted:
        if g.size < 2 or g.min() < 0 or g.max() >= n_items:
            raise ValueError("each group needs >= 2 distinct items < n_items")
    if group_prob > 0 and not planted:
        raise ValueError("group_prob > 0 requires at least one group")

    length_rng, item_rng, plant_rng = _streams(seed)
    cdf = _zipf_cdf(n_items, zipf_s)
    lengths = np.clip(length_rng.poisson(avg_red, n_samples), 1, n_items)
    if planted:
        plant = plant_rng.random(n_samples) < group_prob
        which = plant_rng.integers(0, len(planted), n_samples)
    parts = []
    for i in range(n_samples):
        k = int(lengths[i])
        if planted and plant[i]:
            g = planted[which[i]]
            pad = _draw_distinct(item_rng, cdf, max(k - g.size, 0), exclude=g)
            parts.append(np.concatenate([g, pad]))
        else:
            parts.append(_draw_distinct(item_rng, cdf, k))
    return AccessTrace.from_samples(parts, table_id)


def profile(trace: AccessTrace, n_items: int | None = None) -> FrequencyProfile:
    """Exact per-item access counts of a trace."""
    if len(trace) == 0:
        raise ValueError("cannot profile an empty trace")
    size = trace.max_index() + 1 if n_items is None else n_items
    if trace.max_index() >= size:
        raise ValueError(f"trace index {trace.max_index()} >= n_items {size}")
    counts = np.bincount(trace.indices, minlength=size).astype(np.int64)
    return FrequencyProfile(counts, len(trace),
                            float(counts.sum()) / len(trace), trace.table_id)


def block_access_histogram(prof: FrequencyProfile, n_blocks: int) -> np.ndarray:
    """Total accesses per contiguous row block (sizes differ by at most 1)."""
    if n_blocks < 1:
        raise ValueError("n_blocks must be >= 1")
    if n_blocks > prof.n_items:
        raise ValueError(f"n_blocks {n_blocks} > rows {prof.n_items}")
    bounds = np.linspace(0, prof.n_items, n_blocks + 1).round().astype(np.int64)
    return np.add.reduceat(prof.counts, bounds[:-1])
