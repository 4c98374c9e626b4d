"""Partial-sum cache lists for co-occurring hot items.

A cached group ``{a, b, c}`` stores the sum of every non-empty subset of
its members, so any sample touching ``k >= 2`` members is served with one
MRAM read instead of ``k``. Groups are pairwise item-disjoint and each
sample consumes a group at most once.

The miner here is a small greedy co-occurrence clustering, not a faithful
reimplementation of any published graph algorithm; partitioning only relies
on its output shape (item groups plus a benefit count).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import TraceFormatError
from .trace import AccessTrace, FrequencyProfile

M_MAX = 4


@dataclass(frozen=True)
class CacheGroup:
    items: tuple[int, ...]
    benefit: int = 0

    def __post_init__(self):
        items = tuple(sorted(int(i) for i in self.items))
        if len(set(items)) != len(items):
            raise ValueError(f"cache group {items} has duplicate items")
        if len(items) < 2:
            raise ValueError(f"cache group {items} needs at least 2 items")
        if self.benefit < 0:
            raise ValueError("benefit must be >= 0")
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "benefit", int(self.benefit))

    @property
    def size(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class CacheList:
    groups: tuple[CacheGroup, ...] = ()

    def __post_init__(self):
        groups = tuple(self.groups)
        seen: set[int] = set()
        for g in groups:
            overlap = seen.intersection(g.items)
            if overlap:
                raise ValueError(f"item {min(overlap)} appears in two cache groups")
            seen.update(g.items)
        object.__setattr__(self, "groups", groups)

    def __len__(self) -> int:
        return len(self.groups)

    def __iter__(self):
        return iter(self.groups)

    @property
    def items(self) -> set[int]:
        return {i for g in self.groups for i in g.items}

    @property
    def total_benefit(self) -> int:
        return sum(g.benefit for g in self.groups)


def estimate_benefit(trace: AccessTrace, group: Sequence[int] | CacheGroup) -> int:
    """MRAM reads saved by caching ``group`` when replaying ``trace``.

    Every sample that touches ``k >= 2`` members saves ``k - 1`` reads.
    """
    items = group.items if isinstance(group, CacheGroup) else tuple(group)
    if len(trace) == 0:
        return 0
    hit = np.isin(trace.indices, np.asarray(items, dtype=np.int64))
    per_sample = np.bincount(trace.sample_ids()[hit], minlength=len(trace))
    return int(np.maximum(per_sample - 1, 0).sum())


def cache_storage_bytes(group: Sequence[int] | CacheGroup, n_cols: int,
                        elem_bytes: int = 4, m_max: int = M_MAX) -> int:
    """Bytes one column shard needs to hold all ``2**m - 1`` subset sums."""
    m = group.size if isinstance(group, CacheGroup) else len(group)
    if m > m_max:
        raise ValueError(f"cache group of size {m} exceeds m_max={m_max}")
    return (2 ** m - 1) * n_cols * elem_bytes


def _hot_matrix(trace: AccessTrace, hot: np.ndarray) -> sp.csc_matrix:
    col_of = np.full(max(trace.max_index(), int(hot.max())) + 1, -1, dtype=np.int64)
    col_of[hot] = np.arange(hot.size)
    cols = col_of[trace.indices]
    keep = cols >= 0
    data = np.ones(int(keep.sum()), dtype=np.int64)
    return sp.csc_matrix((data, (trace.sample_ids()[keep], cols[keep])),
                         shape=(len(trace), hot.size))


def mine_cache_lists(trace: AccessTrace, prof: FrequencyProfile, top_k: int = 1000,
                     min_support: int = 1, m_max: int = M_MAX) -> CacheList:
    """Mine item-disjoint groups of co-occurring hot items.

    Builds the pair co-occurrence graph over the ``top_k`` hottest items,
    seeds a group from the heaviest edge between two unused items and grows
    it while some unused item appears together with the whole group in at
    least ``min_support`` samples (best joint support first, ties to the
    lower item id) and the group is smaller than ``m_max``.
    """
    if m_max < 2:
        raise ValueError("m_max must be >= 2")
    if top_k > prof.n_items:
        warnings.warn(f"top_k={top_k} clamped to n_items={prof.n_items}",
                      stacklevel=2)
        top_k = prof.n_items
    min_support = max(int(min_support), 1)
    order = prof.order()[:top_k]
    hot = order[prof.counts[order] > 0]
    if hot.size < 2 or len(trace) == 0:
        return CacheList()

    x = _hot_matrix(trace, hot)
    co = (x.T @ x).toarray()
    np.fill_diagonal(co, 0)
    ii, jj = np.nonzero(np.triu(co >= min_support, k=1))
    a, b = hot[ii], hot[jj]
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    w = co[ii, jj]
    edge_order = np.lexsort((hi, lo, -w))

    pos = {int(item): p for p, item in enumerate(hot)}
    used = np.zeros(hot.size, dtype=bool)
    found = []
    for e in edge_order:
        p, q = pos[int(lo[e])], pos[int(hi[e])]
        if used[p] or used[q]:
            continue
        members = [p, q]
        used[p] = used[q] = True
        rows = x[:, p].multiply(x[:, q])
        while len(members) < m_max:
            joint = np.asarray((rows.T @ x).todense()).ravel()
            joint[used] = -1
            best = int(np.max(joint))
            if best < min_support:
                break
            cands = np.flatnonzero(joint == best)
            c = cands[np.argmin(hot[cands])]
            members.append(int(c))
            used[c] = True
            rows = rows.multiply(x[:, c])
        found.append(tuple(sorted(int(hot[m]) for m in members)))

    groups = [CacheGroup(items, estimate_benefit(trace, items)) for items in found]
    groups = [g for g in groups if g.benefit > 0]
    groups.sort(key=lambda g: (-g.benefit, g.items))
    return CacheList(tuple(groups))


def write_cache_list(cache_list: CacheList, path) -> None:
    lines = [" ".join(map(str, g.items)) + f";{g.benefit}\n" for g in cache_list]
    Path(path).write_text("".join(lines), encoding="utf-8")


def read_cache_list(path) -> CacheList:
    groups = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        items, sep, benefit = line.partition(";")
        if not sep:
            raise TraceFormatError("expected '<indices>;<benefit>'", lineno)
        try:
            groups.append(CacheGroup(tuple(int(t) for t in items.split()),
                                     int(benefit)))
        except ValueError as exc:
            raise TraceFormatError(str(exc), lineno) from None
    return CacheList(tuple(groups))


def as_cache_list(groups: Iterable[CacheGroup | Sequence[int]],
                  trace: AccessTrace | None = None) -> CacheList:
    """Wrap plain item tuples as a CacheList, filling benefits from ``trace``."""
    out = []
    for g in groups:
        if isinstance(g, CacheGroup):
            out.append(g)
        else:
            out.append(CacheGroup(tuple(g), estimate_benefit(trace, g) if trace else 0))
    return CacheList(tuple(out))
