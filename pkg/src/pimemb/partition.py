"""Placement of embedding-table rows onto DPU row groups.

A table with ``C`` columns is cut into ``C / N_c`` column shards. The DPUs
holding the same rows (one per shard) form a *row group*; lookup load is
identical across the shards of a group, so every planner balances row
groups. Three planners are provided:

* :func:`partition_uniform` - contiguous row ranges of ``N_r`` rows.
* :func:`partition_nonuniform` - greedy bin packing of items by access
  frequency into the currently lightest row group.
* :func:`partition_cache_aware` - places partial-sum cache groups first,
  crediting their saved reads, then packs the remaining items.

Ties are always broken toward the lower item id / row group id so plans are
fully deterministic.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import costmodel
from .cache import CacheGroup, CacheList, cache_storage_bytes
from .errors import CapacityError, CoverageError, TraceFormatError
from .model import CostParams, DpuClusterConfig, EmbeddingTableSpec, WorkloadSpec
from .trace import AccessTrace, FrequencyProfile

log = logging.getLogger(__name__)

LEGAL_NC = (2, 4, 6, 8)
PLAN_HEADER = "# pimemb plan v1"


@dataclass(frozen=True)
class TileShape:
    n_r: int
    n_c: int
    n_row_groups: int = 1
    column_shards: int = 1
    elem_bytes: int = 4

    def __post_init__(self):
        if self.n_r < 1 or self.n_c < 1:
            raise ValueError("tile dimensions must be >= 1")
        if self.n_row_groups < 1 or self.column_shards < 1:
            raise ValueError("n_row_groups and column_shards must be >= 1")

    @property
    def row_bytes(self) -> int:
        return self.n_c * self.elem_bytes

    @property
    def n_dpu(self) -> int:
        return self.n_row_groups * self.column_shards


def uniform_shape(table: EmbeddingTableSpec, cluster: DpuClusterConfig, n_c: int,
                  strict: bool = True) -> TileShape:
    """Uniform tiling for a given ``N_c``.

    ``strict`` restricts ``N_c`` to 2, 4, 6 or 8 (reads of at most 32 B).
    Raises :class:`CapacityError` if the tile does not fit MRAM.
    """
    if strict and n_c not in LEGAL_NC:
        raise ValueError(f"N_c={n_c} not in {LEGAL_NC}")
    if n_c < 1 or table.n_cols % n_c:
        raise CapacityError(f"N_c={n_c} does not divide C={table.n_cols}")
    shards = table.n_cols // n_c
    groups = min(cluster.n_dpu // shards, table.n_rows)
    if groups < 1:
        raise CapacityError(
            f"N_c={n_c} needs {shards} DPUs per row group, cluster has {cluster.n_dpu}",
            required_dpus=shards)
    n_r = math.ceil(table.n_rows / groups)
    if n_r * n_c * table.elem_bytes > cluster.mram_bytes:
        raise CapacityError(
            f"tile {n_r}x{n_c} ({n_r * n_c * table.elem_bytes} B) exceeds "
            f"MRAM ({cluster.mram_bytes} B)",
            required_dpus=_min_dpus(table, cluster, (n_c,)))
    return TileShape(n_r, n_c, groups, shards, table.elem_bytes)


def _min_dpus(table, cluster, candidates) -> int | None:
    best = None
    for n_c in candidates:
        if table.n_cols % n_c:
            continue
        rows_max = cluster.mram_bytes // (n_c * table.elem_bytes)
        if rows_max < 1:
            continue
        dpus = math.ceil(table.n_rows / rows_max) * (table.n_cols // n_c)
        best = dpus if best is None else min(best, dpus)
    return best


def evaluate_shapes(table: EmbeddingTableSpec, cluster: DpuClusterConfig,
                    workload: WorkloadSpec, cost: CostParams,
                    candidates=LEGAL_NC) -> dict[int, float | None]:
    """Objective value per candidate ``N_c`` (``None`` when infeasible)."""
    out = {}
    for n_c in candidates:
        try:
            shape = uniform_shape(table, cluster, n_c, strict=False)
        except CapacityError:
            out[n_c] = None
            continue
        out[n_c] = costmodel.objective(shape, table, cluster, workload, cost)
    return out


def optimize_uniform_shape(table: EmbeddingTableSpec, cluster: DpuClusterConfig,
                           workload: WorkloadSpec, cost: CostParams) -> TileShape:
    """Exhaustive search over legal ``N_c`` for the lowest modeled batch time.

    Ties go to the larger ``N_c`` (fewer, wider MRAM reads).
    """
    scores = evaluate_shapes(table, cluster, workload, cost)
    feasible = {n_c: v for n_c, v in scores.items() if v is not None}
    if not feasible:
        need = _min_dpus(table, cluster, LEGAL_NC)
        raise CapacityError(
            f"table {table.table_id} ({table.n_rows}x{table.n_cols}) does not fit "
            f"{cluster.n_dpu} DPUs with any N_c in {LEGAL_NC}; "
            f"needs at least {need} DPUs", required_dpus=need)
    n_c = min(feasible, key=lambda k: (feasible[k], -k))
    log.debug("N_c candidates %s -> %d", scores, n_c)
    return uniform_shape(table, cluster, n_c)


class PlacementStep(NamedTuple):
    kind: str  # "cache", "demote" or "item"
    items: tuple[int, ...]
    part: int
    part_count: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class PartitionPlan:
    table_id: int
    planner: str
    shape: TileShape
    assigned_part: np.ndarray
    cached_groups: tuple[tuple[CacheGroup, ...], ...]
    index_share: np.ndarray
    mram_bytes: int
    part_count: np.ndarray | None = None
    history: tuple[PlacementStep, ...] = field(default=(), repr=False)

    def __post_init__(self):
        ap = np.asarray(self.assigned_part, dtype=np.int64)
        object.__setattr__(self, "assigned_part", ap)
        object.__setattr__(self, "index_share",
                           np.asarray(self.index_share, dtype=np.float64))
        g = self.n_row_groups
        if ap.size and (ap.min() < 0 or ap.max() >= g):
            raise ValueError("assigned_part refers to a missing row group")
        if len(self.cached_groups) != g:
            raise ValueError("cached_groups must have one entry per row group")
        for p, groups in enumerate(self.cached_groups):
            for cg in groups:
                if np.any(ap[list(cg.items)] != p):
                    raise ValueError(f"cache group {cg.items} split across row groups")
        over = np.flatnonzero(self.emt_bytes + self.cache_bytes > self.mram_bytes)
        if over.size:
            raise CapacityError(f"row group {over[0]} exceeds MRAM capacity")

    @property
    def n_items(self) -> int:
        return self.assigned_part.size

    @property
    def n_row_groups(self) -> int:
        return self.shape.n_row_groups

    @property
    def column_shards(self) -> int:
        return self.shape.column_shards

    @property
    def n_dpu(self) -> int:
        return self.shape.n_dpu

    @property
    def rows_per_group(self) -> np.ndarray:
        return np.bincount(self.assigned_part, minlength=self.n_row_groups)

    @property
    def emt_bytes(self) -> np.ndarray:
        return self.rows_per_group * self.shape.row_bytes

    @property
    def cache_bytes(self) -> np.ndarray:
        return np.array([sum(cache_storage_bytes(cg, self.shape.n_c, self.shape.elem_bytes)
                             for cg in groups) for groups in self.cached_groups],
                        dtype=np.int64)

    @property
    def per_row_group_bytes(self) -> list[tuple[int, int]]:
        return list(zip(self.emt_bytes.tolist(), self.cache_bytes.tolist()))

    def rows_of(self, group: int) -> np.ndarray:
        return np.flatnonzero(self.assigned_part == group)

    @property
    def placed_groups(self) -> list[tuple[int, CacheGroup]]:
        """``(row_group, cache_group)`` for every cached group, in plan order."""
        return [(p, cg) for p, groups in enumerate(self.cached_groups) for cg in groups]

    def item_cache_slot(self) -> np.ndarray:
        """Per item: index into :attr:`placed_groups`, or -1 if uncached."""
        slot = np.full(self.n_items, -1, dtype=np.int64)
        for k, (_, cg) in enumerate(self.placed_groups):
            slot[list(cg.items)] = k
        return slot


def _finish_plan(table_id, planner, shape, assigned, cached, share, cluster,
                 part_count=None, history=()):
    return PartitionPlan(table_id, planner, shape, assigned, tuple(map(tuple, cached)),
                         share, cluster.mram_bytes, part_count, tuple(history))


def partition_uniform(table: EmbeddingTableSpec, shape: TileShape,
                      cluster: DpuClusterConfig) -> PartitionPlan:
    """Contiguous blocks of ``shape.n_r`` rows; the last group may be short."""
    if shape.n_r * shape.n_row_groups < table.n_rows:
        raise CapacityError(f"{shape.n_row_groups} groups x {shape.n_r} rows "
                            f"< {table.n_rows} rows")
    if shape.n_r * shape.row_bytes > cluster.mram_bytes:
        raise CapacityError("uniform tile exceeds MRAM capacity")
    assigned = np.arange(table.n_rows) // shape.n_r
    share = np.full(shape.n_row_groups, shape.n_r / table.n_rows)
    return _finish_plan(table.table_id, "uniform", shape, assigned,
                        [[] for _ in range(shape.n_row_groups)], share, cluster)


def _frequency_share(assigned, counts, n_groups) -> np.ndarray:
    total = counts.sum()
    loads = np.bincount(assigned, weights=counts, minlength=n_groups)
    if total == 0:
        return np.bincount(assigned, minlength=n_groups) / max(assigned.size, 1)
    return loads / total


def _place_items(order, counts, part_count, rows_left, assigned, history, record):
    # lightest group with free rows; heap is exact since only the popped entry changes
    heap = [(part_count[p], p) for p in range(len(part_count)) if rows_left[p] > 0]
    heapq.heapify(heap)
    for item in order:
        if not heap:
            raise CapacityError(f"no row group has room for item {item}")
        _, p = heapq.heappop(heap)
        assigned[item] = p
        part_count[p] += int(counts[item])
        rows_left[p] -= 1
        if record:
            history.append(PlacementStep("item", (int(item),), p, tuple(part_count)))
        if rows_left[p] > 0:
            heapq.heappush(heap, (part_count[p], p))


def partition_nonuniform(prof: FrequencyProfile, shape: TileShape,
                         cluster: DpuClusterConfig, *,
                         record_history: bool = False) -> PartitionPlan:
    """Frequency-balanced greedy bin packing with row capacity per group."""
    plan = partition_cache_aware(prof, CacheList(), shape, cluster,
                                 record_history=record_history)
    return PartitionPlan(plan.table_id, "nonuniform", plan.shape, plan.assigned_part,
                         plan.cached_groups, plan.index_share, plan.mram_bytes,
                         plan.part_count, plan.history)


def partition_cache_aware(prof: FrequencyProfile, cache_list: CacheList,
                          shape: TileShape, cluster: DpuClusterConfig, *,
                          record_history: bool = False) -> PartitionPlan:
    """Cache-aware greedy partitioning.

    Phase 1 walks ``cache_list`` in order and puts each group, whole, on the
    row group with the lowest ``part_count`` that still has MRAM room for the
    group's subset sums and rows; the group's item frequencies are added and
    its benefit subtracted. Phase 2 places every other item by descending
    frequency on the lowest-``part_count`` group with free EMT rows.

    The cache budget is ``cache_fraction`` of the storage the whole list
    needs. Groups that exceed the remaining budget, or fit no row group,
    are demoted to ordinary items.
    """
    counts = prof.counts
    n_groups = shape.n_row_groups
    row_bytes = shape.row_bytes
    total_rows = prof.n_items
    max_rows = cluster.mram_bytes // row_bytes
    if total_rows > n_groups * max_rows:
        raise CapacityError(f"{total_rows} rows exceed {n_groups} groups x "
                            f"{max_rows} rows of MRAM")

    storage = [cache_storage_bytes(g, shape.n_c, shape.elem_bytes) for g in cache_list]
    budget = int(cluster.cache_fraction * sum(storage))
    part_count = [0] * n_groups
    cache_used = [0] * n_groups
    rows_used = [0] * n_groups
    assigned = np.full(total_rows, -1, dtype=np.int64)
    cached: list[list[CacheGroup]] = [[] for _ in range(n_groups)]
    history: list[PlacementStep] = []

    for cg, need in zip(cache_list, storage):
        if max(cg.items) >= total_rows:
            raise CoverageError(f"cache group {cg.items} refers to items beyond "
                                f"{total_rows} rows")
        m = cg.size
        fits = [p for p in range(n_groups)
                if (rows_used[p] + m) * row_bytes + cache_used[p] + need
                <= cluster.mram_bytes]
        if need > budget or not fits:
            log.warning("cache group %s does not fit the cache budget; "
                        "treating its items as uncached", cg.items)
            if record_history:
                history.append(PlacementStep("demote", cg.items, -1, tuple(part_count)))
            continue
        p = min(fits, key=lambda q: (part_count[q], q))
        budget -= need
        cache_used[p] += need
        rows_used[p] += m
        for item in cg.items:
            assigned[item] = p
            part_count[p] += int(counts[item])
        part_count[p] -= cg.benefit
        cached[p].append(cg)
        if record_history:
            history.append(PlacementStep("cache", cg.items, p, tuple(part_count)))

    order = prof.order()
    order = order[assigned[order] < 0]
    rows_left = [(cluster.mram_bytes - cache_used[p]) // row_bytes - rows_used[p]
                 for p in range(n_groups)]
    _place_items(order, counts, part_count, rows_left, assigned, history,
                 record_history)

    share = _frequency_share(assigned, counts, n_groups)
    return _finish_plan(prof.table_id, "cache-aware", shape, assigned, cached, share,
                        cluster, np.asarray(part_count, dtype=np.int64), history)


def access_counts(plan: PartitionPlan, trace: AccessTrace) -> np.ndarray:
    """MRAM reads per row group when replaying ``trace`` against ``plan``.

    Every uncached item costs one read; a sample touching ``k >= 2`` members
    of a cached group costs one read for all of them.
    """
    if trace.max_index() >= plan.n_items:
        raise CoverageError(f"trace index {trace.max_index()} is not assigned "
                            f"(plan covers {plan.n_items} items)")
    groups = plan.assigned_part[trace.indices]
    reads = np.bincount(groups, minlength=plan.n_row_groups).astype(np.int64)
    placed = plan.placed_groups
    if not placed:
        return reads
    slot = plan.item_cache_slot()[trace.indices]
    hit = slot >= 0
    key = trace.sample_ids()[hit] * len(placed) + slot[hit]
    uniq, cnt = np.unique(key, return_counts=True)
    multi = cnt >= 2
    slot_group = np.array([p for p, _ in placed], dtype=np.int64)
    saved = np.bincount(slot_group[uniq[multi] % len(placed)],
                        weights=cnt[multi] - 1, minlength=plan.n_row_groups)
    return reads - saved.astype(np.int64)


def balance_metrics(plan: PartitionPlan, trace: AccessTrace) -> dict:
    """Replay ``trace`` and summarize how evenly reads spread over row groups."""
    counts = access_counts(plan, trace)
    mean = counts.mean()
    cv = float(counts.std() / mean) if mean > 0 else 0.0
    lo = counts.min()
    ratio = float(counts.max() / lo) if lo > 0 else math.inf
    return {
        "planner": plan.planner,
        "access_counts": counts.tolist(),
        "total_accesses": int(counts.sum()),
        "cv": cv,
        "max_min_ratio": ratio,
    }


def write_plan(plan: PartitionPlan, path) -> None:
    s = plan.shape
    lines = [PLAN_HEADER,
             f"table {plan.table_id} planner {plan.planner}",
             f"shape {s.n_r} {s.n_c} {s.n_row_groups} {s.column_shards}",
             f"mram {plan.mram_bytes} elem {s.elem_bytes}"]
    ap = plan.assigned_part
    starts = np.flatnonzero(np.r_[True, ap[1:] != ap[:-1]]) if ap.size else []
    ends = list(starts[1:]) + [ap.size]
    for a, b in zip(starts, ends):
        span = f"{a}" if b - a == 1 else f"{a}-{b - 1}"
        lines.append(f"item {span} -> group {ap[a]}")
    for p, cg in plan.placed_groups:
        lines.append(f"cache {p} " + " ".join(map(str, cg.items)) + f";{cg.benefit}")
    for p, v in enumerate(plan.index_share):
        lines.append(f"share {p} {float(v)!r}")
    if plan.part_count is not None:
        lines.append("count " + " ".join(map(str, plan.part_count.tolist())))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_plan(path) -> PartitionPlan:
    text = Path(path).read_text(encoding="utf-8").split("\n")
    if not text or text[0].strip() != PLAN_HEADER:
        raise TraceFormatError(f"missing plan header {PLAN_HEADER!r}", 1)
    spans, cache, share, part_count = [], [], {}, None
    table_id = planner = shape = mram = None
    for lineno, raw in enumerate(text[1:], start=2):
        tok = raw.split()
        if not tok or tok[0].startswith("#"):
            continue
        try:
            head = tok[0]
            if head == "table":
                table_id, planner = int(tok[1]), tok[3]
            elif head == "shape":
                n_r, n_c, groups, shards = map(int, tok[1:5])
                shape = (n_r, n_c, groups, shards)
            elif head == "mram":
                mram, elem = int(tok[1]), int(tok[3])
            elif head == "item":
                lo, _, hi = tok[1].partition("-")
                spans.append((int(lo), int(hi or lo), int(tok[4])))
            elif head == "cache":
                body = raw.split(None, 2)[2]
                items, _, benefit = body.partition(";")
                cache.append((int(tok[1]), CacheGroup(
                    tuple(int(i) for i in items.split()), int(benefit))))
            elif head == "share":
                share[int(tok[1])] = float(tok[2])
            elif head == "count":
                part_count = np.array([int(t) for t in tok[1:]], dtype=np.int64)
            else:
                raise ValueError(f"unknown record {head!r}")
        except (IndexError, ValueError) as exc:
            raise TraceFormatError(str(exc), lineno) from None
    if shape is None or table_id is None or mram is None:
        raise TraceFormatError("plan lacks table/shape/mram records")
    tile = TileShape(*shape, elem_bytes=elem)
    n_items = max((hi for _, hi, _ in spans), default=-1) + 1
    assigned = np.full(n_items, -1, dtype=np.int64)
    for lo, hi, g in spans:
        assigned[lo:hi + 1] = g
    if np.any(assigned < 0):
        raise TraceFormatError("plan leaves items unassigned")
    cached = [[] for _ in range(tile.n_row_groups)]
    for p, cg in cache:
        cached[p].append(cg)
    share_arr = np.array([share.get(p, 0.0) for p in range(tile.n_row_groups)])
    return PartitionPlan(table_id, planner, tile, assigned, tuple(map(tuple, cached)),
                         share_arr, mram, part_count)
