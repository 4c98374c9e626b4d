"""Functional execution of batched embedding lookups against a plan.

Each DPU image holds the ``N_c``-column shard of its row group's rows (the
EMT region) plus the subset sums of the cache groups placed there (the
cache region). A forward pass gathers and reduces on every DPU, then the
host sums the per-row-group partials. Reduction order is fixed: within a
DPU, EMT rows by ascending index and then cached subsets in plan order;
on the host, row groups in ascending id. Because table values sit on a
coarse dyadic grid the result is bit-identical to :func:`reference_forward`.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Sequence

import numpy as np

from . import costmodel
from .cache import CacheGroup
from .costmodel import LatencyReport
from .errors import CoverageError, PimError
from .model import CostParams, EmbeddingTableSpec, table_rows
from .partition import PartitionPlan
from .trace import AccessTrace

MATRIX_MAGIC = b"PIMEMB01"
_MATRIX_HEADER = struct.Struct("<8sII")


@dataclass(eq=False)
class DpuImage:
    row_group: int
    shard: int
    rows: np.ndarray           # sorted row ids held in the EMT region
    emt: np.ndarray            # (len(rows), N_c) float32
    cache: dict = field(default_factory=dict)  # (slot, subset) -> (N_c,) float32

    @property
    def nbytes(self) -> int:
        return self.emt.nbytes + sum(v.nbytes for v in self.cache.values())

    @property
    def emt_nbytes(self) -> int:
        return self.emt.nbytes

    @property
    def cache_nbytes(self) -> int:
        return sum(v.nbytes for v in self.cache.values())

    def row(self, item: int) -> np.ndarray:
        pos = np.searchsorted(self.rows, item)
        if pos >= self.rows.size or self.rows[pos] != item:
            raise CoverageError(f"row {item} is not held by DPU "
                                f"({self.row_group}, {self.shard})")
        return self.emt[pos]


@dataclass(frozen=True, eq=False)
class BatchResult:
    outputs: np.ndarray
    latency: LatencyReport
    per_dpu_accesses: np.ndarray
    per_group_indices: np.ndarray

    @property
    def total_accesses(self) -> int:
        return int(self.per_dpu_accesses.sum())

    def to_dict(self) -> dict:
        return {
            "batch_size": int(self.outputs.shape[0]),
            "latency": self.latency.to_dict(),
            "per_dpu_accesses": self.per_dpu_accesses.tolist(),
            "total_accesses": self.total_accesses,
        }


def _subsets(items: Sequence[int]):
    for k in range(1, len(items) + 1):
        yield from combinations(items, k)


def _sequential_sum(vectors: np.ndarray) -> np.ndarray:
    acc = np.zeros(vectors.shape[1], dtype=np.float32)
    for v in vectors:
        acc += v
    return acc


def build_images(plan: PartitionPlan, table: EmbeddingTableSpec) -> list[DpuImage]:
    """Materialize every DPU's MRAM contents, ordered by ``g * shards + s``."""
    if plan.n_items != table.n_rows:
        raise PimError(f"plan covers {plan.n_items} rows, table has {table.n_rows}")
    n_c = plan.shape.n_c
    images = []
    for g in range(plan.n_row_groups):
        rows = plan.rows_of(g)
        data = table_rows(table, rows)
        for s in range(plan.column_shards):
            emt = np.ascontiguousarray(data[:, s * n_c:(s + 1) * n_c])
            img = DpuImage(g, s, rows, emt)
            for slot, (p, cg) in enumerate(plan.placed_groups):
                if p != g:
                    continue
                for subset in _subsets(cg.items):
                    vecs = np.stack([img.row(i) for i in subset])
                    img.cache[(slot, subset)] = _sequential_sum(vecs)
            if img.nbytes > plan.mram_bytes:
                raise PimError(f"DPU image ({g}, {s}) holds {img.nbytes} B, "
                               f"more than MRAM ({plan.mram_bytes} B)")
            images.append(img)
    return images


def _as_trace(batch) -> AccessTrace:
    if isinstance(batch, AccessTrace):
        return batch
    return AccessTrace.from_samples(batch)


def reference_forward(table: EmbeddingTableSpec, batch) -> np.ndarray:
    """Naive sum pooling over full table rows, ascending index order."""
    batch = _as_trace(batch)
    out = np.zeros((len(batch), table.n_cols), dtype=np.float32)
    for i, sample in enumerate(batch):
        if sample.size:
            out[i] = _sequential_sum(table_rows(table, sample))
    return out


def cache_match(indices, cached_groups: Sequence[CacheGroup]):
    """Split one sample's indices on a row group into cached reads and the rest.

    Walks ``cached_groups`` in order; any group sharing at least two items
    with the sample yields one cached-subset read. Returns
    ``(matched_subsets, residual_indices)``.
    """
    residual = np.unique(np.asarray(indices, dtype=np.int64))
    matched = []
    for cg in cached_groups:
        inter = np.intersect1d(residual, cg.items, assume_unique=True)
        if inter.size >= 2:
            matched.append(tuple(int(i) for i in inter))
            residual = np.setdiff1d(residual, inter, assume_unique=True)
    return matched, residual


class _PlanIndex:
    """Lookup tables derived once per plan."""

    def __init__(self, plan: PartitionPlan):
        self.slot = plan.item_cache_slot()
        self.slot_group = np.array([p for p, _ in plan.placed_groups], dtype=np.int64)


def _plan_index(plan: PartitionPlan) -> _PlanIndex:
    cached = plan.__dict__.get("_engine_index")
    if cached is None:
        cached = _PlanIndex(plan)
        plan.__dict__["_engine_index"] = cached
    return cached


def simulate_forward(plan: PartitionPlan, images: Sequence[DpuImage], batch,
                     cost: CostParams, tasklets: int = 14) -> BatchResult:
    """Run one batch on the simulated cluster.

    Latency is charged from the access counts actually observed on each
    DPU, so imbalance shows up as a longer stage 2.
    """
    batch = _as_trace(batch)
    n_b, n_g, shards, n_c = len(batch), plan.n_row_groups, plan.column_shards, plan.shape.n_c
    if len(images) != n_g * shards:
        raise PimError(f"expected {n_g * shards} DPU images, got {len(images)}")
    idx = batch.indices
    if idx.size and idx.max() >= plan.n_items:
        raise CoverageError(f"index {int(idx.max())} is not assigned by the plan "
                            f"({plan.n_items} items)")
    sid = batch.sample_ids()
    grp = plan.assigned_part[idx]
    pidx = _plan_index(plan)
    slot = pidx.slot[idx]

    # cache hits: entries of one sample sharing a placed group, two or more of them
    n_slots = max(len(pidx.slot_group), 1)
    in_hit = np.zeros(idx.size, dtype=bool)
    hits = []
    cached_entries = np.flatnonzero(slot >= 0)
    if cached_entries.size:
        key = sid[cached_entries] * n_slots + slot[cached_entries]
        order = np.argsort(key, kind="stable")
        key_sorted = key[order]
        uniq, start, cnt = np.unique(key_sorted, return_index=True, return_counts=True)
        for k, a, c in zip(uniq, start, cnt):
            if c < 2:
                continue
            members = cached_entries[order[a:a + c]]
            in_hit[members] = True
            hits.append((int(k // n_slots), int(k % n_slots),
                         tuple(int(i) for i in idx[members])))

    partial = np.zeros((n_b, n_g, n_c * shards), dtype=np.float32)
    reads = np.zeros(n_g, dtype=np.int64)
    residual = ~in_hit
    for g in range(n_g):
        sel = np.flatnonzero(residual & (grp == g))
        reads[g] += sel.size
        if not sel.size:
            continue
        for s in range(shards):
            img = images[g * shards + s]
            local = np.searchsorted(img.rows, idx[sel])
            np.add.at(partial[:, g, s * n_c:(s + 1) * n_c], sid[sel], img.emt[local])
    for sample, k, subset in hits:
        g = int(pidx.slot_group[k])
        reads[g] += 1
        for s in range(shards):
            partial[sample, g, s * n_c:(s + 1) * n_c] += images[g * shards + s].cache[(k, subset)]

    out = np.zeros((n_b, n_c * shards), dtype=np.float32)
    for g in range(n_g):
        out += partial[:, g, :]

    sent = np.bincount(grp, minlength=n_g)
    read_bytes = n_c * plan.shape.elem_bytes
    latency = LatencyReport(
        t_cpu_to_dpu=costmodel.index_transfer_time(sent, cost),
        t_lookup=np.array([costmodel.dpu_time(int(a), read_bytes, cost, tasklets)
                           for a in reads]),
        t_dpu_to_cpu=n_c * n_b * cost.t_d,
    )
    return BatchResult(out, latency, np.repeat(reads, shards), sent)


@dataclass
class TraceRun:
    """Per-batch results of replaying a trace."""

    reports: list[LatencyReport] = field(default_factory=list)
    accesses: list[int] = field(default_factory=list)
    verified: bool | None = None
    mismatched_batches: list[int] = field(default_factory=list)

    @property
    def total_accesses(self) -> int:
        return int(sum(self.accesses))

    def stage_sums(self) -> dict:
        s1 = sum(r.t_cpu_to_dpu for r in self.reports)
        s2 = sum(r.t_lookup_max for r in self.reports)
        s3 = sum(r.t_dpu_to_cpu for r in self.reports)
        total = s1 + s2 + s3
        n = max(len(self.reports), 1)
        return {
            "batches": len(self.reports),
            "stage1_sum_ns": s1, "stage2_sum_ns": s2, "stage3_sum_ns": s3,
            "total_sum_ns": total,
            "stage1_mean_ns": s1 / n, "stage2_mean_ns": s2 / n,
            "stage3_mean_ns": s3 / n, "total_mean_ns": total / n,
            "stage2_share": s2 / total if total > 0 else 0.0,
            "total_accesses": self.total_accesses,
        }


def simulate_trace(plan: PartitionPlan, images: Sequence[DpuImage], trace: AccessTrace,
                   cost: CostParams, batch_size: int = 64, tasklets: int = 14,
                   n_batches: int | None = None,
                   verify_table: EmbeddingTableSpec | None = None) -> TraceRun:
    """Replay ``trace`` batch by batch; optionally check against the oracle."""
    run = TraceRun(verified=None if verify_table is None else True)
    for b, batch in enumerate(trace.batches(batch_size)):
        if n_batches is not None and b >= n_batches:
            break
        res = simulate_forward(plan, images, batch, cost, tasklets)
        run.reports.append(res.latency)
        run.accesses.append(res.total_accesses // plan.column_shards)
        if verify_table is not None:
            ref = reference_forward(verify_table, batch)
            if not np.array_equal(res.outputs, ref):
                run.verified = False
                run.mismatched_batches.append(b)
    return run


def write_matrix(outputs: np.ndarray, path) -> None:
    """Row-major little-endian float32 dump behind a 16-byte header."""
    arr = np.ascontiguousarray(outputs, dtype="<f4")
    rows, cols = arr.shape
    with open(path, "wb") as fh:
        fh.write(_MATRIX_HEADER.pack(MATRIX_MAGIC, rows, cols))
        fh.write(arr.tobytes())


def read_matrix(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    magic, rows, cols = _MATRIX_HEADER.unpack_from(raw)
    if magic != MATRIX_MAGIC:
        raise PimError(f"{path}: not a pimemb matrix dump")
    body = np.frombuffer(raw, dtype="<f4", offset=_MATRIX_HEADER.size)
    if body.size != rows * cols:
        raise PimError(f"{path}: expected {rows * cols} values, found {body.size}")
    return body.reshape(rows, cols).astype(np.float32)


def batch_report_json(result: BatchResult) -> str:
    return json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n"
