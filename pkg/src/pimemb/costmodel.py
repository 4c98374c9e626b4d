"""Latency model for a batch of embedding lookups on a DPU cluster.

A batch runs in three stages: index transfer CPU -> DPU, lookup and
reduction on every DPU, partial-result transfer DPU -> CPU. Times are in
nanoseconds throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, CapacityError
from .model import CostParams, DpuClusterConfig, EmbeddingTableSpec, WorkloadSpec

MRAM_READ_MIN = 8
MRAM_READ_MAX = 2048
MRAM_FLAT_BYTES = 32


@dataclass(frozen=True)
class LatencyReport:
    t_cpu_to_dpu: float
    t_lookup: np.ndarray  # per row group
    t_dpu_to_cpu: float

    @property
    def t_lookup_max(self) -> float:
        return float(np.max(self.t_lookup)) if np.size(self.t_lookup) else 0.0

    @property
    def total(self) -> float:
        return self.t_cpu_to_dpu + self.t_lookup_max + self.t_dpu_to_cpu

    @property
    def lookup_share(self) -> float:
        return self.t_lookup_max / self.total if self.total > 0 else 0.0

    def to_dict(self) -> dict:
        return {
            "stage1_cpu_to_dpu_ns": self.t_cpu_to_dpu,
            "stage2_lookup_max_ns": self.t_lookup_max,
            "stage2_lookup_per_group_ns": [float(t) for t in self.t_lookup],
            "stage3_dpu_to_cpu_ns": self.t_dpu_to_cpu,
            "total_ns": self.total,
        }


def mram_read_latency(nbytes: int, cost: CostParams) -> float:
    """Latency of one MRAM->WRAM read: flat up to 32 B, linear beyond."""
    if nbytes % 8 or not MRAM_READ_MIN <= nbytes <= MRAM_READ_MAX:
        raise AlignmentError(
            f"MRAM reads must be 8-byte aligned and within "
            f"[{MRAM_READ_MIN}, {MRAM_READ_MAX}] bytes, got {nbytes}")
    return cost.mram_alpha + cost.mram_beta * max(0, nbytes - MRAM_FLAT_BYTES)


def mram_bandwidth(nbytes: int, cost: CostParams) -> float:
    """Sustained single-stream MRAM bandwidth in bytes/s at a read size."""
    return nbytes / (mram_read_latency(nbytes, cost) * 1e-9)


def effective_tasklets(accesses: float, cost: CostParams, tasklets: int) -> float:
    """Number of reads the DPU keeps in flight for a given per-DPU load.

    Overlap grows linearly from 1 (a single outstanding read) to
    ``tasklets`` once ``cost.tasklet_ramp`` accesses are queued.
    """
    if cost.tasklet_ramp <= 0:
        return float(tasklets)
    fill = min(1.0, accesses / cost.tasklet_ramp)
    return 1.0 + (tasklets - 1) * fill


def dpu_time(accesses: float, read_bytes: int, cost: CostParams,
             tasklets: int = 14) -> float:
    """Stage-2 time of one DPU serving ``accesses`` reads of ``read_bytes``.

    The larger of the instruction-issue bound and the memory bound, where
    the memory bound overlaps reads across the effective tasklet count.
    """
    if accesses < 0:
        raise ValueError("access count must be >= 0")
    if accesses == 0:
        return 0.0
    t_a = mram_read_latency(read_bytes, cost)
    k = effective_tasklets(accesses, cost, tasklets)
    return max(accesses * cost.t_instr, accesses * t_a / k)


def _avg_red(workload: WorkloadSpec) -> float:
    if workload.avg_red is None:
        raise ValueError("workload.avg_red is unset; derive it from a trace profile")
    return workload.avg_red


def _check_shape(shape, table: EmbeddingTableSpec, cluster: DpuClusterConfig) -> int:
    if table.n_cols % shape.n_c:
        raise CapacityError(f"N_c={shape.n_c} does not divide C={table.n_cols}")
    shards = table.n_cols // shape.n_c
    groups = shape.n_row_groups
    if groups * shards > cluster.n_dpu:
        raise CapacityError(f"{groups} row groups x {shards} shards exceed "
                            f"{cluster.n_dpu} DPUs", required_dpus=groups * shards)
    if shape.n_r * shape.n_c * table.elem_bytes > cluster.mram_bytes:
        raise CapacityError(f"tile {shape.n_r}x{shape.n_c} exceeds MRAM capacity")
    if shape.n_r * groups < table.n_rows:
        raise CapacityError(f"{groups} row groups of {shape.n_r} rows cannot hold "
                            f"{table.n_rows} rows")
    return groups


def uniform_accesses(shape, table: EmbeddingTableSpec, workload: WorkloadSpec) -> float:
    """Expected per-DPU accesses per batch under a balanced uniform tiling."""
    return shape.n_r / table.n_rows * workload.batch_size * _avg_red(workload)


def lookup_time_uniform(shape, table: EmbeddingTableSpec, cluster: DpuClusterConfig,
                        workload: WorkloadSpec, cost: CostParams) -> float:
    accesses = uniform_accesses(shape, table, workload)
    return dpu_time(accesses, shape.n_c * table.elem_bytes, cost, cluster.tasklets)


def index_transfer_time(counts, cost: CostParams) -> float:
    """CPU->DPU time for per-row-group index counts.

    With padding all buffers share the largest size and move in parallel;
    without it the per-group transfers run one after another.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if counts.size == 0:
        return 0.0
    if cost.equal_size_padding:
        return float(counts.max() * cost.t_c)
    return float(counts.sum() * cost.t_c)


def cpu_to_dpu_time(plan, workload: WorkloadSpec, cost: CostParams) -> float:
    counts = workload.batch_size * _avg_red(workload) * np.asarray(plan.index_share)
    return index_transfer_time(counts, cost)


def dpu_to_cpu_time(plan, workload: WorkloadSpec, cost: CostParams) -> float:
    """Every DPU returns ``N_c`` values per sample; equal sizes move in parallel."""
    shape = getattr(plan, "shape", plan)
    return shape.n_c * workload.batch_size * cost.t_d


def cpu_to_dpu_time_uniform(shape, table: EmbeddingTableSpec,
                            cluster: DpuClusterConfig, workload: WorkloadSpec,
                            cost: CostParams) -> float:
    groups = _check_shape(shape, table, cluster)
    counts = np.full(groups, uniform_accesses(shape, table, workload))
    return index_transfer_time(counts, cost)


def objective(shape, table: EmbeddingTableSpec, cluster: DpuClusterConfig,
              workload: WorkloadSpec, cost: CostParams) -> float:
    """Total modeled time of one batch under a uniform tiling ``shape``."""
    t1 = cpu_to_dpu_time_uniform(shape, table, cluster, workload, cost)
    t2 = lookup_time_uniform(shape, table, cluster, workload, cost)
    t3 = dpu_to_cpu_time(shape, workload, cost)
    return t1 + t2 + t3
