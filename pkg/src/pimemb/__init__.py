"""Embedding-table placement and lookup simulation for UPMEM-style DPU clusters."""

from .cache import (
    CacheGroup, CacheList, cache_storage_bytes, estimate_benefit, mine_cache_lists,
)
from .costmodel import (
    LatencyReport, cpu_to_dpu_time, dpu_time, dpu_to_cpu_time, lookup_time_uniform,
    mram_bandwidth, mram_read_latency, objective,
)
from .engine import (
    BatchResult, DpuImage, build_images, cache_match, reference_forward,
    simulate_forward, simulate_trace,
)
from .errors import (
    AlignmentError, CapacityError, ConfigError, CoverageError, PimError, TraceFormatError,
)
from .model import (
    CostParams, DpuClusterConfig, EmbeddingTableSpec, ExperimentConfig, WorkloadSpec,
    table_rows, table_value,
)
from .partition import (
    PartitionPlan, TileShape, access_counts, balance_metrics, evaluate_shapes,
    optimize_uniform_shape, partition_cache_aware, partition_nonuniform,
    partition_uniform, uniform_shape,
)
from .trace import (
    AccessTrace, FrequencyProfile, block_access_histogram, generate_cooccur_trace,
    generate_zipf_trace, load_trace, profile,
)

__version__ = "0.1.0"
