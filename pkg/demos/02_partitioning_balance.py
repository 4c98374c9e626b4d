"""
Balancing row groups under skewed access
========================================

Uniform row ranges put the hottest items together; greedy frequency
packing spreads them out.
"""

# %%
from pimemb import (
    DpuClusterConfig, EmbeddingTableSpec, balance_metrics, block_access_histogram,
    generate_zipf_trace, partition_nonuniform, partition_uniform, profile, uniform_shape,
)

R = 20_000
trace = generate_zipf_trace(R, 20_000, avg_red=20, zipf_s=1.05, seed=1)
prof = profile(trace, R)
print("accesses per 1/8 of the id space:", block_access_histogram(prof, 8).tolist())

# %%
table = EmbeddingTableSpec(0, R, 32)
cluster = DpuClusterConfig(n_dpu=32)
shape = uniform_shape(table, cluster, 8)
print(shape)

for plan in (partition_uniform(table, shape, cluster),
             partition_nonuniform(prof, shape, cluster)):
    m = balance_metrics(plan, trace)
    print(f"{plan.planner:11s} cv={m['cv']:.4f} max/min={m['max_min_ratio']:.2f}")
    print("   ", m["access_counts"])

# %% the greedy also reproduces the small worked example
import numpy as np

from pimemb import FrequencyProfile, TileShape

tiny = FrequencyProfile(np.array([10, 9, 5, 5, 4, 3]), 1, 36.0)
plan = partition_nonuniform(tiny, TileShape(6, 2, 2), DpuClusterConfig(n_dpu=2))
print(plan.assigned_part, plan.part_count)
