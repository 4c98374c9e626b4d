"""
Latency breakdown for a heavy-reduction workload
================================================

About 250 lookups per sample on a skewed table. Compare how much of each
batch is spent in the DPU lookup stage under the three planners.
"""

# %%
import logging

import numpy as np

from pimemb import (
    CostParams, DpuClusterConfig, EmbeddingTableSpec, build_images,
    generate_zipf_trace, mine_cache_lists, partition_cache_aware, partition_nonuniform,
    partition_uniform, profile, simulate_trace, uniform_shape,
)

logging.basicConfig(level=logging.WARNING)

R = 100_000
trace = generate_zipf_trace(R, 1280, avg_red=245.8, zipf_s=1.05, seed=3)
prof = profile(trace, R)
cache_list = mine_cache_lists(trace, prof, top_k=1000, min_support=50)
table = EmbeddingTableSpec(0, R, 32)
cluster = DpuClusterConfig(n_dpu=256)

# %%
print("N_c  planner      stage1  stage2  stage3 (mean ns)  stage-2 share")
for n_c in (2, 4, 8):
    shape = uniform_shape(table, cluster, n_c)
    for plan in (partition_uniform(table, shape, cluster),
                 partition_nonuniform(prof, shape, cluster),
                 partition_cache_aware(prof, cache_list, shape, cluster)):
        s = simulate_trace(plan, build_images(plan, table), trace, CostParams(),
                           verify_table=table if n_c == 8 else None).stage_sums()
        print(f"{n_c:3d}  {plan.planner:11s} {s['stage1_mean_ns']:7.0f} "
              f"{s['stage2_mean_ns']:7.0f} {s['stage3_mean_ns']:7.0f} "
              f"{s['stage2_share']:14.2f}")

# %% outputs match a plain per-sample sum over full rows
from pimemb import reference_forward, simulate_forward

plan = partition_cache_aware(prof, cache_list, uniform_shape(table, cluster, 8), cluster)
batch = trace.slice(0, 64)
res = simulate_forward(plan, build_images(plan, table), batch, CostParams())
print(np.array_equal(res.outputs, reference_forward(table, batch)))
