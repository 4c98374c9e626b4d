"""
MRAM read cost and the batch latency model
==========================================

How read size drives per-lookup latency, and how the three batch stages
trade off as the column shard width N_c changes.
"""

# %%
from pimemb import (
    CostParams, DpuClusterConfig, EmbeddingTableSpec, WorkloadSpec,
    evaluate_shapes, mram_bandwidth, mram_read_latency, optimize_uniform_shape,
)

cost = CostParams()

# %% reads up to 32 B cost the same, so wider shards are free up to 8 floats
for nbytes in (8, 16, 32, 64, 256, 2048):
    print(f"{nbytes:5d} B  {mram_read_latency(nbytes, cost):7.1f} ns  "
          f"{mram_bandwidth(nbytes, cost) / 1e6:6.1f} MB/s")

# %% objective per candidate N_c for a 1M x 32 table on 256 DPUs
table = EmbeddingTableSpec(0, 1_000_000, 32)
cluster = DpuClusterConfig(n_dpu=256)
for avg_red in (20.0, 100.0, 300.0):
    wl = WorkloadSpec(batch_size=64, avg_red=avg_red)
    scores = evaluate_shapes(table, cluster, wl, cost)
    best = optimize_uniform_shape(table, cluster, wl, cost)
    shown = {k: (None if v is None else round(v)) for k, v in scores.items()}
    print(f"avg_red={avg_red:5.0f}  {shown}  -> N_c={best.n_c}")

# %% pricier transfers back to the host push the choice toward narrow shards
wl = WorkloadSpec(batch_size=64, avg_red=100.0)
for t_d in (2.0, 20.0):
    shape = optimize_uniform_shape(table, cluster, wl, CostParams(t_d=t_d))
    print(f"t_d={t_d:4.1f} ns -> N_c={shape.n_c}")
