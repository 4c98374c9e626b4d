"""
Partial-sum caching of co-occurring items
=========================================

Plant a few item triples that tend to appear together, mine them back
from the trace, and count the MRAM reads the cache saves.
"""

# %%
import logging

from pimemb import (
    CostParams, DpuClusterConfig, EmbeddingTableSpec, access_counts, build_images,
    generate_cooccur_trace, mine_cache_lists, partition_cache_aware,
    partition_nonuniform, profile, simulate_trace, uniform_shape,
)

# groups dropped by a reduced cache budget are logged as warnings
logging.basicConfig(level=logging.ERROR)

R = 5000
planted = [[100 + 3 * i, 101 + 3 * i, 102 + 3 * i] for i in range(10)]
trace = generate_cooccur_trace(R, 20_000, 3, planted, 0.5, seed=11, zipf_s=0.8)
prof = profile(trace, R)

# %%
cache_list = mine_cache_lists(trace, prof, top_k=1000, min_support=50)
for g in cache_list.groups[:5]:
    print(g.items, g.benefit)
print(len(cache_list), "groups, total benefit", cache_list.total_benefit)

# %% the {1,4,5} sample with {4,5} cached needs two reads, not three
from pimemb import cache_match, CacheGroup

print(cache_match([1, 4, 5], [CacheGroup((4, 5))]))

# %% whole-trace read counts and modeled stage-2 time against cache capacity
table = EmbeddingTableSpec(0, R, 32)
for fraction in (0.0, 0.4, 0.7, 1.0):
    cluster = DpuClusterConfig(n_dpu=64, cache_fraction=fraction)
    shape = uniform_shape(table, cluster, 8)
    plan = partition_cache_aware(prof, cache_list, shape, cluster)
    run = simulate_trace(plan, build_images(plan, table), trace, CostParams())
    print(f"cache {fraction:.1f}: {len(plan.placed_groups):2d} groups, "
          f"{int(access_counts(plan, trace).sum())} reads, "
          f"stage 2 {run.stage_sums()['stage2_sum_ns'] / 1e3:.0f} us")

base = partition_nonuniform(prof, shape, DpuClusterConfig(n_dpu=64))
print("no cache:", int(access_counts(base, trace).sum()), "reads")
