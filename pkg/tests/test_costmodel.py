import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pimemb.costmodel import (
    LatencyReport, cpu_to_dpu_time, dpu_time, dpu_to_cpu_time, effective_tasklets,
    index_transfer_time, lookup_time_uniform, mram_bandwidth, mram_read_latency, objective,
)
from pimemb.errors import AlignmentError
from pimemb.model import CostParams, DpuClusterConfig, EmbeddingTableSpec, WorkloadSpec
from pimemb.partition import TileShape, partition_uniform, uniform_shape

COST = CostParams()


def test_read_latency_flat_then_non_decreasing():
    lats = [mram_read_latency(b, COST) for b in range(8, 2049, 8)]
    assert lats[:4] == [100.0] * 4
    assert all(a <= b for a, b in zip(lats, lats[1:]))


def test_read_latency_anchors():
    assert mram_read_latency(8, COST) == 100.0
    assert mram_read_latency(32, COST) == 100.0
    assert mram_read_latency(2048, COST) == 100.0 + 1.25 * 2016 == 2620.0


def test_bandwidth_grows_with_read_size():
    bws = [mram_bandwidth(b, COST) for b in (8, 16, 32, 64, 256, 1024, 2048)]
    assert bws == sorted(bws)
    assert 700e6 <= mram_bandwidth(2048, COST) <= 800e6


@pytest.mark.parametrize("nbytes", [0, 4, 12, 2056, 4096])
def test_alignment_errors(nbytes):
    with pytest.raises(AlignmentError):
        mram_read_latency(nbytes, COST)


def test_effective_tasklets_ramp():
    assert effective_tasklets(0, COST, 14) == 1.0
    assert effective_tasklets(75, COST, 14) == 7.5
    assert effective_tasklets(10**6, COST, 14) == 14.0
    assert effective_tasklets(3, CostParams(tasklet_ramp=0.0), 14) == 14.0


def test_dpu_time_example():
    # 800 reads of 16 B: fully overlapped memory bound 800*100/14 vs issue bound 800*3
    assert dpu_time(800, 16, COST) == pytest.approx(max(800 * 3.0, 800 * 100 / 14))
    assert dpu_time(0, 16, COST) == 0.0
    with pytest.raises(ValueError):
        dpu_time(-1, 16, COST)


def test_dpu_time_issue_bound():
    flat = CostParams(tasklet_ramp=0.0, t_instr=10.0)
    assert dpu_time(1000, 8, flat) == 10_000.0


def test_lookup_time_example_80us():
    # N_r/R = 1/8, batch 64, avg_red 100: 800 reads of 100 ns, one tasklet, no issue bound
    table = EmbeddingTableSpec(0, 10**5, 8)
    shape = TileShape(n_r=12_500, n_c=8, n_row_groups=8)
    wl = WorkloadSpec(batch_size=64, avg_red=100)
    one = CostParams(tasklet_ramp=0.0, t_instr=0.0)
    t = lookup_time_uniform(shape, table, DpuClusterConfig(n_dpu=8, tasklets=1), wl, one)
    assert t == pytest.approx(80_000.0)
    assert lookup_time_uniform(shape, table, DpuClusterConfig(n_dpu=8, tasklets=1),
                               wl.with_avg_red(200), one) == pytest.approx(160_000.0)


def test_padding_versus_sequential():
    assert index_transfer_time([10, 30], CostParams(t_c=1.0)) == 30.0
    assert index_transfer_time([10, 30], CostParams(t_c=1.0, equal_size_padding=False)) == 40.0
    assert index_transfer_time([], COST) == 0.0


def test_dpu_to_cpu_example():
    shape = TileShape(10, 8)
    assert dpu_to_cpu_time(shape, WorkloadSpec(64, 1.0), CostParams(t_d=1.0)) == 512.0
    assert dpu_to_cpu_time(shape, WorkloadSpec(64, 9.0), CostParams(t_d=1.0)) == 512.0


def test_cpu_to_dpu_uses_plan_share():
    table = EmbeddingTableSpec(0, 100, 4)
    cluster = DpuClusterConfig(n_dpu=4)
    plan = partition_uniform(table, uniform_shape(table, cluster, 2), cluster)
    t = cpu_to_dpu_time(plan, WorkloadSpec(10, 4.0), CostParams(t_c=1.0))
    assert t == pytest.approx(10 * 4 * 0.5)


def test_avg_red_required():
    table = EmbeddingTableSpec(0, 100, 4)
    with pytest.raises(ValueError, match="avg_red"):
        objective(TileShape(50, 2, 2, 2), table, DpuClusterConfig(n_dpu=4),
                  WorkloadSpec(64), COST)


def test_latency_report():
    r = LatencyReport(10.0, np.array([30.0, 50.0]), 40.0)
    assert r.t_lookup_max == 50.0 and r.total == 100.0 and r.lookup_share == 0.5
    assert r.to_dict()["stage2_lookup_per_group_ns"] == [30.0, 50.0]


def oracle_objective(R, C, n_dpu, n_c, batch, avg_red, cost, tasklets=14, elem=4):
    """Stand-alone restatement of the batch model."""
    shards = C // n_c
    groups = min(n_dpu // shards, R)
    n_r = math.ceil(R / groups)
    per_dpu = n_r / R * batch * avg_red
    nbytes = n_c * elem
    lat = cost.mram_alpha + cost.mram_beta * max(0, nbytes - 32)
    k = 1 + (tasklets - 1) * min(1.0, per_dpu / cost.tasklet_ramp)
    t2 = max(per_dpu * cost.t_instr, per_dpu * lat / k) if per_dpu else 0.0
    t1 = per_dpu * cost.t_c if cost.equal_size_padding else per_dpu * groups * cost.t_c
    t3 = n_c * batch * cost.t_d
    return t1 + t2 + t3


@settings(max_examples=150, deadline=None)
@given(st.integers(10, 10**7), st.sampled_from([8, 16, 32]), st.integers(8, 512),
       st.sampled_from([2, 4, 8]), st.integers(1, 256), st.floats(1, 300),
       st.booleans())
def test_objective_matches_oracle(R, C, n_dpu, n_c, batch, avg_red, pad):
    cost = CostParams(equal_size_padding=pad)
    table = EmbeddingTableSpec(0, R, C)
    cluster = DpuClusterConfig(n_dpu=n_dpu)
    try:
        shape = uniform_shape(table, cluster, n_c)
    except Exception:
        return
    got = objective(shape, table, cluster, WorkloadSpec(batch, avg_red), cost)
    assert got == pytest.approx(oracle_objective(R, C, n_dpu, n_c, batch, avg_red, cost),
                                rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(1, 10**5), st.floats(1, 10**5), st.sampled_from([8, 16, 32, 64, 2048]))
def test_dpu_time_monotone_in_accesses(a, b, nbytes):
    lo, hi = sorted((a, b))
    assert dpu_time(lo, nbytes, COST) <= dpu_time(hi, nbytes, COST)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 10**5), st.sampled_from([8, 32, 64, 2048]), st.integers(1, 24))
def test_more_tasklets_never_slower(a, nbytes, k):
    assert dpu_time(a, nbytes, COST, tasklets=k) <= dpu_time(a, nbytes, COST, tasklets=1)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.5, 10**4), st.sampled_from([8, 16, 32, 64, 128, 2048]))
def test_dpu_time_monotone_in_read_size(a, nbytes):
    assert dpu_time(a, 8, COST) <= dpu_time(a, nbytes, COST)


def test_stage_trends_in_nc():
    table = EmbeddingTableSpec(0, 10**6, 32)
    cluster = DpuClusterConfig(n_dpu=256)
    wl = WorkloadSpec(64, 100.0)
    t1, t2, t3 = [], [], []
    for n_c in (2, 4, 8):
        shape = uniform_shape(table, cluster, n_c)
        plan = partition_uniform(table, shape, cluster)
        t1.append(cpu_to_dpu_time(plan, wl, COST))
        t2.append(lookup_time_uniform(shape, table, cluster, wl, COST))
        t3.append(dpu_to_cpu_time(shape, wl, COST))
    assert t3[0] < t3[1] < t3[2]
    assert t1[0] > t1[1] > t1[2]
    assert t1[0] + t2[0] > t1[1] + t2[1] > t1[2] + t2[2]
