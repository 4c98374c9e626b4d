import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pimemb.errors import ConfigError
from pimemb.model import (
    EXACT_SUM_TERMS, CostParams, DpuClusterConfig, EmbeddingTableSpec,
    ExperimentConfig, WorkloadSpec, table_rows, table_value,
)


def test_table_value_deterministic():
    spec = EmbeddingTableSpec(0, 10, 4, content_seed=0)
    assert table_value(spec, 0, 0) == table_value(spec, 0, 0)


def test_table_value_seed_changes_values():
    rng = np.random.default_rng(11)
    rows = rng.integers(0, 10**6, 1000)
    cols = rng.integers(0, 32, 1000)
    a = EmbeddingTableSpec(0, 10**6, 32, content_seed=0)
    b = EmbeddingTableSpec(0, 10**6, 32, content_seed=1)
    va = np.array([table_value(a, r, c) for r, c in zip(rows, cols)])
    vb = np.array([table_value(b, r, c) for r, c in zip(rows, cols)])
    assert np.count_nonzero(va == vb) < 5


def test_table_values_in_unit_interval():
    spec = EmbeddingTableSpec(3, 10**7, 32, content_seed=5)
    rng = np.random.default_rng(0)
    vals = table_rows(spec, rng.integers(0, spec.n_rows, 10**4 // 32 + 1))
    assert vals.dtype == np.float32
    assert vals.min() >= -1.0 and vals.max() <= 1.0


def test_table_rows_matches_scalar():
    spec = EmbeddingTableSpec(2, 50, 8, content_seed=9)
    block = table_rows(spec, [3, 7], [0, 5])
    assert block[1, 1] == table_value(spec, 7, 5)
    assert block[0, 0] == table_value(spec, 3, 0)


def test_table_value_bounds():
    spec = EmbeddingTableSpec(0, 4, 2)
    with pytest.raises(IndexError):
        table_value(spec, 4, 0)
    with pytest.raises(IndexError):
        table_value(spec, 0, 2)
    with pytest.raises(IndexError):
        table_rows(spec, [5])


def test_values_sum_exactly_in_any_order():
    # the grid guarantees association-free float32 sums up to EXACT_SUM_TERMS terms
    spec = EmbeddingTableSpec(0, 10**5, 4)
    rng = np.random.default_rng(1)
    v = table_rows(spec, rng.integers(0, spec.n_rows, 500))
    fwd = np.zeros(4, np.float32)
    for row in v:
        fwd += row
    rev = np.zeros(4, np.float32)
    for row in v[::-1]:
        rev += row
    exact = v.astype(np.float64).sum(axis=0)
    assert np.array_equal(fwd, rev)
    assert np.array_equal(fwd.astype(np.float64), exact)
    assert EXACT_SUM_TERMS >= 4096


def test_defaults():
    c = DpuClusterConfig()
    assert c.mram_bytes == 64 * 2**20 and c.tasklets == 14 and c.cache_fraction == 1.0
    assert WorkloadSpec().batch_size == 64


@pytest.mark.parametrize("ctor, field", [
    (lambda: EmbeddingTableSpec(0, 0, 4), "tables.n_rows"),
    (lambda: EmbeddingTableSpec(0, 4, 3), "tables.n_cols"),
    (lambda: EmbeddingTableSpec(0, 4, 4, elem_bytes=2), "tables.elem_bytes"),
    (lambda: DpuClusterConfig(tasklets=0), "cluster.tasklets"),
    (lambda: DpuClusterConfig(cache_fraction=1.5), "cluster.cache_fraction"),
    (lambda: CostParams(mram_alpha=0), "cost.mram_alpha"),
    (lambda: CostParams(t_c=-1), "cost.t_c"),
    (lambda: WorkloadSpec(batch_size=0), "workload.batch_size"),
    (lambda: WorkloadSpec(avg_red=0), "workload.avg_red"),
])
def test_invalid_values_rejected_with_field_name(ctor, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        ctor()


def test_config_rejects_unknown_and_mistyped_keys():
    with pytest.raises(ConfigError, match="cluster.n_dpus"):
        ExperimentConfig.from_dict({"cluster": {"n_dpus": 4}})
    with pytest.raises(ConfigError, match="cost.t_c"):
        ExperimentConfig.from_dict({"cost": {"t_c": "fast"}})
    with pytest.raises(ConfigError, match="bogus"):
        ExperimentConfig.from_dict({"bogus": {}})
    with pytest.raises(ConfigError, match="cluster.tasklets"):
        ExperimentConfig.from_dict({"cluster": {"tasklets": 0}})


configs = st.builds(
    ExperimentConfig,
    cluster=st.builds(DpuClusterConfig, n_dpu=st.integers(1, 4096),
                      tasklets=st.integers(1, 24),
                      cache_fraction=st.floats(0, 1, allow_nan=False)),
    cost=st.builds(CostParams, t_c=st.floats(0, 100, allow_nan=False),
                   mram_beta=st.floats(0, 10, allow_nan=False),
                   equal_size_padding=st.booleans()),
    workload=st.builds(WorkloadSpec, batch_size=st.integers(1, 512),
                       avg_red=st.one_of(st.none(), st.floats(0.5, 500))),
    tables=st.lists(st.builds(EmbeddingTableSpec, table_id=st.integers(0, 5),
                              n_rows=st.integers(1, 10**8),
                              n_cols=st.sampled_from([2, 8, 32, 64])),
                    max_size=3, unique_by=lambda t: t.table_id).map(tuple),
)


@settings(max_examples=60, deadline=None)
@given(configs)
def test_config_round_trip_is_byte_identical(cfg):
    text = cfg.to_json()
    again = ExperimentConfig.from_json(text)
    assert again == cfg
    assert again.to_json() == text
    json.loads(text)
