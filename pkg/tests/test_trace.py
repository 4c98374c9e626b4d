import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from pimemb.errors import TraceFormatError
from pimemb.trace import (
    AccessTrace, block_access_histogram, generate_cooccur_trace, generate_zipf_trace,
    load_trace, profile, write_trace,
)


def test_load_trace_sorts(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("# header\n0,3 1 7\n1,2\n")
    t = load_trace(p, table_id=4, n_rows=10)
    assert t.samples == [[1, 3, 7], [2]]
    assert t.table_id == 4


def test_load_trace_dedups(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("0,5 5 1\n")
    assert load_trace(p).samples == [[1, 5]]


def test_load_empty(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("")
    assert len(load_trace(p)) == 0


@pytest.mark.parametrize("body, line", [
    ("0,1 2\n1,1 99\n", 2),
    ("0,1\n\n2,x\n", 3),
    ("justnumbers\n", 1),
])
def test_load_errors_name_the_line(tmp_path, body, line):
    p = tmp_path / "t.txt"
    p.write_text(body)
    with pytest.raises(TraceFormatError) as exc:
        load_trace(p, n_rows=10)
    assert exc.value.line == line
    assert f"line {line}" in str(exc.value)


def test_write_load_round_trip(tmp_path):
    t = generate_zipf_trace(50, 40, 5, 1.0, seed=3)
    write_trace(t, tmp_path / "t.txt")
    assert load_trace(tmp_path / "t.txt") == t


def test_zipf_avg_red():
    t = generate_zipf_trace(100, 10**4, 50, 0.0, seed=1)
    assert abs(profile(t).avg_red - 50) <= 2


def test_zipf_uniform_counts():
    t = generate_zipf_trace(100, 10**5, 50, 0.0, seed=2)
    c = profile(t, 100).counts
    assert c.max() / c.min() < 1.3
    assert np.all(np.abs(c - c.mean()) <= 0.3 * c.mean())


def test_zipf_deterministic():
    a = generate_zipf_trace(200, 500, 10, 1.05, seed=9)
    b = generate_zipf_trace(200, 500, 10, 1.05, seed=9)
    c = generate_zipf_trace(200, 500, 10, 1.05, seed=10)
    assert a == b and a != c
    pa, pb = profile(a, 200), profile(b, 200)
    assert np.array_equal(pa.counts, pb.counts)


def test_skewed_block_histogram():
    t = generate_zipf_trace(8000, 5000, 20, 1.05, seed=4)
    blocks = block_access_histogram(profile(t, 8000), 8)
    assert blocks.max() / blocks.min() > 10


def test_planted_group_always_present():
    t = generate_cooccur_trace(50, 300, 6, [[4, 5]], 1.0, seed=0, zipf_s=1.0)
    assert all({4, 5} <= set(s) for s in t.samples)


def test_planted_pair_cooccurrence_count():
    n, p = 4000, 0.3
    t = generate_cooccur_trace(200, n, 5, [[10, 11], [20, 21]], p, seed=5)
    both = sum(1 for s in t.samples if 10 in s and 11 in s)
    # each sample picks one of two groups: expected n * p / 2 plants, plus chance hits
    planted = sum(1 for s in t.samples if {10, 11} <= set(s))
    assert both == planted
    assert both >= n * p / 2 * 0.9


def test_group_prob_one_pair_count():
    t = generate_cooccur_trace(100, 1000, 5, [[1, 2]], 1.0, seed=5)
    assert sum(1 for s in t.samples if 1 in s and 2 in s) >= 1.0 * 1000


def test_group_prob_zero_matches_zipf_generator():
    a = generate_cooccur_trace(300, 10**5 // 10, 8, [[1, 2]], 0.0, seed=6, zipf_s=0.8)
    b = generate_zipf_trace(300, 10**5 // 10, 8, 0.8, seed=6)
    assert a == b


def test_group_prob_zero_statistically_matches_other_seed():
    # two-sample KS on the item-index and length distributions, independent seeds
    a = generate_cooccur_trace(300, 10**5, 4, [[1, 2]], 0.0, seed=7, zipf_s=0.8)
    b = generate_zipf_trace(300, 10**5, 4, 0.8, seed=8)
    assert stats.ks_2samp(a.indices, b.indices).pvalue > 0.001
    assert stats.ks_2samp(a.lengths, b.lengths).pvalue > 0.001


def test_generator_domain_errors():
    with pytest.raises(ValueError):
        generate_zipf_trace(10, 5, 11, 0.0, 0)
    with pytest.raises(ValueError):
        generate_zipf_trace(10, 5, 2, -1.0, 0)
    with pytest.raises(ValueError):
        generate_cooccur_trace(10, 5, 2, [[3]], 0.5, 0)
    with pytest.raises(ValueError):
        generate_cooccur_trace(10, 5, 2, [[3, 10]], 0.5, 0)


def test_profile_direct_count():
    p = profile(AccessTrace.from_samples([[1, 3], [3]]))
    assert p.counts[1] == 1 and p.counts[3] == 2
    assert p.avg_red == 1.5


def test_profile_empty_rejected():
    with pytest.raises(ValueError):
        profile(AccessTrace.from_samples([]))


def test_block_histogram_examples():
    p = profile(AccessTrace.from_samples([[0]] * 5 + [[1]] * 7))
    assert block_access_histogram(p, 1).tolist() == [12]
    assert block_access_histogram(p, 2).tolist() == [5, 7]
    with pytest.raises(ValueError):
        block_access_histogram(p, 3)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(st.integers(0, 60), max_size=12), min_size=1, max_size=30),
       st.integers(1, 61))
def test_block_histogram_partitions_counts(samples, n_blocks):
    prof = profile(AccessTrace.from_samples(samples), 61)
    h = block_access_histogram(prof, n_blocks)
    assert h.size == n_blocks
    assert h.sum() == prof.counts.sum()


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 80), st.integers(1, 60), st.floats(0.5, 10), st.floats(0, 2),
       st.integers(0, 2**31))
def test_generated_traces_are_canonical(n_items, n_samples, avg_red, s, seed):
    avg_red = min(avg_red, n_items)
    t = generate_zipf_trace(n_items, n_samples, avg_red, s, seed)
    assert len(t) == n_samples
    for sample in t:
        assert sample.size >= 1
        assert np.all(np.diff(sample) > 0)
        assert sample.min() >= 0 and sample.max() < n_items
    prof = profile(t, n_items)
    assert prof.counts.sum() == t.lengths.sum()
    assert prof.avg_red == pytest.approx(prof.counts.sum() / n_samples)
