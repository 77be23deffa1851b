from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import register
from nested_mzi import (
    CoincidenceTable,
    Experiment,
    RunRecord,
    aggregate_coincidences,
    coincidence_table,
    joint_outcome_distribution,
    sample_runs,
)
from nested_mzi.coincidences import run_uniforms
from nested_mzi.errors import MixedConfigurations


@pytest.fixture(scope="module")
def bw(spec):
    reg = register(spec, ("b", "B", 0.1), ("w", "B+C", 0.1))
    return joint_outcome_distribution(Experiment(spec, reg).evolve())


@pytest.fixture(scope="module")
def plain(spec):
    return joint_outcome_distribution(Experiment(spec).evolve())


def test_zero_runs(plain):
    assert sample_runs(plain, 0, 1) == []
    assert coincidence_table(plain, 0, 1).to_csv() == "detector,bits,count,frequency\n"


def test_same_seed_same_records(bw):
    assert sample_runs(bw, 500, 9) == sample_runs(bw, 500, 9)
    assert sample_runs(bw, 500, 9) != sample_runs(bw, 500, 10)


def test_stream_is_indexed_by_run():
    whole = run_uniforms(3, 0, 50)
    for start in (0, 1, 3, 4, 17):
        assert np.array_equal(run_uniforms(3, start, 50 - start), whole[start:])


def test_offset_runs_match(bw):
    whole = sample_runs(bw, 40, 5)
    assert sample_runs(bw, 30, 5, start=10) == whole[10:]


def test_timestamps(bw, spec):
    for r in sample_runs(bw, 2000, 4):
        assert r.detector in spec.detectors
        assert len(r.bits) == 2
        assert {name for name, _ in r.timestamps} == {n for n, b in zip("bw", r.bits) if b == "1"}
        assert all(slot == spec.probe_slot for _, slot in r.timestamps)


def test_d1_mean(plain):
    t = coincidence_table(plain, 10**6, 42)
    assert abs(t.frequency(("D1", "")) - 0.25) <= 3 * math.sqrt(0.25 * 0.75 / 1e6)


@pytest.mark.parametrize("seed", [0, 1, 42, 2**64 - 1])
def test_w_never_with_d1(spec, seed):
    reg = register(spec, ("w", "B+C", 0.3))
    dist = joint_outcome_distribution(Experiment(spec, reg).evolve())
    assert coincidence_table(dist, 200_000, seed)[("D1", "1")] == 0


def test_single_record():
    t = aggregate_coincidences([RunRecord(0, "D3", "10", ("b", "w"))])
    assert t.total == 1
    assert t[("D3", "10")] == 1
    assert t.cells == (("D3", "10"),)


def test_mixed_configurations():
    with pytest.raises(MixedConfigurations):
        aggregate_coincidences([RunRecord(0, "D3", "1", ("b",)), RunRecord(1, "D3", "1", ("w",))])
    with pytest.raises(MixedConfigurations):
        CoincidenceTable(("b",), {("D1", "0"): 1}, 1) + CoincidenceTable(("w",), {("D1", "0"): 1}, 1)


def test_table_matches_records(bw):
    recs = sample_runs(bw, 3000, 11)
    assert aggregate_coincidences(recs, bw.cells).counts == coincidence_table(bw, 3000, 11).counts


@pytest.mark.parametrize("workers", [2, 3, 8])
def test_worker_independence(bw, workers):
    ref = coincidence_table(bw, 100_003, 42, workers=1, chunk=4096)
    assert coincidence_table(bw, 100_003, 42, workers=workers, chunk=4096).to_csv() == ref.to_csv()


def test_csv_format(bw):
    lines = coincidence_table(bw, 1000, 3).to_csv().splitlines()
    assert lines[0] == "detector,bits,count,frequency"
    assert lines[1].startswith("D1,b=0;w=0,")
    assert len(lines) == 1 + len(bw.cells)
    assert sum(int(ln.split(",")[2]) for ln in lines[1:]) == 1000


def test_conditional(bw):
    t = coincidence_table(bw, 200_000, 8)
    cond = t.conditional("b", 1)
    assert set(cond) == {"D1", "D2", "D3"}
    assert sum(cond.values()) == pytest.approx(1.0)


cells = st.sampled_from([("D1", "0"), ("D2", "0"), ("D3", "1")])
tables = st.dictionaries(cells, st.integers(0, 50)).map(
    lambda c: CoincidenceTable(("b",), dict(c), sum(c.values()))
)


@settings(max_examples=50, deadline=None)
@given(tables, tables, tables)
def test_merge_algebra(t1, t2, t3):
    m = t1 + t2
    assert m.total == t1.total + t2.total
    assert sum(m.counts.values()) == m.total
    assert (t1 + t2).counts == (t2 + t1).counts
    assert ((t1 + t2) + t3).counts == (t1 + (t2 + t3)).counts
