import numpy as np
import pytest

from spgc.bench import CSV_HEADER, BenchConfig, DATASET_SCHEMAS, bench, bench_one, loglog_slope, scaling_summary, to_csv
from spgc.circuit import RegionGraphSpec
from spgc.graph import DatasetSchema

SMALL = {"a": DatasetSchema(4, 4, 2, 2), "b": DatasetSchema(8, 8, 2, 2), "c": DatasetSchema(16, 16, 2, 2)}
SPEC = RegionGraphSpec("BT", n_L=1, n_S=2, n_I=2, n_c=2)


def test_loglog_slope_exact():
    x = np.array([2, 4, 8, 16])
    assert np.isclose(loglog_slope(x, 3 * x**2), 2.0)


def test_rows_and_csv():
    rows = bench(BenchConfig(schemas=SMALL, batch_size=8, spec=SPEC))
    assert [(r.kind, r.schema) for r in rows] == [("dense", s) for s in "abc"] + [("sparse", s) for s in "abc"]
    text = to_csv(rows)
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    assert len(text.splitlines()) == 7
    dense_D = [r.D for r in rows if r.kind == "dense"]
    assert dense_D == [4 + 6, 8 + 28, 16 + 120]
    summary = scaling_summary(rows)
    assert summary["dense_mem_slope"] > summary["sparse_mem_slope"]
    assert set(summary) >= {"time_ratio_a", "time_ratio_b", "time_ratio_c"}


def test_memory_cap_skips():
    row = bench_one("dense", "polymer", DATASET_SCHEMAS["polymer"], BenchConfig(spec=SPEC, memory_cap=1))
    assert row.skipped and row.as_list()[5] == "skipped"
    assert row.param_count > 0


def test_config_validation():
    with pytest.raises(ValueError):
        BenchConfig(repetitions=2)
    with pytest.raises(ValueError):
        BenchConfig(batch_size=0)
