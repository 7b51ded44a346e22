"""Sparse versus dense circuit cost on the dataset-table schemas.

Both models share one set of circuit hyperparameters, so differences come
from the representation alone: ``n_max + 3 m_max`` variables for the sparse
layout against ``n_max + n_max (n_max - 1) / 2`` for the dense one.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from .circuit import RegionGraphSpec
from .graph import DatasetSchema
from .model import build_dense_baseline, build_spgc

# max nodes, max edges, node types, edge types of the benchmark datasets
DATASET_SCHEMAS = {
    "qm9": DatasetSchema(9, 12, 4, 3),
    "zinc250k": DatasetSchema(38, 45, 9, 3),
    "guacamol": DatasetSchema(88, 87, 12, 3),
    "polymer": DatasetSchema(122, 145, 7, 3),
}

CSV_HEADER = ["kind", "schema", "n_max", "m_max", "D", "sec_per_batch", "act_bytes", "param_count"]


def default_bench_spec() -> RegionGraphSpec:
    return RegionGraphSpec(kind="BT", n_L=1, n_S=8, n_I=8, n_R=1, n_c=8)


@dataclass
class BenchConfig:
    schemas: dict = field(default_factory=lambda: dict(DATASET_SCHEMAS))
    batch_size: int = 256
    repetitions: int = 3
    seed: int = 0
    spec: RegionGraphSpec = field(default_factory=default_bench_spec)
    memory_cap: int = 8 * 2**30
    kinds: tuple = ("dense", "sparse")

    def __post_init__(self):
        if self.repetitions < 3:
            raise ValueError("repetitions must be >= 3")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class BenchRow:
    kind: str
    schema: str
    n_max: int
    m_max: int
    D: int
    sec_per_batch: float | None
    act_bytes: int | None
    param_count: int

    @property
    def skipped(self) -> bool:
        return self.sec_per_batch is None

    def as_list(self):
        if self.skipped:
            return [self.kind, self.schema, self.n_max, self.m_max, self.D, "skipped", "skipped", self.param_count]
        return [self.kind, self.schema, self.n_max, self.m_max, self.D, f"{self.sec_per_batch:.6g}", self.act_bytes, self.param_count]


def random_evidence(model, batch_size: int, rng) -> np.ndarray:
    """Fully observed rows drawn uniformly from every variable's domain."""
    return (rng.random((batch_size, len(model.circuit.domains))) * model.circuit.domains).astype(np.int64)


def _estimated_bytes(model, batch_size: int) -> int:
    # the input gather dominates: one value per row, variable, repetition and unit
    spec = model.circuit.spec
    K = max([spec.n_I] + [g.n_I for g in spec.groups.values()])
    return 8 * batch_size * model.layout.D * spec.n_R * K


def bench_one(kind: str, name: str, schema: DatasetSchema, cfg: BenchConfig) -> BenchRow:
    build = build_spgc if kind == "sparse" else build_dense_baseline
    model = build(schema, cfg.spec, random_state=cfg.seed)
    circuit = model.circuit
    params = circuit.n_parameters()
    row = BenchRow(kind, name, schema.n_max, schema.m_max, model.layout.D, None, None, params)
    if _estimated_bytes(model, cfg.batch_size) > cfg.memory_cap:
        return row
    X = random_evidence(model, cfg.batch_size, np.random.default_rng(cfg.seed))
    times = []
    for _ in range(cfg.repetitions):
        start = time.perf_counter()
        circuit.log_likelihood(X)
        times.append(time.perf_counter() - start)
    param_bytes = sum(p.nbytes for p in circuit.params)
    row.sec_per_batch = float(np.median(times))
    row.act_bytes = int(circuit.activation_bytes(X) + param_bytes)
    return row


def bench(cfg: BenchConfig) -> list[BenchRow]:
    rows = [bench_one(kind, name, schema, cfg) for kind in cfg.kinds for name, schema in cfg.schemas.items()]
    return sorted(rows, key=lambda r: (r.kind, r.n_max))


def to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.as_list())
    return buf.getvalue()


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def scaling_summary(rows) -> dict:
    """Memory slopes per kind and the dense/sparse time ratio per schema."""
    out = {}
    for kind in ("dense", "sparse"):
        rs = [r for r in rows if r.kind == kind and not r.skipped]
        if len(rs) >= 2:
            out[f"{kind}_mem_slope"] = loglog_slope([r.n_max for r in rs], [r.act_bytes for r in rs])
    times = {(r.kind, r.schema): r.sec_per_batch for r in rows if not r.skipped}
    for name in {r.schema for r in rows}:
        if ("dense", name) in times and ("sparse", name) in times:
            out[f"time_ratio_{name}"] = times[("dense", name)] / times[("sparse", name)]
    return out
