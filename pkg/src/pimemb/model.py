"""Domain types, the JSON configuration schema, and synthetic table contents.

Table contents are never stored. Every element is recomputed on demand from
``(content_seed, table_id, row, col)`` with a splitmix64-style integer mix,
so tables with tens of millions of rows cost nothing until a DPU image is
built from them.

Element values live on the dyadic grid ``k / 2048`` with ``k`` in
``[-2048, 2047]``. Any sum of up to :data:`EXACT_SUM_TERMS` such values is
exactly representable in float32, which is what lets the partitioned engine
(partial sums, cached subset sums, host aggregation) agree bit-for-bit with
the naive reference reduction.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError

ELEM_BYTES = 4
MRAM_BYTES = 64 * 1024 * 1024
WRAM_BYTES = 64 * 1024

VALUE_BITS = 12
VALUE_SCALE = 2.0 ** (VALUE_BITS - 1)
# |sum| <= n * 2048 grid steps must stay below 2**24 (float32 mantissa).
EXACT_SUM_TERMS = 2 ** (24 - VALUE_BITS + 1)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _check(cond: bool, name: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{name}: {msg}")


@dataclass(frozen=True)
class EmbeddingTableSpec:
    table_id: int
    n_rows: int
    n_cols: int
    elem_bytes: int = ELEM_BYTES
    content_seed: int = 0

    def __post_init__(self):
        _check(isinstance(self.table_id, int) and self.table_id >= 0,
               "tables.table_id", "must be a non-negative integer")
        _check(self.n_rows >= 1, "tables.n_rows", "must be >= 1")
        _check(self.n_cols >= 1, "tables.n_cols", "must be >= 1")
        _check(self.n_cols % 2 == 0, "tables.n_cols", "must be a multiple of 2")
        _check(self.elem_bytes == ELEM_BYTES, "tables.elem_bytes",
               f"must be {ELEM_BYTES} (32-bit values)")
        _check(isinstance(self.content_seed, int) and self.content_seed >= 0,
               "tables.content_seed", "must be a non-negative integer")

    @property
    def nbytes(self) -> int:
        return self.n_rows * self.n_cols * self.elem_bytes


@dataclass(frozen=True)
class DpuClusterConfig:
    n_dpu: int = 256
    mram_bytes: int = MRAM_BYTES
    wram_bytes: int = WRAM_BYTES
    tasklets: int = 14
    cache_fraction: float = 1.0

    def __post_init__(self):
        _check(self.n_dpu >= 1, "cluster.n_dpu", "must be >= 1")
        _check(self.mram_bytes >= 8, "cluster.mram_bytes", "must be >= 8")
        _check(self.wram_bytes >= 0, "cluster.wram_bytes", "must be >= 0")
        _check(self.tasklets >= 1, "cluster.tasklets", "must be >= 1")
        _check(0.0 <= self.cache_fraction <= 1.0, "cluster.cache_fraction",
               "must lie in [0, 1]")


@dataclass(frozen=True)
class CostParams:
    """Latency constants, all in nanoseconds.

    ``mram_alpha``/``mram_beta`` give a flat read cost up to 32 B and a linear
    per-byte slope beyond it; the defaults model ~780 MB/s at 2048 B reads.
    ``tasklet_ramp`` is the per-DPU access count at which every tasklet has
    work queued; below it the DPU overlaps proportionally fewer reads.
    """

    t_c: float = 2.0
    t_d: float = 2.0
    mram_alpha: float = 100.0
    mram_beta: float = 1.25
    t_instr: float = 3.0
    tasklet_ramp: float = 150.0
    equal_size_padding: bool = True

    def __post_init__(self):
        for name in ("t_c", "t_d", "mram_beta", "t_instr", "tasklet_ramp"):
            _check(getattr(self, name) >= 0, f"cost.{name}", "must be >= 0")
        _check(self.mram_alpha > 0, "cost.mram_alpha", "must be > 0")


@dataclass(frozen=True)
class WorkloadSpec:
    batch_size: int = 64
    avg_red: float | None = None  # None: derive from the trace

    def __post_init__(self):
        _check(self.batch_size >= 1, "workload.batch_size", "must be >= 1")
        _check(self.avg_red is None or self.avg_red > 0, "workload.avg_red",
               "must be > 0")

    def with_avg_red(self, avg_red: float) -> WorkloadSpec:
        return WorkloadSpec(batch_size=self.batch_size, avg_red=float(avg_red))


_SECTIONS = {
    "cluster": DpuClusterConfig,
    "cost": CostParams,
    "workload": WorkloadSpec,
}
_FLOAT_FIELDS = {"cache_fraction", "t_c", "t_d", "mram_alpha", "mram_beta",
                 "t_instr", "tasklet_ramp", "avg_red"}


def _build(cls, data: Any, section: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{section}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{section}.{unknown[0]}: unknown key")
    kwargs = {}
    for key, value in data.items():
        if key in _FLOAT_FIELDS:
            if value is None and key == "avg_red":
                kwargs[key] = None
                continue
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{section}.{key}: expected a number")
            value = float(value)
        elif key == "equal_size_padding":
            if not isinstance(value, bool):
                raise ConfigError(f"{section}.{key}: expected true/false")
        elif isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{section}.{key}: expected an integer")
        kwargs[key] = value
    return cls(**kwargs)


@dataclass(frozen=True)
class ExperimentConfig:
    cluster: DpuClusterConfig = field(default_factory=DpuClusterConfig)
    cost: CostParams = field(default_factory=CostParams)
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    tables: tuple[EmbeddingTableSpec, ...] = ()

    def __post_init__(self):
        ids = [t.table_id for t in self.tables]
        _check(len(ids) == len(set(ids)), "tables.table_id", "duplicate id")

    def table(self, table_id: int | None = None) -> EmbeddingTableSpec:
        if not self.tables:
            raise ConfigError("tables: no table configured")
        if table_id is None:
            return self.tables[0]
        for t in self.tables:
            if t.table_id == table_id:
                return t
        raise ConfigError(f"tables.table_id: no table with id {table_id}")

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        if not isinstance(data, dict):
            raise ConfigError("config: expected an object")
        unknown = sorted(set(data) - {*_SECTIONS, "tables"})
        if unknown:
            raise ConfigError(f"{unknown[0]}: unknown section")
        kwargs = {name: _build(cls_, data[name], name)
                  for name, cls_ in _SECTIONS.items() if name in data}
        tables = data.get("tables", [])
        if not isinstance(tables, list):
            raise ConfigError("tables: expected a list")
        kwargs["tables"] = tuple(_build(EmbeddingTableSpec, t, "tables")
                                 for t in tables)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {
            "cluster": asdict(self.cluster),
            "cost": asdict(self.cost),
            "workload": asdict(self.workload),
            "tables": [asdict(t) for t in self.tables],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> ExperimentConfig:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON ({exc})") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def _mix(x: np.ndarray) -> np.ndarray:
    z = x + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _hash_grid(seed, table_id, rows, cols) -> np.ndarray:
    with np.errstate(over="ignore"):
        h = _mix(np.asarray(seed, dtype=np.uint64))
        h = _mix(h ^ np.asarray(table_id, dtype=np.uint64))
        h = _mix(h ^ rows.astype(np.uint64))
        h = _mix(h ^ cols.astype(np.uint64))
    k = (h >> np.uint64(64 - VALUE_BITS)).astype(np.int64) - int(VALUE_SCALE)
    return (k / VALUE_SCALE).astype(np.float32)


def table_value(spec: EmbeddingTableSpec, row: int, col: int) -> np.float32:
    """Return element ``(row, col)`` of the synthetic table ``spec``."""
    if not 0 <= row < spec.n_rows:
        raise IndexError(f"row {row} out of range [0, {spec.n_rows})")
    if not 0 <= col < spec.n_cols:
        raise IndexError(f"col {col} out of range [0, {spec.n_cols})")
    out = _hash_grid(spec.content_seed, spec.table_id,
                     np.array([row]), np.array([col]))
    return out[0]


def table_rows(spec: EmbeddingTableSpec, rows, cols=None) -> np.ndarray:
    """Vectorized :func:`table_value` over ``rows`` x ``cols``.

    Returns a float32 array of shape ``(len(rows), len(cols))``; ``cols``
    defaults to all columns.
    """
    rows = np.asarray(rows, dtype=np.int64).reshape(-1)
    cols = (np.arange(spec.n_cols, dtype=np.int64) if cols is None
            else np.asarray(cols, dtype=np.int64).reshape(-1))
    if rows.size and (rows.min() < 0 or rows.max() >= spec.n_rows):
        raise IndexError(f"row index out of range [0, {spec.n_rows})")
    if cols.size and (cols.min() < 0 or cols.max() >= spec.n_cols):
        raise IndexError(f"col index out of range [0, {spec.n_cols})")
    return _hash_grid(spec.content_seed, spec.table_id,
                      rows[:, None], cols[None, :])
