"""Benchmark records, the CSV schema, timing loops, and the per-block cost model.

CSV is the canonical output; printed tables are derived views. The column
order is fixed and versioned by the leading comment line, floats are written
with shortest round-trip repr, and a parsed file is field-identical to what
was written.
"""

from __future__ import annotations

import csv
import io
import statistics
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .blocks import Spc5Matrix, csr_to_spc5, filling_stats
from .kernels import (KernelConfig, SpmvResult, spmv_spc5_scalar,
                      spmv_spc5_vector, verify_against_oracle)
from .mmio import CsrMatrix
from .parallel import spmv_parallel

__all__ = [
    "BenchRecord",
    "CostModelFit",
    "ValidationError",
    "InsufficientDataError",
    "CSV_VERSION_LINE",
    "run_kernel",
    "run_bench",
    "write_records",
    "write_scatter",
    "read_records",
    "fit_cost_model",
    "spearman_rank_correlation",
]

# The comment line records the numeric conventions timings were produced
# under: unfused multiply-add, adjacent-pair reduction trees, no NUMA pinning.
CSV_VERSION_LINE = "# spc5 bench csv v1 (fma=unfused, tree=adjacent-pair, numa=none)"


class ValidationError(RuntimeError):
    """A kernel failed oracle verification; its timings would be meaningless."""


class InsufficientDataError(ValueError):
    """Too few records in a group to fit the cost model."""


@dataclass
class BenchRecord:
    """One benchmark measurement row; gflops is recomputable from the fields."""

    matrix: str
    precision: str
    r: int
    vs: int
    strategy: str
    reduction: str
    x_load: str
    workers: int
    reps: int
    median_seconds: float
    gflops: float
    filling: float
    num_blocks: int

    @property
    def nnz(self) -> int:
        # filling = nnz / (num_blocks * r * vs), stored at full precision
        return round(self.filling * self.num_blocks * self.r * self.vs)

    @property
    def avg_nnz_per_block(self) -> float:
        return self.filling * self.r * self.vs


_FIELDS = [f.name for f in fields(BenchRecord)]
_INT_FIELDS = {"r", "vs", "workers", "reps", "num_blocks"}
_FLOAT_FIELDS = {"median_seconds", "gflops", "filling"}


def _format_cell(name: str, value) -> str:
    if name in _FLOAT_FIELDS:
        return repr(float(value))
    return str(value)


def write_records(path, records: list[BenchRecord]) -> None:
    buf = io.StringIO()
    buf.write(CSV_VERSION_LINE + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_FIELDS)
    for rec in records:
        writer.writerow([_format_cell(n, getattr(rec, n)) for n in _FIELDS])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_scatter(path, records: list[BenchRecord]) -> None:
    """Plot-ready companion: performance against average entries per block."""
    buf = io.StringIO()
    buf.write("# spc5 bench scatter v1\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["matrix", "precision", "r", "vs", "avg_nnz_per_block", "gflops"])
    for rec in records:
        writer.writerow([rec.matrix, rec.precision, rec.r, rec.vs,
                         repr(rec.avg_nnz_per_block), repr(rec.gflops)])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_records(path) -> list[BenchRecord]:
    records = []
    header = None
    lines = [line for line in Path(path).read_text(encoding="utf-8").splitlines()
             if line.strip() and not line.startswith("#")]
    for cells in csv.reader(lines):
        if header is None:
            header = cells
            if header != _FIELDS:
                raise ValueError(f"unexpected CSV header {header}")
            continue
        if len(cells) != len(_FIELDS):
            raise ValueError(f"row has {len(cells)} cells, expected {len(_FIELDS)}")
        kwargs = {}
        for name, cell in zip(_FIELDS, cells):
            if name in _INT_FIELDS:
                kwargs[name] = int(cell)
            elif name in _FLOAT_FIELDS:
                kwargs[name] = float(cell)
            else:
                kwargs[name] = cell
        records.append(BenchRecord(**kwargs))
    return records


def run_kernel(s: Spc5Matrix, x: np.ndarray, y: np.ndarray,
               cfg: KernelConfig, workers: int = 1) -> SpmvResult:
    """Dispatch one SpMV run; parallel only when more than one worker is asked."""
    if workers > 1:
        return spmv_parallel(s, x, y, cfg, workers)
    t0 = time.perf_counter()
    if cfg.strategy == "scalar":
        spmv_spc5_scalar(s, x, y)
    else:
        spmv_spc5_vector(s, x, y, cfg)
    return SpmvResult(y=y, flops=2 * s.nnz, elapsed=time.perf_counter() - t0)


def run_bench(label: str, m: CsrMatrix, r: int, vs: int, cfg: KernelConfig,
              workers: int = 1, reps: int = 10, warmup: int = 3,
              seed: int = 0) -> BenchRecord:
    """Validate the kernel against the oracle, then time it: median of reps.

    Conversion and validation happen outside the timed region. A failed
    validation aborts with :class:`ValidationError` rather than timing a
    kernel that computes the wrong thing.
    """
    s = csr_to_spc5(m, r, vs)
    report = verify_against_oracle(m, r, vs, cfg, trials=1, seed=seed, spc5=s)
    if not report.passed:
        raise ValidationError(
            f"{label} r={r} vs={vs} {cfg.strategy}/{cfg.reduction}/{cfg.x_load}: "
            f"{report}")
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, size=m.num_cols).astype(m.values.dtype)
    y = np.zeros(m.num_rows, dtype=m.values.dtype)
    times = []
    for i in range(warmup + reps):
        y[:] = 0
        res = run_kernel(s, x, y, cfg, workers)
        if i >= warmup:
            times.append(res.elapsed)
    median = statistics.median(times)
    st = filling_stats(s)
    return BenchRecord(
        matrix=label, precision=cfg.precision, r=r, vs=vs,
        strategy=cfg.strategy, reduction=cfg.reduction, x_load=cfg.x_load,
        workers=workers, reps=reps, median_seconds=median,
        gflops=2 * m.nnz / median / 1e9,
        filling=st.filling, num_blocks=st.num_blocks)


@dataclass
class CostModelFit:
    """Least-squares fit of time = cost_per_block * num_blocks."""

    cost_per_block_seconds: float
    r_squared: float

    @property
    def constant_cost(self) -> bool:
        return self.r_squared >= 0.9


def fit_cost_model(records: list[BenchRecord],
                   min_records: int = 5) -> dict[tuple[int, int, str], CostModelFit]:
    """Fit the per-block cost for every (r, vs, precision) group in the records."""
    groups: dict[tuple[int, int, str], list[BenchRecord]] = {}
    for rec in records:
        groups.setdefault((rec.r, rec.vs, rec.precision), []).append(rec)
    short = [key for key, recs in groups.items() if len(recs) < min_records]
    if short:
        detail = ", ".join(f"r={k[0]} vs={k[1]} {k[2]} ({len(groups[k])} records)"
                           for k in sorted(short))
        raise InsufficientDataError(
            f"insufficient data: need >= {min_records} records per group; {detail}")
    fits = {}
    for key, recs in groups.items():
        x = np.array([rec.num_blocks for rec in recs], dtype=np.float64)
        t = np.array([rec.median_seconds for rec in recs], dtype=np.float64)
        sxx = float(np.dot(x, x))
        alpha = float(np.dot(x, t)) / sxx if sxx > 0 else 0.0
        ss_res = float(np.sum((t - alpha * x) ** 2))
        ss_tot = float(np.sum((t - t.mean()) ** 2))
        if ss_tot > 0:
            r2 = 1.0 - ss_res / ss_tot
        else:
            r2 = 1.0 if ss_res == 0.0 else 0.0
        fits[key] = CostModelFit(cost_per_block_seconds=alpha, r_squared=r2)
    return fits


def _average_ranks(v: np.ndarray) -> np.ndarray:
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v), dtype=np.float64)
    ranks[order] = np.arange(len(v), dtype=np.float64)
    uniq, inverse, counts = np.unique(v, return_inverse=True, return_counts=True)
    if len(uniq) != len(v):  # average the ranks of ties
        sums = np.zeros(len(uniq))
        np.add.at(sums, inverse, ranks)
        ranks = (sums / counts)[inverse]
    return ranks


def spearman_rank_correlation(a, b) -> float:
    """Rank correlation with average ranks for ties."""
    ra = _average_ranks(np.asarray(a, dtype=np.float64))
    rb = _average_ranks(np.asarray(b, dtype=np.float64))
    ra -= ra.mean()
    rb -= rb.mean()
    denom = float(np.sqrt(np.dot(ra, ra) * np.dot(rb, rb)))
    if denom == 0:
        return 0.0
    return float(np.dot(ra, rb) / denom)
