"""Fork-join threaded SpMV over contiguous, NNZ-balanced panel ranges.

Workers get contiguous runs of whole panels, so their y slices are disjoint
and the result is bitwise-identical to the sequential kernel no matter how
many workers run or how they are scheduled. No NUMA placement is attempted.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .blocks import Spc5Matrix
from .kernels import (KernelConfig, SpmvResult, _check_xy, _padded_x,
                      _run_panels_scalar, _run_panels_vector,
                      block_value_offsets, mask_popcounts)

__all__ = ["Partition", "partition_by_nnz", "spmv_parallel"]


@dataclass
class Partition:
    """Contiguous, disjoint panel ranges covering the matrix, one per worker."""

    ranges: list[tuple[int, int]]


def partition_by_nnz(s: Spc5Matrix, workers: int) -> Partition:
    """Greedy prefix split: each share lands within one panel's NNZ of the ideal."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    num_panels = s.num_panels
    per_block = mask_popcounts(s.block_masks).reshape(s.num_blocks, s.r).sum(axis=1)
    offsets = np.zeros(s.num_blocks + 1, dtype=np.int64)
    np.cumsum(per_block, out=offsets[1:])
    cum = offsets[s.block_rowptr[1:]]  # cumulative NNZ after each panel
    total = int(cum[-1]) if num_panels else 0

    boundaries = [0]
    for k in range(1, workers):
        target = total * k / workers
        if target <= 0:
            boundaries.append(0)
        else:
            boundaries.append(int(np.searchsorted(cum, target, side="left")) + 1)
    boundaries.append(num_panels)
    boundaries = [min(b, num_panels) for b in boundaries]
    return Partition(ranges=[(boundaries[i], boundaries[i + 1])
                             for i in range(workers)])


def spmv_parallel(m: Spc5Matrix, x: np.ndarray, y: np.ndarray,
                  cfg: KernelConfig, workers: int) -> SpmvResult:
    """Run the configured kernel with panels divided among worker threads."""
    if m.values.dtype != cfg.dtype:
        raise ValueError(f"matrix is {m.precision} but config asks for {cfg.precision}")
    _check_xy(m.num_rows, m.num_cols, x, y)
    part = partition_by_nnz(m, workers)
    offsets = block_value_offsets(m)
    scalar = cfg.strategy == "scalar"
    xarr = np.asarray(x, dtype=m.values.dtype)
    xshared = xarr if scalar else _padded_x(m, xarr)
    ypad = np.zeros(m.num_panels * m.r, dtype=m.values.dtype)

    def run(lo: int, hi: int) -> None:
        start = int(offsets[m.block_rowptr[lo]])
        if scalar:
            end = _run_panels_scalar(m, xshared, ypad, lo, hi, start)
        else:
            end = _run_panels_vector(m, xshared, ypad, cfg, lo, hi, start)
        expected = int(offsets[m.block_rowptr[hi]])
        if end != expected:
            raise RuntimeError(
                f"worker for panels [{lo}, {hi}) ended its value cursor at "
                f"{end}, expected {expected}")

    t0 = time.perf_counter()
    live = [(lo, hi) for lo, hi in part.ranges if hi > lo]
    if len(live) <= 1:
        for lo, hi in live:
            run(lo, hi)
    else:
        with ThreadPoolExecutor(max_workers=len(live)) as pool:
            futures = [pool.submit(run, lo, hi) for lo, hi in live]
            for fut in futures:
                fut.result()
    y[:m.num_rows] += ypad[:m.num_rows]
    elapsed = time.perf_counter() - t0
    return SpmvResult(y=y, flops=2 * m.nnz, elapsed=elapsed)
