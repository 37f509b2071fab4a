"""SpMV kernels: CSR baseline, block-format scalar path, and the two vector styles.

The vector kernels exist in an ``expand`` style (values scattered to mask
positions, x loaded whole) and a ``compact`` style (x pruned to the mask,
values loaded contiguously), with independent toggles for how x is loaded and
how the per-panel accumulators are reduced into y. All of them run on the
reference lane semantics from :mod:`spc5.vlane`, so results are identical no
matter what hardware executes them.

All kernels accumulate into y. The per-row accumulation order is pinned to
row-major within a block, ascending column within a row, blocks in panel
order; that makes the scalar block kernel bitwise-equal to the CSR baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import vlane as vl
from .blocks import Spc5Matrix
from .mmio import CsrMatrix, DTYPES

__all__ = [
    "KernelConfig",
    "SpmvResult",
    "VerifyReport",
    "spmv_csr",
    "spmv_spc5_scalar",
    "spmv_spc5_vector",
    "verify_against_oracle",
    "block_value_offsets",
    "mask_popcounts",
]

STRATEGIES = ("scalar", "expand", "compact")
REDUCTIONS = ("hsum", "multi")
X_LOADS = ("partial", "single")

# Pass threshold for oracle verification, in units of nnz_row * eps * sum|products|.
VERIFY_FACTOR = 8.0
_ABS_FLOOR = {"f32": 1e-30, "f64": 1e-300}


@dataclass(frozen=True)
class KernelConfig:
    """Strategy selection for one SpMV run.

    ``x_load`` only changes the compact strategy: expand always loads x whole
    at the block anchor, and the scalar path has no vector loads at all.
    """

    strategy: str = "compact"
    reduction: str = "hsum"
    x_load: str = "partial"
    precision: str = "f64"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.reduction not in REDUCTIONS:
            raise ValueError(f"reduction must be one of {REDUCTIONS}")
        if self.x_load not in X_LOADS:
            raise ValueError(f"x_load must be one of {X_LOADS}")
        if self.precision not in DTYPES:
            raise ValueError("precision must be 'f32' or 'f64'")

    @property
    def dtype(self):
        return np.dtype(DTYPES[self.precision])


@dataclass
class SpmvResult:
    y: np.ndarray
    flops: int          # always 2 * NNZ: one multiply and one add per entry
    elapsed: float


_POP8 = np.array([bin(v).count("1") for v in range(256)], dtype=np.int64)


def mask_popcounts(masks: np.ndarray) -> np.ndarray:
    """Per-mask popcount, vectorized."""
    m = masks.astype(np.int64)
    return _POP8[m & 0xFF] + _POP8[(m >> 8) & 0xFF]


def block_value_offsets(s: Spc5Matrix) -> np.ndarray:
    """Cumulative value-array offset per block; offsets[-1] equals NNZ."""
    per_block = mask_popcounts(s.block_masks).reshape(s.num_blocks, s.r).sum(axis=1)
    offsets = np.zeros(s.num_blocks + 1, dtype=np.int64)
    np.cumsum(per_block, out=offsets[1:])
    return offsets


def _check_xy(num_rows: int, num_cols: int, x, y) -> None:
    if len(x) < num_cols:
        raise ValueError(f"x has {len(x)} elements, matrix needs {num_cols}")
    if len(y) < num_rows:
        raise ValueError(f"y has {len(y)} elements, matrix needs {num_rows}")


def spmv_csr(m: CsrMatrix, x: np.ndarray, y: np.ndarray) -> None:
    """y[i] += row_i . x, rows in order, left-to-right within each row."""
    _check_xy(m.num_rows, m.num_cols, x, y)
    x = np.asarray(x, dtype=m.values.dtype)  # keep every product in one precision
    row_ptr = m.row_ptr.tolist()
    cols = m.col_idx
    vals = m.values
    zero = vals.dtype.type(0)
    for i in range(m.num_rows):
        acc = zero
        for k in range(row_ptr[i], row_ptr[i + 1]):
            acc = acc + vals[k] * x[cols[k]]
        y[i] += acc


def _run_panels_scalar(s: Spc5Matrix, x, ypad, lo: int, hi: int, idx_val: int) -> int:
    """Blue path: test every mask bit and accumulate with scalar arithmetic."""
    r, vs = s.r, s.vs
    rowptr = s.block_rowptr
    base = int(rowptr[lo])
    colidx = s.block_colidx[base:int(rowptr[hi])].tolist()
    masks = s.block_masks[base * r:int(rowptr[hi]) * r].tolist()
    vals = s.values
    zero = vals.dtype.type(0)
    for p in range(lo, hi):
        sums = [zero] * r
        for b in range(int(rowptr[p]) - base, int(rowptr[p + 1]) - base):
            c = colidx[b]
            for rr in range(r):
                mask = masks[b * r + rr]
                for k in range(vs):
                    if (mask >> k) & 1:
                        sums[rr] = sums[rr] + vals[idx_val] * x[c + k]
                        idx_val += 1
        row0 = p * r
        for rr in range(r):
            ypad[row0 + rr] += sums[rr]
    return idx_val


def _run_panels_vector(s: Spc5Matrix, xpad, ypad, cfg: KernelConfig,
                       lo: int, hi: int, idx_val: int) -> int:
    r, vs = s.r, s.vs
    rowptr = s.block_rowptr
    base = int(rowptr[lo])
    colidx = s.block_colidx[base:int(rowptr[hi])].tolist()
    masks = s.block_masks[base * r:int(rowptr[hi]) * r].tolist()
    vals = s.values
    filt = vl.filter_vector(vs)
    expand_strategy = cfg.strategy == "expand"
    single_x = expand_strategy or cfg.x_load == "single"
    multi = cfg.reduction == "multi"
    zero_vec = np.zeros(vs, dtype=vals.dtype)

    for p in range(lo, hi):
        acc = [zero_vec] * r
        for b in range(int(rowptr[p]) - base, int(rowptr[p + 1]) - base):
            c = colidx[b]
            if single_x:
                x_full = xpad[c:c + vs]
            for rr in range(r):
                mask = masks[b * r + rr]
                if mask == 0:
                    continue
                n = mask.bit_count()
                if expand_strategy:
                    block = vl.expand(vals, idx_val, mask, vs)
                    acc[rr] = vl.fma(acc[rr], block, x_full)
                else:
                    pred = vl.mask_to_predicate(mask, filt)
                    if single_x:
                        xvals = vl.compact(x_full, pred)
                    else:
                        xvals = vl.compact(vl.masked_load(xpad, c, pred), pred)
                    block = vl.masked_load(vals, idx_val, vl.first_n_predicate(n, vs))
                    acc[rr] = vl.fma(acc[rr], block, xvals)
                idx_val += n
        row0 = p * r
        if multi:
            # One multi-reduction handles up to vs accumulators; taller panels
            # (only possible below hardware lane widths) go in vs-sized chunks.
            for g in range(0, r, vs):
                chunk = acc[g:g + vs]
                red = vl.multi_reduce(chunk)
                ypad[row0 + g:row0 + g + len(chunk)] += red[:len(chunk)]
        else:
            for rr in range(r):
                ypad[row0 + rr] += vl.hsum(acc[rr])
    return idx_val


def _padded_x(s: Spc5Matrix, x) -> np.ndarray:
    # vs-1 zero guard lanes let edge blocks load x whole without going out of
    # bounds; guard lanes only ever meet unset mask bits or multiply by zero.
    xpad = np.zeros(s.num_cols + s.vs - 1, dtype=s.values.dtype)
    xpad[:s.num_cols] = x[:s.num_cols]
    return xpad


def spmv_spc5_scalar(m: Spc5Matrix, x: np.ndarray, y: np.ndarray) -> None:
    """Scalar block kernel; bitwise-equal to :func:`spmv_csr`."""
    _check_xy(m.num_rows, m.num_cols, x, y)
    x = np.asarray(x, dtype=m.values.dtype)
    ypad = np.zeros(m.num_panels * m.r, dtype=m.values.dtype)
    end = _run_panels_scalar(m, x, ypad, 0, m.num_panels, 0)
    if end != m.nnz:
        raise RuntimeError(f"value cursor ended at {end}, expected {m.nnz}")
    y[:m.num_rows] += ypad[:m.num_rows]


def spmv_spc5_vector(m: Spc5Matrix, x: np.ndarray, y: np.ndarray,
                     cfg: KernelConfig) -> None:
    """Vectorized block kernel in the expand or compact style."""
    if cfg.strategy == "scalar":
        raise ValueError("vector kernel called with the scalar strategy")
    if m.values.dtype != cfg.dtype:
        raise ValueError(
            f"matrix is {m.precision} but config asks for {cfg.precision}")
    _check_xy(m.num_rows, m.num_cols, x, y)
    xpad = _padded_x(m, np.asarray(x, dtype=m.values.dtype))
    ypad = np.zeros(m.num_panels * m.r, dtype=m.values.dtype)
    end = _run_panels_vector(m, xpad, ypad, cfg, 0, m.num_panels, 0)
    if end != m.nnz:
        raise RuntimeError(f"value cursor ended at {end}, expected {m.nnz}")
    y[:m.num_rows] += ypad[:m.num_rows]


def csr_reference(m: CsrMatrix, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exactly summed row products and their absolute sums, both in float64.

    Products are formed in the matrix precision (the same multiset every
    kernel accumulates) and then summed losslessly, so the only error left in
    a kernel comparison is the kernel's own summation order.
    """
    y = np.zeros(m.num_rows, dtype=np.float64)
    absy = np.zeros(m.num_rows, dtype=np.float64)
    row_ptr = m.row_ptr
    for i in range(m.num_rows):
        lo, hi = int(row_ptr[i]), int(row_ptr[i + 1])
        if lo == hi:
            continue
        prods = (m.values[lo:hi] * x[m.col_idx[lo:hi]]).astype(np.float64)
        y[i] = math.fsum(prods.tolist())
        absy[i] = math.fsum(np.abs(prods).tolist())
    return y, absy


@dataclass
class VerifyReport:
    passed: bool
    max_scaled_error: float   # units of nnz_row * eps * sum|products|
    threshold: float          # pass iff max_scaled_error <= threshold
    worst_row: int
    worst_trial: int
    trials: int

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        return (f"{status}: max scaled error {self.max_scaled_error:.3g} "
                f"(threshold {self.threshold:g}, worst row {self.worst_row}, "
                f"trial {self.worst_trial}/{self.trials})")


def verify_against_oracle(m: CsrMatrix, r: int, vs: int, cfg: KernelConfig,
                          trials: int = 3, seed: int = 0,
                          spc5: Spc5Matrix | None = None) -> VerifyReport:
    """Run the configured kernel on random x vectors against the exact oracle.

    Per row the error budget is VERIFY_FACTOR * nnz_row * eps * sum|products|
    with a tiny absolute floor; failures are reported, never raised. Passing
    ``spc5`` skips the conversion (and allows verifying a corrupted matrix).
    """
    from .blocks import csr_to_spc5

    if m.values.dtype != cfg.dtype:
        raise ValueError(f"matrix is {m.precision} but config asks for {cfg.precision}")
    s = spc5 if spc5 is not None else csr_to_spc5(m, r, vs)
    eps = float(np.finfo(cfg.dtype).eps)
    floor = _ABS_FLOOR[cfg.precision]
    nnz_row = np.maximum(np.diff(m.row_ptr), 1).astype(np.float64)
    rng = np.random.default_rng(seed)

    worst = 0.0
    worst_row = -1
    worst_trial = -1
    for t in range(trials):
        x = rng.uniform(-1.0, 1.0, size=m.num_cols).astype(m.values.dtype)
        y = np.zeros(m.num_rows, dtype=m.values.dtype)
        try:
            if cfg.strategy == "scalar":
                spmv_spc5_scalar(s, x, y)
            else:
                spmv_spc5_vector(s, x, y, cfg)
        except (RuntimeError, IndexError, ValueError):
            # A structurally broken matrix is a verification failure, not a crash.
            return VerifyReport(passed=False, max_scaled_error=float("inf"),
                                threshold=VERIFY_FACTOR, worst_row=-1,
                                worst_trial=t, trials=trials)
        y_ref, abs_ref = csr_reference(m, x)
        budget = nnz_row * eps * abs_ref + floor
        scaled = np.abs(y.astype(np.float64) - y_ref) / budget
        idx = int(np.argmax(scaled)) if len(scaled) else 0
        if len(scaled) and scaled[idx] > worst:
            worst = float(scaled[idx])
            worst_row = idx
            worst_trial = t
    return VerifyReport(passed=worst <= VERIFY_FACTOR,
                        max_scaled_error=worst,
                        threshold=VERIFY_FACTOR,
                        worst_row=worst_row,
                        worst_trial=worst_trial,
                        trials=trials)
