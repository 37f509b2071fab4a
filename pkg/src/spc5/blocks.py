"""Block-compressed sparse storage: r-row x vs-column blocks with per-row bitmasks.

Each block spans ``r`` consecutive rows (a panel) and ``vs`` consecutive
columns, anchored at a single stored column index. One vs-bit mask per block
row marks which columns hold an entry (bit 0 = anchor column), so no explicit
zeros are ever stored. Values are packed row-major within a block, ascending
column within a row, which is exactly the order the kernels consume them in.

Block formation anchors each block at the minimum remaining column across the
whole panel and consumes, for every panel row, all entries within vs columns
of the anchor.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mmio import CsrMatrix

__all__ = [
    "Spc5Matrix",
    "FillingStats",
    "VALID_R",
    "VALID_VS",
    "csr_to_spc5",
    "spc5_to_csr",
    "filling_stats",
    "footprint_comparison",
    "validate_spc5",
    "save_spc5",
    "load_spc5",
]

VALID_R = (1, 2, 4, 8)
VALID_VS = (4, 8, 16)

_COL_MASK = (1 << 32) - 1
_MAGIC = b"SPC5"
_VERSION = 1


def mask_dtype(vs: int) -> np.dtype:
    """Smallest of {8, 16} bits that holds a vs-bit mask."""
    return np.dtype(np.uint8) if vs <= 8 else np.dtype(np.uint16)


@dataclass
class Spc5Matrix:
    """Immutable block-format matrix; safe to share across threads after construction."""

    num_rows: int
    num_cols: int
    r: int
    vs: int
    block_rowptr: np.ndarray   # per-panel block counts, prefix-summed; len num_panels+1
    block_colidx: np.ndarray   # anchor column per block, uint32
    block_masks: np.ndarray    # r masks per block, row-major within block
    values: np.ndarray         # packed entries, row-major within block

    @property
    def num_panels(self) -> int:
        return len(self.block_rowptr) - 1

    @property
    def num_blocks(self) -> int:
        return len(self.block_colidx)

    @property
    def nnz(self) -> int:
        return len(self.values)

    @property
    def precision(self) -> str:
        return "f32" if self.values.dtype == np.float32 else "f64"


@dataclass
class FillingStats:
    num_blocks: int
    avg_nnz_per_block: float
    filling: float
    footprint_bytes: int


def _check_shape(r: int, vs: int) -> None:
    if r not in VALID_R:
        raise ValueError(f"r must be one of {VALID_R}, got {r}")
    if vs not in VALID_VS:
        raise ValueError(f"vs must be one of {VALID_VS}, got {vs}")


def csr_to_spc5(m: CsrMatrix, r: int, vs: int) -> Spc5Matrix:
    """Convert CSR to the block format; logical content is preserved exactly."""
    _check_shape(r, vs)
    num_panels = (m.num_rows + r - 1) // r
    mdt = mask_dtype(vs)
    nnz = m.nnz
    if nnz == 0:
        return Spc5Matrix(m.num_rows, m.num_cols, r, vs,
                          np.zeros(num_panels + 1, dtype=np.int64),
                          np.empty(0, dtype=np.uint32),
                          np.empty(0, dtype=mdt),
                          m.values.copy())

    nnz_rows = np.repeat(np.arange(m.num_rows, dtype=np.int64), np.diff(m.row_ptr))
    panels = nnz_rows // r
    cols = m.col_idx.astype(np.int64)
    keys = (panels << 32) | cols

    # Greedy anchors per panel over the union of its columns: a key opens a
    # new block whenever it falls past the previous anchor's column span. The
    # panel lives in the high bits, so panel changes reset the span for free.
    anchor_keys: list[int] = []
    limit = -1
    span = vs - 1
    for k in np.unique(keys).tolist():
        if k > limit:
            anchor_keys.append(k)
            limit = k + span
    akeys = np.array(anchor_keys, dtype=np.int64)
    anchor_panel = akeys >> 32
    anchor_col = akeys & _COL_MASK

    bidx = np.searchsorted(akeys, keys, side="right") - 1
    offsets = cols - anchor_col[bidx]
    slot = bidx * r + (nnz_rows - panels * r)

    num_blocks = len(akeys)
    masks = np.zeros(num_blocks * r, dtype=mdt)
    np.bitwise_or.at(masks, slot, (np.int64(1) << offsets).astype(mdt))

    order = np.argsort(slot, kind="stable")  # CSR order is already col-ascending per row
    values = m.values[order]

    block_rowptr = np.zeros(num_panels + 1, dtype=np.int64)
    np.cumsum(np.bincount(anchor_panel, minlength=num_panels), out=block_rowptr[1:])

    return Spc5Matrix(m.num_rows, m.num_cols, r, vs, block_rowptr,
                      anchor_col.astype(np.uint32), masks, values)


def spc5_to_csr(s: Spc5Matrix) -> CsrMatrix:
    """Invert the block conversion; values come back bit-identical."""
    if s.num_blocks == 0:
        return CsrMatrix(s.num_rows, s.num_cols,
                         np.zeros(s.num_rows + 1, dtype=np.int64),
                         np.empty(0, dtype=np.int32),
                         s.values.copy())
    r, vs = s.r, s.vs
    block_panel = np.repeat(np.arange(s.num_panels, dtype=np.int64),
                            np.diff(s.block_rowptr))
    slot_row = np.repeat(block_panel * r, r) + np.tile(np.arange(r, dtype=np.int64),
                                                       s.num_blocks)
    slot_anchor = np.repeat(s.block_colidx.astype(np.int64), r)
    bits = (s.block_masks[:, None].astype(np.int64) >> np.arange(vs)) & 1
    slot_idx, bitpos = np.nonzero(bits)  # row-major: matches value packing order

    rows = slot_row[slot_idx]
    cols = (slot_anchor[slot_idx] + bitpos).astype(np.int32)
    order = np.argsort(rows, kind="stable")  # within a row, blocks ascend, so cols do too

    row_ptr = np.zeros(s.num_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=s.num_rows), out=row_ptr[1:])
    return CsrMatrix(s.num_rows, s.num_cols, row_ptr, cols[order], s.values[order])


# Declared on-disk widths used for footprint accounting and serialization,
# independent of the in-memory numpy dtypes.
_INDEX_BYTES = 4


def filling_stats(s: Spc5Matrix) -> FillingStats:
    """Block count, average entries per block, filling fraction, and byte footprint."""
    nb = s.num_blocks
    capacity = nb * s.r * s.vs
    footprint = (s.nnz * s.values.dtype.itemsize
                 + nb * _INDEX_BYTES
                 + nb * s.r * mask_dtype(s.vs).itemsize
                 + (s.num_panels + 1) * _INDEX_BYTES)
    return FillingStats(
        num_blocks=nb,
        avg_nnz_per_block=s.nnz / nb if nb else 0.0,
        filling=s.nnz / capacity if capacity else 0.0,
        footprint_bytes=footprint,
    )


def footprint_comparison(m: CsrMatrix, r: int, vs: int) -> tuple[int, int]:
    """Byte footprints (csr_bytes, spc5_bytes) using the declared 4-byte index width."""
    csr_bytes = ((m.num_rows + 1) * _INDEX_BYTES
                 + m.nnz * _INDEX_BYTES
                 + m.nnz * m.values.dtype.itemsize)
    spc5_bytes = filling_stats(csr_to_spc5(m, r, vs)).footprint_bytes
    return csr_bytes, spc5_bytes


def validate_spc5(s: Spc5Matrix) -> None:
    """Check structural invariants; raises ValueError with the first violation."""
    _check_shape(s.r, s.vs)
    if len(s.block_rowptr) != (s.num_rows + s.r - 1) // s.r + 1:
        raise ValueError("block_rowptr length does not match panel count")
    if np.any(np.diff(s.block_rowptr) < 0) or (len(s.block_rowptr) and
                                               s.block_rowptr[0] != 0):
        raise ValueError("block_rowptr must be non-decreasing and start at 0")
    if s.num_panels and s.block_rowptr[-1] != s.num_blocks:
        raise ValueError("block_rowptr does not cover all blocks")
    if len(s.block_masks) != s.num_blocks * s.r:
        raise ValueError("mask array length must be num_blocks * r")
    if np.any(s.block_masks.astype(np.int64) >> s.vs):
        raise ValueError("mask has bits beyond vs")

    bits = (s.block_masks[:, None].astype(np.int64) >> np.arange(s.vs)) & 1
    if int(bits.sum()) != s.nnz:
        raise ValueError("sum of mask popcounts differs from NNZ")
    if s.num_blocks:
        block_or = np.bitwise_or.reduce(
            s.block_masks.reshape(s.num_blocks, s.r).astype(np.int64), axis=1)
        if np.any((block_or & 1) == 0):
            raise ValueError("block without an entry at its anchor column")
        for p in range(s.num_panels):
            lo, hi = int(s.block_rowptr[p]), int(s.block_rowptr[p + 1])
            ci = s.block_colidx[lo:hi].astype(np.int64)
            if np.any(np.diff(ci) <= 0):
                raise ValueError(f"panel {p}: block columns not strictly increasing")
        set_cols = (np.repeat(s.block_colidx.astype(np.int64), s.r)[bits.nonzero()[0]]
                    + bits.nonzero()[1])
        if set_cols.size and int(set_cols.max()) >= s.num_cols:
            raise ValueError("set mask bit maps past the last column")


def save_spc5(s: Spc5Matrix, path) -> None:
    """Serialize to the little-endian binary cache layout."""
    header = struct.pack(
        "<4sIIIqqBxxxqqq", _MAGIC, _VERSION, s.r, s.vs,
        s.num_rows, s.num_cols, 0 if s.precision == "f32" else 1,
        s.nnz, s.num_blocks, s.num_panels)
    mdt = "<u1" if s.vs <= 8 else "<u2"
    vdt = "<f4" if s.precision == "f32" else "<f8"
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(s.block_rowptr.astype("<u4").tobytes())
        fh.write(s.block_colidx.astype("<u4").tobytes())
        fh.write(s.block_masks.astype(mdt).tobytes())
        fh.write(s.values.astype(vdt).tobytes())


def load_spc5(path) -> Spc5Matrix:
    """Read back a matrix written by :func:`save_spc5`, bit-exactly."""
    raw = Path(path).read_bytes()
    head_fmt = "<4sIIIqqBxxxqqq"
    head_size = struct.calcsize(head_fmt)
    magic, version, r, vs, num_rows, num_cols, prec, nnz, nb, npanels = \
        struct.unpack_from(head_fmt, raw)
    if magic != _MAGIC:
        raise ValueError(f"not a block-matrix cache file: bad magic {magic!r}")
    if version != _VERSION:
        raise ValueError(f"unsupported cache version {version}")
    mdt = np.dtype("<u1") if vs <= 8 else np.dtype("<u2")
    vdt = np.dtype("<f4") if prec == 0 else np.dtype("<f8")
    off = head_size
    rowptr = np.frombuffer(raw, "<u4", npanels + 1, off).astype(np.int64)
    off += (npanels + 1) * 4
    colidx = np.frombuffer(raw, "<u4", nb, off).copy()
    off += nb * 4
    masks = np.frombuffer(raw, mdt, nb * r, off).copy()
    off += nb * r * mdt.itemsize
    values = np.frombuffer(raw, vdt, nnz, off).astype(vdt.newbyteorder("="))
    return Spc5Matrix(num_rows, num_cols, r, vs, rowptr, colidx, masks, values)
