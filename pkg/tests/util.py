"""Shared test helpers: a Matrix Market writer and random matrix generators."""

from __future__ import annotations

import numpy as np

from spc5.mmio import CooMatrix, CsrMatrix, coo_to_csr, make_random, normalize_coo


def write_matrix_market(coo: CooMatrix, field: str = "real",
                        symmetry: str = "general") -> str:
    """Render a COO matrix as Matrix Market text (test-only writer).

    For symmetric/skew-symmetric output the caller must pass a matrix whose
    entries are already restricted to the stored triangle.
    """
    lines = [f"%%MatrixMarket matrix coordinate {field} {symmetry}",
             "% written by the test suite",
             f"{coo.num_rows} {coo.num_cols} {coo.nnz}"]
    for i, j, v in zip(coo.rows.tolist(), coo.cols.tolist(), coo.values.tolist()):
        if field == "pattern":
            lines.append(f"{i + 1} {j + 1}")
        else:
            lines.append(f"{i + 1} {j + 1} {v!r}")
    return "\n".join(lines) + "\n"


def random_coo(rng: np.random.Generator, max_dim: int = 64,
               precision: str = "f64") -> CooMatrix:
    """Random normalized COO matrix, possibly with empty rows and columns."""
    num_rows = int(rng.integers(1, max_dim + 1))
    num_cols = int(rng.integers(1, max_dim + 1))
    nnz = int(rng.integers(0, max(1, num_rows * num_cols // 4) + 1))
    rows = rng.integers(0, num_rows, size=nnz)
    cols = rng.integers(0, num_cols, size=nnz)
    values = rng.uniform(-10.0, 10.0, size=nnz)
    dtype = np.float32 if precision == "f32" else np.float64
    return normalize_coo(num_rows, num_cols, rows, cols, values, dtype)


def random_csr(rng: np.random.Generator, max_dim: int = 128,
               precision: str = "f64") -> CsrMatrix:
    """Random CSR matrix mixing clustered rows and scattered coordinates."""
    if rng.random() < 0.5:
        num_rows = int(rng.integers(1, max_dim + 1))
        num_cols = int(rng.integers(1, max_dim + 1))
        nnz_per_row = int(rng.integers(0, min(num_cols, 10) + 1))
        clustering = float(rng.choice([0.0, 0.25, 0.5, 0.75, 1.0]))
        return make_random(num_rows, num_cols, nnz_per_row, clustering,
                           seed=int(rng.integers(0, 2**31)), precision=precision)
    return coo_to_csr(random_coo(rng, max_dim=min(max_dim, 96), precision=precision))


def csr_bitwise_equal(a: CsrMatrix, b: CsrMatrix) -> bool:
    return (a.num_rows == b.num_rows and a.num_cols == b.num_cols
            and np.array_equal(a.row_ptr, b.row_ptr)
            and np.array_equal(a.col_idx, b.col_idx)
            and a.values.dtype == b.values.dtype
            and a.values.tobytes() == b.values.tobytes())
