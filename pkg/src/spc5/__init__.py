"""Block-compressed sparse matrix storage with masked SpMV kernels.

The storage format packs each group of r consecutive rows into vs-column
blocks anchored at a single column index, with one vs-bit mask per block row.
Kernels run in a scalar style or in two vector styles (value expansion vs. x
compaction) on top of portable lane semantics, sequentially or fork-join
parallel, and a CLI harness handles fetching, statistics, verification,
benchmarking, and cost-model fitting.
"""

from .blocks import (FillingStats, Spc5Matrix, csr_to_spc5, filling_stats,
                     footprint_comparison, load_spc5, save_spc5, spc5_to_csr,
                     validate_spc5)
from .bench import (BenchRecord, CostModelFit, fit_cost_model, read_records,
                    run_bench, run_kernel, write_records)
from .kernels import (KernelConfig, SpmvResult, VerifyReport, spmv_csr,
                      spmv_spc5_scalar, spmv_spc5_vector, verify_against_oracle)
from .mmio import (CooMatrix, CsrMatrix, MatrixSource, coo_to_csr,
                   fetch_suitesparse, load_matrix_market, make_dense,
                   make_identity, make_random, parse_matrix_market)
from .parallel import Partition, partition_by_nnz, spmv_parallel

__version__ = "0.1.0"

__all__ = [
    "BenchRecord",
    "CooMatrix",
    "CostModelFit",
    "CsrMatrix",
    "FillingStats",
    "KernelConfig",
    "MatrixSource",
    "Partition",
    "Spc5Matrix",
    "SpmvResult",
    "VerifyReport",
    "coo_to_csr",
    "csr_to_spc5",
    "fetch_suitesparse",
    "filling_stats",
    "fit_cost_model",
    "footprint_comparison",
    "load_matrix_market",
    "load_spc5",
    "make_dense",
    "make_identity",
    "make_random",
    "parse_matrix_market",
    "partition_by_nnz",
    "read_records",
    "run_bench",
    "run_kernel",
    "save_spc5",
    "spc5_to_csr",
    "spmv_csr",
    "spmv_parallel",
    "spmv_spc5_scalar",
    "spmv_spc5_vector",
    "validate_spc5",
    "verify_against_oracle",
    "write_records",
]
