"""Panel partitioning and fork-join execution equivalence."""

import numpy as np
import pytest

from spc5.blocks import csr_to_spc5
from spc5.kernels import KernelConfig, mask_popcounts, spmv_spc5_scalar, spmv_spc5_vector
from spc5.mmio import make_random
from spc5.parallel import partition_by_nnz, spmv_parallel
from util import random_csr


def panel_nnz(s):
    per_block = mask_popcounts(s.block_masks).reshape(s.num_blocks, s.r).sum(axis=1)
    offsets = np.concatenate([[0], np.cumsum(per_block)])
    return np.diff(offsets[s.block_rowptr])


class TestPartition:
    def test_single_worker(self):
        s = csr_to_spc5(make_random(32, 32, 4, 0.5, seed=1), 2, 8)
        part = partition_by_nnz(s, 1)
        assert part.ranges == [(0, s.num_panels)]

    def test_cover_disjoint_contiguous(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            m = random_csr(rng, max_dim=96)
            s = csr_to_spc5(m, int(rng.choice([1, 2, 4, 8])), 8)
            for workers in (2, 3, 4, 7, 8):
                ranges = partition_by_nnz(s, workers).ranges
                assert len(ranges) == workers
                assert ranges[0][0] == 0 and ranges[-1][1] == s.num_panels
                for (a, b), (c, d) in zip(ranges, ranges[1:]):
                    assert a <= b == c <= d

    def test_balance_within_one_panel(self):
        m = make_random(256, 128, 8, 0.5, seed=2)
        s = csr_to_spc5(m, 2, 8)
        pn = panel_nnz(s)
        for workers in (2, 4, 8):
            ranges = partition_by_nnz(s, workers).ranges
            ideal = m.nnz / workers
            for lo, hi in ranges:
                share = int(pn[lo:hi].sum())
                assert abs(share - ideal) <= pn.max()

    def test_more_workers_than_panels(self):
        m = make_random(4, 16, 2, 1.0, seed=3)
        s = csr_to_spc5(m, 2, 4)  # 2 panels
        ranges = partition_by_nnz(s, 8).ranges
        assert len(ranges) == 8
        assert ranges[0][0] == 0 and ranges[-1][1] == s.num_panels
        covered = sum(hi - lo for lo, hi in ranges)
        assert covered == s.num_panels

    def test_deterministic(self):
        s = csr_to_spc5(make_random(64, 64, 4, 0.3, seed=4), 4, 8)
        assert partition_by_nnz(s, 5).ranges == partition_by_nnz(s, 5).ranges

    def test_workers_validation(self):
        s = csr_to_spc5(make_random(8, 8, 2, 0.5, seed=5), 1, 4)
        with pytest.raises(ValueError):
            partition_by_nnz(s, 0)


class TestParallelSpmv:
    @pytest.mark.parametrize("strategy", ["scalar", "expand", "compact"])
    def test_bitwise_equal_to_sequential(self, strategy):
        rng = np.random.default_rng(17)
        for _ in range(6):
            m = random_csr(rng, max_dim=128)
            r = int(rng.choice([1, 2, 4, 8]))
            s = csr_to_spc5(m, r, 8)
            x = rng.uniform(-1, 1, m.num_cols)
            cfg = KernelConfig(strategy=strategy)
            expect = np.zeros(m.num_rows)
            if strategy == "scalar":
                spmv_spc5_scalar(s, x, expect)
            else:
                spmv_spc5_vector(s, x, expect, cfg)
            for workers in (1, 2, 4, 8):
                y = np.zeros(m.num_rows)
                res = spmv_parallel(s, x, y, cfg, workers)
                assert y.tobytes() == expect.tobytes(), (strategy, workers)
                assert res.flops == 2 * m.nnz
                assert res.y is y

    def test_empty_ranges_are_noops(self):
        m = make_random(4, 8, 2, 1.0, seed=6)
        s = csr_to_spc5(m, 4, 4)  # a single panel, most workers idle
        x = np.ones(8)
        expect = np.zeros(4)
        spmv_spc5_vector(s, x, expect, KernelConfig())
        y = np.zeros(4)
        spmv_parallel(s, x, y, KernelConfig(), 6)
        assert y.tobytes() == expect.tobytes()

    def test_result_independent_of_worker_count(self):
        m = make_random(200, 100, 6, 0.2, seed=7)
        s = csr_to_spc5(m, 2, 8)
        x = np.linspace(-1, 1, 100)
        outs = []
        for workers in (1, 2, 3, 5, 8):
            y = np.zeros(200)
            spmv_parallel(s, x, y, KernelConfig(strategy="expand"), workers)
            outs.append(y.tobytes())
        assert len(set(outs)) == 1
