"""Command-line harness: fetch matrices, print filling tables, verify, bench, fit.

Matrix arguments accept a local .mtx path, a SuiteSparse ``group/name``, or a
synthetic spec (``dense:N``, ``identity:N``,
``random:rows,cols,nnz_per_row,clustering,seed``). The cache directory comes
from --cache-dir or the SPC5_CACHE_DIR environment variable; the default
worker count from SPC5_THREADS.
"""

from __future__ import annotations

import argparse
import os
import sys

from .bench import (InsufficientDataError, ValidationError, fit_cost_model,
                    read_records, run_bench, write_records, write_scatter)
from .blocks import VALID_R, VALID_VS, csr_to_spc5, filling_stats
from .kernels import KernelConfig, verify_against_oracle
from .mmio import FetchError, MatrixSource, fetch_suitesparse

THREADS_ENV_VAR = "SPC5_THREADS"

_ALL_STRATEGIES = ("scalar", "expand", "compact")
_ALL_REDUCTIONS = ("hsum", "multi")
_ALL_X_LOADS = ("partial", "single")


def _parse_formats(text: str) -> list[int]:
    out = []
    for tok in text.split(","):
        tok = tok.strip().lower()
        if not tok.startswith("b") or not tok[1:].isdigit() or int(tok[1:]) not in VALID_R:
            raise argparse.ArgumentTypeError(
                f"bad format {tok!r}; expected a comma list from b1,b2,b4,b8")
        out.append(int(tok[1:]))
    return out


def _parse_choices(text: str, allowed: tuple[str, ...], what: str) -> list[str]:
    if text == "all":
        return list(allowed)
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if tok not in allowed:
            raise argparse.ArgumentTypeError(
                f"bad {what} {tok!r}; expected 'all' or a comma list from {allowed}")
        out.append(tok)
    return out


def _default_vs(precision: str) -> int:
    return 8 if precision == "f64" else 16


def _default_threads() -> int:
    env = os.environ.get(THREADS_ENV_VAR)
    return int(env) if env else 1


def _load(args, precision: str):
    source = MatrixSource.parse(args.matrix)
    return source.label(), source.load(precision, cache_dir=args.cache_dir)


def cmd_fetch(args) -> int:
    if "/" not in args.name:
        print(f"error: expected group/name, got {args.name!r}", file=sys.stderr)
        return 2
    group, name = args.name.split("/", 1)
    try:
        path = fetch_suitesparse(group, name, cache_dir=args.cache_dir)
    except FetchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


def cmd_stats(args) -> int:
    formats = args.format
    # filling is structural, so precision only picks the lane count column
    columns = []
    if args.precision in ("f64", "both"):
        columns.append(("f64", args.vs or 8))
    if args.precision in ("f32", "both"):
        columns.append(("f32", args.vs or 16))
    tag = "|".join(p for p, _ in columns)
    header = (f"{'matrix':24s} {'dim':>10s} {'nnz':>12s} {'nnz/row':>10s}  "
              + "  ".join(f"{'b' + str(r) + ' ' + tag:>12s}" for r in formats))
    print(header)
    status = 0
    for text in args.matrix:
        source = MatrixSource.parse(text)
        try:
            m = source.load("f64", cache_dir=args.cache_dir)
        except Exception as exc:
            print(f"{source.label():24s} error: {exc}", file=sys.stderr)
            status = 1
            continue
        dim = str(m.num_rows) if m.num_rows == m.num_cols else f"{m.num_rows}x{m.num_cols}"
        nnz_per_row = m.nnz / m.num_rows if m.num_rows else 0.0
        cells = []
        for r in formats:
            fills = [filling_stats(csr_to_spc5(m, r, vs)).filling * 100
                     for _, vs in columns]
            cells.append("|".join(f"{f:.0f}%" for f in fills).rjust(12))
        print(f"{source.label():24s} {dim:>10s} {m.nnz:>12d} {nnz_per_row:>10.4g}  "
              + "  ".join(cells))
    return status


def _corrupt_mask(s, slot: int) -> None:
    """Move one set mask bit to an unset lane; popcount stays intact."""
    masks = s.block_masks
    n = len(masks)
    for probe in range(n):
        i = (slot + probe) % n
        mask = int(masks[i])
        set_bits = [k for k in range(s.vs) if (mask >> k) & 1]
        unset_bits = [k for k in range(s.vs) if not (mask >> k) & 1]
        if set_bits and unset_bits:
            masks[i] = mask ^ (1 << set_bits[0]) ^ (1 << unset_bits[0])
            return
    # Every mask full or empty (e.g. dense): shift an anchor instead.
    s.block_colidx[0] += 1


def cmd_verify(args) -> int:
    label, m = _load(args, args.precision)
    vs = args.vs or _default_vs(args.precision)
    failures = 0
    for r in args.format:
        spc5 = csr_to_spc5(m, r, vs)
        if args.inject_mask_corruption is not None:
            _corrupt_mask(spc5, args.inject_mask_corruption)
        for strategy in args.strategy:
            for reduction in args.reduction:
                for x_load in args.xload:
                    cfg = KernelConfig(strategy=strategy, reduction=reduction,
                                       x_load=x_load, precision=args.precision)
                    report = verify_against_oracle(
                        m, r, vs, cfg, trials=args.trials, seed=args.seed, spc5=spc5)
                    print(f"{label} r={r} vs={vs} "
                          f"{strategy}/{reduction}/{x_load}: {report}")
                    if not report.passed:
                        failures += 1
    if failures:
        print(f"{failures} configuration(s) failed", file=sys.stderr)
        return 1
    return 0


def cmd_bench(args) -> int:
    label, m = _load(args, args.precision)
    vs = args.vs or _default_vs(args.precision)
    records = []
    status = 0
    for r in args.format:
        for strategy in args.strategy:
            for reduction in args.reduction:
                for x_load in args.xload:
                    cfg = KernelConfig(strategy=strategy, reduction=reduction,
                                       x_load=x_load, precision=args.precision)
                    try:
                        rec = run_bench(label, m, r, vs, cfg,
                                        workers=args.threads, reps=args.reps,
                                        warmup=args.warmup, seed=args.seed)
                    except ValidationError as exc:
                        print(f"error: validation failed, not timing: {exc}",
                              file=sys.stderr)
                        status = 1
                        continue
                    records.append(rec)
                    print(f"{rec.matrix},{rec.precision},b{rec.r},vs={rec.vs},"
                          f"{rec.strategy}/{rec.reduction}/{rec.x_load},"
                          f"workers={rec.workers},median={rec.median_seconds:.3e}s,"
                          f"gflops={rec.gflops:.4f},filling={rec.filling:.4f}")
    if args.out:
        write_records(args.out, records)
        scatter = os.path.splitext(args.out)[0] + ".scatter.csv"
        write_scatter(scatter, records)
        print(f"wrote {len(records)} records to {args.out} and {scatter}")
    return status


def cmd_fit(args) -> int:
    records = read_records(args.csv)
    try:
        fits = fit_cost_model(records, min_records=args.min_records)
    except InsufficientDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for (r, vs, precision), fit in sorted(fits.items()):
        flag = "constant-cost" if fit.constant_cost else "NOT constant-cost (R2 < 0.9)"
        print(f"r={r} vs={vs} {precision}: cost/block = "
              f"{fit.cost_per_block_seconds:.3e} s, R2 = {fit.r_squared:.4f}  [{flag}]")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spc5",
        description="Block-format SpMV toolkit: fetch, stats, verify, bench, fit.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--cache-dir", default=None,
                       help="matrix cache directory (default: $SPC5_CACHE_DIR "
                            "or ~/.cache/spc5)")

    p_fetch = sub.add_parser("fetch", help="download a collection matrix into the cache")
    p_fetch.add_argument("name", help="collection id as group/name")
    add_common(p_fetch)
    p_fetch.set_defaults(func=cmd_fetch)

    p_stats = sub.add_parser("stats", help="per-matrix dimensions, NNZ, and block filling")
    p_stats.add_argument("--matrix", action="append", required=True,
                         help="matrix path, group/name, or synthetic spec (repeatable)")
    p_stats.add_argument("--format", type=_parse_formats, default=list(VALID_R),
                         help="comma list of block heights, e.g. b1,b2,b4,b8")
    p_stats.add_argument("--precision", choices=("f32", "f64", "both"),
                         default="both")
    p_stats.add_argument("--vs", type=int, choices=VALID_VS, default=None,
                         help="lane count override (default: 8 for f64, 16 for f32)")
    add_common(p_stats)
    p_stats.set_defaults(func=cmd_stats)

    def add_grid(p):
        p.add_argument("--matrix", required=True,
                       help="matrix path, group/name, or synthetic spec")
        p.add_argument("--precision", choices=("f32", "f64"), default="f64")
        p.add_argument("--format", type=_parse_formats, default=list(VALID_R),
                       help="comma list of block heights, e.g. b1,b2")
        p.add_argument("--vs", type=int, choices=VALID_VS, default=None,
                       help="lane count (default: 8 for f64, 16 for f32)")
        p.add_argument("--strategy", default="all",
                       type=lambda s: _parse_choices(s, _ALL_STRATEGIES, "strategy"))
        p.add_argument("--reduction", default="all",
                       type=lambda s: _parse_choices(s, _ALL_REDUCTIONS, "reduction"))
        p.add_argument("--xload", default="all",
                       type=lambda s: _parse_choices(s, _ALL_X_LOADS, "x load"))
        p.add_argument("--seed", type=int, default=0)
        add_common(p)

    p_verify = sub.add_parser("verify", help="check every kernel config against the oracle")
    add_grid(p_verify)
    p_verify.add_argument("--trials", type=int, default=3)
    p_verify.add_argument("--inject-mask-corruption", type=int, default=None,
                          metavar="SLOT",
                          help="fault-injection self-test: corrupt a mask before verifying")
    p_verify.set_defaults(func=cmd_verify)

    p_bench = sub.add_parser("bench", help="time kernels and emit CSV records")
    add_grid(p_bench)
    p_bench.add_argument("--threads", type=int, default=_default_threads(),
                         help=f"worker count (default: ${THREADS_ENV_VAR} or 1)")
    p_bench.add_argument("--reps", type=int, default=10)
    p_bench.add_argument("--warmup", type=int, default=3)
    p_bench.add_argument("--out", default=None, help="CSV output path")
    p_bench.set_defaults(func=cmd_bench)

    p_fit = sub.add_parser("fit", help="fit the per-block cost model from bench CSV")
    p_fit.add_argument("csv", help="CSV file written by the bench command")
    p_fit.add_argument("--min-records", type=int, default=5)
    p_fit.set_defaults(func=cmd_fit)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
