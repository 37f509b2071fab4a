"""Matrix Market ingestion, SuiteSparse fetching, and synthetic matrix generators.

Matrices are held as COO triples or CSR arrays backed by numpy. Values are
parsed directly into the precision requested at load time. Explicit zeros are
kept: the block format downstream is structural and a stored zero occupies a
mask bit like any other entry.
"""

from __future__ import annotations

import os
import re
import tarfile
from dataclasses import dataclass, field
from io import BytesIO
from pathlib import Path

import numpy as np

__all__ = [
    "CooMatrix",
    "CsrMatrix",
    "MatrixSource",
    "MatrixMarketError",
    "FetchError",
    "parse_matrix_market",
    "load_matrix_market",
    "coo_to_csr",
    "fetch_suitesparse",
    "make_dense",
    "make_identity",
    "make_random",
    "resolve_cache_dir",
    "DTYPES",
]

DTYPES = {"f32": np.float32, "f64": np.float64}

COLLECTION_URL = "https://sparse.tamu.edu/MM"
CACHE_ENV_VAR = "SPC5_CACHE_DIR"

# Seed for the deterministic dense generator; the value at (i, j) depends only
# on (i, j) and this constant, never on the matrix dimension.
DENSE_VALUE_SEED = np.uint64(0x5BC5C0DEB10C55ED)


class MatrixMarketError(ValueError):
    """Malformed Matrix Market input; the message names the offending line."""


class FetchError(RuntimeError):
    """Download or extraction failure; carries the HTTP status when known."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


def _dtype_for(precision: str) -> np.dtype:
    try:
        return np.dtype(DTYPES[precision])
    except KeyError:
        raise ValueError(f"unknown precision {precision!r}; expected 'f32' or 'f64'") from None


@dataclass
class CooMatrix:
    """Coordinate-format matrix, normalized: entries sorted by (row, col), duplicates summed."""

    num_rows: int
    num_cols: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    @property
    def nnz(self) -> int:
        return len(self.values)

    def entry_list(self) -> list[tuple[int, int, float]]:
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.values.tolist()))


@dataclass
class CsrMatrix:
    """Compressed sparse row matrix with sorted, unique column indices per row."""

    num_rows: int
    num_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    @property
    def nnz(self) -> int:
        return len(self.values)

    @property
    def precision(self) -> str:
        return "f32" if self.values.dtype == np.float32 else "f64"


def normalize_coo(num_rows: int, num_cols: int, rows, cols, values, dtype) -> CooMatrix:
    """Sort entries by (row, col) and sum duplicate coordinates."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    values = np.asarray(values, dtype=dtype)
    if rows.size == 0:
        return CooMatrix(num_rows, num_cols, rows.astype(np.int32),
                         cols.astype(np.int32), values)
    key = rows * max(num_cols, 1) + cols
    order = np.argsort(key, kind="stable")
    skey = key[order]
    starts = np.flatnonzero(np.concatenate(([True], skey[1:] != skey[:-1])))
    ukey = skey[starts]
    summed = np.add.reduceat(values[order], starts)
    out_rows = (ukey // max(num_cols, 1)).astype(np.int32)
    out_cols = (ukey % max(num_cols, 1)).astype(np.int32)
    return CooMatrix(num_rows, num_cols, out_rows, out_cols, summed)


_BANNER_FIELDS = {"real", "integer", "pattern"}
_BANNER_SYMMETRY = {"general", "symmetric", "skew-symmetric"}


def parse_matrix_market(data, precision: str = "f64") -> CooMatrix:
    """Parse a coordinate Matrix Market document given as str or bytes.

    Symmetric entries are mirrored (diagonal not duplicated), skew-symmetric
    entries mirrored with negation, pattern values set to 1.0, and 1-based
    indices converted to 0-based. The result is normalized.
    """
    dtype = _dtype_for(precision)
    if isinstance(data, bytes):
        text = data.decode("latin-1")
    else:
        text = data
    lines = text.splitlines()
    if not lines:
        raise MatrixMarketError("line 1: empty input")

    banner = lines[0].split()
    if len(banner) < 5 or banner[0].lower() != "%%matrixmarket":
        raise MatrixMarketError("line 1: missing '%%MatrixMarket' banner")
    obj, fmt, fld, sym = (tok.lower() for tok in banner[1:5])
    if obj != "matrix":
        raise MatrixMarketError(f"line 1: unsupported object {obj!r}")
    if fmt != "coordinate":
        raise MatrixMarketError(f"line 1: unsupported format {fmt!r} (only coordinate)")
    if fld == "complex":
        raise MatrixMarketError("line 1: complex field is not supported")
    if fld not in _BANNER_FIELDS:
        raise MatrixMarketError(f"line 1: unsupported field {fld!r}")
    if sym not in _BANNER_SYMMETRY:
        raise MatrixMarketError(f"line 1: unsupported symmetry {sym!r}")
    pattern = fld == "pattern"

    lineno = 1
    size = None
    for lineno in range(2, len(lines) + 1):
        stripped = lines[lineno - 1].strip()
        if not stripped or stripped.startswith("%"):
            continue
        toks = stripped.split()
        if len(toks) != 3:
            raise MatrixMarketError(f"line {lineno}: size line must have 3 integers")
        try:
            size = tuple(int(t) for t in toks)
        except ValueError:
            raise MatrixMarketError(f"line {lineno}: malformed size line") from None
        break
    if size is None:
        raise MatrixMarketError(f"line {lineno}: missing size line")
    num_rows, num_cols, declared = size
    if num_rows < 0 or num_cols < 0 or declared < 0:
        raise MatrixMarketError(f"line {lineno}: negative size")

    want = 2 if pattern else 3
    rows: list[int] = []
    cols: list[int] = []
    val_toks: list[str] = []
    val_lines: list[int] = []
    for entry_lineno in range(lineno + 1, len(lines) + 1):
        stripped = lines[entry_lineno - 1].strip()
        if not stripped or stripped.startswith("%"):
            continue
        toks = stripped.split()
        if len(toks) != want:
            raise MatrixMarketError(
                f"line {entry_lineno}: expected {want} fields, got {len(toks)}")
        if len(rows) >= declared:
            raise MatrixMarketError(
                f"line {entry_lineno}: entry count mismatch (more than {declared} entries)")
        try:
            i = int(toks[0])
            j = int(toks[1])
        except ValueError:
            raise MatrixMarketError(f"line {entry_lineno}: malformed index") from None
        if not (1 <= i <= num_rows) or not (1 <= j <= num_cols):
            raise MatrixMarketError(
                f"line {entry_lineno}: index ({i}, {j}) out of range for "
                f"{num_rows}x{num_cols} matrix")
        rows.append(i - 1)
        cols.append(j - 1)
        if not pattern:
            val_toks.append(toks[2])
            val_lines.append(entry_lineno)
    if len(rows) != declared:
        raise MatrixMarketError(
            f"end of input: entry count mismatch (expected {declared}, got {len(rows)})")

    if pattern:
        values = np.ones(len(rows), dtype=dtype)
    else:
        try:
            # Bulk parse converts text straight to the target precision.
            values = np.array(val_toks, dtype=dtype)
        except ValueError:
            for tok, bad_line in zip(val_toks, val_lines):
                try:
                    np.array([tok], dtype=dtype)
                except ValueError:
                    raise MatrixMarketError(
                        f"line {bad_line}: malformed value {tok!r}") from None
            raise

    row_arr = np.array(rows, dtype=np.int64)
    col_arr = np.array(cols, dtype=np.int64)
    if sym in ("symmetric", "skew-symmetric"):
        off = row_arr != col_arr
        mirror_vals = values[off]
        if sym == "skew-symmetric":
            mirror_vals = -mirror_vals
        row_arr = np.concatenate([row_arr, col_arr[off]])
        col_arr = np.concatenate([col_arr, np.array(rows, dtype=np.int64)[off]])
        values = np.concatenate([values, mirror_vals])

    return normalize_coo(num_rows, num_cols, row_arr, col_arr, values, dtype)


def load_matrix_market(path, precision: str = "f64") -> CooMatrix:
    """Parse a Matrix Market file on disk."""
    return parse_matrix_market(Path(path).read_bytes(), precision)


def coo_to_csr(coo: CooMatrix) -> CsrMatrix:
    """Convert a normalized COO matrix to CSR with identical logical content."""
    counts = np.bincount(coo.rows, minlength=coo.num_rows) if coo.nnz else \
        np.zeros(coo.num_rows, dtype=np.int64)
    row_ptr = np.zeros(coo.num_rows + 1, dtype=np.int64)
    np.cumsum(counts, out=row_ptr[1:])
    return CsrMatrix(coo.num_rows, coo.num_cols, row_ptr,
                     coo.cols.astype(np.int32), coo.values.copy())


def resolve_cache_dir(cache_dir=None) -> Path:
    """Pick the matrix cache directory: argument, env override, or user default."""
    if cache_dir is not None:
        return Path(cache_dir)
    env = os.environ.get(CACHE_ENV_VAR)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "spc5"


def fetch_suitesparse(group: str, name: str, cache_dir=None, timeout: float = 120.0) -> Path:
    """Download ``group/name`` from the SuiteSparse collection and cache the .mtx file.

    Idempotent: a warm cache skips the network entirely. The cache layout is
    ``<cache_dir>/<group>/<name>.mtx``.
    """
    dest = resolve_cache_dir(cache_dir) / group / f"{name}.mtx"
    if dest.exists():
        return dest

    import requests

    url = f"{COLLECTION_URL}/{group}/{name}.tar.gz"
    try:
        resp = requests.get(url, timeout=timeout)
    except requests.RequestException as exc:
        raise FetchError(f"download of {url} failed: {exc}") from exc
    if resp.status_code != 200:
        raise FetchError(f"download of {url} failed: HTTP {resp.status_code}",
                         status=resp.status_code)

    try:
        with tarfile.open(fileobj=BytesIO(resp.content), mode="r:gz") as tf:
            member = next((m for m in tf.getmembers()
                           if m.name == f"{name}.mtx" or m.name.endswith(f"/{name}.mtx")), None)
            if member is None:
                raise FetchError(f"archive for {group}/{name} has no {name}.mtx member")
            payload = tf.extractfile(member).read()
    except tarfile.TarError as exc:
        raise FetchError(f"archive for {group}/{name} could not be extracted: {exc}") from exc

    dest.parent.mkdir(parents=True, exist_ok=True)
    tmp = dest.with_name(dest.name + ".part")
    tmp.write_bytes(payload)
    tmp.replace(dest)
    return dest


def _mix64(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; uint64 arithmetic wraps, which is what we want.
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def make_dense(n: int, precision: str = "f64") -> CsrMatrix:
    """Fully populated n x n CSR matrix with deterministic per-cell values."""
    if n < 1:
        raise ValueError("n must be >= 1")
    dtype = _dtype_for(precision)
    i = np.arange(n, dtype=np.uint64)
    key = (i[:, None] << np.uint64(32)) ^ i[None, :] ^ DENSE_VALUE_SEED
    bits = _mix64(key.ravel())
    values = ((bits >> np.uint64(11)).astype(np.float64) * 2.0 ** -53).astype(dtype)
    row_ptr = np.arange(0, n * n + 1, n, dtype=np.int64)
    col_idx = np.tile(np.arange(n, dtype=np.int32), n)
    return CsrMatrix(n, n, row_ptr, col_idx, values)


def make_identity(n: int, precision: str = "f64") -> CsrMatrix:
    """n x n identity matrix in CSR form."""
    if n < 1:
        raise ValueError("n must be >= 1")
    dtype = _dtype_for(precision)
    return CsrMatrix(n, n,
                     np.arange(n + 1, dtype=np.int64),
                     np.arange(n, dtype=np.int32),
                     np.ones(n, dtype=dtype))


def make_random(n_rows: int, n_cols: int, nnz_per_row: int, clustering: float,
                seed: int, precision: str = "f64") -> CsrMatrix:
    """Random CSR matrix with a tunable degree of column clustering per row.

    clustering=1 places each row's entries contiguously (high block filling),
    clustering=0 scatters them uniformly. Deterministic for a fixed seed.
    """
    dtype = _dtype_for(precision)
    if n_rows < 0 or n_cols < 0:
        raise ValueError("dimensions must be non-negative")
    if nnz_per_row > n_cols:
        raise ValueError(f"nnz_per_row={nnz_per_row} infeasible for {n_cols} columns")
    if not 0.0 <= clustering <= 1.0:
        raise ValueError("clustering must be in [0, 1]")
    rng = np.random.default_rng(seed)
    k = nnz_per_row
    m = int(round(clustering * k))
    col_chunks = []
    for _ in range(n_rows):
        if k == 0:
            col_chunks.append(np.empty(0, dtype=np.int64))
            continue
        if m > 0:
            start = int(rng.integers(0, n_cols - m + 1))
            run = np.arange(start, start + m, dtype=np.int64)
        else:
            start = 0
            run = np.empty(0, dtype=np.int64)
        rest = k - m
        if rest > 0:
            # Sample from the complement of the run, then shift past it.
            picks = rng.choice(n_cols - m, size=rest, replace=False).astype(np.int64)
            picks[picks >= start] += m
            cols = np.sort(np.concatenate([run, picks]))
        else:
            cols = run
        col_chunks.append(cols)
    counts = np.array([len(c) for c in col_chunks], dtype=np.int64)
    row_ptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(counts, out=row_ptr[1:])
    col_idx = (np.concatenate(col_chunks) if col_chunks else
               np.empty(0, dtype=np.int64)).astype(np.int32)
    values = rng.uniform(-1.0, 1.0, size=len(col_idx)).astype(dtype)
    return CsrMatrix(n_rows, n_cols, row_ptr, col_idx, values)


_SUITESPARSE_RE = re.compile(r"^[A-Za-z0-9_\-]+/[A-Za-z0-9_\-.]+$")


@dataclass(frozen=True)
class MatrixSource:
    """Where a matrix comes from: a local file, the collection, or a generator."""

    origin: str  # "local_file" | "suitesparse" | "synthetic"
    path: Path | None = None
    group: str | None = None
    name: str | None = None
    kind: str | None = None
    params: tuple = field(default_factory=tuple)

    @staticmethod
    def parse(text: str) -> "MatrixSource":
        """Parse a CLI matrix argument.

        Accepted forms: a path to an .mtx file, ``group/name`` (SuiteSparse),
        ``dense:N``, ``identity:N``, and
        ``random:ROWS,COLS,NNZ_PER_ROW,CLUSTERING,SEED``.
        """
        if ":" in text:
            kind, _, arg = text.partition(":")
            if kind in ("dense", "identity"):
                return MatrixSource("synthetic", kind=kind, params=(int(arg),))
            if kind == "random":
                parts = arg.split(",")
                if len(parts) != 5:
                    raise ValueError(
                        "random matrix spec needs rows,cols,nnz_per_row,clustering,seed")
                return MatrixSource("synthetic", kind="random",
                                    params=(int(parts[0]), int(parts[1]), int(parts[2]),
                                            float(parts[3]), int(parts[4])))
            raise ValueError(f"unknown synthetic matrix kind {kind!r}")
        p = Path(text)
        if p.exists():
            return MatrixSource("local_file", path=p)
        if _SUITESPARSE_RE.match(text):
            group, name = text.split("/", 1)
            if name.endswith(".mtx"):
                name = name[:-4]
            return MatrixSource("suitesparse", group=group, name=name)
        return MatrixSource("local_file", path=p)

    def label(self) -> str:
        if self.origin == "local_file":
            return self.path.stem
        if self.origin == "suitesparse":
            return self.name
        return f"{self.kind}:{','.join(str(p) for p in self.params)}"

    def load(self, precision: str = "f64", cache_dir=None) -> CsrMatrix:
        if self.origin == "synthetic":
            if self.kind == "dense":
                return make_dense(self.params[0], precision)
            if self.kind == "identity":
                return make_identity(self.params[0], precision)
            return make_random(*self.params, precision=precision)
        if self.origin == "suitesparse":
            path = fetch_suitesparse(self.group, self.name, cache_dir)
        else:
            path = self.path
            if not path.exists():
                raise FileNotFoundError(f"matrix file {path} does not exist")
        return coo_to_csr(load_matrix_market(path, precision))
