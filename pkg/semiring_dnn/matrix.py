"""CSR and dense float32 matrices with semiring-generic kernels"""

from typing import Iterable, TypeAlias

import numpy as np
import pydantic
from loguru import logger

from semiring_dnn.constants import (
    DENSE_BLOCK_ROWS,
    GATHER_BUDGET,
    INDEX_DTYPE,
    VALUE_BYTES,
    VALUE_DTYPE,
)
from semiring_dnn.errors import (
    DimensionMismatchError,
    MatrixConstructionError,
    UnsupportedKernelError,
)
from semiring_dnn.semirings import Semiring
from semiring_dnn.utils import run_partitioned


def frozen_array(array, dtype: np.dtype) -> np.ndarray:
    """A read-only array of `dtype` that no caller can write through.

    Writeable inputs are copied; an input that is already read-only with the right
    dtype (a sealed result, a broadcast view) is kept as a view.
    """
    src = np.asarray(array)
    if src.dtype == dtype and not src.flags.writeable:
        out = src.view()
    else:
        out = src.astype(dtype)
    out.flags.writeable = False
    return out


def sealed(array: np.ndarray) -> np.ndarray:
    """Mark an array this package just allocated read-only, so a matrix adopts it as is"""
    array.flags.writeable = False
    return array


class CsrMatrix(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(frozen=True, arbitrary_types_allowed=True)

    nrows: int = pydantic.Field(ge=0)
    ncols: int = pydantic.Field(ge=0)
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    @pydantic.field_validator("row_ptr", "col_idx")
    @classmethod
    def index_array(cls, v):
        return frozen_array(np.ascontiguousarray(v), INDEX_DTYPE)

    @pydantic.field_validator("values")
    @classmethod
    def value_array(cls, v):
        return frozen_array(np.ascontiguousarray(v), VALUE_DTYPE)

    @pydantic.model_validator(mode="after")
    def check_structure(self):
        row_ptr, col_idx = self.row_ptr, self.col_idx
        nnz = col_idx.size
        if row_ptr.shape != (self.nrows + 1,):
            raise ValueError(f"row_ptr must have {self.nrows + 1} entries, got {row_ptr.shape}")
        if col_idx.ndim != 1 or self.values.shape != col_idx.shape:
            raise ValueError(
                f"col_idx {col_idx.shape} and values {self.values.shape} must be equal length vectors"
            )
        if row_ptr[0] != 0 or row_ptr[-1] != nnz:
            raise ValueError(f"row_ptr must run from 0 to nnz={nnz}")
        if np.any(np.diff(row_ptr) < 0):
            raise ValueError("row_ptr must be non-decreasing")
        if nnz:
            if col_idx.min() < 0 or col_idx.max() >= self.ncols:
                raise ValueError(f"column index outside [0, {self.ncols})")
            increasing = np.diff(col_idx) > 0
            # a step may only go down where a new row starts
            starts = row_ptr[1:-1]
            increasing[starts[(starts > 0) & (starts < nnz)] - 1] = True
            if not increasing.all():
                raise ValueError("column indices must be strictly increasing within each row")
        return self

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    def row_ids(self) -> np.ndarray:
        """Row index of every stored entry"""
        return np.repeat(np.arange(self.nrows, dtype=np.int64), np.diff(self.row_ptr))


class DenseMatrix(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(frozen=True, arbitrary_types_allowed=True)

    nrows: int = pydantic.Field(ge=0)
    ncols: int = pydantic.Field(ge=0)
    # row-major; may be a read-only broadcast view
    data: np.ndarray

    @pydantic.field_validator("data")
    @classmethod
    def value_array(cls, v):
        return frozen_array(v, VALUE_DTYPE)

    @pydantic.model_validator(mode="after")
    def check_shape(self):
        if self.data.shape != (self.nrows, self.ncols):
            raise ValueError(
                f"data has shape {self.data.shape}, expected {(self.nrows, self.ncols)}"
            )
        return self

    @classmethod
    def from_array(cls, array) -> "DenseMatrix":
        data = np.asarray(array, dtype=VALUE_DTYPE)
        if data.ndim != 2:
            raise ValueError(f"expected a 2-d array, got {data.ndim} dimensions")
        return cls(nrows=data.shape[0], ncols=data.shape[1], data=data)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)


Matrix: TypeAlias = CsrMatrix | DenseMatrix


def _csr_from_sorted(nrows: int, ncols: int, rows, cols, values) -> CsrMatrix:
    row_ptr = np.zeros(nrows + 1, dtype=np.int64)
    np.cumsum(np.bincount(np.asarray(rows, dtype=np.intp), minlength=nrows), out=row_ptr[1:])
    return CsrMatrix(nrows=nrows, ncols=ncols, row_ptr=row_ptr, col_idx=cols, values=values)


def csr_from_coordinates(
    nrows: int,
    ncols: int,
    rows,
    cols,
    values,
    drop_zeros: bool = True,
) -> CsrMatrix:
    """Build a CSR matrix from 0-based coordinate arrays in any order"""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    values = np.asarray(values, dtype=VALUE_DTYPE)
    if not rows.shape == cols.shape == values.shape:
        raise MatrixConstructionError(
            f"coordinate arrays differ in length: {rows.shape} {cols.shape} {values.shape}"
        )

    outside = (rows < 0) | (rows >= nrows) | (cols < 0) | (cols >= ncols)
    if outside.any():
        i = int(np.argmax(outside))
        raise MatrixConstructionError(
            f"entry ({rows[i]}, {cols[i]}) is outside a {nrows}x{ncols} matrix"
        )

    keys = rows * ncols + cols
    if keys.size and not np.all(keys[1:] > keys[:-1]):
        order = np.argsort(keys, kind="stable")
        keys, rows, cols, values = keys[order], rows[order], cols[order], values[order]
        repeated = np.flatnonzero(keys[1:] == keys[:-1])
        if repeated.size:
            i = repeated[0]
            raise MatrixConstructionError(f"duplicate coordinate ({rows[i]}, {cols[i]})")

    if drop_zeros:
        keep = values != 0.0
        rows, cols, values = rows[keep], cols[keep], values[keep]

    return _csr_from_sorted(nrows, ncols, rows, cols, values)


def csr_from_triples(
    nrows: int,
    ncols: int,
    triples: Iterable[tuple[int, int, float]],
    drop_zeros: bool = True,
) -> CsrMatrix:
    entries = list(triples)
    if not entries:
        return csr_from_coordinates(nrows, ncols, [], [], [], drop_zeros=drop_zeros)
    rows, cols, values = zip(*entries)
    return csr_from_coordinates(nrows, ncols, rows, cols, values, drop_zeros=drop_zeros)


def empty_csr(nrows: int, ncols: int) -> CsrMatrix:
    return csr_from_coordinates(nrows, ncols, [], [], [])


def to_dense(A: Matrix, ambient_zero: float = 0.0) -> DenseMatrix:
    """Materialize A, filling positions CSR does not store with `ambient_zero`"""
    if isinstance(A, DenseMatrix):
        return A
    data = np.full(A.shape, ambient_zero, dtype=VALUE_DTYPE)
    data[A.row_ids(), A.col_idx] = A.values
    return DenseMatrix(nrows=A.nrows, ncols=A.ncols, data=sealed(data))


def from_dense(D: DenseMatrix) -> CsrMatrix:
    rows, cols = np.nonzero(D.data != 0.0)
    return _csr_from_sorted(D.nrows, D.ncols, rows, cols, D.data[rows, cols])


def nnz(A: Matrix) -> int:
    if isinstance(A, CsrMatrix):
        return A.nnz
    return int(np.count_nonzero(A.data))


def storage_bytes(A: Matrix) -> int:
    if isinstance(A, CsrMatrix):
        return A.row_ptr.nbytes + A.col_idx.nbytes + A.values.nbytes
    return A.nrows * A.ncols * VALUE_BYTES


def _check_same_shape(A: Matrix, B: Matrix, op: str) -> None:
    if A.shape != B.shape:
        raise DimensionMismatchError(f"{op}: shapes {A.shape} and {B.shape} differ")


def _linear_keys(A: CsrMatrix) -> np.ndarray:
    return A.row_ids() * A.ncols + A.col_idx


def _lookup(keys: np.ndarray, values: np.ndarray, targets: np.ndarray, fill: float) -> np.ndarray:
    out = np.full(targets.shape, fill, dtype=VALUE_DTYPE)
    if keys.size and targets.size:
        pos = np.minimum(np.searchsorted(keys, targets), keys.size - 1)
        hit = keys[pos] == targets
        out[hit] = values[pos[hit]]
    return out


def _ewise_sparse(A: CsrMatrix, B: CsrMatrix, s: Semiring, op: np.ufunc, union: bool) -> CsrMatrix:
    a_keys, b_keys = _linear_keys(A), _linear_keys(B)
    if union:
        keys = np.union1d(a_keys, b_keys)
    else:
        keys = np.intersect1d(a_keys, b_keys, assume_unique=True)
    values = s.apply(
        op,
        _lookup(a_keys, A.values, keys, s.zero),
        _lookup(b_keys, B.values, keys, s.zero),
    )
    rows, cols = np.divmod(keys, max(A.ncols, 1))
    return _csr_from_sorted(A.nrows, A.ncols, rows, cols, values)


def _ewise(A: Matrix, B: Matrix, s: Semiring, op: np.ufunc, union: bool, name: str) -> Matrix:
    _check_same_shape(A, B, name)
    if isinstance(A, CsrMatrix) and isinstance(B, CsrMatrix):
        return _ewise_sparse(A, B, s, op, union)
    data = s.apply(op, to_dense(A, s.zero).data, to_dense(B, s.zero).data)
    return DenseMatrix(nrows=A.nrows, ncols=A.ncols, data=sealed(data))


def ewise_add(A: Matrix, B: Matrix, s: Semiring) -> Matrix:
    """C(i,j) = A(i,j) (+) B(i,j); sparse (+) sparse keeps the union of stored positions"""
    return _ewise(A, B, s, s.add_op, union=True, name="ewise_add")


def ewise_mul(A: Matrix, B: Matrix, s: Semiring) -> Matrix:
    """C(i,j) = A(i,j) (x) B(i,j); sparse (x) sparse keeps the intersection (zero annihilates)"""
    return _ewise(A, B, s, s.mul_op, union=False, name="ewise_mul")


def _row_blocks(row_ptr: np.ndarray, width: int, workers: int) -> list[tuple[int, int]]:
    """Contiguous row blocks of roughly equal work, each gathering <= GATHER_BUDGET products"""
    nrows = row_ptr.size - 1
    if nrows <= 0:
        return []
    # one unit per stored entry plus one per output row
    work = row_ptr.astype(np.int64) + np.arange(nrows + 1)
    total = int(work[-1])
    per_block = max(GATHER_BUDGET // max(width, 1), 1)
    nblocks = min(max(-(-total // per_block), workers), nrows)
    targets = np.linspace(0, total, nblocks + 1)[1:-1]
    cuts = np.searchsorted(work, targets)
    bounds = np.unique(np.concatenate(([0], cuts, [nrows])))
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


def _tiles(nrows: int, block_rows: int, workers: int) -> list[tuple[int, int]]:
    if nrows <= 0:
        return []
    height = max(min(block_rows, -(-nrows // workers)), 1)
    return [(start, min(start + height, nrows)) for start in range(0, nrows, height)]


def _mxm_csr_dense(A: CsrMatrix, B: DenseMatrix, s: Semiring, workers: int) -> DenseMatrix:
    s.check_domain(A.values, B.data)
    n = B.ncols
    row_ptr, col_idx = A.row_ptr, A.col_idx
    values = s.to_work(A.values)
    b = s.to_work(B.data)
    zero = s.to_work(s.zero)
    out = np.empty((A.nrows, n), dtype=VALUE_DTYPE)

    def kernel(start: int, stop: int) -> None:
        lo, hi = int(row_ptr[start]), int(row_ptr[stop])
        block = np.full((stop - start, n), zero, dtype=s.work_dtype)
        if hi > lo:
            filled = np.diff(row_ptr[start : stop + 1]) > 0
            offsets = row_ptr[start:stop][filled].astype(np.intp) - lo
            products = s.mul_op(values[lo:hi, None], b[col_idx[lo:hi]])
            block[filled] = s.add_op.reduceat(products, offsets, axis=0)
        out[start:stop] = block

    blocks = _row_blocks(row_ptr, n, workers)
    logger.debug(f"mxm csr x dense {A.shape}x{B.shape} nnz={A.nnz} {s.name} blocks={len(blocks)} {workers=}")
    run_partitioned(kernel, blocks, workers)
    return DenseMatrix(nrows=A.nrows, ncols=n, data=sealed(out))


def _mxm_dense_dense(A: DenseMatrix, B: DenseMatrix, s: Semiring, workers: int) -> DenseMatrix:
    s.check_domain(A.data, B.data)
    n = B.ncols
    a = s.to_work(A.data)
    b = s.to_work(B.data)
    zero = s.to_work(s.zero)
    out = np.empty((A.nrows, n), dtype=VALUE_DTYPE)

    def kernel(start: int, stop: int) -> None:
        panel = np.ascontiguousarray(a[start:stop].T)
        acc = np.full((stop - start, n), zero, dtype=s.work_dtype)
        for k in range(A.ncols):
            acc = s.add_op(acc, s.mul_op(panel[k][:, None], b[k]))
        out[start:stop] = acc

    run_partitioned(kernel, _tiles(A.nrows, DENSE_BLOCK_ROWS, workers), workers)
    return DenseMatrix(nrows=A.nrows, ncols=n, data=sealed(out))


def _mxm_csr_csr(A: CsrMatrix, B: CsrMatrix, s: Semiring) -> CsrMatrix:
    s.check_domain(A.values, B.values)
    b_ptr = B.row_ptr.astype(np.int64)
    k = A.col_idx
    lengths = b_ptr[k + 1] - b_ptr[k]
    total = int(lengths.sum())
    if total == 0:
        return empty_csr(A.nrows, B.ncols)

    # expand every A(i,k) against row k of B, in A's storage order
    first = np.repeat(b_ptr[k] - (np.cumsum(lengths) - lengths), lengths)
    positions = first + np.arange(total)
    rows = np.repeat(A.row_ids(), lengths)
    cols = B.col_idx[positions].astype(np.int64)
    products = s.mul_op(
        np.repeat(s.to_work(A.values), lengths), s.to_work(B.values)[positions]
    )

    # stable sort keeps ascending k within each output position
    keys = rows * B.ncols + cols
    order = np.argsort(keys, kind="stable")
    keys, rows, cols, products = keys[order], rows[order], cols[order], products[order]
    heads = np.flatnonzero(np.concatenate(([True], keys[1:] != keys[:-1])))
    sums = s.add_op.reduceat(products, heads)
    return _csr_from_sorted(A.nrows, B.ncols, rows[heads], cols[heads], sums.astype(VALUE_DTYPE))


def mxm(A: Matrix, B: Matrix, s: Semiring, workers: int = 1) -> Matrix:
    """C(i,j) = (+)_k A(i,k) (x) B(k,j) over semiring s"""
    if A.ncols != B.nrows:
        raise DimensionMismatchError(
            f"mxm: inner dimensions differ, {A.shape} x {B.shape}"
        )
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")

    match (A, B):
        case (CsrMatrix(), DenseMatrix()):
            return _mxm_csr_dense(A, B, s, workers)
        case (DenseMatrix(), DenseMatrix()):
            return _mxm_dense_dense(A, B, s, workers)
        case (CsrMatrix(), CsrMatrix()):
            return _mxm_csr_csr(A, B, s)
    raise UnsupportedKernelError(
        "mxm of a dense left operand with a CSR right operand is not supported, "
        "convert the right operand with to_dense"
    )


def dense_mxm_baseline(
    A: DenseMatrix,
    B: DenseMatrix,
    workers: int = 1,
    block_rows: int = DENSE_BLOCK_ROWS,
) -> DenseMatrix:
    """Plain arithmetic C = A B with no sparsity checks.

    Row tiles of A are transposed into contiguous panels and accumulated as
    rank-1 updates in ascending k, so the work is the same for any number of zeros.
    """
    if not isinstance(A, DenseMatrix) or not isinstance(B, DenseMatrix):
        raise UnsupportedKernelError("dense_mxm_baseline takes two DenseMatrix operands")
    if A.ncols != B.nrows:
        raise DimensionMismatchError(
            f"dense_mxm_baseline: inner dimensions differ, {A.shape} x {B.shape}"
        )
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")

    a, b = A.data, B.data
    out = np.zeros((A.nrows, B.ncols), dtype=VALUE_DTYPE)

    def kernel(start: int, stop: int) -> None:
        panel = np.ascontiguousarray(a[start:stop].T)
        acc = out[start:stop]
        scratch = np.empty_like(acc)
        for k in range(A.ncols):
            np.multiply(panel[k][:, None], b[k], out=scratch)
            acc += scratch

    run_partitioned(kernel, _tiles(A.nrows, block_rows, workers), workers)
    return DenseMatrix(nrows=A.nrows, ncols=B.ncols, data=sealed(out))
