import numpy as np
import pydantic
from loguru import logger

from semiring_dnn.constants import DENSE_BLOCK_ROWS, VALUE_DTYPE
from semiring_dnn.errors import DimensionMismatchError
from semiring_dnn.matrix import (
    CsrMatrix,
    DenseMatrix,
    Matrix,
    dense_mxm_baseline,
    ewise_add,
    ewise_mul,
    frozen_array,
    mxm,
    sealed,
    to_dense,
)
from semiring_dnn.semirings import ARITHMETIC, MAX_PLUS


class DnnModel(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(frozen=True, arbitrary_types_allowed=True)

    weights: list[CsrMatrix | DenseMatrix]
    biases: list[np.ndarray]

    @pydantic.field_validator("biases")
    @classmethod
    def float32_vectors(cls, v: list[np.ndarray]):
        return [frozen_array(b, VALUE_DTYPE) for b in v]

    @pydantic.model_validator(mode="after")
    def same_width_layers(self):
        if not self.weights:
            raise ValueError("a model needs at least one layer")
        if len(self.weights) != len(self.biases):
            raise ValueError(
                f"{len(self.weights)} weight matrices but {len(self.biases)} bias vectors"
            )
        m = self.weights[0].nrows
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (m, m):
                raise ValueError(f"layer {k}: weight is {w.shape}, every layer must be {m}x{m}")
            if b.shape != (m,):
                raise ValueError(f"layer {k}: bias has shape {b.shape}, expected ({m},)")
        return self

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def neurons(self) -> int:
        return self.weights[0].nrows


class Batch(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(frozen=True)

    y: DenseMatrix

    @pydantic.field_validator("y")
    @classmethod
    def at_least_one_column(cls, v: DenseMatrix):
        if v.ncols < 1:
            raise ValueError("a batch needs at least one column")
        return v

    @classmethod
    def from_array(cls, array) -> "Batch":
        return cls(y=DenseMatrix.from_array(array))

    @property
    def neurons(self) -> int:
        return self.y.nrows

    @property
    def size(self) -> int:
        return self.y.ncols


def zero_matrix(nrows: int, ncols: int) -> DenseMatrix:
    data = np.zeros((nrows, ncols), dtype=VALUE_DTYPE)
    return DenseMatrix(nrows=nrows, ncols=ncols, data=sealed(data))


def broadcast_bias(b, ncols: int, materialize: bool = False) -> DenseMatrix:
    """B_k: the bias vector replicated along `ncols` columns"""
    column = frozen_array(b, VALUE_DTYPE)[:, None]
    data = np.broadcast_to(column, (column.shape[0], ncols))
    if materialize:
        data = sealed(np.ascontiguousarray(data))
    return DenseMatrix(nrows=column.shape[0], ncols=ncols, data=data)


def _check_layer(W: Matrix, b: np.ndarray, Y: DenseMatrix) -> None:
    m = W.nrows
    if W.ncols != m or np.shape(b) != (m,) or Y.nrows != m:
        raise DimensionMismatchError(
            f"layer needs W m x m, b of length m and Y m x n, got W {W.shape}, b {np.shape(b)}, Y {Y.shape}"
        )


def layer_step(
    W: Matrix,
    b,
    Y: DenseMatrix,
    workers: int = 1,
    zeros: DenseMatrix | None = None,
    materialize_bias: bool = False,
) -> DenseMatrix:
    """One forward layer: mxm over arithmetic, then bias add and ReLU over max-plus"""
    _check_layer(W, b, Y)
    if zeros is None:
        zeros = zero_matrix(Y.nrows, Y.ncols)

    z = mxm(W, Y, ARITHMETIC, workers=workers)
    z = ewise_mul(z, broadcast_bias(b, Y.ncols, materialize=materialize_bias), MAX_PLUS)
    return ewise_add(z, zeros, MAX_PLUS)


def relu_forward(
    model: DnnModel,
    batch: Batch,
    workers: int = 1,
    materialize_bias: bool = False,
) -> Batch:
    if batch.neurons != model.neurons:
        raise DimensionMismatchError(
            f"model has {model.neurons} neurons per layer, batch has {batch.neurons} rows"
        )

    # one zero matrix, reused by every layer
    zeros = zero_matrix(model.neurons, batch.size)
    y = batch.y
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        y = layer_step(w, b, y, workers=workers, zeros=zeros, materialize_bias=materialize_bias)
        logger.debug(f"relu_forward layer={k} {type(w).__name__} {y.shape=} {workers=}")

    return Batch(y=y)


def dense_layer_step(
    W: DenseMatrix,
    b,
    Y: DenseMatrix,
    workers: int = 1,
    block_rows: int = DENSE_BLOCK_ROWS,
) -> DenseMatrix:
    """max(W Y + b 1^T, 0) with the dense baseline multiply"""
    _check_layer(W, b, Y)
    z = dense_mxm_baseline(W, Y, workers=workers, block_rows=block_rows)
    bias = np.asarray(b, dtype=VALUE_DTYPE)[:, None]
    data = np.maximum(z.data + bias, 0.0)
    return DenseMatrix(nrows=Y.nrows, ncols=Y.ncols, data=sealed(data))


def dense_relu_forward(model: DnnModel, batch: Batch, workers: int = 1) -> Batch:
    if batch.neurons != model.neurons:
        raise DimensionMismatchError(
            f"model has {model.neurons} neurons per layer, batch has {batch.neurons} rows"
        )

    y = batch.y
    for w, b in zip(model.weights, model.biases):
        y = dense_layer_step(to_dense(w, 0.0), b, y, workers=workers)

    return Batch(y=y)
