"""Seeded PCG64 generators for weights, inputs and biases"""

import numpy as np
from loguru import logger

from semiring_dnn.constants import (
    GEN_CHUNK_ELEMENTS,
    GEOMETRIC_THRESHOLD,
    STREAM_BIAS,
    STREAM_INPUT,
    STREAM_WEIGHT_MASK,
    STREAM_WEIGHT_VALUES,
    VALUE_DTYPE,
)
from semiring_dnn.dnn import Batch, DnnModel
from semiring_dnn.matrix import CsrMatrix, DenseMatrix, csr_from_coordinates
from semiring_dnn.models import BiasMode, GenSpec


def make_rng(spec: GenSpec, stream: int, layer: int = 0) -> np.random.Generator:
    seq = np.random.SeedSequence(spec.seed, spawn_key=(stream, layer))
    return np.random.Generator(np.random.PCG64(seq))


def _weight_values(rng: np.random.Generator, size) -> np.ndarray:
    # float32 draws are multiples of 2**-24 below 1, so 4u - 1 is exact and < 3
    return rng.random(size, dtype=np.float32) * np.float32(4.0) - np.float32(1.0)


def _gen_weight_masked(spec: GenSpec, layer: int) -> CsrMatrix:
    m = spec.m
    values_rng = make_rng(spec, STREAM_WEIGHT_VALUES, layer)
    mask_rng = make_rng(spec, STREAM_WEIGHT_MASK, layer)
    chunk_rows = max(GEN_CHUNK_ELEMENTS // m, 1)

    rows, cols, values = [], [], []
    for start in range(0, m, chunk_rows):
        shape = (min(start + chunk_rows, m) - start, m)
        dense = _weight_values(values_rng, shape)
        keep = mask_rng.random(shape) < spec.density
        r, c = np.nonzero(keep)
        rows.append(r + start)
        cols.append(c)
        values.append(dense[r, c])

    return csr_from_coordinates(
        m, m, np.concatenate(rows), np.concatenate(cols), np.concatenate(values)
    )


def _gen_weight_geometric(spec: GenSpec, layer: int) -> CsrMatrix:
    m = spec.m
    total = m * m
    mask_rng = make_rng(spec, STREAM_WEIGHT_MASK, layer)
    values_rng = make_rng(spec, STREAM_WEIGHT_VALUES, layer)
    draw = max(int(total * spec.density * 1.1) + 16, 16)

    positions = []
    last = -1
    while True:
        # any gap of `total` or more lands outside the matrix
        gaps = np.minimum(mask_rng.geometric(spec.density, size=draw), total)
        kept = last + np.cumsum(gaps)
        inside = kept[kept < total]
        positions.append(inside)
        if inside.size < kept.size:
            break
        last = int(kept[-1])

    flat = np.concatenate(positions)
    rows, cols = np.divmod(flat, m)
    return csr_from_coordinates(m, m, rows, cols, _weight_values(values_rng, flat.size))


def gen_weight(spec: GenSpec, layer: int = 0) -> CsrMatrix:
    """m x m CSR weight: each entry kept with probability 1/inverse_sparsity, values U[-1, 3)"""
    sampling = spec.sampling
    if sampling == "auto":
        sampling = "geometric" if spec.inverse_sparsity > GEOMETRIC_THRESHOLD else "mask"

    if sampling == "geometric":
        w = _gen_weight_geometric(spec, layer)
    else:
        w = _gen_weight_masked(spec, layer)
    logger.debug(
        f"gen_weight m={spec.m} inverse_sparsity={spec.inverse_sparsity} {layer=} {sampling=} nnz={w.nnz}"
    )
    return w


def gen_input(spec: GenSpec) -> DenseMatrix:
    rng = make_rng(spec, STREAM_INPUT)
    return DenseMatrix.from_array(rng.random((spec.m, spec.batch), dtype=np.float32))


def gen_bias(spec: GenSpec, mode: BiasMode = "zero", layer: int = 0) -> np.ndarray:
    if mode == "zero":
        return np.zeros(spec.m, dtype=VALUE_DTYPE)
    if mode == "uniform01":
        return make_rng(spec, STREAM_BIAS, layer).random(spec.m, dtype=np.float32)
    raise ValueError(f"unknown bias mode {mode!r}")


def gen_model(spec: GenSpec, layers: int = 1, bias_mode: BiasMode = "zero") -> DnnModel:
    return DnnModel(
        weights=[gen_weight(spec, layer=k) for k in range(layers)],
        biases=[gen_bias(spec, bias_mode, layer=k) for k in range(layers)],
    )


def gen_batch(spec: GenSpec) -> Batch:
    return Batch(y=gen_input(spec))
