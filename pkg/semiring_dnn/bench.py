import csv
import math
import time
from functools import partial
from pathlib import Path
from typing import Callable, Sequence, TypeVar

import numpy as np
import pydantic
from loguru import logger

from semiring_dnn.constants import VALUE_BYTES
from semiring_dnn.dnn import DnnModel, dense_layer_step, layer_step, zero_matrix
from semiring_dnn.errors import AnalysisError
from semiring_dnn.matgen import gen_input, gen_model
from semiring_dnn.matrix import DenseMatrix, Matrix, nnz, storage_bytes, to_dense
from semiring_dnn.models import (
    BenchConfig,
    BenchRecord,
    CurveParams,
    GenSpec,
    Implementation,
    SpeedupRecord,
)
from semiring_dnn.utils import format_bytes, format_seconds

Row = TypeVar("Row", bound=pydantic.BaseModel)
Step = Callable[[Matrix, np.ndarray, DenseMatrix], DenseMatrix]

SORT_FIELDS = ("m", "inverse_sparsity", "implementation", "workers")


def _run_layers(step: Step, weights: Sequence[Matrix], biases, y: DenseMatrix) -> DenseMatrix:
    for w, b in zip(weights, biases):
        y = step(w, b, y)
    return y


def time_layers(
    step: Step,
    weights: Sequence[Matrix],
    biases: Sequence[np.ndarray],
    y: DenseMatrix,
    warmup: int,
    repetitions: int,
) -> list[float]:
    """Per-layer wall-clock seconds of each timed repetition, warmup runs discarded"""
    for _ in range(warmup):
        _run_layers(step, weights, biases, y)

    samples = []
    for _ in range(repetitions):
        start = time.perf_counter_ns()
        _run_layers(step, weights, biases, y)
        samples.append((time.perf_counter_ns() - start) / 1e9 / len(weights))
    return samples


def _skipped(
    spec: GenSpec, implementation: Implementation, workers: int, model: DnnModel, reason: str
) -> BenchRecord:
    logger.warning(
        f"Skipping m={spec.m} inverse_sparsity={spec.inverse_sparsity} {implementation} {workers=}: {reason}"
    )
    return BenchRecord(
        m=spec.m,
        inverse_sparsity=spec.inverse_sparsity,
        implementation=implementation,
        workers=workers,
        mean_layer_seconds=math.nan,
        stddev_seconds=math.nan,
        nnz=sum(nnz(w) for w in model.weights),
        matrix_bytes=model.num_layers * spec.m * spec.m * VALUE_BYTES,
        skip_reason=reason,
    )


def _dense_weights(config: BenchConfig, spec: GenSpec, model: DnnModel) -> list[DenseMatrix] | str:
    """Explicit-zero dense copies of the weights, or the reason they cannot be built"""
    needed = model.num_layers * spec.m * spec.m * VALUE_BYTES
    if needed > config.max_dense_bytes:
        return f"dense weights need {format_bytes(needed)}, max_dense_bytes is {format_bytes(config.max_dense_bytes)}"
    try:
        return [to_dense(w, 0.0) for w in model.weights]
    except MemoryError:
        return f"allocation of {format_bytes(needed)} for dense weights failed"


def run_sweep(config: BenchConfig) -> list[BenchRecord]:
    logger.info(
        f"Sweep sizes={config.sizes} inverse_sparsities={config.inverse_sparsities} "
        f"implementations={config.implementations} workers={config.workers} seed={config.seed}"
    )
    records: list[BenchRecord] = []
    for m in config.sizes:
        for inverse_sparsity in config.inverse_sparsities:
            spec = GenSpec(
                m=m,
                inverse_sparsity=inverse_sparsity,
                batch=config.batch,
                seed=config.seed,
                sampling=config.sampling,
            )
            model = gen_model(spec, layers=config.layers, bias_mode=config.bias_mode)
            y = gen_input(spec)

            for implementation in config.implementations:
                if implementation == "sparse":
                    weights: list[Matrix] | str = list(model.weights)
                else:
                    weights = _dense_weights(config, spec, model)

                for workers in config.workers:
                    if isinstance(weights, str):
                        records.append(_skipped(spec, implementation, workers, model, weights))
                        continue
                    records.append(
                        _bench_one(config, spec, model, weights, y, implementation, workers)
                    )

    return records


def _bench_one(
    config: BenchConfig,
    spec: GenSpec,
    model: DnnModel,
    weights: list[Matrix],
    y: DenseMatrix,
    implementation: Implementation,
    workers: int,
) -> BenchRecord:
    if implementation == "sparse":
        step: Step = partial(layer_step, workers=workers, zeros=zero_matrix(*y.shape))
    else:
        step = partial(dense_layer_step, workers=workers, block_rows=config.dense_block_rows)

    samples = time_layers(step, weights, model.biases, y, config.warmup, config.repetitions)
    record = BenchRecord(
        m=spec.m,
        inverse_sparsity=spec.inverse_sparsity,
        implementation=implementation,
        workers=workers,
        mean_layer_seconds=float(np.mean(samples)),
        stddev_seconds=float(np.std(samples, ddof=1)),
        nnz=sum(nnz(w) for w in weights),
        matrix_bytes=sum(storage_bytes(w) for w in weights),
    )
    logger.info(
        f"m={record.m} inverse_sparsity={record.inverse_sparsity:g} {implementation} {workers=} "
        f"mean={format_seconds(record.mean_layer_seconds)} stddev={format_seconds(record.stddev_seconds)} "
        f"nnz={record.nnz} bytes={format_bytes(record.matrix_bytes)}"
    )
    return record


def analyze(
    records: Sequence[BenchRecord], reference_m: int, workers: int = 1
) -> list[CurveParams]:
    """Curve parameters per matrix size, plus each normalized to its value at reference_m.

    ratio_dense      T_sparse(IS=1) / T_dense(IS=1)
    slope            (T_sparse(IS=1) - T_sparse(IS=4)) / (0.75 m^2)
    saturation       T_sparse(largest IS) / m
    blas_per_element T_dense(IS=1) / m^2
    """
    times = {
        (r.m, r.implementation, r.inverse_sparsity): r.mean_layer_seconds
        for r in records
        if not r.skipped and r.workers == workers
    }
    sizes = sorted({m for m, _, _ in times})
    if reference_m not in sizes:
        raise AnalysisError(f"reference size m={reference_m} has no completed runs with {workers=}")

    raw: dict[int, tuple[float, float, float, float]] = {}
    for m in sizes:
        required = [(m, "sparse", 1.0), (m, "sparse", 4.0), (m, "dense", 1.0)]
        missing = [key for key in required if key not in times]
        if missing:
            gaps = ", ".join(f"{impl} inverse_sparsity={s:g}" for _, impl, s in missing)
            raise AnalysisError(f"m={m} {workers=} is missing sweep points: {gaps}")

        widest = max(s for mm, impl, s in times if mm == m and impl == "sparse")
        t_dense = times[(m, "dense", 1.0)]
        t_full = times[(m, "sparse", 1.0)]
        t_quarter = times[(m, "sparse", 4.0)]
        raw[m] = (
            t_full / t_dense,
            (t_full - t_quarter) / (0.75 * m * m),
            times[(m, "sparse", widest)] / m,
            t_dense / (m * m),
        )

    reference = raw[reference_m]
    params = []
    for m in sizes:
        ratio, slope, saturation, blas = raw[m]
        try:
            params.append(
                CurveParams(
                    m=m,
                    ratio_dense=ratio,
                    slope=slope,
                    saturation=saturation,
                    blas_per_element=blas,
                    ratio_dense_normalized=ratio / reference[0],
                    slope_normalized=slope / reference[1],
                    saturation_normalized=saturation / reference[2],
                    blas_per_element_normalized=blas / reference[3],
                )
            )
        except pydantic.ValidationError as e:
            raise AnalysisError(
                f"m={m}: curve parameters must be positive, got {ratio=} {slope=} {saturation=} {blas=}; "
                f"the sweep is too noisy ({e.error_count()} invalid fields)"
            ) from None
        logger.info(f"{params[-1]}")

    return params


def speedups(records: Sequence[BenchRecord]) -> list[SpeedupRecord]:
    """T(workers=1) / T(workers) for every completed configuration that has a single-worker run"""
    completed = [r for r in records if not r.skipped]
    single = {
        (r.m, r.inverse_sparsity, r.implementation): r.mean_layer_seconds
        for r in completed
        if r.workers == 1
    }
    return [
        SpeedupRecord(
            m=r.m,
            inverse_sparsity=r.inverse_sparsity,
            implementation=r.implementation,
            workers=r.workers,
            speedup=single[(r.m, r.inverse_sparsity, r.implementation)] / r.mean_layer_seconds,
        )
        for r in completed
        if (r.m, r.inverse_sparsity, r.implementation) in single
    ]


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(rows: Sequence[Row], path: Path | str, row_type: type[Row]) -> Path:
    """Header of `row_type` fields in declared order, rows sorted by (m, inverse_sparsity, implementation, workers)"""
    path = Path(path)
    fields = list(row_type.model_fields)
    sort_fields = [f for f in SORT_FIELDS if f in fields]
    ordered = sorted(rows, key=lambda r: tuple(getattr(r, f) for f in sort_fields))

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fp:
        writer = csv.writer(fp)
        writer.writerow(fields)
        for row in ordered:
            writer.writerow([_format_cell(getattr(row, f)) for f in fields])

    logger.debug(f"wrote {len(ordered)} {row_type.__name__} rows to {path}")
    return path


def read_csv(path: Path | str, row_type: type[Row]) -> list[Row]:
    with open(path, newline="", encoding="utf-8") as fp:
        return [row_type.model_validate(row) for row in csv.DictReader(fp)]


def read_records(path: Path | str) -> list[BenchRecord]:
    return read_csv(path, BenchRecord)
