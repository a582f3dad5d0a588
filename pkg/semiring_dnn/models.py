from pathlib import Path
from typing import Literal, TypedDict

import pydantic

from semiring_dnn.constants import (
    DEFAULT_BATCH,
    DEFAULT_INVERSE_SPARSITIES,
    DEFAULT_MAX_DENSE_BYTES,
    DEFAULT_REFERENCE_M,
    DEFAULT_REPETITIONS,
    DEFAULT_SIZES,
    DEFAULT_WARMUP,
    DENSE_BLOCK_ROWS,
)

BiasMode = Literal["zero", "uniform01"]
Implementation = Literal["sparse", "dense"]
Sampling = Literal["mask", "geometric", "auto"]


class ConfigSweepType(TypedDict):
    sizes: list[int]
    inverse_sparsities: list[float]
    implementations: list[Implementation]
    workers: list[int]


class ConfigWorkloadType(TypedDict):
    batch: int
    layers: int
    bias_mode: BiasMode
    sampling: Sampling


class ConfigTimingType(TypedDict):
    repetitions: int
    warmup: int
    dense_block_rows: int
    max_dense_bytes: int


class ConfigType(TypedDict):
    seed: int | None
    output: str
    reference_m: int
    sweep: ConfigSweepType
    workload: ConfigWorkloadType
    timing: ConfigTimingType


class GenSpec(pydantic.BaseModel):
    m: int = pydantic.Field(ge=1)
    inverse_sparsity: float = pydantic.Field(ge=1, allow_inf_nan=False)
    batch: int = pydantic.Field(default=DEFAULT_BATCH, ge=1)
    seed: int = pydantic.Field(ge=0, lt=2**64)
    sampling: Sampling = "mask"

    @property
    def density(self) -> float:
        return 1.0 / self.inverse_sparsity


class BenchConfig(pydantic.BaseModel):
    sizes: list[int] = pydantic.Field(default_factory=lambda: list(DEFAULT_SIZES))
    inverse_sparsities: list[float] = pydantic.Field(
        default_factory=lambda: [float(s) for s in DEFAULT_INVERSE_SPARSITIES]
    )
    implementations: list[Implementation] = pydantic.Field(
        default_factory=lambda: ["sparse", "dense"]
    )
    workers: list[int] = pydantic.Field(default_factory=lambda: [1])
    batch: int = pydantic.Field(default=DEFAULT_BATCH, ge=1)
    layers: int = pydantic.Field(default=1, ge=1)
    bias_mode: BiasMode = "zero"
    sampling: Sampling = "mask"
    repetitions: int = pydantic.Field(default=DEFAULT_REPETITIONS, ge=3)
    warmup: int = pydantic.Field(default=DEFAULT_WARMUP, ge=1)
    dense_block_rows: int = pydantic.Field(default=DENSE_BLOCK_ROWS, ge=1)
    max_dense_bytes: int = pydantic.Field(default=DEFAULT_MAX_DENSE_BYTES, ge=0)
    reference_m: int = pydantic.Field(default=DEFAULT_REFERENCE_M, ge=1)
    seed: int = pydantic.Field(ge=0, lt=2**64)
    output: Path = Path("results/sweep.csv")

    @pydantic.field_validator("sizes", "workers", "implementations", "inverse_sparsities")
    @classmethod
    def not_empty(cls, v):
        if not v:
            raise ValueError("must list at least one value")
        if len(set(v)) != len(v):
            raise ValueError(f"duplicate values in {v}")
        return v

    @pydantic.field_validator("sizes", "workers")
    @classmethod
    def positive_counts(cls, v: list[int]):
        if any(x < 1 for x in v):
            raise ValueError(f"every value must be >= 1, got {v}")
        return v

    @pydantic.field_validator("inverse_sparsities")
    @classmethod
    def valid_inverse_sparsities(cls, v: list[float]):
        if any(not x >= 1 for x in v):
            raise ValueError(f"inverse sparsity must be >= 1, got {v}")
        return v


class BenchRecord(pydantic.BaseModel):
    m: int = pydantic.Field(ge=1)
    inverse_sparsity: float = pydantic.Field(ge=1, allow_inf_nan=False)
    implementation: Implementation
    workers: int = pydantic.Field(ge=1)
    mean_layer_seconds: float
    stddev_seconds: float
    nnz: int = pydantic.Field(ge=0)
    matrix_bytes: int = pydantic.Field(ge=0)
    skip_reason: str = ""

    @pydantic.model_validator(mode="after")
    def completed_rows_are_timed(self):
        if not self.skip_reason and not self.mean_layer_seconds > 0:
            raise ValueError(
                f"mean_layer_seconds must be > 0 for a completed row, got {self.mean_layer_seconds}"
            )
        return self

    @property
    def skipped(self) -> bool:
        return bool(self.skip_reason)


class CurveParams(pydantic.BaseModel):
    m: int = pydantic.Field(ge=1)
    ratio_dense: float = pydantic.Field(gt=0)
    slope: float = pydantic.Field(gt=0)
    saturation: float = pydantic.Field(gt=0)
    blas_per_element: float = pydantic.Field(gt=0)
    ratio_dense_normalized: float = pydantic.Field(gt=0)
    slope_normalized: float = pydantic.Field(gt=0)
    saturation_normalized: float = pydantic.Field(gt=0)
    blas_per_element_normalized: float = pydantic.Field(gt=0)


class SpeedupRecord(pydantic.BaseModel):
    m: int = pydantic.Field(ge=1)
    inverse_sparsity: float = pydantic.Field(ge=1, allow_inf_nan=False)
    implementation: Implementation
    workers: int = pydantic.Field(ge=1)
    speedup: float = pydantic.Field(gt=0)


class LawResult(pydantic.BaseModel):
    name: str
    passed: bool
    # (a, b, c, lhs, rhs) of the first failing sample
    counterexample: tuple[float, float, float, float, float] | None = None


class LawReport(pydantic.BaseModel):
    semiring: str
    samples: int = pydantic.Field(ge=1)
    seed: int
    exact: bool
    results: list[LawResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)


class MatrixFile(pydantic.BaseModel):
    path: Path
    kind: Literal["coordinate", "array"]
    nrows: int = pydantic.Field(ge=0)
    ncols: int = pydantic.Field(ge=0)
    nnz: int | None = None
