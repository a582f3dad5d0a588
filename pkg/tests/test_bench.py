import csv
import math
import time
from pathlib import Path

import numpy as np
import pytest

from semiring_dnn.bench import (
    analyze,
    read_csv,
    read_records,
    run_sweep,
    speedups,
    write_csv,
)
from semiring_dnn.constants import DEFAULT_INVERSE_SPARSITIES, INDEX_BYTES, VALUE_BYTES
from semiring_dnn.errors import AnalysisError
from semiring_dnn.matgen import gen_weight
from semiring_dnn.matrix import DenseMatrix, dense_mxm_baseline, storage_bytes
from semiring_dnn.models import (
    BenchConfig,
    BenchRecord,
    CurveParams,
    GenSpec,
    Implementation,
    SpeedupRecord,
)
from semiring_dnn.utils import load_config

DEFAULT_CONFIG = Path(__file__).parent.parent / "default_config.yml"


def make_record(
    m: int = 512,
    inverse_sparsity: float = 1.0,
    implementation: Implementation = "sparse",
    workers: int = 1,
    mean: float = 1e-3,
    stddev: float = 1e-5,
    nnz: int = 100,
    matrix_bytes: int = 1000,
    skip_reason: str = "",
) -> BenchRecord:
    return BenchRecord(
        m=m,
        inverse_sparsity=inverse_sparsity,
        implementation=implementation,
        workers=workers,
        mean_layer_seconds=mean,
        stddev_seconds=stddev,
        nnz=nnz,
        matrix_bytes=matrix_bytes,
        skip_reason=skip_reason,
    )


def make_curve_records(
    sizes=(512, 2048),
    inverse_sparsities=(1, 4, 16, 64),
    dense_per_element: float = 4e-8,
    sparse_per_nnz: float = 1e-7,
    per_row: float = 2e-7,
    workers: int = 1,
) -> list[BenchRecord]:
    """Synthetic timings: dense ~ m^2, sparse ~ nnz + m"""
    records = []
    for m in sizes:
        for s in inverse_sparsities:
            sparse = sparse_per_nnz * m * m / s + per_row * m
            records.append(make_record(m, s, "sparse", workers, mean=sparse))
            records.append(make_record(m, s, "dense", workers, mean=dense_per_element * m * m))
    return records


def make_config(**fields) -> BenchConfig:
    defaults = dict(
        sizes=[16, 32],
        inverse_sparsities=[1, 4, 16],
        implementations=["sparse", "dense"],
        workers=[1],
        batch=4,
        repetitions=3,
        warmup=1,
        seed=42,
    )
    return BenchConfig(**(defaults | fields))


def test_write_csv_empty_is_header_only(tmp_path: Path):
    path = write_csv([], tmp_path / "out" / "empty.csv", BenchRecord)

    assert path.read_text().splitlines() == [
        "m,inverse_sparsity,implementation,workers,mean_layer_seconds,stddev_seconds,nnz,matrix_bytes,skip_reason"
    ]


def test_write_csv_round_trip(tmp_path: Path):
    records = [
        make_record(2048, 4.0, "dense", 2, mean=0.123456789012345, stddev=1 / 3),
        make_record(512, 16.0, "sparse", 1, mean=7.25e-05, nnz=16384, matrix_bytes=133124),
        make_record(512, 1.0, "dense", 1, mean=math.nan, stddev=math.nan, skip_reason="too big"),
    ]
    path = write_csv(records, tmp_path / "records.csv", BenchRecord)

    with open(path, newline="") as fp:
        rows = list(csv.reader(fp))
    recovered = read_records(path)

    assert all(len(row) == len(BenchRecord.model_fields) for row in rows)
    assert [(r.m, r.inverse_sparsity, r.implementation) for r in recovered] == [
        (512, 1.0, "dense"),
        (512, 16.0, "sparse"),
        (2048, 4.0, "dense"),
    ]
    assert recovered[1] == records[1]
    assert recovered[2] == records[0]
    assert recovered[0].skipped and math.isnan(recovered[0].mean_layer_seconds)


def test_write_csv_of_curve_params(tmp_path: Path):
    params = analyze(make_curve_records(), reference_m=2048)
    path = write_csv(params, tmp_path / "curve.csv", CurveParams)

    assert read_csv(path, CurveParams) == params


def test_completed_record_needs_positive_time():
    with pytest.raises(ValueError):
        make_record(mean=0.0)
    assert make_record(mean=math.nan, skip_reason="skipped").skipped


def test_analyze_formulas():
    records = make_curve_records()

    params = {p.m: p for p in analyze(records, reference_m=2048)}

    p = params[512]
    dense = 4e-8 * 512**2
    t1 = 1e-7 * 512**2 + 2e-7 * 512
    t4 = 1e-7 * 512**2 / 4 + 2e-7 * 512
    t64 = 1e-7 * 512**2 / 64 + 2e-7 * 512
    assert p.ratio_dense == pytest.approx(t1 / dense)
    assert p.slope == pytest.approx((t1 - t4) / (0.75 * 512**2))
    assert p.saturation == pytest.approx(t64 / 512)
    assert p.blas_per_element == pytest.approx(4e-8)
    assert params[2048].slope_normalized == pytest.approx(1.0)
    assert params[2048].saturation_normalized == pytest.approx(1.0)
    assert p.slope_normalized == pytest.approx(1.0)
    assert p.blas_per_element_normalized == pytest.approx(1.0)


def test_analyze_ignores_other_worker_counts_and_skipped_rows():
    records = make_curve_records() + make_curve_records(dense_per_element=1.0, workers=4)
    records.append(make_record(512, 1024.0, "sparse", 1, mean=math.nan, skip_reason="skipped"))

    params = analyze(records, reference_m=2048)

    assert all(p.blas_per_element == pytest.approx(4e-8) for p in params)
    assert params[0].saturation == pytest.approx((1e-7 * 512**2 / 64 + 2e-7 * 512) / 512)


@pytest.mark.parametrize(
    "drop, message",
    [
        (("sparse", 4), "sparse inverse_sparsity=4"),
        (("sparse", 1), "sparse inverse_sparsity=1"),
        (("dense", 1), "dense inverse_sparsity=1"),
    ],
)
def test_analyze_names_missing_points(drop, message):
    implementation, s = drop
    records = [
        r
        for r in make_curve_records()
        if not (r.m == 512 and r.implementation == implementation and r.inverse_sparsity == s)
    ]

    with pytest.raises(AnalysisError, match=message):
        analyze(records, reference_m=2048)


def test_analyze_needs_reference_size():
    with pytest.raises(AnalysisError, match="m=1024"):
        analyze(make_curve_records(), reference_m=1024)


def test_analyze_rejects_non_positive_slope():
    records = make_curve_records()
    records = [
        make_record(r.m, r.inverse_sparsity, r.implementation, mean=1.0)
        if r.implementation == "sparse"
        else r
        for r in records
    ]

    with pytest.raises(AnalysisError, match="positive"):
        analyze(records, reference_m=2048)


def test_speedups():
    records = [
        make_record(512, 4.0, "sparse", 1, mean=0.8),
        make_record(512, 4.0, "sparse", 2, mean=0.5),
        make_record(512, 4.0, "sparse", 4, mean=0.25),
        make_record(512, 4.0, "dense", 4, mean=0.25),
        make_record(512, 4.0, "sparse", 8, mean=math.nan, skip_reason="skipped"),
    ]

    rows = speedups(records)

    assert rows == [
        SpeedupRecord(m=512, inverse_sparsity=4.0, implementation="sparse", workers=1, speedup=1.0),
        SpeedupRecord(m=512, inverse_sparsity=4.0, implementation="sparse", workers=2, speedup=1.6),
        SpeedupRecord(m=512, inverse_sparsity=4.0, implementation="sparse", workers=4, speedup=3.2),
    ]


def test_run_sweep_covers_every_configuration():
    config = make_config(workers=[1, 2])

    records = run_sweep(config)

    assert len(records) == 2 * 3 * 2 * 2
    assert not any(r.skipped for r in records)
    assert all(r.mean_layer_seconds > 0 and r.stddev_seconds >= 0 for r in records)
    dense = [r for r in records if r.implementation == "dense"]
    assert all(r.matrix_bytes == r.m * r.m * VALUE_BYTES for r in dense)


def test_run_sweep_is_reproducible():
    config = make_config(layers=2, bias_mode="uniform01")

    first = [(r.m, r.inverse_sparsity, r.implementation, r.nnz, r.matrix_bytes) for r in run_sweep(config)]
    second = [(r.m, r.inverse_sparsity, r.implementation, r.nnz, r.matrix_bytes) for r in run_sweep(config)]

    assert first == second


def test_run_sweep_totals_over_layers():
    config = make_config(sizes=[24], inverse_sparsities=[2], layers=3, implementations=["sparse"])

    (record,) = run_sweep(config)

    weights = [gen_weight(GenSpec(m=24, inverse_sparsity=2, batch=4, seed=42), layer=k) for k in range(3)]
    assert record.nnz == sum(w.nnz for w in weights)
    assert record.matrix_bytes == sum(storage_bytes(w) for w in weights)


def test_run_sweep_skips_oversized_dense():
    config = make_config(sizes=[16, 64], max_dense_bytes=16 * 16 * VALUE_BYTES)

    records = run_sweep(config)
    skipped = [r for r in records if r.skipped]

    assert {(r.m, r.implementation) for r in skipped} == {(64, "dense")}
    assert len(skipped) == 3
    assert all(math.isnan(r.mean_layer_seconds) for r in skipped)
    assert all("max_dense_bytes" in r.skip_reason for r in skipped)


def test_load_config_defaults_and_overrides():
    config = load_config(DEFAULT_CONFIG, dict(seed=7, sizes=[64]))

    assert config.seed == 7
    assert config.sizes == [64]
    assert config.inverse_sparsities == [float(s) for s in DEFAULT_INVERSE_SPARSITIES]
    assert config.implementations == ["sparse", "dense"]
    assert config.batch == 64
    assert config.repetitions == 5
    assert config.output == Path("results/sweep.csv")


def test_default_config_needs_a_seed():
    with pytest.raises(ValueError):
        load_config(DEFAULT_CONFIG)


@pytest.mark.parametrize(
    "fields",
    [
        dict(sizes=[]),
        dict(sizes=[0]),
        dict(sizes=[512, 512]),
        dict(inverse_sparsities=[0.5]),
        dict(workers=[0]),
        dict(implementations=["blas"]),
        dict(repetitions=2),
        dict(warmup=0),
        dict(seed=-1),
    ],
)
def test_invalid_bench_config(fields):
    with pytest.raises(ValueError):
        make_config(**fields)


def test_sparse_weight_memory_is_proportional_to_nnz():
    m = 2048
    w = gen_weight(GenSpec(m=m, inverse_sparsity=256, seed=42))

    assert storage_bytes(w) < 0.03 * m * m * VALUE_BYTES
    assert storage_bytes(w) == (m + 1) * INDEX_BYTES + w.nnz * (INDEX_BYTES + VALUE_BYTES)


@pytest.fixture(scope="module")
def desk_sweep() -> dict:
    config = BenchConfig(sizes=[512, 2048], repetitions=15, warmup=2, seed=42)
    records = run_sweep(config)
    times: dict[tuple[int, str], dict[float, float]] = {}
    for r in records:
        times.setdefault((r.m, r.implementation), {})[r.inverse_sparsity] = r.mean_layer_seconds
    return dict(records=records, times=times)


@pytest.mark.perf
def test_dense_time_independent_of_sparsity(desk_sweep):
    dense = np.array(list(desk_sweep["times"][(2048, "dense")].values()))

    assert dense.std() / dense.mean() < 0.2


@pytest.mark.perf
def test_sparse_time_decays_and_beats_dense(desk_sweep):
    sparse = desk_sweep["times"][(2048, "sparse")]
    dense = desk_sweep["times"][(2048, "dense")]
    ordered = [sparse[s] for s in sorted(sparse)]

    for denser, sparser in zip(ordered, ordered[1:]):
        assert sparser <= 1.15 * denser
    for s, t in sparse.items():
        if s >= 64:
            assert t < dense[s]


@pytest.mark.perf
def test_sparse_time_levels_off(desk_sweep):
    sparse = desk_sweep["times"][(2048, "sparse")]

    assert 0.5 < sparse[16384.0] / sparse[4096.0] < 2.0


@pytest.mark.perf
def test_curve_parameters_invariant_across_sizes(desk_sweep):
    params = {p.m: p for p in analyze(desk_sweep["records"], reference_m=2048)}

    assert 0.5 < params[512].slope_normalized < 2.0
    assert 0.5 < params[512].saturation_normalized < 2.0


@pytest.mark.perf
def test_dense_baseline_time_ignores_zeros():
    rng = np.random.default_rng(0)
    full = rng.uniform(-1, 3, (512, 512)).astype(np.float32)
    mostly_zero = np.where(rng.random((512, 512)) < 0.99, np.float32(0.0), full)
    B = DenseMatrix.from_array(rng.random((512, 512), dtype=np.float32))

    def best_of(a: np.ndarray, runs: int = 7) -> float:
        A = DenseMatrix.from_array(a)
        samples = []
        for _ in range(runs):
            start = time.perf_counter()
            dense_mxm_baseline(A, B)
            samples.append(time.perf_counter() - start)
        return min(samples)

    best_of(full, runs=1)
    assert 0.8 < best_of(mostly_zero) / best_of(full) < 1.2
