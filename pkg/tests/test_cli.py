from pathlib import Path

import numpy as np
import pytest

from semiring_dnn.bench import read_csv, read_records, write_csv
from semiring_dnn.cli import main
from semiring_dnn.io import read_matrix
from semiring_dnn.matgen import gen_input, gen_weight
from semiring_dnn.models import BenchRecord, CurveParams, GenSpec, SpeedupRecord

DEFAULT_CONFIG = Path(__file__).parent.parent / "default_config.yml"


def make_records_csv(path: Path, workers=(1,)) -> Path:
    records = []
    for m in (16, 32):
        for s in (1.0, 4.0, 64.0):
            for w in workers:
                records.append(
                    BenchRecord(
                        m=m,
                        inverse_sparsity=s,
                        implementation="sparse",
                        workers=w,
                        mean_layer_seconds=(m * m / s + m) * 1e-6 / w,
                        stddev_seconds=0.0,
                        nnz=int(m * m / s),
                        matrix_bytes=100,
                    )
                )
                records.append(
                    BenchRecord(
                        m=m,
                        inverse_sparsity=s,
                        implementation="dense",
                        workers=w,
                        mean_layer_seconds=m * m * 1e-7,
                        stddev_seconds=0.0,
                        nnz=int(m * m / s),
                        matrix_bytes=m * m * 4,
                    )
                )
    return write_csv(records, path, BenchRecord)


@pytest.mark.parametrize("semiring", ["arithmetic", "maxplus", "minmax", "gf2"])
def test_laws(semiring: str):
    assert main(["laws", "--semiring", semiring, "--samples", "1000", "--seed", "1"]) == 0


def test_verify():
    argv = ["verify", "--m", "64", "--layers", "4", "--inverse-sparsity", "16", "--seed", "7"]

    assert main(argv) == 0


def test_verify_with_workers_and_bias():
    argv = [
        "verify",
        "--m",
        "40",
        "--inverse-sparsity",
        "4",
        "--batch",
        "8",
        "--bias-mode",
        "uniform01",
        "--workers",
        "3",
        "--seed",
        "3",
    ]

    assert main(argv) == 0


def test_sweep_row_count(tmp_path: Path):
    out = tmp_path / "r.csv"
    argv = [
        "sweep",
        "--sizes",
        "16,32",
        "--inverse-sparsities",
        "1,4,16,64,256,1024,4096,16384",
        "--batch",
        "4",
        "--repetitions",
        "3",
        "--seed",
        "42",
        "--out",
        str(out),
    ]

    assert main(argv) == 0
    records = read_records(out)
    assert len(records) == 2 * 8 * 2
    assert {r.implementation for r in records} == {"sparse", "dense"}


def test_sweep_is_reproducible(tmp_path: Path):
    def run(name: str) -> list[tuple]:
        out = tmp_path / name
        argv = ["sweep", "--sizes", "24", "--inverse-sparsities", "1,8", "--batch", "2"]
        argv += ["--repetitions", "3", "--seed", "5", "--out", str(out)]
        assert main(argv) == 0
        return [(r.m, r.inverse_sparsity, r.implementation, r.nnz, r.matrix_bytes) for r in read_records(out)]

    assert run("a.csv") == run("b.csv")


def test_sweep_with_config_file(tmp_path: Path):
    out = tmp_path / "from_config.csv"
    argv = ["sweep", "--config", str(DEFAULT_CONFIG), "--seed", "1", "--out", str(out)]
    argv += ["--sizes", "8", "--inverse-sparsities", "1,2", "--implementations", "sparse"]
    argv += ["--workers", "1,2", "--repetitions", "3", "--batch", "2"]

    assert main(argv) == 0
    records = read_records(out)
    assert [(r.inverse_sparsity, r.workers) for r in records] == [(1, 1), (1, 2), (2, 1), (2, 2)]


def test_analyze(tmp_path: Path):
    records = make_records_csv(tmp_path / "r.csv", workers=(1, 2))
    out, speedups_out = tmp_path / "curve.csv", tmp_path / "speedups.csv"
    argv = ["analyze", "--records", str(records), "--out", str(out)]
    argv += ["--reference-m", "32", "--speedups-out", str(speedups_out)]

    assert main(argv) == 0
    params = read_csv(out, CurveParams)
    assert [p.m for p in params] == [16, 32]
    assert params[1].slope_normalized == pytest.approx(1.0)
    speedups = read_csv(speedups_out, SpeedupRecord)
    assert len(speedups) == 2 * 3 * 2 * 2
    assert {s.speedup for s in speedups if s.implementation == "sparse" and s.workers == 2} == {2.0}


def test_analyze_reports_gaps(tmp_path: Path):
    records = make_records_csv(tmp_path / "r.csv")
    kept = [r for r in read_records(records) if not (r.m == 16 and r.inverse_sparsity == 4)]
    write_csv(kept, records, BenchRecord)

    argv = ["analyze", "--records", str(records), "--out", str(tmp_path / "c.csv"), "--reference-m", "32"]

    assert main(argv) == 1
    assert not (tmp_path / "c.csv").exists()


def test_analyze_missing_file(tmp_path: Path):
    argv = ["analyze", "--records", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "c.csv")]

    assert main(argv) == 1


@pytest.mark.parametrize("kind", ["weight", "input", "bias"])
def test_gen(tmp_path: Path, kind: str):
    out = tmp_path / f"{kind}.mtx"
    argv = ["gen", "--kind", kind, "--m", "20", "--inverse-sparsity", "4", "--batch", "3"]
    argv += ["--bias-mode", "uniform01", "--seed", "9", "--out", str(out)]

    assert main(argv) == 0
    spec = GenSpec(m=20, inverse_sparsity=4, batch=3, seed=9)
    A = read_matrix(out)
    match kind:
        case "weight":
            assert np.array_equal(A.values, gen_weight(spec).values)
        case "input":
            assert np.array_equal(A.data, gen_input(spec).data)
        case "bias":
            assert A.shape == (20, 1)


def test_log_file(tmp_path: Path):
    log = tmp_path / "run.log"

    assert main(["laws", "--semiring", "gf2", "--seed", "1", "--samples", "10", "--log-file", str(log)]) == 0
    main(["laws", "--semiring", "gf2", "--seed", "1", "--samples", "10"])

    assert "gf2: all laws hold" in log.read_text()


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["train"],
        ["laws", "--semiring", "maxplus"],
        ["laws", "--semiring", "boolean", "--seed", "1"],
        ["laws", "--semiring", "maxplus", "--seed", "1", "--frobnicate"],
        ["verify", "--m", "8"],
        ["verify", "--m", "0", "--seed", "1"],
        ["sweep", "--sizes", "16"],
        ["sweep", "--sizes", "16,x", "--seed", "1"],
        ["sweep", "--sizes", "0", "--seed", "1"],
        ["sweep", "--implementations", "blas", "--seed", "1"],
        ["sweep", "--seed", "-3"],
        ["gen", "--m", "4", "--seed", "1"],
    ],
)
def test_usage_errors(argv: list[str]):
    assert main(argv) == 2


@pytest.mark.parametrize(
    "extra",
    [
        ["--repetitions", "2"],
        ["--inverse-sparsities", "0.5"],
        ["--sizes", "16,16"],
    ],
)
def test_invalid_sweep_values(tmp_path: Path, extra: list[str]):
    argv = ["sweep", "--seed", "1", "--out", str(tmp_path / "r.csv")] + extra

    assert main(argv) == 1
    assert not (tmp_path / "r.csv").exists()
