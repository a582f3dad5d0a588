import argparse
import sys
from pathlib import Path
from typing import Any, Callable, Sequence, get_args

import pydantic
from loguru import logger

from semiring_dnn.bench import analyze, read_records, run_sweep, speedups, write_csv
from semiring_dnn.constants import DEFAULT_BATCH, DEFAULT_REFERENCE_M, RTOL
from semiring_dnn.dnn import dense_relu_forward, relu_forward
from semiring_dnn.io import write_matrix
from semiring_dnn.matgen import gen_bias, gen_batch, gen_input, gen_model, gen_weight
from semiring_dnn.matrix import DenseMatrix
from semiring_dnn.models import (
    BenchConfig,
    BenchRecord,
    BiasMode,
    CurveParams,
    GenSpec,
    Implementation,
    Sampling,
    SpeedupRecord,
)
from semiring_dnn.semirings import SEMIRINGS, check_laws
from semiring_dnn.utils import format_bytes, load_config, max_relative_error

LOG_FORMAT = "<green>{time:HH:mm:ss.SSS}</green> | <level>{level: <8}</level> | {message}"


def comma_list(convert: Callable[[str], Any]) -> Callable[[str], list]:
    def parse(value: str) -> list:
        try:
            items = [convert(v.strip()) for v in value.split(",") if v.strip()]
        except ValueError as e:
            raise argparse.ArgumentTypeError(f"invalid list {value!r}: {e}") from None
        if not items:
            raise argparse.ArgumentTypeError("expected a comma-separated list")
        return items

    parse.__name__ = f"list of {convert.__name__}"
    return parse


def implementation(value: str) -> str:
    if value not in get_args(Implementation):
        raise ValueError(f"unknown implementation {value!r}")
    return value


def seed(value: str) -> int:
    n = int(value)
    if not 0 <= n < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be in [0, 2**64), got {value}")
    return n


def positive_int(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {value}")
    return n


def setup_logging(level: str, log_file: Path | None) -> None:
    logger.remove()
    logger.add(sys.stderr, level=level, format=LOG_FORMAT)
    if log_file:
        logger.add(log_file, level=level, rotation="10 MB", retention="10 days")


def cmd_sweep(args: argparse.Namespace) -> int:
    overrides = {
        key: value
        for key, value in dict(
            seed=args.seed,
            output=args.out,
            sizes=args.sizes,
            inverse_sparsities=args.inverse_sparsities,
            implementations=args.implementations,
            workers=args.workers,
            batch=args.batch,
            layers=args.layers,
            bias_mode=args.bias_mode,
            sampling=args.sampling,
            repetitions=args.repetitions,
            warmup=args.warmup,
            dense_block_rows=args.dense_block_rows,
            max_dense_bytes=args.max_dense_bytes,
        ).items()
        if value is not None
    }
    if args.config:
        config = load_config(args.config, overrides)
    else:
        config = BenchConfig.model_validate(overrides)

    records = run_sweep(config)
    write_csv(records, config.output, BenchRecord)
    skipped = sum(r.skipped for r in records)
    logger.info(f"Wrote {len(records)} rows ({skipped} skipped) to {config.output}")
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    records = read_records(args.records)
    params = analyze(records, reference_m=args.reference_m, workers=args.workers)
    write_csv(params, args.out, CurveParams)
    logger.info(f"Wrote curve parameters for {len(params)} sizes to {args.out}")

    if args.speedups_out:
        rows = speedups(records)
        write_csv(rows, args.speedups_out, SpeedupRecord)
        logger.info(f"Wrote {len(rows)} speedup rows to {args.speedups_out}")
    return 0


def cmd_gen(args: argparse.Namespace) -> int:
    spec = GenSpec(
        m=args.m,
        inverse_sparsity=args.inverse_sparsity,
        batch=args.batch,
        seed=args.seed,
        sampling=args.sampling,
    )
    match args.kind:
        case "weight":
            matrix = gen_weight(spec, layer=args.layer)
        case "input":
            matrix = gen_input(spec)
        case "bias":
            b = gen_bias(spec, args.bias_mode, layer=args.layer)
            matrix = DenseMatrix.from_array(b[:, None])

    written = write_matrix(matrix, args.out)
    logger.info(
        f"Wrote {args.kind} {written.nrows}x{written.ncols} ({written.kind}, nnz={written.nnz}) "
        f"to {written.path}, {format_bytes(written.path.stat().st_size)}"
    )
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    spec = GenSpec(
        m=args.m,
        inverse_sparsity=args.inverse_sparsity,
        batch=args.batch,
        seed=args.seed,
        sampling=args.sampling,
    )
    model = gen_model(spec, layers=args.layers, bias_mode=args.bias_mode)
    batch = gen_batch(spec)

    sparse = relu_forward(model, batch, workers=args.workers)
    dense = dense_relu_forward(model, batch, workers=args.workers)
    error = max_relative_error(sparse.y.data, dense.y.data)

    if error > RTOL:
        logger.error(f"max relative error {error:.3g} exceeds {RTOL:g}")
        return 1
    logger.info(f"max relative error {error:.3g} <= {RTOL:g} over {args.layers} layers")
    return 0


def cmd_laws(args: argparse.Namespace) -> int:
    s = SEMIRINGS[args.semiring]()
    report = check_laws(s, samples=args.samples, seed=args.seed)
    for result in report.results:
        status = "ok" if result.passed else f"FAILED {result.counterexample}"
        logger.info(f"{report.semiring} {result.name}: {status}")

    mode = "exact" if report.exact else "within tolerance"
    if not report.passed:
        logger.error(f"{report.semiring}: laws do not hold ({mode}, {report.samples} samples)")
        return 1
    logger.info(f"{report.semiring}: all laws hold ({mode}, {report.samples} samples)")
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR"],
    )
    parser.add_argument("--log-file", type=Path, default=None)


def _add_workload(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=seed, required=True)
    parser.add_argument("--m", type=positive_int, required=True, help="neurons per layer")
    parser.add_argument("--inverse-sparsity", type=float, default=1.0)
    parser.add_argument("--batch", type=positive_int, default=DEFAULT_BATCH)
    parser.add_argument("--sampling", choices=get_args(Sampling), default="mask")
    parser.add_argument("--bias-mode", choices=get_args(BiasMode), default="zero")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semiring-dnn",
        description="Sparse semiring matrix kernels and ReLU DNN inference benchmarks",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    sweep = commands.add_parser("sweep", help="time sparse and dense forward passes")
    _add_common(sweep)
    sweep.add_argument("--config", type=Path, default=None, help="YAML file, flags override it")
    sweep.add_argument("--seed", type=seed, required=True)
    sweep.add_argument("--out", type=Path, default=None)
    sweep.add_argument("--sizes", type=comma_list(positive_int), default=None)
    sweep.add_argument("--inverse-sparsities", type=comma_list(float), default=None)
    sweep.add_argument("--implementations", type=comma_list(implementation), default=None)
    sweep.add_argument("--workers", type=comma_list(positive_int), default=None)
    sweep.add_argument("--batch", type=positive_int, default=None)
    sweep.add_argument("--layers", type=positive_int, default=None)
    sweep.add_argument("--bias-mode", choices=get_args(BiasMode), default=None)
    sweep.add_argument("--sampling", choices=get_args(Sampling), default=None)
    sweep.add_argument("--repetitions", type=int, default=None)
    sweep.add_argument("--warmup", type=int, default=None)
    sweep.add_argument("--dense-block-rows", type=positive_int, default=None)
    sweep.add_argument("--max-dense-bytes", type=int, default=None)
    sweep.set_defaults(handler=cmd_sweep)

    analyze_cmd = commands.add_parser("analyze", help="fit curve parameters to a sweep CSV")
    _add_common(analyze_cmd)
    analyze_cmd.add_argument("--records", type=Path, required=True)
    analyze_cmd.add_argument("--out", type=Path, required=True)
    analyze_cmd.add_argument("--reference-m", type=positive_int, default=DEFAULT_REFERENCE_M)
    analyze_cmd.add_argument("--workers", type=positive_int, default=1)
    analyze_cmd.add_argument("--speedups-out", type=Path, default=None)
    analyze_cmd.set_defaults(handler=cmd_analyze)

    gen = commands.add_parser("gen", help="write a generated matrix as Matrix Market")
    _add_common(gen)
    _add_workload(gen)
    gen.add_argument("--kind", choices=["weight", "input", "bias"], default="weight")
    gen.add_argument("--layer", type=int, default=0)
    gen.add_argument("--out", type=Path, required=True)
    gen.set_defaults(handler=cmd_gen)

    verify = commands.add_parser("verify", help="compare sparse and dense forward passes")
    _add_common(verify)
    _add_workload(verify)
    verify.add_argument("--layers", type=positive_int, default=1)
    verify.add_argument("--workers", type=positive_int, default=1)
    verify.set_defaults(handler=cmd_verify)

    laws = commands.add_parser("laws", help="check semiring laws on random samples")
    _add_common(laws)
    laws.add_argument("--semiring", choices=sorted(SEMIRINGS), required=True)
    laws.add_argument("--samples", type=positive_int, default=1000)
    laws.add_argument("--seed", type=seed, required=True)
    laws.set_defaults(handler=cmd_laws)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    setup_logging(args.log_level, args.log_file)
    try:
        return args.handler(args)
    except pydantic.ValidationError as e:
        logger.error(f"invalid {args.command} settings:\n{e}")
    except (ValueError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
    return 1


if __name__ == "__main__":
    sys.exit(main())
