from datetime import timedelta
from functools import partial
from pathlib import Path
from typing import Any, Callable, Sequence

import humanize
import numpy as np
import trio
import yaml
from loguru import logger

from semiring_dnn.constants import ATOL, RTOL
from semiring_dnn.models import (
    BenchConfig,
    ConfigSweepType,
    ConfigTimingType,
    ConfigType,
    ConfigWorkloadType,
)


def load_config(path: Path, overrides: dict[str, Any] | None = None) -> BenchConfig:
    """Build a BenchConfig from a YAML file, values in `overrides` win"""
    with open(path) as fp:
        raw_config: ConfigType = yaml.safe_load(fp)
    logger.debug(f"{raw_config=}")

    sweep = ConfigSweepType(**raw_config["sweep"])
    workload = ConfigWorkloadType(**raw_config["workload"])
    timing = ConfigTimingType(**raw_config["timing"])

    fields = dict(
        seed=raw_config.get("seed"),
        output=raw_config["output"],
        reference_m=raw_config["reference_m"],
        sizes=sweep["sizes"],
        inverse_sparsities=sweep["inverse_sparsities"],
        implementations=sweep["implementations"],
        workers=sweep["workers"],
        batch=workload["batch"],
        layers=workload["layers"],
        bias_mode=workload["bias_mode"],
        sampling=workload["sampling"],
        repetitions=timing["repetitions"],
        warmup=timing["warmup"],
        dense_block_rows=timing["dense_block_rows"],
        max_dense_bytes=timing["max_dense_bytes"],
    )
    fields |= overrides or {}
    return BenchConfig.model_validate(fields)


def is_close(a, b) -> np.ndarray:
    """Elementwise |a - b| <= max(RTOL * max(|a|, |b|), ATOL); equal infinities compare close"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        scale = np.maximum(np.abs(a), np.abs(b))
        return (a == b) | (np.abs(a - b) <= np.maximum(RTOL * scale, ATOL))


def max_relative_error(actual, expected) -> float:
    """Largest |a - b| / max(|a|, |b|, ATOL / RTOL); <= RTOL exactly when `is_close` holds everywhere"""
    a = np.asarray(actual, dtype=np.float64)
    b = np.asarray(expected, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    with np.errstate(invalid="ignore"):
        diff = np.where(a == b, 0.0, np.abs(a - b))
        scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), ATOL / RTOL)
        errors = diff / scale
    return float(np.nanmax(np.where(np.isnan(errors), np.inf, errors)))


def format_bytes(num_bytes: int) -> str:
    return humanize.naturalsize(num_bytes, binary=True)


def format_seconds(seconds: float) -> str:
    if not np.isfinite(seconds):
        return str(seconds)
    return humanize.precisedelta(
        timedelta(seconds=seconds), minimum_unit="microseconds", format="%0.1f"
    )


def run_partitioned(
    fn: Callable[[int, int], None],
    blocks: Sequence[tuple[int, int]],
    workers: int,
) -> None:
    """Call fn(start, stop) for every block, spreading blocks over `workers` threads"""
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    if workers == 1 or len(blocks) <= 1:
        for start, stop in blocks:
            fn(start, stop)
        return

    trio.run(_run_partitioned, fn, blocks, workers)


async def _run_partitioned(
    fn: Callable[[int, int], None],
    blocks: Sequence[tuple[int, int]],
    workers: int,
) -> None:
    limiter = trio.CapacityLimiter(workers)
    async with trio.open_nursery() as nursery:
        for start, stop in blocks:
            nursery.start_soon(
                partial(trio.to_thread.run_sync, fn, start, stop, limiter=limiter)
            )
