import math
from pathlib import Path

import numpy as np
from loguru import logger

from semiring_dnn.constants import MATRIX_MARKET_BANNER, MATRIX_MARKET_DIGITS, VALUE_DTYPE
from semiring_dnn.errors import (
    DuplicateEntryError,
    IndexOutOfBoundsError,
    MalformedEntryError,
    MalformedHeaderError,
    TruncatedFileError,
)
from semiring_dnn.matrix import CsrMatrix, DenseMatrix, Matrix, csr_from_coordinates, sealed
from semiring_dnn.models import MatrixFile


def format_value(value: float) -> str:
    return f"{value:.{MATRIX_MARKET_DIGITS}g}"


def write_matrix(A: Matrix, path: Path | str) -> MatrixFile:
    path = Path(path)
    if isinstance(A, CsrMatrix):
        kind = "coordinate"
        lines = [f"{MATRIX_MARKET_BANNER} coordinate real general", f"{A.nrows} {A.ncols} {A.nnz}"]
        lines.extend(
            f"{i + 1} {j + 1} {format_value(v)}"
            for i, j, v in zip(A.row_ids().tolist(), A.col_idx.tolist(), A.values.tolist())
        )
        count = A.nnz
    else:
        kind = "array"
        lines = [f"{MATRIX_MARKET_BANNER} array real general", f"{A.nrows} {A.ncols}"]
        lines.extend(format_value(v) for v in A.data.T.ravel().tolist())
        count = None

    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.debug(f"wrote {kind} {A.shape} to {path}")
    return MatrixFile(path=path, kind=kind, nrows=A.nrows, ncols=A.ncols, nnz=count)


def _parse_header(lines: list[str]) -> str:
    if not lines:
        raise MalformedHeaderError(1, "empty file, expected a MatrixMarket header")
    tokens = lines[0].split()
    if len(tokens) != 5 or " ".join(tokens[:2]) != MATRIX_MARKET_BANNER:
        raise MalformedHeaderError(
            1, f"expected '{MATRIX_MARKET_BANNER} <format> real general', got {lines[0]!r}"
        )
    kind, field, symmetry = (t.lower() for t in tokens[2:])
    if kind not in ("coordinate", "array"):
        raise MalformedHeaderError(1, f"unsupported format {kind!r}")
    if field != "real" or symmetry != "general":
        raise MalformedHeaderError(1, f"only 'real general' is supported, got {field!r} {symmetry!r}")
    return kind


def _parse_counts(line_no: int, line: str, count: int) -> list[int]:
    tokens = line.split()
    if len(tokens) != count:
        raise MalformedEntryError(line_no, f"size line needs {count} integers, got {line!r}")
    try:
        values = [int(t) for t in tokens]
    except ValueError:
        raise MalformedEntryError(line_no, f"size line needs integers, got {line!r}") from None
    if any(v < 0 for v in values):
        raise MalformedEntryError(line_no, f"sizes must be non-negative, got {line!r}")
    return values


def _parse_float(line_no: int, token: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise MalformedEntryError(line_no, f"value {token!r} is not a real number") from None
    if math.isnan(value):
        raise MalformedEntryError(line_no, f"value {token!r} is NaN")
    return value


def _check_count(entries: list[tuple[int, str]], expected: int, end_line: int) -> None:
    if len(entries) < expected:
        raise TruncatedFileError(
            end_line, f"expected {expected} entries, file ends after {len(entries)}"
        )
    if len(entries) > expected:
        raise MalformedEntryError(
            entries[expected][0], f"unexpected entry beyond the declared {expected}"
        )


def _read_coordinate(path: Path, body: list[tuple[int, str]], end_line: int) -> CsrMatrix:
    size_no, size_line = body[0]
    nrows, ncols, count = _parse_counts(size_no, size_line, 3)
    entries = body[1:]
    _check_count(entries, count, end_line)

    rows = np.empty(count, dtype=np.int64)
    cols = np.empty(count, dtype=np.int64)
    values = np.empty(count, dtype=VALUE_DTYPE)
    seen: dict[tuple[int, int], int] = {}
    for n, (line_no, line) in enumerate(entries):
        tokens = line.split()
        if len(tokens) != 3:
            raise MalformedEntryError(line_no, f"expected 'row col value', got {line!r}")
        try:
            i, j = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise MalformedEntryError(line_no, f"indices must be integers, got {line!r}") from None
        if not (1 <= i <= nrows and 1 <= j <= ncols):
            raise IndexOutOfBoundsError(
                line_no, f"entry ({i}, {j}) is outside a {nrows}x{ncols} matrix"
            )
        if (i, j) in seen:
            raise DuplicateEntryError(
                line_no, f"entry ({i}, {j}) already given on line {seen[(i, j)]}"
            )
        seen[(i, j)] = line_no
        rows[n], cols[n], values[n] = i - 1, j - 1, _parse_float(line_no, tokens[2])

    logger.debug(f"read coordinate {nrows}x{ncols} nnz={count} from {path}")
    return csr_from_coordinates(nrows, ncols, rows, cols, values, drop_zeros=False)


def _read_array(path: Path, body: list[tuple[int, str]], end_line: int) -> DenseMatrix:
    size_no, size_line = body[0]
    nrows, ncols = _parse_counts(size_no, size_line, 2)
    entries = body[1:]
    _check_count(entries, nrows * ncols, end_line)

    values = np.empty(nrows * ncols, dtype=VALUE_DTYPE)
    for n, (line_no, line) in enumerate(entries):
        tokens = line.split()
        if len(tokens) != 1:
            raise MalformedEntryError(line_no, f"expected one value per line, got {line!r}")
        values[n] = _parse_float(line_no, tokens[0])

    logger.debug(f"read array {nrows}x{ncols} from {path}")
    data = np.ascontiguousarray(values.reshape(ncols, nrows).T)
    return DenseMatrix(nrows=nrows, ncols=ncols, data=sealed(data))


def _decode_lines(raw: bytes) -> list[str]:
    lines = []
    for line_no, line in enumerate(raw.splitlines(), start=1):
        try:
            lines.append(line.decode("utf-8"))
        except UnicodeDecodeError as e:
            error = MalformedHeaderError if line_no == 1 else MalformedEntryError
            raise error(line_no, f"invalid UTF-8 byte {line[e.start : e.start + 1]!r}") from None
    return lines


def read_matrix(path: Path | str) -> Matrix:
    path = Path(path)
    lines = _decode_lines(path.read_bytes())
    kind = _parse_header(lines)

    body = [
        (line_no, line)
        for line_no, line in enumerate(lines[1:], start=2)
        if line.strip() and not line.lstrip().startswith("%")
    ]
    end_line = len(lines) + 1
    if not body:
        raise TruncatedFileError(end_line, "missing size line")

    if kind == "coordinate":
        return _read_coordinate(path, body, end_line)
    return _read_array(path, body, end_line)
