from typing import Final

import numpy as np

VALUE_DTYPE: Final = np.dtype(np.float32)
INDEX_DTYPE: Final = np.dtype(np.int32)
VALUE_BYTES: Final = VALUE_DTYPE.itemsize
INDEX_BYTES: Final = INDEX_DTYPE.itemsize

# Single tolerance for every FP32 comparison in the library and its tests
RTOL: Final = 1e-5
ATOL: Final = 1e-6

DEFAULT_BATCH: Final = 64
DEFAULT_SIZES: Final = (512, 2048)
DEFAULT_INVERSE_SPARSITIES: Final = (1, 4, 16, 64, 256, 1024, 4096, 16384)
DEFAULT_REPETITIONS: Final = 5
DEFAULT_WARMUP: Final = 1
DEFAULT_REFERENCE_M: Final = 2048
DEFAULT_MAX_DENSE_BYTES: Final = 2 * 1024**3

# Upper bound on the number of gathered products a CSR x dense block holds at once
GATHER_BUDGET: Final = 1 << 22
DENSE_BLOCK_ROWS: Final = 256
# Elements drawn per chunk when generating masked-dense weights
GEN_CHUNK_ELEMENTS: Final = 1 << 22
GEOMETRIC_THRESHOLD: Final = 100

# SeedSequence spawn keys, one independent stream per generated quantity
STREAM_WEIGHT_VALUES: Final = 0
STREAM_WEIGHT_MASK: Final = 1
STREAM_INPUT: Final = 2
STREAM_BIAS: Final = 3

MATRIX_MARKET_BANNER: Final = "%%MatrixMarket matrix"
MATRIX_MARKET_DIGITS: Final = 9
