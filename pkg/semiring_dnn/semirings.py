from typing import Callable

import numpy as np
import pydantic
from loguru import logger

from semiring_dnn.constants import VALUE_DTYPE
from semiring_dnn.errors import SemiringDomainError
from semiring_dnn.models import LawReport, LawResult
from semiring_dnn.utils import is_close

Sampler = Callable[[np.random.Generator, int], np.ndarray]

# Exact semirings draw from multiples of 1/8 so that + never rounds
LATTICE_STEPS: int = 8
ZERO_RATE: float = 0.05


class Semiring(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str
    add_op: np.ufunc
    mul_op: np.ufunc
    zero: float
    one: float
    sampler: Sampler
    work_dtype: np.dtype = VALUE_DTYPE
    exact: bool = True
    closed_values: tuple[float, ...] | None = None

    def check_domain(self, *operands) -> None:
        if self.closed_values is None:
            return
        for operand in operands:
            values = np.asarray(operand)
            outside = ~np.isin(values, self.closed_values)
            if outside.any():
                raise SemiringDomainError(
                    f"{self.name} is defined over {self.closed_values}, got {values[outside].flat[0]}"
                )

    def to_work(self, x) -> np.ndarray:
        return np.asarray(x, dtype=VALUE_DTYPE).astype(self.work_dtype, copy=False)

    def apply(self, op: np.ufunc, a, b):
        """Evaluate a binary operator on scalars or arrays, returning float32"""
        self.check_domain(a, b)
        out = op(self.to_work(a), self.to_work(b))
        return np.asarray(out).astype(VALUE_DTYPE, copy=False)[()]

    def add(self, a, b):
        return self.apply(self.add_op, a, b)

    def mul(self, a, b):
        return self.apply(self.mul_op, a, b)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.asarray(self.sampler(rng, size), dtype=VALUE_DTYPE)


def _uniform(low: float, high: float) -> Sampler:
    def sample(rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(low, high, size)

    return sample


def _lattice(low: float, high: float, zero: float) -> Sampler:
    def sample(rng: np.random.Generator, size: int) -> np.ndarray:
        steps = rng.integers(
            int(low * LATTICE_STEPS), int(high * LATTICE_STEPS), size, endpoint=True
        )
        values = steps / LATTICE_STEPS
        return np.where(rng.random(size) < ZERO_RATE, zero, values)

    return sample


def _bits(rng: np.random.Generator, size: int) -> np.ndarray:
    return rng.integers(0, 2, size).astype(np.float64)


def arithmetic_semiring() -> Semiring:
    """Standard (+, x, 0, 1); laws hold only up to float32 rounding"""
    return Semiring(
        name="arithmetic",
        add_op=np.add,
        mul_op=np.multiply,
        zero=0.0,
        one=1.0,
        sampler=_uniform(-1.0, 1.0),
        exact=False,
    )


def max_plus_semiring() -> Semiring:
    """Tropical (max, +, -inf, 0); -inf + -inf stays -inf so the annihilator is exact"""
    return Semiring(
        name="maxplus",
        add_op=np.maximum,
        mul_op=np.add,
        zero=-np.inf,
        one=0.0,
        sampler=_lattice(-64.0, 64.0, -np.inf),
    )


def min_max_semiring() -> Semiring:
    """(min, max, +inf, 0) over the non-negative reals extended with +inf"""
    return Semiring(
        name="minmax",
        add_op=np.minimum,
        mul_op=np.maximum,
        zero=np.inf,
        one=0.0,
        sampler=_lattice(0.0, 64.0, np.inf),
    )


def gf2_semiring() -> Semiring:
    """GF(2) as (xor, and, 0, 1); values outside {0, 1} raise SemiringDomainError"""
    return Semiring(
        name="gf2",
        add_op=np.logical_xor,
        mul_op=np.logical_and,
        zero=0.0,
        one=1.0,
        sampler=_bits,
        work_dtype=np.dtype(np.bool_),
        closed_values=(0.0, 1.0),
    )


ARITHMETIC = arithmetic_semiring()
MAX_PLUS = max_plus_semiring()
MIN_MAX = min_max_semiring()
GF2 = gf2_semiring()

SEMIRINGS: dict[str, Callable[[], Semiring]] = {
    "arithmetic": arithmetic_semiring,
    "maxplus": max_plus_semiring,
    "minmax": min_max_semiring,
    "gf2": gf2_semiring,
}


def _law_result(s: Semiring, name: str, a, b, c, lhs, rhs) -> LawResult:
    holds = (lhs == rhs) if s.exact else is_close(lhs, rhs)
    if holds.all():
        return LawResult(name=name, passed=True)
    idx = int(np.argmin(holds))
    return LawResult(
        name=name,
        passed=False,
        counterexample=(
            float(a[idx]),
            float(b[idx]),
            float(c[idx]),
            float(lhs[idx]),
            float(rhs[idx]),
        ),
    )


def check_laws(s: Semiring, samples: int, seed: int) -> LawReport:
    """Check the semiring laws on `samples` random triples drawn from the domain of `s`"""
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")

    rng = np.random.default_rng(seed)
    a, b, c = (s.sample(rng, samples) for _ in range(3))
    zero = np.full(samples, s.zero, dtype=VALUE_DTYPE)
    one = np.full(samples, s.one, dtype=VALUE_DTYPE)
    add, mul = s.add, s.mul

    laws = {
        "additive_identity": (add(a, zero), a),
        "multiplicative_identity": (mul(a, one), a),
        "multiplicative_annihilator": (mul(a, zero), zero),
        "additive_commutativity": (add(a, b), add(b, a)),
        "additive_associativity": (add(add(a, b), c), add(a, add(b, c))),
        "multiplicative_associativity": (mul(mul(a, b), c), mul(a, mul(b, c))),
        "left_distributivity": (mul(a, add(b, c)), add(mul(a, b), mul(a, c))),
        "right_distributivity": (mul(add(a, b), c), add(mul(a, c), mul(b, c))),
    }
    results = [
        _law_result(s, name, a, b, c, lhs, rhs) for name, (lhs, rhs) in laws.items()
    ]
    for r in results:
        if not r.passed:
            logger.warning(f"{s.name} {r.name} failed, (a, b, c, lhs, rhs)={r.counterexample}")

    return LawReport(
        semiring=s.name, samples=samples, seed=seed, exact=s.exact, results=results
    )
