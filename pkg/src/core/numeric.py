"""High-precision scalar contract shared by every module.

Complex values are plain ``mpmath.mpc`` numbers. A ``PrecisionContext`` fixes
the working precision, the theta truncation policy and the residual tolerance
for an evaluation; code that needs the precision applied enters
``ctx.working()``.

mpmath keeps its precision in process-global state, so contexts may be shared
freely but concurrent evaluations must run in separate processes.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, replace
from typing import Any, Iterator, Optional, Union

import mpmath
from mpmath import mpc, mpf

CScalar = mpc
ScalarLike = Union[mpc, mpf, int, float, complex, str]

MIN_PRECISION_BITS = 64
MAX_TRUNCATION = 10**6


class PrecisionError(Exception):
    """Raised when a precision context cannot be constructed."""


class NumericError(Exception):
    """Raised when a scalar operation has no finite result."""


@dataclass(frozen=True)
class PrecisionContext:
    """Precision, truncation and tolerance policy for one evaluation.

    Attributes:
        precision_bits: Mantissa bits per real component.
        guard_bits: Extra bits carried on top of precision_bits.
        theta_truncation: Number of theta product factors J. Recomputed per
            evaluation from |p| via ``truncation_for``.
        tolerance: Relative residual acceptance threshold.
    """

    precision_bits: int
    guard_bits: int
    tolerance: float
    theta_truncation: int = 1

    @property
    def working_bits(self) -> int:
        return self.precision_bits + self.guard_bits

    @property
    def digits(self) -> int:
        """Decimal digits matching precision_bits, used for serialization."""
        return math.ceil(self.precision_bits * math.log10(2))

    @property
    def pole_threshold(self) -> mpf:
        """Default magnitude below which a denominator factor counts as a pole."""
        return mpf(10) ** (-(self.precision_bits // 4))

    @contextmanager
    def working(self) -> Iterator["PrecisionContext"]:
        with mpmath.workprec(self.working_bits):
            yield self

    def truncation_for(self, p_abs: Any, x_abs: Optional[Any] = None) -> int:
        """Number of theta factors needed for nome modulus ``p_abs``.

        J = ceil((precision_bits + guard_bits) / log2(1/|p|)), clamped to
        [1, MAX_TRUNCATION]. When ``x_abs`` (max of |x| and 1/|x|) exceeds
        2**guard_bits, enough extra factors are added to absorb it.
        """
        p_abs = float(p_abs)
        if p_abs == 0.0:
            return 1
        decay = -math.log2(p_abs)
        bits = float(self.working_bits)
        if x_abs is not None:
            x_bits = float(mpmath.log(mpf(x_abs), 2))
            if x_bits > self.guard_bits:
                bits += x_bits
        return max(1, min(MAX_TRUNCATION, math.ceil(bits / decay)))

    def with_truncation(self, p_abs: Any) -> "PrecisionContext":
        return replace(self, theta_truncation=self.truncation_for(p_abs))


def make_context(precision_bits: int, guard_bits: int, tolerance: float) -> PrecisionContext:
    """Build a validated PrecisionContext.

    Raises:
        PrecisionError: precision below 64 bits, negative guard bits or a
            non-positive tolerance.
    """
    if precision_bits < MIN_PRECISION_BITS:
        raise PrecisionError(
            f"precision_bits={precision_bits} is below {MIN_PRECISION_BITS}; "
            "verification at this precision is meaningless"
        )
    if guard_bits < 0:
        raise PrecisionError(f"guard_bits must be non-negative, got {guard_bits}")
    if not tolerance > 0:
        raise PrecisionError(f"tolerance must be positive, got {tolerance}")
    return PrecisionContext(
        precision_bits=int(precision_bits),
        guard_bits=int(guard_bits),
        tolerance=float(tolerance),
    )


def to_scalar(value: ScalarLike) -> mpc:
    """Coerce a number or numeric string into an mpc at the current precision."""
    if isinstance(value, mpc):
        return value
    return mpc(value)


def binom2(n: int) -> int:
    return math.comb(n, 2) if n >= 2 else 0


def binom3(n: int) -> int:
    return math.comb(n, 3) if n >= 3 else 0


def pow_int(z: ScalarLike, k: int) -> mpc:
    """z**k for integer k by repeated squaring; z**0 == 1.

    Raises:
        NumericError: negative power of zero.
    """
    z = to_scalar(z)
    if k < 0:
        if z == 0:
            raise NumericError(f"negative power {k} of zero")
        z = 1 / z
        k = -k
    result = mpc(1)
    while k:
        if k & 1:
            result *= z
        k >>= 1
        if k:
            z *= z
    return result


def cdiv(num: ScalarLike, den: ScalarLike) -> mpc:
    """Complex division that refuses a zero denominator."""
    den = to_scalar(den)
    if den == 0:
        raise NumericError("division by zero")
    return to_scalar(num) / den


def rel_residual(lhs: ScalarLike, rhs: ScalarLike) -> mpf:
    """|lhs - rhs| / max(|lhs|, |rhs|, 1)."""
    lhs = to_scalar(lhs)
    rhs = to_scalar(rhs)
    diff = abs(lhs - rhs)
    if diff == 0:
        return mpf(0)
    return diff / max(abs(lhs), abs(rhs), mpf(1))


def format_scalar(value: ScalarLike, digits: int) -> str:
    """Decimal string of ``value`` with ``digits`` significant digits.

    Real values (mpf or mpc with zero imaginary part) print without the
    complex parentheses.
    """
    if isinstance(value, mpc) and value.imag == 0:
        value = value.real
    if isinstance(value, (int, float)):
        value = mpf(value)
    return mpmath.nstr(value, digits)
