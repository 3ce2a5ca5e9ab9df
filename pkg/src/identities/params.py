"""Parameter tuples for each verified identity.

All tuples are frozen. Balancing conditions are checked against a context's
tolerance by ``check_constraint``; derived quantities such as ``e`` are
computed on access and never stored.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Tuple

import mpmath
from mpmath import mpc, mpf

from src.core.numeric import PrecisionContext, pow_int, rel_residual, to_scalar
from src.core.theta import EllipticBase


class IdentityError(Exception):
    """Raised when an identity cannot be evaluated for the given parameters."""


class ConstraintViolationError(IdentityError):
    """Raised when a parameter tuple breaks its balancing condition."""


def _scalars(values: Iterable) -> Tuple[mpc, ...]:
    return tuple(to_scalar(v) for v in values)


def digest_values(label: str, values: Iterable) -> str:
    """Short hash of a label and 40-digit renderings of the values."""
    text = label + "|" + "|".join(mpmath.nstr(to_scalar(v), 40) for v in values)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _require_length(name: str, values: Tuple, n: int) -> None:
    if len(values) != n:
        raise ValueError(f"{name} must have length n={n}, got {len(values)}")


@dataclass(frozen=True)
class DtParams:
    """Parameters of the determinant transformation (b_j c_j d_j constant in j)."""

    base: EllipticBase
    n: int
    a: mpc
    b: Tuple[mpc, ...]
    c: Tuple[mpc, ...]
    d: Tuple[mpc, ...]

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        object.__setattr__(self, "a", to_scalar(self.a))
        for name in ("b", "c", "d"):
            values = _scalars(getattr(self, name))
            _require_length(name, values, self.n)
            object.__setattr__(self, name, values)

    @property
    def product(self) -> mpc:
        """The common value of b_j c_j d_j, read off at j = 1."""
        return self.b[0] * self.c[0] * self.d[0]

    @property
    def e(self) -> mpc:
        """a^2 / (b_j c_j d_j). Rounds at the active mpmath precision; call inside ``ctx.working()``."""
        return self.a**2 / self.product

    def constraint_residual(self) -> mpf:
        head = self.product
        return max(
            (rel_residual(b * c * d, head) for b, c, d in zip(self.b, self.c, self.d)),
            default=mpf(0),
        )

    def check_constraint(self, ctx: PrecisionContext) -> None:
        with ctx.working():
            residual = self.constraint_residual()
        if residual > ctx.tolerance:
            raise ConstraintViolationError(
                f"b_j c_j d_j is not independent of j (residual {mpmath.nstr(residual, 5)})"
            )

    def components(self) -> Tuple[mpc, ...]:
        return (self.a,) + self.b + self.c + self.d

    def digest(self) -> str:
        return digest_values(f"dt:{self.n}", (self.base.p, self.base.q) + self.components())


@dataclass(frozen=True)
class WdParams:
    """Parameters of the Warnaar determinant evaluation."""

    base: EllipticBase
    n: int
    a: mpc
    b: mpc
    c: mpc
    x: Tuple[mpc, ...]

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        for name in ("a", "b", "c"):
            object.__setattr__(self, name, to_scalar(getattr(self, name)))
        x = _scalars(self.x)
        _require_length("x", x, self.n)
        if any(v == 0 for v in x):
            raise ValueError("all x_j must be non-zero")
        object.__setattr__(self, "x", x)

    def digest(self) -> str:
        return digest_values(f"wd:{self.n}", (self.base.p, self.base.q, self.a, self.b, self.c) + self.x)


@dataclass(frozen=True)
class JsParams:
    """Parameters of the elliptic Jackson summation, balanced by a^2 q^{n+1} = bcde."""

    base: EllipticBase
    n: int
    a: mpc
    b: mpc
    c: mpc
    d: mpc
    e: mpc

    def __post_init__(self) -> None:
        if self.n < 0:
            raise ValueError(f"n must be non-negative, got {self.n}")
        for name in ("a", "b", "c", "d", "e"):
            object.__setattr__(self, name, to_scalar(getattr(self, name)))

    def balance_residual(self) -> mpf:
        return rel_residual(self.a**2 * pow_int(self.base.q, self.n + 1), self.b * self.c * self.d * self.e)

    def check_constraint(self, ctx: PrecisionContext) -> None:
        with ctx.working():
            residual = self.balance_residual()
        if residual > ctx.tolerance:
            raise ConstraintViolationError(
                f"a^2 q^(n+1) != bcde (residual {mpmath.nstr(residual, 5)})"
            )

    def digest(self) -> str:
        return digest_values(
            f"js:{self.n}", (self.base.p, self.base.q, self.a, self.b, self.c, self.d, self.e)
        )


@dataclass(frozen=True)
class CntParams:
    """Parameters of the multiple sum, with b c_j d_j e_j = a^2 q^{2-n+m_j}."""

    base: EllipticBase
    n: int
    m: Tuple[int, ...]
    a: mpc
    b: mpc
    c: Tuple[mpc, ...]
    d: Tuple[mpc, ...]
    e: Tuple[mpc, ...]

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        m = tuple(int(v) for v in self.m)
        _require_length("m", m, self.n)
        if any(v < 0 for v in m):
            raise ValueError("all m_j must be non-negative")
        object.__setattr__(self, "m", m)
        for name in ("a", "b"):
            object.__setattr__(self, name, to_scalar(getattr(self, name)))
        for name in ("c", "d", "e"):
            values = _scalars(getattr(self, name))
            _require_length(name, values, self.n)
            object.__setattr__(self, name, values)

    def constraint_residual(self) -> mpf:
        q = self.base.q
        return max(
            rel_residual(self.b * c * d * e, self.a**2 * pow_int(q, 2 - self.n + m))
            for c, d, e, m in zip(self.c, self.d, self.e, self.m)
        )

    def check_constraint(self, ctx: PrecisionContext) -> None:
        with ctx.working():
            residual = self.constraint_residual()
        if residual > ctx.tolerance:
            raise ConstraintViolationError(
                f"b c_j d_j e_j != a^2 q^(2-n+m_j) (residual {mpmath.nstr(residual, 5)})"
            )

    def digest(self) -> str:
        return digest_values(
            f"cnt:{self.n}:{','.join(map(str, self.m))}",
            (self.base.p, self.base.q, self.a, self.b) + self.c + self.d + self.e,
        )


@dataclass(frozen=True)
class TdtParams:
    """Parameters of the trigonometric determinant identity (p = 0, no balancing)."""

    q: mpc
    n: int
    z: Tuple[mpc, ...]
    a: Tuple[mpc, ...]

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        object.__setattr__(self, "q", to_scalar(self.q))
        for name in ("z", "a"):
            values = _scalars(getattr(self, name))
            _require_length(name, values, self.n)
            object.__setattr__(self, name, values)

    def digest(self) -> str:
        return digest_values(f"tdt:{self.n}", (self.q,) + self.z + self.a)
