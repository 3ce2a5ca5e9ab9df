"""Theta function and elliptic shifted factorials.

    theta(x) = prod_{j>=0} (1 - p^j x)(1 - p^{j+1}/x)
    (a)_k    = theta(a) theta(aq) ... theta(aq^{k-1})

``theta_product`` is the evaluation route used everywhere; ``theta_series``
(Jacobi triple product) is an independent oracle and is never called from an
identity evaluator, so a disagreement between the two points at theta itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import mpmath
from mpmath import mpc, mpf

from src.core.numeric import (
    PrecisionContext,
    ScalarLike,
    binom2,
    binom3,
    pow_int,
    rel_residual,
    to_scalar,
)

# Above this nome modulus the truncation length explodes.
MAX_NOME_MODULUS = 0.99
MAX_SERIES_TERMS = 10**6


class ThetaError(Exception):
    """Raised when a theta quantity is requested outside its domain."""


@dataclass(frozen=True)
class EllipticBase:
    """Nome p (|p| < 1) and base q (q != 0)."""

    p: mpc
    q: mpc

    def __post_init__(self) -> None:
        p = to_scalar(self.p)
        q = to_scalar(self.q)
        if abs(p) >= 1:
            raise ThetaError(f"nome must satisfy |p| < 1, got |p| = {mpmath.nstr(abs(p), 8)}")
        if q == 0:
            raise ThetaError("base q must be non-zero")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @classmethod
    def of(cls, p: ScalarLike, q: ScalarLike) -> "EllipticBase":
        return cls(p=to_scalar(p), q=to_scalar(q))

    @property
    def trigonometric(self) -> bool:
        return self.p == 0


def _check_argument(x: mpc, base: EllipticBase) -> None:
    if x == 0:
        raise ThetaError("theta(x) is undefined at x = 0")
    if abs(base.p) > MAX_NOME_MODULUS:
        raise ThetaError(
            f"|p| = {mpmath.nstr(abs(base.p), 8)} exceeds {MAX_NOME_MODULUS}; "
            "truncation would be impractically long"
        )


def theta_product(x: ScalarLike, base: EllipticBase, ctx: PrecisionContext) -> mpc:
    """Truncated product for theta(x); exactly 1 - x when p = 0.

    Raises:
        ThetaError: x = 0 or |p| > 0.99.
    """
    with ctx.working():
        x = to_scalar(x)
        _check_argument(x, base)
        if base.trigonometric:
            return 1 - x
        p = base.p
        inv_x = 1 / x
        x_abs = max(abs(x), abs(inv_x))
        terms = ctx.truncation_for(abs(p), x_abs)
        result = mpc(1)
        # u = p^j x, v = p^{j+1}/x
        u = x
        v = p * inv_x
        for _ in range(terms):
            result *= (1 - u) * (1 - v)
            u *= p
            v *= p
        return result


def theta_series(x: ScalarLike, base: EllipticBase, ctx: PrecisionContext) -> mpc:
    """Oracle: theta(x) = sum_n (-1)^n p^{C(n,2)} x^n / (p;p)_inf.

    Both tails are summed until the terms are decreasing and below
    2^-(precision_bits + guard_bits) relative to the running sum.
    """
    with ctx.working():
        x = to_scalar(x)
        _check_argument(x, base)
        p = base.p
        eps = mpf(2) ** (-ctx.working_bits)
        inv_x = 1 / x

        total = mpc(1)
        # n >= 1: t(n) = t(n-1) * (-p^{n-1} x)
        term = mpc(1)
        pn = mpc(1)
        for _ in range(MAX_SERIES_TERMS):
            ratio = -pn * x
            term *= ratio
            total += term
            pn *= p
            if term == 0 or (abs(ratio) < 1 and abs(term) <= eps * max(abs(total), 1)):
                break
        else:
            raise ThetaError("theta series did not converge")

        # n <= -1: t(-k-1) = t(-k) * (-p^{k+1} / x)
        term = mpc(1)
        pn = p
        for _ in range(MAX_SERIES_TERMS):
            ratio = -pn * inv_x
            term *= ratio
            total += term
            pn *= p
            if term == 0 or (abs(ratio) < 1 and abs(term) <= eps * max(abs(total), 1)):
                break
        else:
            raise ThetaError("theta series did not converge")

        if base.trigonometric:
            return total
        return total / mpmath.qp(p)


def epoch(a: ScalarLike, k: int, base: EllipticBase, ctx: PrecisionContext) -> mpc:
    """(a)_k = theta(a) theta(aq) ... theta(aq^{k-1}); (a)_0 = 1."""
    if k < 0:
        raise ThetaError(f"negative shifted factorial index {k}")
    with ctx.working():
        a = to_scalar(a)
        result = mpc(1)
        for i in range(k):
            result *= theta_product(a * pow_int(base.q, i), base, ctx)
        return result


def multi_epoch(
    values: Sequence[ScalarLike], k: int, base: EllipticBase, ctx: PrecisionContext
) -> mpc:
    """(a_1, ..., a_n)_k; the empty list gives 1."""
    with ctx.working():
        result = mpc(1)
        for a in values:
            result *= epoch(a, k, base, ctx)
        return result


def trig_epoch(a: ScalarLike, k: int, q: ScalarLike) -> mpc:
    """q-shifted factorial (1 - a)(1 - aq) ... (1 - aq^{k-1}) at the current precision."""
    if k < 0:
        raise ThetaError(f"negative shifted factorial index {k}")
    a = to_scalar(a)
    q = to_scalar(q)
    result = mpc(1)
    for i in range(k):
        result *= 1 - a * pow_int(q, i)
    return result


# ---------------------------------------------------------------------------
# Residual helpers for standard theta identities
# ---------------------------------------------------------------------------


# Optional memoized routes; the helpers fall back to theta_product and epoch.
ThetaFn = Callable[[mpc], mpc]
FactorialFn = Callable[[mpc, int], mpc]


def check_quasi_periodicity(
    x: ScalarLike, base: EllipticBase, ctx: PrecisionContext, theta: Optional[ThetaFn] = None
) -> Tuple[mpf, mpf]:
    """Residuals of theta(px) = -theta(x)/x and theta(1/x) = -theta(x)/x.

    The first residual is 0 by convention when p = 0 (theta(0) is undefined).
    """
    with ctx.working():
        theta = theta or (lambda z: theta_product(z, base, ctx))
        x = to_scalar(x)
        value = theta(x)
        expected = -value / x
        shifted = mpf(0)
        if not base.trigonometric:
            shifted = rel_residual(theta(base.p * x), expected)
        inverted = rel_residual(theta(1 / x), expected)
        return shifted, inverted


def check_elementary_identity(
    x: ScalarLike,
    y: ScalarLike,
    j: int,
    base: EllipticBase,
    ctx: PrecisionContext,
    factorial: Optional[FactorialFn] = None,
) -> mpf:
    """Residual of (x)_{j-1}/(y)_{j-1} = (x/y)^{j-1} (q^{2-j}/x)_{j-1}/(q^{2-j}/y)_{j-1}."""
    with ctx.working():
        up = factorial or (lambda a, k: epoch(a, k, base, ctx))
        x = to_scalar(x)
        y = to_scalar(y)
        k = j - 1
        shift = pow_int(base.q, 2 - j)
        lhs = up(x, k) / up(y, k)
        rhs = pow_int(x / y, k) * up(shift / x, k) / up(shift / y, k)
        return rel_residual(lhs, rhs)


def check_product_identities(
    a: ScalarLike,
    n: int,
    base: EllipticBase,
    ctx: PrecisionContext,
    factorial: Optional[FactorialFn] = None,
) -> mpf:
    """Largest residual among the three members of

        prod_{j=2}^n (aq^{j-2})_{j-1} = prod_{j=2}^n (aq^{2n-2j})_{j-1}
            = (-a)^{C(n,2)} q^{3 C(n,3)} prod_{j=2}^n (q^{2-2n+j}/a)_{j-1}.
    """
    with ctx.working():
        up = factorial or (lambda z, k: epoch(z, k, base, ctx))
        a = to_scalar(a)
        q = base.q
        first = mpc(1)
        second = mpc(1)
        third = pow_int(-a, binom2(n)) * pow_int(q, 3 * binom3(n))
        for j in range(2, n + 1):
            first *= up(a * pow_int(q, j - 2), j - 1)
            second *= up(a * pow_int(q, 2 * n - 2 * j), j - 1)
            third *= up(pow_int(q, 2 - 2 * n + j) / a, j - 1)
        return max(rel_residual(first, second), rel_residual(first, third))
