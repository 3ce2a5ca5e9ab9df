"""Small dense complex matrices and their determinants."""

from __future__ import annotations

from typing import Callable, List, Sequence

import mpmath
from mpmath import mpc

from src.core.numeric import PrecisionContext, ScalarLike, to_scalar

# Laplace expansion is O(n!); the oracle is only meant for tiny orders.
MAX_COFACTOR_ORDER = 7


class MatrixError(Exception):
    """Raised when a matrix operation receives incompatible shapes."""


class ComplexMatrix:
    """Square matrix of mpc entries, treated as an immutable value.

    Entries are stored in an ``mpmath.matrix`` that is never handed out;
    ``to_mpmath`` returns a copy.
    """

    def __init__(self, rows: Sequence[Sequence[ScalarLike]]) -> None:
        n = len(rows)
        if n == 0:
            raise MatrixError("matrix order must be positive")
        if any(len(row) != n for row in rows):
            raise MatrixError("matrix must be square")
        data = mpmath.matrix(n, n)
        for j, row in enumerate(rows):
            for k, value in enumerate(row):
                data[j, k] = to_scalar(value)
        self._data = data
        self._n = n

    @classmethod
    def from_function(cls, n: int, entry: Callable[[int, int], ScalarLike]) -> "ComplexMatrix":
        """Build from ``entry(j, k)`` with 1-based indices, as in det_{1<=j,k<=n}."""
        return cls([[entry(j, k) for k in range(1, n + 1)] for j in range(1, n + 1)])

    @classmethod
    def identity(cls, n: int) -> "ComplexMatrix":
        return cls.from_function(n, lambda j, k: 1 if j == k else 0)

    @classmethod
    def _wrap(cls, data: "mpmath.matrix") -> "ComplexMatrix":
        obj = cls.__new__(cls)
        obj._data = data
        obj._n = data.rows
        return obj

    @property
    def n(self) -> int:
        return self._n

    def __getitem__(self, index: tuple) -> mpc:
        j, k = index
        return to_scalar(self._data[j, k])

    def rows(self) -> List[List[mpc]]:
        return [[self[j, k] for k in range(self._n)] for j in range(self._n)]

    def to_mpmath(self) -> "mpmath.matrix":
        return self._data.copy()

    def reversed_columns(self) -> "ComplexMatrix":
        return ComplexMatrix([list(reversed(row)) for row in self.rows()])

    def __repr__(self) -> str:
        return f"ComplexMatrix(n={self._n})"


def det_lu(m: ComplexMatrix, ctx: PrecisionContext) -> mpc:
    """Determinant by Gaussian elimination with partial pivoting by magnitude.

    A singular matrix yields a (near) zero value rather than an error.
    """
    with ctx.working():
        a = m.rows()
        n = m.n
        det = mpc(1)
        for col in range(n):
            pivot = max(range(col, n), key=lambda r: abs(a[r][col]))
            if a[pivot][col] == 0:
                return mpc(0)
            if pivot != col:
                a[col], a[pivot] = a[pivot], a[col]
                det = -det
            head = a[col][col]
            det *= head
            for r in range(col + 1, n):
                factor = a[r][col] / head
                if factor == 0:
                    continue
                row, top = a[r], a[col]
                for c in range(col + 1, n):
                    row[c] -= factor * top[c]
        return det


def det_cofactor(m: ComplexMatrix) -> mpc:
    """Determinant by first-row Laplace expansion at the current precision.

    Raises:
        MatrixError: order above MAX_COFACTOR_ORDER.
    """
    if m.n > MAX_COFACTOR_ORDER:
        raise MatrixError(f"cofactor expansion limited to n <= {MAX_COFACTOR_ORDER}, got {m.n}")
    return _laplace(m.rows())


def _laplace(rows: List[List[mpc]]) -> mpc:
    n = len(rows)
    if n == 1:
        return rows[0][0]
    total = mpc(0)
    for k, head in enumerate(rows[0]):
        if head == 0:
            continue
        minor = [row[:k] + row[k + 1:] for row in rows[1:]]
        term = head * _laplace(minor)
        total += term if k % 2 == 0 else -term
    return total


def matmul(a: ComplexMatrix, b: ComplexMatrix) -> ComplexMatrix:
    """Matrix product at the current precision.

    Raises:
        MatrixError: order mismatch.
    """
    if a.n != b.n:
        raise MatrixError(f"order mismatch: {a.n} x {b.n}")
    return ComplexMatrix._wrap(a.to_mpmath() * b.to_mpmath())
