"""Tests for theta evaluation and elliptic shifted factorials.

The product route is checked against the triple-product series and against
mpmath's q-Pochhammer symbol: theta(x) = (x; p)_inf (p/x; p)_inf.
"""

from __future__ import annotations

from typing import Any, Dict

import mpmath
import numpy as np
import pytest
from mpmath import mpc, mpf

from src.campaign.sampling import sample_scalar
from src.core.numeric import PrecisionContext, rel_residual
from src.core.theta import (
    EllipticBase,
    ThetaError,
    check_elementary_identity,
    check_product_identities,
    check_quasi_periodicity,
    epoch,
    multi_epoch,
    theta_product,
    theta_series,
    trig_epoch,
)
from src.identities.evaluators import FactorialCache


def _random_base(rng: np.random.Generator, p_max: float = 0.4) -> EllipticBase:
    p = mpmath.rect(mpf(float(rng.uniform(0.05, p_max))), mpf(float(rng.uniform(0, 6.28))))
    q = sample_scalar(rng, (0.8, 1.25))
    return EllipticBase(p=p, q=q)


class TestEllipticBase:
    def test_rejects_unit_nome(self) -> None:
        with pytest.raises(ThetaError):
            EllipticBase.of(1, 2)

    def test_rejects_zero_base(self) -> None:
        with pytest.raises(ThetaError):
            EllipticBase.of(0.1, 0)

    def test_trigonometric_flag(self) -> None:
        assert EllipticBase.of(0, 2).trigonometric
        assert not EllipticBase.of(0.1, 2).trigonometric


class TestThetaProduct:
    def test_trigonometric_values(self, ctx: PrecisionContext, hand_values: Dict[str, Any]) -> None:
        """At p = 0 theta(x) is exactly 1 - x."""
        base = EllipticBase.of(0, 2)
        for row in hand_values["theta_trigonometric"]:
            with ctx.working():
                assert theta_product(mpc(row["x"]), base, ctx) == mpc(row["expected"])

    def test_vanishes_at_one(self, ctx: PrecisionContext) -> None:
        for p in (0, 0.3, mpc("0.2", "0.4")):
            assert theta_product(1, EllipticBase.of(p, 2), ctx) == 0

    def test_rejects_zero_argument(self, ctx: PrecisionContext) -> None:
        with pytest.raises(ThetaError):
            theta_product(0, EllipticBase.of(0.3, 2), ctx)

    def test_rejects_nome_above_cap(self, ctx: PrecisionContext) -> None:
        with pytest.raises(ThetaError):
            theta_product(2, EllipticBase.of(0.995, 2), ctx)

    def test_matches_series_oracle(self, ctx: PrecisionContext) -> None:
        """Product and triple-product series agree far below the tolerance."""
        rng = np.random.default_rng(2024)
        for _ in range(40):
            with ctx.working():
                base = _random_base(rng, p_max=0.6)
                x = sample_scalar(rng, (0.2, 2.0))
            product = theta_product(x, base, ctx)
            series = theta_series(x, base, ctx)
            with ctx.working():
                assert rel_residual(product, series) < mpf(2) ** -120

    def test_matches_q_pochhammer(self, ctx: PrecisionContext) -> None:
        rng = np.random.default_rng(7)
        for _ in range(10):
            with ctx.working():
                base = _random_base(rng)
                x = sample_scalar(rng, (0.2, 2.0))
                expected = mpmath.qp(x, base.p) * mpmath.qp(base.p / x, base.p)
                assert rel_residual(theta_product(x, base, ctx), expected) < mpf(2) ** -110

    def test_series_at_fixed_point(self, ctx: PrecisionContext) -> None:
        """x = 0.5, p = 0.25: both routes agree."""
        base = EllipticBase.of(0.25, 3)
        with ctx.working():
            x = mpf(1) / 2
            assert rel_residual(theta_product(x, base, ctx), theta_series(x, base, ctx)) < mpf(2) ** -120

    def test_series_trigonometric(self, ctx: PrecisionContext) -> None:
        assert theta_series(2, EllipticBase.of(0, 3), ctx) == -1


class TestShiftedFactorials:
    def test_empty_and_single(self, ctx: PrecisionContext) -> None:
        base = EllipticBase.of(0.2, 0.7)
        assert epoch(mpf("0.3"), 0, base, ctx) == 1
        assert epoch(mpf("0.3"), 1, base, ctx) == theta_product(mpf("0.3"), base, ctx)

    def test_three_factors(self, ctx: PrecisionContext) -> None:
        """(0.3)_3 at q = 0.7, p = 0.2 is theta(0.3) theta(0.21) theta(0.147)."""
        base = EllipticBase.of(mpf("0.2"), mpf("0.7"))
        with ctx.working():
            a = mpf("0.3")
            expected = (
                theta_series(a, base, ctx)
                * theta_series(a * base.q, base, ctx)
                * theta_series(a * base.q**2, base, ctx)
            )
            assert rel_residual(epoch(a, 3, base, ctx), expected) < mpf(2) ** -120

    def test_negative_index(self, ctx: PrecisionContext) -> None:
        with pytest.raises(ThetaError):
            epoch(2, -1, EllipticBase.of(0.2, 0.7), ctx)
        with pytest.raises(ThetaError):
            trig_epoch(2, -1, 0.5)

    def test_multi_epoch(self, ctx: PrecisionContext) -> None:
        base = EllipticBase.of(0.2, 0.7)
        assert multi_epoch([], 3, base, ctx) == 1
        with ctx.working():
            expected = epoch(2, 2, base, ctx) * epoch(3, 2, base, ctx)
            assert multi_epoch([2, 3], 2, base, ctx) == expected

    def test_trig_epoch_values(self, hand_values: Dict[str, Any]) -> None:
        for row in hand_values["trig_epoch"]:
            assert trig_epoch(mpf(row["a"]), row["k"], mpf(row["q"])) == mpf(row["expected"])

    def test_trig_epoch_matches_q_pochhammer(self, ctx: PrecisionContext) -> None:
        with ctx.working():
            a = mpc("0.4", "0.3")
            q = mpc("0.9", "-0.2")
            assert rel_residual(trig_epoch(a, 5, q), mpmath.qp(a, q, 5)) < mpf(2) ** -140

    def test_p_zero_reduction_is_exact(self, ctx: PrecisionContext) -> None:
        """epoch at p = 0 multiplies the same factors as trig_epoch."""
        with ctx.working():
            a = mpc("0.4", "0.3")
            q = mpc("0.9", "-0.2")
            assert epoch(a, 6, EllipticBase(p=0, q=q), ctx) == trig_epoch(a, 6, q)


class TestThetaIdentities:
    def test_quasi_periodicity(self, ctx: PrecisionContext) -> None:
        rng = np.random.default_rng(99)
        for _ in range(10):
            with ctx.working():
                base = _random_base(rng)
                x = sample_scalar(rng, (0.2, 2.0))
            shifted, inverted = check_quasi_periodicity(x, base, ctx)
            assert shifted < mpf(2) ** -110
            assert inverted < mpf(2) ** -110

    def test_quasi_periodicity_trigonometric(self, ctx: PrecisionContext) -> None:
        """At p = 0 only the inversion relation is meaningful."""
        shifted, inverted = check_quasi_periodicity(mpf(3), EllipticBase.of(0, 2), ctx)
        assert shifted == 0
        assert inverted < mpf(2) ** -150

    @pytest.mark.parametrize("j", [1, 2, 3, 5])
    def test_elementary_identity(self, ctx: PrecisionContext, j: int) -> None:
        rng = np.random.default_rng(j)
        with ctx.working():
            base = _random_base(rng)
            x, y = sample_scalar(rng), sample_scalar(rng)
        assert check_elementary_identity(x, y, j, base, ctx) < mpf(10) ** -30

    @pytest.mark.parametrize("n", [1, 2, 3, 4, 6])
    def test_product_identities(self, ctx: PrecisionContext, n: int) -> None:
        rng = np.random.default_rng(100 + n)
        with ctx.working():
            base = _random_base(rng)
            a = sample_scalar(rng)
        assert check_product_identities(a, n, base, ctx) < mpf(10) ** -30

    def test_memoized_routes_agree(self, ctx: PrecisionContext) -> None:
        """Feeding the helpers from a FactorialCache reproduces the direct residuals exactly."""
        rng = np.random.default_rng(7)
        with ctx.working():
            base = _random_base(rng)
            x, y, a = sample_scalar(rng), sample_scalar(rng), sample_scalar(rng)
        cache = FactorialCache(base, ctx)
        assert check_quasi_periodicity(x, base, ctx, theta=cache.theta) == check_quasi_periodicity(x, base, ctx)
        assert check_elementary_identity(x, y, 4, base, ctx, factorial=cache.up) == check_elementary_identity(
            x, y, 4, base, ctx
        )
        assert check_product_identities(a, 3, base, ctx, factorial=cache.up) == check_product_identities(
            a, 3, base, ctx
        )
