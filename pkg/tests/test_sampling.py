"""Tests for the seeded parameter sampler."""

from __future__ import annotations

from typing import Callable

import numpy as np
import pytest
from mpmath import mpf

from src.campaign.sampling import (
    ParameterSampler,
    SamplerConfig,
    SamplerExhaustedError,
    sample_scalar,
)
from src.core.numeric import PrecisionContext

SamplerFactory = Callable[..., ParameterSampler]


class TestSamplerConfig:
    @pytest.mark.parametrize(
        "overrides",
        [
            {"seed": -1},
            {"seed": 2**64},
            {"modulus_range": (0.0, 1.0)},
            {"modulus_range": (2.0, 1.0)},
            {"q_modulus_range": (-1.0, 1.0)},
            {"p_modulus_max": 1.0},
            {"max_rejections": 0},
            {"pole_threshold": 0.0},
        ],
    )
    def test_rejects_invalid_values(self, overrides: dict) -> None:
        with pytest.raises(ValueError):
            SamplerConfig(**overrides)

    def test_for_trial_offsets_the_seed(self) -> None:
        cfg = SamplerConfig(seed=40)
        assert cfg.for_trial(2).seed == 42
        assert SamplerConfig(seed=2**64 - 1).for_trial(1).seed == 0


class TestScalars:
    def test_modulus_window(self) -> None:
        rng = np.random.default_rng(0)
        for _ in range(200):
            value = sample_scalar(rng, (0.5, 1.5))
            assert mpf("0.5") - mpf(10) ** -12 <= abs(value) <= mpf("1.5") + mpf(10) ** -12

    def test_same_seed_same_draws(self, make_sampler: SamplerFactory) -> None:
        first = make_sampler(7).scalars(5)
        second = make_sampler(7).scalars(5)
        assert first == second

    def test_different_seeds_differ(self, make_sampler: SamplerFactory) -> None:
        assert make_sampler(7).scalars(3) != make_sampler(8).scalars(3)

    def test_nome_window(self, make_sampler: SamplerFactory) -> None:
        sampler = make_sampler(5)
        for _ in range(50):
            base = sampler.base()
            assert abs(base.p) <= 0.3 + 1e-12
            assert 0.8 - 1e-12 <= abs(base.q) <= 1.25 + 1e-12

    def test_trigonometric_nome(self, make_sampler: SamplerFactory) -> None:
        assert make_sampler(5, trigonometric=True).base().p == 0
        assert make_sampler(5, p_modulus_max=0.0).base().p == 0


class TestIdentitySamplers:
    @pytest.mark.parametrize("n", [1, 3, 5])
    def test_dt_is_balanced(self, ctx: PrecisionContext, make_sampler: SamplerFactory, n: int) -> None:
        p = make_sampler(n).sample_dt(n)
        assert p.n == n
        p.check_constraint(ctx)

    def test_dt_is_reproducible(self, make_sampler: SamplerFactory) -> None:
        assert make_sampler(3).sample_dt(3).digest() == make_sampler(3).sample_dt(3).digest()

    def test_dt_constant_d(self, ctx: PrecisionContext, make_sampler: SamplerFactory) -> None:
        p = make_sampler(4).sample_dt(4, constant_d=True)
        assert len(set(p.d)) == 1
        p.check_constraint(ctx)

    def test_jackson_is_balanced(self, ctx: PrecisionContext, make_sampler: SamplerFactory) -> None:
        make_sampler(2).sample_jackson(4).check_constraint(ctx)

    def test_cnt_is_balanced(self, ctx: PrecisionContext, make_sampler: SamplerFactory) -> None:
        p = make_sampler(2).sample_cnt(3, (2, 1, 3))
        assert p.m == (2, 1, 3)
        p.check_constraint(ctx)

    def test_warnaar_points_are_distinct(self, make_sampler: SamplerFactory) -> None:
        p = make_sampler(6).sample_warnaar(4)
        assert len(set(p.x)) == 4

    def test_tdt(self, make_sampler: SamplerFactory) -> None:
        p = make_sampler(6, trigonometric=True).sample_tdt(3)
        assert p.n == 3
        assert len(p.z) == len(p.a) == 3


class TestRejection:
    def test_custom_threshold(self, ctx: PrecisionContext, make_sampler: SamplerFactory) -> None:
        assert make_sampler(1).threshold == ctx.pole_threshold
        assert make_sampler(1, pole_threshold=1e-10).threshold == mpf(1e-10)

    def test_exhaustion(self, make_sampler: SamplerFactory) -> None:
        """A threshold no theta value can clear rejects every draw."""
        sampler = make_sampler(1, pole_threshold=1e30, max_rejections=3)
        with pytest.raises(SamplerExhaustedError, match="could not find generic parameters"):
            sampler.sample_dt(2)
        assert sampler.rejections == 3
