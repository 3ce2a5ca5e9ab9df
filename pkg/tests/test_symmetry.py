"""Tests for the sigma/tau action on transformation parameters."""

from __future__ import annotations

from typing import Callable

import pytest
from mpmath import mpf

from src.campaign.sampling import ParameterSampler
from src.core.numeric import PrecisionContext, rel_residual
from src.identities.evaluators import dt_lhs_determinant
from src.identities.params import DtParams
from src.identities.symmetry import (
    ORBIT_WORDS,
    SIGMA,
    TAU,
    SymElement,
    apply_tau,
    check_group_laws,
    check_orbit_consistency,
    explicit_prefactor,
    guard_symmetry,
    orbit,
    params_distance,
    sigma_map,
    tau_map,
)

SamplerFactory = Callable[..., ParameterSampler]
CLOSE = mpf(2) ** -120


@pytest.fixture
def point(ctx: PrecisionContext, make_sampler: SamplerFactory) -> DtParams:
    """A generic order-3 point, guarded at every orbit point."""
    return make_sampler(3).sample_dt(3, guard=guard_symmetry)


class TestMaps:
    def test_sigma_is_an_involution(self, ctx: PrecisionContext, point: DtParams) -> None:
        with ctx.working():
            assert params_distance(sigma_map(sigma_map(point, ctx), ctx), point) < CLOSE

    def test_tau_is_an_involution(self, ctx: PrecisionContext, point: DtParams) -> None:
        with ctx.working():
            assert params_distance(tau_map(tau_map(point, ctx), ctx), point) < CLOSE

    def test_sigma_swaps_a_and_e(self, ctx: PrecisionContext, point: DtParams) -> None:
        """The image of a is e, and the image's e is the original a."""
        with ctx.working():
            image = sigma_map(point, ctx)
            assert image.a == point.e
            assert rel_residual(image.e, point.a) < CLOSE

    def test_maps_keep_working_precision_when_called_bare(
        self, ctx: PrecisionContext, point: DtParams
    ) -> None:
        """Called outside a working block, the maps still compute at full precision."""
        sigma_twice = sigma_map(sigma_map(point, ctx), ctx)
        tau_twice = tau_map(tau_map(point, ctx), ctx)
        with ctx.working():
            assert params_distance(sigma_twice, point) < CLOSE
            assert params_distance(tau_twice, point) < CLOSE

    def test_maps_preserve_the_balancing(self, ctx: PrecisionContext, point: DtParams) -> None:
        with ctx.working():
            sigma_map(point, ctx).check_constraint(ctx)
            tau_map(point, ctx).check_constraint(ctx)

    def test_tau_at_order_one(self, ctx: PrecisionContext, make_sampler: SamplerFactory) -> None:
        """n = 1: Q = q, so tau is (q^2/a, qb/a, qc/a, qd/a) with prefactor 1."""
        p = make_sampler(8).sample_dt(1)
        image, factor = apply_tau(p, ctx)
        q = p.base.q
        with ctx.working():
            assert rel_residual(image.a, q * q / p.a) < CLOSE
            assert rel_residual(image.b[0], q * p.b[0] / p.a) < CLOSE
            assert rel_residual(image.d[0], q * p.d[0] / p.a) < CLOSE
        assert factor == 1

    def test_distance_requires_equal_orders(self, make_sampler: SamplerFactory) -> None:
        sampler = make_sampler(1)
        with pytest.raises(ValueError):
            params_distance(sampler.sample_dt(2), sampler.sample_dt(3))


class TestWords:
    def test_unknown_generator(self) -> None:
        with pytest.raises(ValueError):
            SymElement(("sigma", "rho"))

    def test_labels(self) -> None:
        assert SymElement(()).label == "id"
        assert SymElement((SIGMA, TAU)).label == "sigma.tau"

    def test_words_apply_right_to_left(self, ctx: PrecisionContext, point: DtParams) -> None:
        """sigma.tau means tau first."""
        with ctx.working():
            expected = sigma_map(tau_map(point, ctx), ctx)
        assert params_distance(SymElement((SIGMA, TAU)).map(point, ctx), expected) == 0

    def test_trace_lists_every_step(self, ctx: PrecisionContext, point: DtParams) -> None:
        steps = SymElement((SIGMA, TAU, SIGMA)).trace(point, ctx)
        assert len(steps) == 3


class TestOrbit:
    def test_six_elements(self, ctx: PrecisionContext, point: DtParams) -> None:
        elements = orbit(point, ctx)
        assert [element.word for element, _, _ in elements] == list(ORBIT_WORDS)
        _, mapped, factor = elements[0]
        assert mapped is point
        assert factor == 1

    def test_every_image_has_the_same_determinant(
        self, ctx: PrecisionContext, point: DtParams
    ) -> None:
        """det(p) = prefactor_g(p) det(g . p) for all six g."""
        lhs = dt_lhs_determinant(point, ctx)
        for element, mapped, factor in orbit(point, ctx):
            with ctx.working():
                value = factor * dt_lhs_determinant(mapped, ctx)
                assert rel_residual(lhs, value) < mpf(10) ** -30, element.label

    @pytest.mark.parametrize("word", [w for w in ORBIT_WORDS if w])
    def test_composed_prefactors_match_closed_forms(
        self, ctx: PrecisionContext, point: DtParams, word: tuple
    ) -> None:
        composed = SymElement(word).prefactor(point, ctx)
        explicit = explicit_prefactor(word, point, ctx)
        with ctx.working():
            assert rel_residual(composed, explicit) < mpf(10) ** -30

    def test_braid_word_uses_the_same_closed_form(self, ctx: PrecisionContext, point: DtParams) -> None:
        with ctx.working():
            assert explicit_prefactor((TAU, SIGMA, TAU), point, ctx) == explicit_prefactor(
                (SIGMA, TAU, SIGMA), point, ctx
            )

    def test_non_reduced_word(self, ctx: PrecisionContext, point: DtParams) -> None:
        with pytest.raises(ValueError):
            explicit_prefactor((SIGMA, SIGMA), point, ctx)


class TestChecks:
    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_group_laws(self, ctx: PrecisionContext, make_sampler: SamplerFactory, n: int) -> None:
        p = make_sampler(200 + n).sample_dt(n, guard=guard_symmetry)
        report = check_group_laws(p, ctx)
        assert report.identity_name == "group_laws"
        assert report.passed, report.checks
        assert report.checks["hexagon_distinct"] == 0

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_orbit_consistency(self, ctx: PrecisionContext, make_sampler: SamplerFactory, n: int) -> None:
        p = make_sampler(210 + n).sample_dt(n, guard=guard_symmetry)
        report = check_orbit_consistency(p, ctx)
        assert report.identity_name == "orbit"
        assert report.passed, report.checks
        assert "braid_relation" in report.checks
        assert {f"hexagon_{SymElement(w).label}" for w in ORBIT_WORDS} <= set(report.checks)
