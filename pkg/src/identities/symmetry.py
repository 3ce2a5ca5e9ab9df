"""The S3 action on determinant-transformation parameters.

sigma rewrites the determinant through the a <-> e swap of the main
transformation; tau is the column reversal. Words compose like functions:
``("sigma", "tau")`` applies tau first, then sigma. Each word carries the
prefactor relating the original determinant to the determinant at the mapped
parameters:

    det_lhs(p) = prefactor_w(p) * det_lhs(w . p)
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from mpmath import mpc, mpf

from src.core.numeric import PrecisionContext, pow_int, rel_residual
from src.identities.evaluators import (
    EtBranch,
    FactorialCache,
    PoleItem,
    dt_lhs_determinant,
    dt_poles,
    dt_prefactor,
    et_prefactor,
    orbit_poles,
    ts_prefactor,
)
from src.identities.params import DtParams
from src.identities.report import VerificationReport, build_report

logger = logging.getLogger(__name__)

SIGMA = "sigma"
TAU = "tau"
GENERATORS = (SIGMA, TAU)

Word = Tuple[str, ...]

ORBIT_WORDS: Tuple[Word, ...] = (
    (),
    (SIGMA,),
    (TAU,),
    (SIGMA, TAU),
    (TAU, SIGMA),
    (SIGMA, TAU, SIGMA),
)

# composite words and the member of the composite transformation they produce
WORD_BRANCHES: Dict[Word, EtBranch] = {
    (SIGMA, TAU): EtBranch.FIRST,
    (TAU, SIGMA): EtBranch.SECOND,
    (SIGMA, TAU, SIGMA): EtBranch.THIRD,
}


def sigma_map(p: DtParams, ctx: PrecisionContext) -> DtParams:
    """(a, b_j, c_j, d_j) -> (e, a/c_jd_j, a/b_jd_j, a/b_jc_j)."""
    with ctx.working():
        a = p.a
        return DtParams(
            base=p.base,
            n=p.n,
            a=p.e,
            b=tuple(a / (c * d) for c, d in zip(p.c, p.d)),
            c=tuple(a / (b * d) for b, d in zip(p.b, p.d)),
            d=tuple(a / (b * c) for b, c in zip(p.b, p.c)),
        )


def tau_map(p: DtParams, ctx: PrecisionContext) -> DtParams:
    """(a, b_j, c_j, d_j) -> (Q^2/a, Qb_j/a, Qc_j/a, Qd_j/a) with Q = q^{2-n}."""
    with ctx.working():
        shift = pow_int(p.base.q, 2 - p.n)
        scale = shift / p.a
        return DtParams(
            base=p.base,
            n=p.n,
            a=shift * shift / p.a,
            b=tuple(scale * b for b in p.b),
            c=tuple(scale * c for c in p.c),
            d=tuple(scale * d for d in p.d),
        )


def apply_sigma(p: DtParams, ctx: PrecisionContext) -> Tuple[DtParams, mpc]:
    """sigma's parameter map together with the main transformation's prefactor."""
    p.check_constraint(ctx)
    with ctx.working():
        return sigma_map(p, ctx), dt_prefactor(p, ctx)


def apply_tau(p: DtParams, ctx: PrecisionContext) -> Tuple[DtParams, mpc]:
    """tau's parameter map together with the column-reversal prefactor."""
    p.check_constraint(ctx)
    with ctx.working():
        return tau_map(p, ctx), ts_prefactor(p, ctx)


_APPLY = {SIGMA: apply_sigma, TAU: apply_tau}
_MAP = {SIGMA: sigma_map, TAU: tau_map}


@dataclass(frozen=True)
class SymElement:
    """A word over {sigma, tau}; the orbit uses the six reduced ones."""

    word: Word

    def __post_init__(self) -> None:
        unknown = [g for g in self.word if g not in GENERATORS]
        if unknown:
            raise ValueError(f"unknown generators {unknown}; expected {GENERATORS}")

    @property
    def label(self) -> str:
        return ".".join(self.word) or "id"

    def trace(self, p: DtParams, ctx: PrecisionContext) -> List[Tuple[DtParams, mpc]]:
        """Intermediate points, rightmost generator first, with each step's prefactor."""
        steps: List[Tuple[DtParams, mpc]] = []
        point = p
        for generator in reversed(self.word):
            point, factor = _APPLY[generator](point, ctx)
            steps.append((point, factor))
        return steps

    def map(self, p: DtParams, ctx: PrecisionContext) -> DtParams:
        steps = self.trace(p, ctx)
        return steps[-1][0] if steps else p

    def prefactor(self, p: DtParams, ctx: PrecisionContext) -> mpc:
        with ctx.working():
            value = mpc(1)
            for _, factor in self.trace(p, ctx):
                value *= factor
            return value

    def apply(self, p: DtParams, ctx: PrecisionContext) -> Tuple[DtParams, mpc]:
        with ctx.working():
            point = p
            value = mpc(1)
            for point, factor in self.trace(p, ctx):
                value *= factor
            return point, value


def orbit(p: DtParams, ctx: PrecisionContext) -> List[Tuple[SymElement, DtParams, mpc]]:
    """The six orbit elements with their mapped parameters and composed prefactors."""
    result = []
    for word in ORBIT_WORDS:
        element = SymElement(word)
        mapped, factor = element.apply(p, ctx)
        result.append((element, mapped, factor))
    return result


def explicit_prefactor(word: Sequence[str], p: DtParams, ctx: PrecisionContext) -> mpc:
    """Closed-form prefactor of an orbit word, evaluated at p only."""
    word = tuple(word)
    if word == ():
        return mpc(1)
    if word == (SIGMA,):
        return dt_prefactor(p, ctx)
    if word == (TAU,):
        return ts_prefactor(p, ctx)
    if word == (TAU, SIGMA, TAU):
        word = (SIGMA, TAU, SIGMA)
    if word not in WORD_BRANCHES:
        raise ValueError(f"{'.'.join(word)} is not a reduced orbit word")
    return et_prefactor(p, WORD_BRANCHES[word], ctx)


def params_distance(left: DtParams, right: DtParams) -> mpf:
    """Largest componentwise relative difference."""
    if left.n != right.n:
        raise ValueError(f"order mismatch: {left.n} vs {right.n}")
    return max(rel_residual(x, y) for x, y in zip(left.components(), right.components()))


def symmetry_poles(p: DtParams, ctx: PrecisionContext) -> List[PoleItem]:
    """Denominators of every explicit expression plus the main prefactor at every orbit point."""
    items = orbit_poles(p)
    point = p
    with ctx.working():
        # alternating sigma, tau from p visits all six orbit points
        for generator in (SIGMA, TAU) * 3:
            items += dt_poles(point)
            point = _MAP[generator](point, ctx)
    return items


def guard_symmetry(p: DtParams, ctx: PrecisionContext, threshold: Optional[mpf] = None) -> None:
    with ctx.working():
        FactorialCache(p.base, ctx, threshold).guard(symmetry_poles(p, ctx))


def check_group_laws(p: DtParams, ctx: PrecisionContext) -> VerificationReport:
    """sigma^2 = tau^2 = (sigma tau)^3 = id on parameters, with round-trip prefactors equal to 1."""
    with ctx.working():
        p.check_constraint(ctx)
        guard_symmetry(p, ctx)
        checks: Dict[str, mpf] = {}
        total = mpc(1)
        loops = {
            "sigma_squared": (SIGMA, SIGMA),
            "tau_squared": (TAU, TAU),
            "sigma_tau_cubed": (SIGMA, TAU) * 3,
        }
        for name, word in loops.items():
            steps = SymElement(word).trace(p, ctx)
            end = steps[-1][0]
            factor = mpc(1)
            for _, step_factor in steps:
                factor *= step_factor
            total *= factor
            checks[f"{name}_params"] = params_distance(p, end)
            checks[f"{name}_prefactor"] = rel_residual(factor, 1)
            if name == "sigma_tau_cubed":
                points = [p] + [point for point, _ in steps[:-1]]
                closest = min(
                    params_distance(x, y) for x, y in itertools.combinations(points, 2)
                )
                logger.debug("closest pair of hexagon points: %s", closest)
                checks["hexagon_distinct"] = mpf(0) if closest > ctx.pole_threshold else mpf(1)
        return build_report("group_laws", total, mpc(1), ctx, p.digest(), checks)


def check_orbit_consistency(p: DtParams, ctx: PrecisionContext) -> VerificationReport:
    """All six orbit expressions of the determinant agree.

    Per element g the check ``hexagon_<g>`` compares det_lhs(p) with
    prefactor_g(p) * det_lhs(g . p); composite words are also compared against
    their closed-form prefactors, and the braid relation is checked on the
    parameters.
    """
    with ctx.working():
        p.check_constraint(ctx)
        cache = FactorialCache(p.base, ctx)
        cache.guard(symmetry_poles(p, ctx))
        lhs = dt_lhs_determinant(p, ctx, cache)
        checks: Dict[str, mpf] = {}
        worst_value = lhs
        worst = mpf(-1)
        for element, mapped, factor in orbit(p, ctx):
            value = factor * dt_lhs_determinant(mapped, ctx)
            residual = rel_residual(lhs, value)
            checks[f"hexagon_{element.label}"] = residual
            if residual > worst:
                worst, worst_value = residual, value
            if element.word:
                explicit = explicit_prefactor(element.word, p, ctx)
                checks[f"prefactor_{element.label}"] = rel_residual(factor, explicit)
        checks["braid_relation"] = params_distance(
            SymElement((SIGMA, TAU, SIGMA)).map(p, ctx),
            SymElement((TAU, SIGMA, TAU)).map(p, ctx),
        )
        return build_report("orbit", lhs, worst_value, ctx, p.digest(), checks)
