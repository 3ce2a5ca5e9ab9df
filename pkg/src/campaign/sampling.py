"""Seeded parameter sampling for every identity.

Balancing conditions are met by solving for the last variable, so a sampled
tuple's constraint residual is pure rounding. Each candidate is run through
the same pole guard its evaluator uses; near-pole candidates are redrawn up to
``max_rejections`` times.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Tuple, TypeVar

import mpmath
import numpy as np
from mpmath import mpc, mpf

from src.core.numeric import PrecisionContext, pow_int
from src.core.theta import EllipticBase
from src.identities.evaluators import (
    DegenerateParametersError,
    guard_cnt,
    guard_dt,
    guard_jackson,
    guard_tdt,
    guard_warnaar,
)
from src.identities.params import CntParams, DtParams, JsParams, TdtParams, WdParams

logger = logging.getLogger(__name__)

T = TypeVar("T")
Guard = Callable[[T, PrecisionContext, Optional[mpf]], None]

DEFAULT_MODULUS_RANGE = (0.2, 2.0)
DEFAULT_Q_MODULUS_RANGE = (0.8, 1.25)
DEFAULT_P_MODULUS_MAX = 0.6
DEFAULT_MAX_REJECTIONS = 1000


class SamplerExhaustedError(Exception):
    """Raised when no generic parameter set was found within the rejection budget."""


@dataclass(frozen=True)
class SamplerConfig:
    """Sampling window and rejection policy.

    ``pole_threshold`` of None means the context's own threshold, which is the
    one the evaluators apply.
    """

    seed: int = 0
    modulus_range: Tuple[float, float] = DEFAULT_MODULUS_RANGE
    q_modulus_range: Tuple[float, float] = DEFAULT_Q_MODULUS_RANGE
    p_modulus_max: float = DEFAULT_P_MODULUS_MAX
    pole_threshold: Optional[float] = None
    max_rejections: int = DEFAULT_MAX_REJECTIONS
    trigonometric: bool = False

    def __post_init__(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        for name in ("modulus_range", "q_modulus_range"):
            low, high = getattr(self, name)
            if not 0 < low <= high:
                raise ValueError(f"{name} must satisfy 0 < low <= high, got ({low}, {high})")
        if not 0 <= self.p_modulus_max < 1:
            raise ValueError(f"p_modulus_max must lie in [0, 1), got {self.p_modulus_max}")
        if self.max_rejections < 1:
            raise ValueError("max_rejections must be positive")
        if self.pole_threshold is not None and self.pole_threshold <= 0:
            raise ValueError("pole_threshold must be positive")

    def for_trial(self, trial: int) -> "SamplerConfig":
        """Config seeded for one trial of a campaign (seed + trial index)."""
        return replace(self, seed=(self.seed + trial) % 2**64)


def sample_scalar(
    rng: np.random.Generator, modulus_range: Tuple[float, float] = DEFAULT_MODULUS_RANGE
) -> mpc:
    """Modulus uniform in ``modulus_range``, argument uniform in [0, 2 pi)."""
    low, high = modulus_range
    modulus = rng.uniform(low, high)
    angle = rng.uniform(0.0, 2 * math.pi)
    return mpc(mpmath.rect(mpf(float(modulus)), mpf(float(angle))))


class ParameterSampler:
    """Draws parameter tuples from one seeded generator.

    Draw order is fixed per method, so (seed, n, m, config) determines the
    output bit for bit.
    """

    def __init__(self, cfg: SamplerConfig, ctx: PrecisionContext) -> None:
        self.cfg = cfg
        self.ctx = ctx
        self.rng = np.random.default_rng(cfg.seed)
        self.rejections = 0

    @property
    def threshold(self) -> mpf:
        if self.cfg.pole_threshold is None:
            return self.ctx.pole_threshold
        return mpf(self.cfg.pole_threshold)

    # ------------------------------------------------------------------
    # Primitive draws
    # ------------------------------------------------------------------

    def scalar(self) -> mpc:
        return sample_scalar(self.rng, self.cfg.modulus_range)

    def scalars(self, count: int) -> Tuple[mpc, ...]:
        return tuple(self.scalar() for _ in range(count))

    def base(self) -> EllipticBase:
        if self.cfg.trigonometric or self.cfg.p_modulus_max == 0:
            p = mpc(0)
        else:
            modulus = self.rng.uniform(0.0, self.cfg.p_modulus_max)
            angle = self.rng.uniform(0.0, 2 * math.pi)
            p = mpc(mpmath.rect(mpf(float(modulus)), mpf(float(angle))))
        q = sample_scalar(self.rng, self.cfg.q_modulus_range)
        return EllipticBase(p=p, q=q)

    # ------------------------------------------------------------------
    # Rejection loop
    # ------------------------------------------------------------------

    def _draw(self, label: str, build: Callable[[], T], guard: Guard) -> T:
        for attempt in range(self.cfg.max_rejections):
            with self.ctx.working():
                candidate = build()
            try:
                guard(candidate, self.ctx, self.threshold)
            except DegenerateParametersError as exc:
                self.rejections += 1
                logger.debug("%s draw %d rejected: %s", label, attempt, exc)
                continue
            return candidate
        raise SamplerExhaustedError(
            f"could not find generic parameters for {label} after "
            f"{self.cfg.max_rejections} draws (seed {self.cfg.seed})"
        )

    # ------------------------------------------------------------------
    # Identity samplers
    # ------------------------------------------------------------------

    def sample_dt(
        self, n: int, guard: Optional[Guard] = None, constant_d: bool = False
    ) -> DtParams:
        """b_j c_j d_j = C for all j, solved for d_j (or for c_j when d_j is constant)."""

        def build() -> DtParams:
            base = self.base()
            a = self.scalar()
            b = self.scalars(n)
            if constant_d:
                d = self.scalar()
                k = self.scalar()
                return DtParams(base=base, n=n, a=a, b=b, c=tuple(k / bj for bj in b), d=(d,) * n)
            c = self.scalars(n)
            product = self.scalar()
            d = tuple(product / (bj * cj) for bj, cj in zip(b, c))
            return DtParams(base=base, n=n, a=a, b=b, c=c, d=d)

        return self._draw(f"dt(n={n})", build, guard or guard_dt)

    def sample_jackson(self, n: int) -> JsParams:
        """e = a^2 q^{n+1} / (bcd)."""

        def build() -> JsParams:
            base = self.base()
            a, b, c, d = self.scalars(4)
            e = a * a * pow_int(base.q, n + 1) / (b * c * d)
            return JsParams(base=base, n=n, a=a, b=b, c=c, d=d, e=e)

        return self._draw(f"jackson(n={n})", build, guard_jackson)

    def sample_cnt(self, n: int, m: Sequence[int]) -> CntParams:
        """e_j = a^2 q^{2-n+m_j} / (b c_j d_j)."""
        m = tuple(int(v) for v in m)

        def build() -> CntParams:
            base = self.base()
            a, b = self.scalars(2)
            c = self.scalars(n)
            d = self.scalars(n)
            e = tuple(
                a * a * pow_int(base.q, 2 - n + mj) / (b * cj * dj)
                for cj, dj, mj in zip(c, d, m)
            )
            return CntParams(base=base, n=n, m=m, a=a, b=b, c=c, d=d, e=e)

        return self._draw(f"cnt(n={n}, m={list(m)})", build, guard_cnt)

    def sample_warnaar(self, n: int) -> WdParams:
        """Unconstrained, with pairwise-distinct x_j."""

        def build() -> WdParams:
            base = self.base()
            a, b, c = self.scalars(3)
            return WdParams(base=base, n=n, a=a, b=b, c=c, x=self.scalars(n))

        def guard(p: WdParams, ctx: PrecisionContext, threshold: Optional[mpf]) -> None:
            limit = ctx.pole_threshold if threshold is None else threshold
            with ctx.working():
                for i in range(n):
                    for j in range(i + 1, n):
                        gap = abs(p.x[i] - p.x[j]) / abs(p.x[j])
                        if gap < limit:
                            raise DegenerateParametersError(f"x_{i + 1} = x_{j + 1}", gap)
            guard_warnaar(p, ctx, threshold)

        return self._draw(f"warnaar(n={n})", build, guard)

    def sample_tdt(self, n: int) -> TdtParams:
        """Unconstrained trigonometric tuple; only q and the (a_j z_j) denominators matter."""

        def build() -> TdtParams:
            q = sample_scalar(self.rng, self.cfg.q_modulus_range)
            return TdtParams(q=q, n=n, z=self.scalars(n), a=self.scalars(n))

        return self._draw(f"tdt(n={n})", build, guard_tdt)
