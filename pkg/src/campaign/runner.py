"""Verification campaigns.

A campaign runs ``trials`` seeded trials for every order n in ``[n_lo, n_hi]``
of one identity and aggregates pass / fail / reject counts per
(identity, n) cell. Trial t draws from seed + t, so a campaign is reproducible
independently of worker count and completion order.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from enum import Enum
from functools import partial
from typing import Any, Dict, List, Optional, Tuple

from mpmath import mpf
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.campaign.sampling import ParameterSampler, SamplerConfig
from src.core.linalg import MAX_COFACTOR_ORDER, ComplexMatrix, det_cofactor, det_lu
from src.core.numeric import PrecisionContext, format_scalar, make_context, rel_residual
from src.core.theta import (
    EllipticBase,
    check_elementary_identity,
    check_product_identities,
    check_quasi_periodicity,
    epoch,
    theta_series,
    trig_epoch,
)
from src.identities import evaluators as ev
from src.identities.params import digest_values
from src.identities.report import VerificationReport, build_report
from src.identities.symmetry import check_group_laws, check_orbit_consistency, guard_symmetry

logger = logging.getLogger(__name__)

MAX_ORDER = 10
MAX_TRIALS = 10**6
DEFAULT_CNT_M = (2, 1, 3)
# Execution-only settings left out of the report's spec echo.
ECHO_EXCLUDED = {"workers"}

PASS = "pass"
FAIL = "fail"
REJECT = "reject"


class CampaignSpecError(Exception):
    """Raised when campaign parameters are invalid."""


class Identity(str, Enum):
    JACKSON = "jackson"
    WARNAAR = "warnaar"
    DT = "dt"
    DT_WARNAAR = "dt_warnaar"
    TS = "ts"
    ET1 = "et1"
    ET2 = "et2"
    ET3 = "et3"
    TDT = "tdt"
    CNT = "cnt"
    XY = "xy"
    CNT_SPECIAL = "cnt_special"
    ORBIT = "orbit"
    THETA_SELFTEST = "theta_selftest"


class OutputFormat(str, Enum):
    JSON = "json"
    CSV = "csv"
    HUMAN = "human"


def cnt_m_for(n: int, m: Optional[Tuple[int, ...]]) -> Tuple[int, ...]:
    """Summation bounds for order n: the given list, or (2, 1, 3) repeated."""
    if m is not None:
        return tuple(m)
    return tuple(DEFAULT_CNT_M[j % len(DEFAULT_CNT_M)] for j in range(n))


class CampaignSpec(BaseModel):
    """Validated description of one campaign."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    identity: Identity
    n_lo: int = Field(ge=0, le=MAX_ORDER)
    n_hi: int = Field(ge=0, le=MAX_ORDER)
    trials: int = Field(default=1, ge=1, le=MAX_TRIALS)
    m: Optional[Tuple[int, ...]] = None
    precision_bits: int = Field(default=256, ge=64)
    guard_bits: int = Field(default=32, ge=0)
    tolerance: float = Field(default=1e-35, gt=0)
    seed: int = Field(default=0, ge=0, lt=2**64)
    p_max: float = Field(default=0.6, ge=0, lt=1)
    output: OutputFormat = OutputFormat.JSON
    workers: int = Field(default=1, ge=1)
    record_timing: bool = True

    @model_validator(mode="after")
    def _check_ranges(self) -> "CampaignSpec":
        if self.n_lo > self.n_hi:
            raise ValueError(f"empty order range {self.n_lo}..{self.n_hi}")
        if self.n_lo == 0 and self.identity is not Identity.JACKSON:
            raise ValueError(f"{self.identity.value} needs n >= 1")
        if self.m is not None:
            if self.identity is not Identity.CNT:
                raise ValueError("--m applies to the cnt identity only")
            if any(v < 0 for v in self.m):
                raise ValueError("m entries must be non-negative")
            if self.n_lo != self.n_hi or len(self.m) != self.n_lo:
                raise ValueError(f"m has {len(self.m)} entries but n ranges over {self.n_lo}..{self.n_hi}")
        if self.identity is Identity.CNT:
            for n in range(self.n_lo, self.n_hi + 1):
                size = 1
                for mj in cnt_m_for(n, self.m):
                    size *= mj + 1
                if size > ev.MAX_CNT_TERMS:
                    raise ValueError(f"cnt at n={n} has {size} terms, limit is {ev.MAX_CNT_TERMS}")
        if self.identity is Identity.CNT_SPECIAL and self.n_hi > ev.MAX_SPECIALIZATION_ORDER:
            raise ValueError(f"cnt_special supports n <= {ev.MAX_SPECIALIZATION_ORDER}")
        return self

    def context(self) -> PrecisionContext:
        return make_context(self.precision_bits, self.guard_bits, self.tolerance)

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(
            seed=self.seed,
            p_modulus_max=self.p_max,
            trigonometric=self.identity is Identity.TDT,
        )


def make_spec(**values: Any) -> CampaignSpec:
    """Build a spec, turning validation failures into CampaignSpecError."""
    try:
        return CampaignSpec(**values)
    except ValidationError as exc:
        raise CampaignSpecError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrialResult:
    trial: int
    n: int
    identity: str
    status: str
    lhs: str = ""
    rhs: str = ""
    rel_residual: str = ""
    checks: Dict[str, str] = field(default_factory=dict)
    message: str = ""
    residual: Optional[mpf] = None

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "trial": self.trial,
            "n": self.n,
            "identity": self.identity,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "rel_residual": self.rel_residual,
            "status": self.status,
            "checks": dict(self.checks),
        }
        if self.message:
            data["message"] = self.message
        return data


@dataclass
class CellSummary:
    """Counters for one (identity, n) cell."""

    identity: str
    n: int
    passed: int = 0
    failed: int = 0
    rejected: int = 0
    max_rel_residual: mpf = field(default_factory=lambda: mpf(0))

    def add(self, result: TrialResult) -> None:
        if result.status == PASS:
            self.passed += 1
        elif result.status == FAIL:
            self.failed += 1
        else:
            self.rejected += 1
        if result.residual is not None and result.residual > self.max_rel_residual:
            self.max_rel_residual = result.residual

    @property
    def total(self) -> int:
        return self.passed + self.failed + self.rejected


@dataclass
class CampaignResult:
    spec: CampaignSpec
    results: List[TrialResult]
    cells: List[CellSummary]
    wall_time_ms: int = 0

    @property
    def pass_count(self) -> int:
        return sum(cell.passed for cell in self.cells)

    @property
    def fail_count(self) -> int:
        return sum(cell.failed for cell in self.cells)

    @property
    def reject_count(self) -> int:
        return sum(cell.rejected for cell in self.cells)

    @property
    def max_rel_residual(self) -> mpf:
        return max((cell.max_rel_residual for cell in self.cells), default=mpf(0))

    @property
    def exit_code(self) -> int:
        return 0 if self.fail_count == 0 else 1


# ---------------------------------------------------------------------------
# Trials
# ---------------------------------------------------------------------------


def _selftest_report(sampler: ParameterSampler, n: int, ctx: PrecisionContext) -> VerificationReport:
    """One random point of the theta and determinant oracles."""
    with ctx.working():
        base = sampler.base()
        x, y, a = sampler.scalars(3)
        order = min(n, MAX_COFACTOR_ORDER - 1)
        matrix = ComplexMatrix([sampler.scalars(order) for _ in range(order)])

        cache = ev.FactorialCache(base, ctx)
        product = cache.theta(x)
        series = theta_series(x, base, ctx)
        shifted, inverted = check_quasi_periodicity(x, base, ctx, theta=cache.theta)
        trig_base = EllipticBase(p=0, q=base.q)
        checks = {
            "quasi_periodicity": shifted,
            "inversion": inverted,
            "elementary_identity": check_elementary_identity(x, y, n + 1, base, ctx, factorial=cache.up),
            "product_identities": check_product_identities(a, n, base, ctx, factorial=cache.up),
            "trig_reduction": rel_residual(epoch(a, n, trig_base, ctx), trig_epoch(a, n, base.q)),
            "det_lu_vs_cofactor": rel_residual(det_lu(matrix, ctx), det_cofactor(matrix)),
        }
        digest = digest_values(f"selftest:{n}", (base.p, base.q, x, y, a))
        return build_report(Identity.THETA_SELFTEST.value, product, series, ctx, digest, checks)


def _orbit_report(sampler: ParameterSampler, n: int, ctx: PrecisionContext) -> VerificationReport:
    p = sampler.sample_dt(n, guard=guard_symmetry)
    laws = check_group_laws(p, ctx)
    hexagon = check_orbit_consistency(p, ctx)
    checks = dict(hexagon.checks)
    checks.update({f"group_{name}": value for name, value in laws.checks.items()})
    logger.debug(
        "orbit n=%d composed vs closed-form prefactors: %s",
        n,
        {k: format_scalar(v, 5) for k, v in hexagon.checks.items() if k.startswith("prefactor_")},
    )
    return build_report(Identity.ORBIT.value, hexagon.lhs, hexagon.rhs, ctx, p.digest(), checks)


def _cnt_report(sampler: ParameterSampler, n: int, spec: CampaignSpec, ctx: PrecisionContext) -> VerificationReport:
    p = sampler.sample_cnt(n, cnt_m_for(n, spec.m))
    report = ev.eval_cnt(p, ctx)
    if n != 1:
        return report
    try:
        jackson = ev.eval_jackson(ev.cnt_as_jackson(p), ctx)
    except ev.DegenerateParametersError as exc:
        logger.debug("jackson cross-check skipped: %s", exc)
        return report
    checks = dict(report.checks)
    checks["jackson_agreement"] = rel_residual(report.lhs, jackson.lhs)
    return build_report(report.identity_name, report.lhs, report.rhs, ctx, report.params_digest, checks)


_ET_BRANCHES = {
    Identity.ET1: ev.EtBranch.FIRST,
    Identity.ET2: ev.EtBranch.SECOND,
    Identity.ET3: ev.EtBranch.THIRD,
}


def evaluate_trial(spec: CampaignSpec, n: int, trial: int) -> VerificationReport:
    """Sample and evaluate one trial; degenerate or exhausted sampling propagates."""
    ctx = spec.context()
    sampler = ParameterSampler(spec.sampler_config().for_trial(trial), ctx)
    identity = spec.identity

    if identity is Identity.JACKSON:
        return ev.eval_jackson(sampler.sample_jackson(n), ctx)
    if identity is Identity.WARNAAR:
        return ev.eval_warnaar(sampler.sample_warnaar(n), ctx)
    if identity is Identity.DT:
        return ev.eval_dt(sampler.sample_dt(n), ctx)
    if identity is Identity.DT_WARNAAR:
        return ev.check_dt_warnaar_reduction(sampler.sample_dt(n, constant_d=True), ctx)
    if identity is Identity.TS:
        return ev.eval_ts(sampler.sample_dt(n, guard=ev.guard_ts), ctx)
    if identity in _ET_BRANCHES:
        branch = _ET_BRANCHES[identity]
        p = sampler.sample_dt(n, guard=partial(ev.guard_et, branch=branch))
        return ev.eval_et(p, branch, ctx)
    if identity is Identity.TDT:
        return ev.eval_tdt(sampler.sample_tdt(n), ctx)
    if identity is Identity.CNT:
        return _cnt_report(sampler, n, spec, ctx)
    if identity is Identity.XY:
        return ev.check_xy_factorization(sampler.sample_dt(n, guard=ev.guard_xy), ctx)
    if identity is Identity.CNT_SPECIAL:
        return ev.check_cnt_specialization(sampler.sample_dt(n, guard=ev.guard_cnt_special), ctx)
    if identity is Identity.ORBIT:
        return _orbit_report(sampler, n, ctx)
    return _selftest_report(sampler, n, ctx)


def run_trial(spec: CampaignSpec, n: int, trial: int) -> TrialResult:
    """Evaluate one trial and classify it. Module-level so worker processes can pickle it."""
    name = spec.identity.value
    ctx = spec.context()
    try:
        report = evaluate_trial(spec, n, trial)
    except ev.DegenerateParametersError as exc:
        logger.debug("%s n=%d trial %d rejected: %s", name, n, trial, exc)
        return TrialResult(trial=trial, n=n, identity=name, status=REJECT, message=str(exc))
    except (ev.ConstraintViolationError, ev.CostGuardError) as exc:
        logger.warning("%s n=%d trial %d could not be verified: %s", name, n, trial, exc)
        return TrialResult(trial=trial, n=n, identity=name, status=FAIL, message=str(exc))

    data = report.to_dict(ctx.digits)
    status = PASS if report.passed else FAIL
    if status == FAIL:
        logger.warning("%s n=%d trial %d failed: rel_residual=%s", name, n, trial, data["rel_residual"])
    else:
        logger.debug("%s n=%d trial %d: rel_residual=%s", name, n, trial, format_scalar(report.rel_residual, 5))
    return TrialResult(
        trial=trial,
        n=n,
        identity=name,
        status=status,
        lhs=data["lhs"],
        rhs=data["rhs"],
        rel_residual=data["rel_residual"],
        checks=data["checks"],
        residual=report.rel_residual,
    )


def run_campaign(spec: CampaignSpec) -> CampaignResult:
    """Run every (n, trial) job, serially or on a process pool."""
    jobs = [(n, trial) for n in range(spec.n_lo, spec.n_hi + 1) for trial in range(spec.trials)]
    logger.info(
        "Campaign %s: n=%d..%d, %d trials each, %d-bit, tol %g, seed %d",
        spec.identity.value, spec.n_lo, spec.n_hi, spec.trials,
        spec.precision_bits, spec.tolerance, spec.seed,
    )
    start = time.perf_counter()
    results: List[TrialResult] = []
    if spec.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            futures = [pool.submit(run_trial, spec, n, trial) for n, trial in jobs]
            for future in as_completed(futures):
                results.append(future.result())
    else:
        for n, trial in jobs:
            results.append(run_trial(spec, n, trial))
    elapsed = int((time.perf_counter() - start) * 1000)

    results.sort(key=lambda r: (r.n, r.trial))
    cells: Dict[int, CellSummary] = {}
    for result in results:
        cells.setdefault(result.n, CellSummary(identity=result.identity, n=result.n)).add(result)
    for cell in cells.values():
        logger.info(
            "  %s n=%d: %d pass, %d fail, %d reject, max rel_residual %s",
            cell.identity, cell.n, cell.passed, cell.failed, cell.rejected,
            format_scalar(cell.max_rel_residual, 5),
        )
    return CampaignResult(
        spec=spec,
        results=results,
        cells=[cells[n] for n in sorted(cells)],
        wall_time_ms=elapsed if spec.record_timing else 0,
    )


def _with_identity(spec: CampaignSpec, identity: Identity) -> CampaignSpec:
    return make_spec(**{**spec.model_dump(), "identity": identity})


def cmd_verify(spec: CampaignSpec) -> CampaignResult:
    return run_campaign(spec)


def cmd_orbit(spec: CampaignSpec) -> CampaignResult:
    """Group laws plus the six-way orbit consistency per trial."""
    return run_campaign(_with_identity(spec, Identity.ORBIT))


def cmd_selftest(spec: CampaignSpec) -> CampaignResult:
    """Theta product/series, quasi-periodicity, factorial identities and determinant oracles."""
    return run_campaign(_with_identity(spec, Identity.THETA_SELFTEST))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _residual_text(value: mpf, spec: CampaignSpec) -> str:
    return format_scalar(value, spec.context().digits)


def to_payload(result: CampaignResult) -> Dict[str, Any]:
    spec = result.spec
    return {
        "spec": spec.model_dump(mode="json", exclude=ECHO_EXCLUDED),
        "results": [r.to_dict() for r in result.results],
        "cells": [
            {
                "identity": cell.identity,
                "n": cell.n,
                "pass": cell.passed,
                "fail": cell.failed,
                "reject": cell.rejected,
                "max_rel_residual": _residual_text(cell.max_rel_residual, spec),
            }
            for cell in result.cells
        ],
        "summary": {
            "max_rel_residual": _residual_text(result.max_rel_residual, spec),
            "pass": result.pass_count,
            "fail": result.fail_count,
            "reject": result.reject_count,
            "wall_time_ms": result.wall_time_ms,
        },
    }


def to_json(result: CampaignResult) -> str:
    """Canonical JSON: sorted keys, two-space indent, scalars as decimal strings."""
    return json.dumps(to_payload(result), sort_keys=True, indent=2)


def to_csv(result: CampaignResult) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["trial", "n", "identity", "rel_residual", "status"])
    for r in result.results:
        writer.writerow([r.trial, r.n, r.identity, r.rel_residual, r.status])
    return buffer.getvalue()


def section_lines(title: str) -> List[str]:
    """A section header as output lines."""
    return ["=" * 70, f"  {title}", "=" * 70, ""]


def subsection_lines(title: str) -> List[str]:
    return ["", f"--- {title} ---", ""]


def to_human(result: CampaignResult) -> str:
    spec = result.spec
    lines = section_lines(
        f"{spec.identity.value}: n={spec.n_lo}..{spec.n_hi}, {spec.trials} trials, "
        f"{spec.precision_bits}-bit, tol {spec.tolerance:g}, seed {spec.seed}"
    )
    for cell in result.cells:
        lines.append(
            f"  n={cell.n:<3} pass {cell.passed:<6} fail {cell.failed:<6} reject {cell.rejected:<6}"
            f" max rel_residual {format_scalar(cell.max_rel_residual, 5)}"
        )
    failures = [r for r in result.results if r.status == FAIL]
    if failures:
        lines += subsection_lines("Failures")
        for r in failures:
            detail = r.message or f"rel_residual {r.rel_residual[:12]}"
            lines.append(f"  n={r.n} trial {r.trial}: {detail}")
    lines += [
        "",
        f"  Total: {result.pass_count} pass, {result.fail_count} fail, {result.reject_count} reject"
        f" | max rel_residual {format_scalar(result.max_rel_residual, 5)}",
    ]
    if spec.record_timing:
        lines.append(f"  Wall time: {result.wall_time_ms} ms")
    return "\n".join(lines) + "\n"


def render(result: CampaignResult) -> str:
    output = result.spec.output
    if output is OutputFormat.CSV:
        return to_csv(result)
    if output is OutputFormat.HUMAN:
        return to_human(result)
    return to_json(result) + "\n"
