"""Verification reports."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional

from mpmath import mpc, mpf

from src.core.numeric import PrecisionContext, format_scalar, rel_residual, to_scalar


@dataclass(frozen=True)
class VerificationReport:
    """Both sides of one identity evaluation and their residuals.

    ``checks`` holds named sub-residuals of composite verifications; the
    headline ``rel_residual`` is the max over the primary comparison and every
    sub-check, so ``passed`` always means rel_residual <= tolerance.
    """

    identity_name: str
    lhs: mpc
    rhs: mpc
    abs_residual: mpf
    rel_residual: mpf
    passed: bool
    params_digest: str
    checks: Dict[str, mpf] = field(default_factory=dict)

    def to_dict(self, digits: int) -> Dict[str, Any]:
        return {
            "identity": self.identity_name,
            "lhs": format_scalar(self.lhs, digits),
            "rhs": format_scalar(self.rhs, digits),
            "abs_residual": format_scalar(self.abs_residual, digits),
            "rel_residual": format_scalar(self.rel_residual, digits),
            "passed": self.passed,
            "params_digest": self.params_digest,
            "checks": {name: format_scalar(value, digits) for name, value in sorted(self.checks.items())},
        }


def build_report(
    identity_name: str,
    lhs: Any,
    rhs: Any,
    ctx: PrecisionContext,
    params_digest: str,
    checks: Optional[Mapping[str, Any]] = None,
) -> VerificationReport:
    """Compare ``lhs`` with ``rhs`` (and fold in sub-checks) under ``ctx``."""
    with ctx.working():
        lhs = to_scalar(lhs)
        rhs = to_scalar(rhs)
        sub = {name: mpf(value) for name, value in (checks or {}).items()}
        primary = rel_residual(lhs, rhs)
        worst = max([primary, *sub.values()])
        return VerificationReport(
            identity_name=identity_name,
            lhs=lhs,
            rhs=rhs,
            abs_residual=abs(lhs - rhs),
            rel_residual=worst,
            passed=bool(worst <= ctx.tolerance),
            params_digest=params_digest,
            checks=sub,
        )
