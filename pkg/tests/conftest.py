"""
Shared pytest fixtures for the verifier test suite.

Most tests run at 128 bits (plus guard) with a loose tolerance so the suite
stays fast; a 256-bit context is available for the acceptance-level checks.
Hand-computed values live in ground-truth/hand_values.json.
"""

import json
from pathlib import Path
from typing import Any, Callable, Dict

import pytest

from src.campaign.sampling import ParameterSampler, SamplerConfig
from src.core.numeric import PrecisionContext, make_context


# Path to the project root (parent of tests/)
PROJECT_ROOT = Path(__file__).parent.parent

FAST_TOLERANCE = 1e-25
FAST_P_MAX = 0.3


@pytest.fixture
def hand_values() -> Dict[str, Any]:
    """
    Load the hand-computed reference values.

    Returns:
        Dict keyed by quantity (theta, trig_epoch, tdt, determinants, ...).
    """
    ground_truth_path = PROJECT_ROOT / "ground-truth" / "hand_values.json"
    with open(ground_truth_path, "r", encoding="utf-8") as f:
        return json.load(f)


@pytest.fixture
def ctx() -> PrecisionContext:
    """Fast context: 128 bits + 32 guard bits, tolerance 1e-25."""
    return make_context(128, 32, FAST_TOLERANCE)


@pytest.fixture
def ctx256() -> PrecisionContext:
    """Default campaign context: 256 bits + 32 guard bits, tolerance 1e-35."""
    return make_context(256, 32, 1e-35)


@pytest.fixture
def make_sampler(ctx: PrecisionContext) -> Callable[..., ParameterSampler]:
    """
    Factory for seeded samplers on the fast context.

    Returns:
        Callable taking a seed plus SamplerConfig overrides.
    """

    def factory(seed: int = 0, **overrides: Any) -> ParameterSampler:
        overrides.setdefault("p_modulus_max", FAST_P_MAX)
        return ParameterSampler(SamplerConfig(seed=seed, **overrides), ctx)

    return factory


@pytest.fixture
def campaign_values() -> Dict[str, Any]:
    """Keyword arguments for a small, fast, reproducible campaign."""
    return {
        "precision_bits": 128,
        "guard_bits": 32,
        "tolerance": FAST_TOLERANCE,
        "p_max": FAST_P_MAX,
        "seed": 11,
        "record_timing": False,
    }
