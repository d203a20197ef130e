"""Shared fixtures and hypothesis settings."""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from critedge.spectrum import DeformationSpectrum

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture
def pm_spectrum():
    """Two-point +-1 spectrum, the simplest critical deformation."""
    return DeformationSpectrum(
        np.array([1.0 + 0j, -1.0 + 0j]), np.array([50, 50]), 100
    )


def spectrum_close(a: DeformationSpectrum, b: DeformationSpectrum, tol: float) -> bool:
    av, bv = np.sort_complex(a.expand()), np.sort_complex(b.expand())
    return av.size == bv.size and float(np.max(np.abs(av - bv))) <= tol
