import numpy as np
import pytest

from bandhomog import detect_threshold
from bandhomog.presets import free_chain, free_square, mathieu_chain


@pytest.fixture(scope="session")
def free1d():
    return free_chain(cutoff_modes=8)


@pytest.fixture(scope="session")
def free2d():
    return free_square(cutoff_modes=4)


@pytest.fixture(scope="session")
def mathieu():
    return mathieu_chain(amplitude=2.0, cutoff_modes=8)


@pytest.fixture(scope="session")
def dirac_tp(free1d):
    lat, basis, coeffs = free1d
    return detect_threshold(coeffs, basis, [np.pi], 1)


@pytest.fixture(scope="session")
def mathieu_tp_edge(mathieu):
    """Mathieu threshold at the gap edge k0 = pi (simple after the gap opens)."""
    lat, basis, coeffs = mathieu
    return detect_threshold(coeffs, basis, [np.pi], 1)


@pytest.fixture(scope="session")
def mathieu_tp_bottom(mathieu):
    """Mathieu threshold at the spectral bottom k0 = 0."""
    lat, basis, coeffs = mathieu
    return detect_threshold(coeffs, basis, [0.0], 1)
