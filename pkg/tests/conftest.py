import mpmath
import pytest


@pytest.fixture(autouse=True)
def mp_precision():
    """Every test starts at 30 digits and leaves the global context untouched."""
    saved = mpmath.mp.dps
    mpmath.mp.dps = 30
    yield
    mpmath.mp.dps = saved
