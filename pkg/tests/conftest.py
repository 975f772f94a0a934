import math

import numpy as np
import pytest

from hydronls.fields import make_grid
from hydronls.profile import ground_state


def sech_profile(x):
    """Closed-form 1D ground state ``3^(1/4) sech(2x)^(1/2)``."""
    return 3.0**0.25 / np.sqrt(np.cosh(2.0 * np.asarray(x)))


SQRT3_PI_HALF = math.sqrt(3.0) * math.pi / 2.0


@pytest.fixture(scope="session")
def ground1():
    return ground_state(1, tol=1e-10)


@pytest.fixture(scope="session")
def ground2():
    return ground_state(2, tol=1e-10)


@pytest.fixture(scope="session")
def grid1():
    return make_grid(1, 4096, 32.0)
