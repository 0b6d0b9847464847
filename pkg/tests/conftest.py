import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from surfsd.fem import build_coefficients, build_space  # noqa: E402
from surfsd.geometry import make_surface  # noqa: E402
from surfsd.problems import spheroid_condition, spheroid_smooth  # noqa: E402

UNIT = ((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="session")
def spheroid():
    return make_surface("spheroid", (0.5, 0.5, 0.5), (0.5, 0.25))


@pytest.fixture(scope="session")
def sphere():
    return make_surface("sphere", (0.5, 0.5, 0.5), (0.3,))


@pytest.fixture(scope="session")
def smooth_problem():
    return spheroid_smooth()


@pytest.fixture(scope="session")
def cond_problem():
    return spheroid_condition()


@pytest.fixture(scope="session")
def space8(cond_problem):
    return build_space(cond_problem.surface, UNIT, 8)


@pytest.fixture(scope="session")
def coeffs8(cond_problem, space8):
    return build_coefficients(cond_problem.alpha, cond_problem.beta, space8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
