import math

import pytest

from strip_homog.geometry import model_domain
from strip_homog.mesh import generate_mesh_pair


@pytest.fixture(scope="session")
def dom_02():
    """Dirichlet holes, eps = 0.2, eta = 0.5."""
    return model_domain(0.2, 0.5)


@pytest.fixture(scope="session")
def pair_02(dom_02):
    return generate_mesh_pair(dom_02, dom_02.scale * 1.25 / 4, 0.1)


@pytest.fixture(scope="session")
def robin_pair():
    dom = model_domain(0.2, 0.5, dirichlet=False)
    return dom, generate_mesh_pair(dom, dom.scale * 1.25 / 4, 0.1)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running numerical study")
