from pathlib import Path

import pytest

from biharm.domain import build_domain, load_domain

DOMAINS = Path(__file__).resolve().parent.parent / "domains"


@pytest.fixture(scope="session")
def domains_dir():
    return DOMAINS


@pytest.fixture(scope="session")
def square():
    return load_domain(DOMAINS / "square.dom")


@pytest.fixture(scope="session")
def rect():
    return load_domain(DOMAINS / "rect.dom")


@pytest.fixture(scope="session")
def lshape():
    return load_domain(DOMAINS / "lshape.dom")


@pytest.fixture(scope="session")
def cube():
    return load_domain(DOMAINS / "cube.dom")


@pytest.fixture(scope="session")
def unit_square():
    """The square [0, 1]^2 (not centred)."""
    return build_domain(2, 1.0, [(0, 0)])
