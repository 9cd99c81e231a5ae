import pytest

from poser.config import WorldConfig


@pytest.fixture(scope="session")
def cfg() -> WorldConfig:
    return WorldConfig()
