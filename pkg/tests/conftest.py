import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from interlacements import get_table  # noqa: E402


@pytest.fixture(scope="session")
def g3():
    return get_table(3)


@pytest.fixture(scope="session")
def g0_d3(g3):
    return g3.value((0, 0, 0))
