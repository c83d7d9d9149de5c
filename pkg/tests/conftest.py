import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from contact_kappa.structure import gauthier, heisenberg  # noqa: E402

# frame u = x^2 + y^2, v = z (x^2 + y^2); degenerate at (-1, 0, 0), hence the smaller box
TEST_U, TEST_V = "x^2+y^2", "z*(x^2+y^2)"
TEST_BOX = ((-0.5, 0.5),) * 3
TEST_POINT = (0.1, 0.2, 0.0)


@pytest.fixture(scope="session")
def heis():
    return heisenberg()


@pytest.fixture(scope="session")
def twisted():
    """A structure whose Reeb field is not Killing (chi != 0 at TEST_POINT)."""
    return gauthier(TEST_U, TEST_V, box=TEST_BOX)
