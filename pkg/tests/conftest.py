import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from solarcast.solar_geometry import GeoLocation  # noqa: E402


@pytest.fixture
def station():
    return GeoLocation(42.56, -83.64)


@pytest.fixture
def data_root(tmp_path):
    root = tmp_path / "records"
    root.mkdir()
    return root
