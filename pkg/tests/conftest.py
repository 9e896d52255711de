import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from arealoc.osmag import load_floor, parse_osmag

import maps


def _graph(xml, level=0):
    return load_floor(parse_osmag(xml), level)


@pytest.fixture(scope="session")
def square_graph():
    return _graph(maps.square_room_xml())


@pytest.fixture(scope="session")
def two_room_graph():
    return _graph(maps.two_room_xml())


@pytest.fixture(scope="session")
def multi_room_graph():
    return _graph(maps.multi_room_xml())


@pytest.fixture(scope="session")
def corridor_graph():
    return _graph(maps.corridor_xml())


@pytest.fixture(scope="session")
def lshape_graph():
    return _graph(maps.lshape_room_xml())
