from __future__ import annotations

import numpy as np
import pytest

from evacsim.floorplan import (
    Archetype,
    Floorplan,
    GeometryParams,
    Room,
    Scenario,
    build_floorplan,
)
from evacsim.geometry import rect


@pytest.fixture(scope="session")
def fp_small():
    """Archetype A, 20 x 10 m, corridor 3 m, 4 rooms (the worked example)."""
    return build_floorplan(GeometryParams(Archetype.A, 20, 10, 3, 4))


def make_corridor_fixture(length: float = 23.0, width: float = 4.0) -> Floorplan:
    """A bare straight corridor with one small origin room at the far end and
    an exit zone across the near end. Geodesic from spawn to the zone is a
    touch over 20 m."""
    room = rect(21.0, width / 2 - 0.6, 22.2, width / 2 + 0.6)
    walls = [
        (0, 0, length, 0), (length, 0, length, width),
        (0, width, length, width), (0, 0, 0, width),
        # room perimeter, west edge fully open as the door
        (21.0, width / 2 - 0.6, 22.2, width / 2 - 0.6),
        (22.2, width / 2 - 0.6, 22.2, width / 2 + 0.6),
        (21.0, width / 2 + 0.6, 22.2, width / 2 + 0.6),
    ]
    return Floorplan(
        site_length=length,
        site_width=width,
        walls=tuple(walls),
        obstacles=(),
        rooms=(Room(room, (21.0, width / 2 - 0.6, 21.0, width / 2 + 0.6)),),
        exit_zones=(rect(0, 0, 1.0, width),),
    )


@pytest.fixture(scope="session")
def corridor_fp():
    return make_corridor_fixture()


@pytest.fixture(scope="session")
def corridor_scenario(corridor_fp):
    return Scenario(corridor_fp, ((0, 1),), (0,), 1.0, seed=42)


def make_open_floorplan(size: float = 20.0) -> Floorplan:
    """An empty square with one big room filling it and an exit strip on the
    west edge; useful for open-space step tests."""
    walls = [(0, 0, size, 0), (size, 0, size, size), (0, size, size, size), (0, 0, 0, size)]
    return Floorplan(
        site_length=size,
        site_width=size,
        walls=tuple(walls),
        obstacles=(),
        rooms=(Room(rect(2.0, 2.0, size - 2.0, size - 2.0), (2.0, 2.0, 2.0, size - 2.0)),),
        exit_zones=(rect(0, 0, 1.0, size),),
    )


@pytest.fixture(scope="session")
def open_fp():
    return make_open_floorplan()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
