import math

import pytest

from offtrail.terrain import WorldParams, generate_world, world_with_obstacles
from offtrail.topomap import Node, NodeKind, Pose, ViewParams, make_view

EMPTY = dict(tree_density=0.0, rock_density=0.0, pond_density=0.0, steep_hill_density=0.0)


def flat_params(size: float = 20.0, **kw) -> WorldParams:
    base = dict(width=size, height=size, hill_amplitude=0.0, **EMPTY)
    base.update(kw)
    return WorldParams(**base)


def flat_world(obstacles=(), size: float = 20.0, seed: int = 0, **kw):
    return world_with_obstacles(seed, flat_params(size, **kw), obstacles)


def visited(nid: int, x: float, y: float, heading: float = 0.0,
            vp: ViewParams = ViewParams()) -> Node:
    return Node(nid, Pose(x, y, heading), NodeKind.VISITED, make_view(heading, vp.fov, vp.range))


def frontier(nid: int, x: float, y: float) -> Node:
    return Node(nid, Pose(x, y, 0.0), NodeKind.FRONTIER)


@pytest.fixture(scope="session")
def empty_world():
    return flat_world()


@pytest.fixture(scope="session")
def default_world():
    return generate_world(7, WorldParams())


HALF_PI = math.pi / 2
