import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from offtrail.controller import RobotState, SkidSteerParams, drive_to_goal
from offtrail.topomap import (
    CAMERA_BEARINGS,
    EdgeState,
    NodeKind,
    Pose,
    TopoMap,
    connect_neighbors,
    insert_visited_node,
    map_from_dict,
    map_to_dict,
    to_local,
)
from offtrail.traversability import AlwaysTraversable, OraclePredictor


class Const:
    """Predictor returning a fixed verdict, counting calls."""

    def __init__(self, verdict):
        self.verdict, self.calls = verdict, 0

    def predict_edge(self, topo, a, b):
        self.calls += 1
        return self.verdict


def test_pose_heading_normalized():
    assert Pose(0, 0, 3 * math.pi).heading == math.pi
    assert math.isclose(Pose(0, 0, -3 * math.pi / 2).heading, math.pi / 2)


@pytest.mark.parametrize("pose,g,want", [
    (Pose(0, 0, 0), (1, 0), (1, 0)),
    (Pose(0, 0, math.pi / 2), (0, 1), (1, 0)),
    (Pose(2, 0, 0), (2, 0), (0, 0)),
])
def test_to_local(pose, g, want):
    got = to_local(pose, g)
    assert got == pytest.approx(want, abs=1e-12)


def test_view_record_sectors():
    topo = TopoMap()
    nid = topo.add_node(Pose(0, 0, 0.3), NodeKind.VISITED)
    v = topo.nodes[nid].view
    assert v.capture_heading == pytest.approx(0.3)
    assert [s.bearing for s in v.sectors] == list(CAMERA_BEARINGS)
    assert all(s.fov == pytest.approx(math.radians(100)) and s.range == 10 for s in v.sectors)
    fid = topo.add_node(Pose(1, 1), NodeKind.FRONTIER)
    assert topo.nodes[fid].view is None


def test_connect_radius():
    topo = TopoMap()
    a = topo.add_node(Pose(0, 0), NodeKind.VISITED)
    b = topo.add_node(Pose(0, 2.9), NodeKind.VISITED)
    c = topo.add_node(Pose(0, -3.1), NodeKind.VISITED)
    connect_neighbors(topo, a, 3.0, Const(EdgeState.TRAVERSABLE))
    assert topo.state(a, b) is EdgeState.TRAVERSABLE
    assert topo.edge(a, c) is None


def test_frontier_pair_unknown(empty_world):
    topo = TopoMap()
    f1 = topo.add_node(Pose(10, 10), NodeKind.FRONTIER)
    f2 = topo.add_node(Pose(11, 10), NodeKind.FRONTIER)
    connect_neighbors(topo, f2, 3.0, OraclePredictor(empty_world))
    assert topo.state(f1, f2) is EdgeState.UNKNOWN
    connect_neighbors(topo, f2, 3.0, AlwaysTraversable(empty_world))
    assert topo.state(f1, f2) is EdgeState.UNKNOWN


def test_only_unknown_is_reevaluated():
    topo = TopoMap()
    a = topo.add_node(Pose(0, 0), NodeKind.VISITED)
    b = topo.add_node(Pose(1, 0), NodeKind.VISITED)
    c = topo.add_node(Pose(0, 1), NodeKind.VISITED)
    topo.set_edge(a, b, EdgeState.UNTRAVERSABLE)
    topo.set_edge(a, c, EdgeState.UNKNOWN)
    p = Const(EdgeState.TRAVERSABLE)
    connect_neighbors(topo, a, 3.0, p)
    assert topo.state(a, b) is EdgeState.UNTRAVERSABLE
    assert topo.state(a, c) is EdgeState.TRAVERSABLE


def test_intervention_relabel_is_permanent():
    topo = TopoMap()
    a = topo.add_node(Pose(0, 0), NodeKind.VISITED)
    b = topo.add_node(Pose(1, 0), NodeKind.VISITED)
    topo.set_edge(a, b, EdgeState.UNKNOWN)
    topo.relabel_untraversable(a, b)
    topo.set_edge(a, b, EdgeState.TRAVERSABLE)
    connect_neighbors(topo, a, 3.0, Const(EdgeState.TRAVERSABLE))
    assert topo.state(a, b) is EdgeState.UNTRAVERSABLE


def test_edge_invariants():
    topo = TopoMap()
    a = topo.add_node(Pose(0, 0), NodeKind.VISITED)
    b = topo.add_node(Pose(3, 4), NodeKind.VISITED)
    e = topo.set_edge(b, a, EdgeState.TRAVERSABLE)
    assert e.length == pytest.approx(5.0, abs=1e-9)
    assert list(topo.edges) == [(a, b)]
    with pytest.raises(ValueError):
        topo.set_edge(a, a, EdgeState.TRAVERSABLE)


def test_first_node_has_no_chain_edge():
    topo = TopoMap()
    n = insert_visited_node(topo, Pose(0, 0), None, 3.0, Const(EdgeState.UNKNOWN))
    assert topo.edges == {}
    m = insert_visited_node(topo, Pose(1, 0), n, 3.0, Const(EdgeState.UNKNOWN))
    assert topo.state(n, m) is EdgeState.TRAVERSABLE
    assert topo.edge(n, m).driven


def test_odometry_insertion_straight_drive(empty_world):
    """2.5 m straight with d = 1 gives visited nodes at arc length 0, 1, 2."""
    params = SkidSteerParams()
    topo = TopoMap()
    pred = Const(EdgeState.UNKNOWN)
    n0 = insert_visited_node(topo, Pose(5, 10), None, 3.0, pred)
    goal = topo.add_node(Pose(7.5, 10), NodeKind.FRONTIER)
    chain = {"prev": n0}

    def on_tick(s, _):
        if s.odometer >= 1.0 - 1e-9:
            chain["prev"] = insert_visited_node(topo, s.pose, chain["prev"], 3.0, pred)
            return RobotState(s.pose, 0.0, chain["prev"])
        return s

    res = drive_to_goal(RobotState(Pose(5, 10), 0.0, n0), goal, topo, empty_world, params,
                        on_tick=on_tick)
    assert res.outcome.value == "Reached"
    vis = topo.visited_ids()
    assert len(vis) == 3
    xs = [topo.nodes[n].pose.x - 5 for n in vis]
    assert xs == pytest.approx([0.0, 1.0, 2.0], abs=1e-9)
    chain_edges = [e for e in topo.edges.values() if e.driven]
    assert len(chain_edges) == 2
    assert all(e.state is EdgeState.TRAVERSABLE for e in chain_edges)


def test_radius_query_examples():
    topo = TopoMap()
    assert topo.radius_query((0, 0), 3) == []
    n = topo.add_node(Pose(1.5, -2.0), NodeKind.VISITED)
    assert topo.radius_query((1.5, -2.0), 0.0) == [n]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 1000), st.integers(1, 300), st.floats(0, 6))
def test_radius_query_matches_scan(seed, n, r):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 20, size=(n, 2))
    topo = TopoMap()
    for x, y in pts:
        topo.add_node(Pose(float(x), float(y)), NodeKind.FRONTIER)
    # mutate to exercise index rebuilds
    for nid in list(topo.nodes)[: n // 3]:
        topo.remove_node(nid)
    for _ in range(5):
        q = tuple(rng.uniform(-2, 22, size=2))
        want = {nid for nid, nd in topo.nodes.items()
                if math.hypot(nd.pose.x - q[0], nd.pose.y - q[1]) <= r}
        assert set(topo.radius_query(q, r)) == want


def test_radius_query_100_nodes():
    rng = np.random.default_rng(100)
    topo = TopoMap()
    for x, y in rng.uniform(0, 20, size=(100, 2)):
        topo.add_node(Pose(x, y), NodeKind.VISITED)
    for q in rng.uniform(0, 20, size=(50, 2)):
        want = sorted(nid for nid, nd in topo.nodes.items()
                      if math.hypot(nd.pose.x - q[0], nd.pose.y - q[1]) <= 3.0)
        assert sorted(topo.radius_query(tuple(q), 3.0)) == want


def test_map_dict_round_trip():
    topo = TopoMap()
    a = topo.add_node(Pose(0, 0, 0.5), NodeKind.VISITED)
    b = topo.add_node(Pose(2, 0), NodeKind.FRONTIER)
    c = topo.add_node(Pose(1, 1, -1.0), NodeKind.VISITED)
    topo.set_edge(a, b, EdgeState.TRAVERSABLE)
    topo.set_edge(b, c, EdgeState.UNKNOWN)
    topo.relabel_untraversable(a, c)
    d = map_to_dict(topo, lambda p: p[0] + p[1])
    assert d["nodes"][2]["terrain_height"] == 2.0
    assert set(d["edges"][0]) >= {"a", "b", "state", "length"}
    back = map_from_dict(d)
    assert back == topo
    assert back.edge(a, c).locked


def test_map_from_dict_rejects_bad_schema():
    with pytest.raises(ValueError):
        map_from_dict({"schema_version": 99, "nodes": [], "edges": []})
