import math

import networkx as nx
import numpy as np
import pytest

from conftest import flat_world
from oracles import dijkstra_cost, random_geometric_map, scan_frontier_cells
from offtrail import explore as ex
from offtrail.config import RunConfig
from offtrail.controller import RobotState, SkidSteerParams, kinematic_time
from offtrail.explore import (
    ExplorationGrid,
    InitError,
    compute_frontiers,
    explore_loop,
    path_cost,
    plan_astar,
    select_frontier,
)
from offtrail.terrain import Rock, WorldParams, generate_world
from offtrail.topomap import EdgeState, NodeKind, Pose, TopoMap

P = SkidSteerParams()
GRID = ExplorationGrid((10.0, 10.0), 10, 2.0)


class Const:
    def __init__(self, verdict):
        self.verdict = verdict

    def predict_edge(self, topo, a, b):
        return self.verdict


def test_no_visited_no_frontiers():
    assert compute_frontiers(TopoMap(), GRID, 3.0, Const(EdgeState.TRAVERSABLE)) == []


def test_single_visited_node_frontiers():
    topo = TopoMap()
    topo.add_node(Pose(11.0, 11.0), NodeKind.VISITED)  # cell (5, 5)
    fids = compute_frontiers(topo, GRID, 3.0, Const(EdgeState.TRAVERSABLE))
    cells = sorted(GRID.cell_of(topo.nodes[f].position) for f in fids)
    assert cells == [(4, 5), (5, 4), (5, 6), (6, 5)]
    centers = {tuple(topo.nodes[f].position) for f in fids}
    assert centers == {(9.0, 11.0), (13.0, 11.0), (11.0, 9.0), (11.0, 13.0)}


def test_full_grid_no_frontiers():
    topo = TopoMap()
    for c in GRID.cells():
        topo.add_node(Pose(*GRID.cell_center(c)), NodeKind.VISITED)
    assert compute_frontiers(topo, GRID, 3.0, Const(EdgeState.TRAVERSABLE)) == []


def test_frontiers_are_stable_and_cleaned():
    topo = TopoMap()
    topo.add_node(Pose(11.0, 11.0), NodeKind.VISITED)
    pred = Const(EdgeState.TRAVERSABLE)
    first = compute_frontiers(topo, GRID, 3.0, pred)
    again = compute_frontiers(topo, GRID, 3.0, pred)
    assert first == again
    # occupy (6, 5): its frontier goes, the other three keep their ids
    topo.add_node(Pose(13.0, 11.5), NodeKind.VISITED)
    after = compute_frontiers(topo, GRID, 3.0, pred)
    gone = [f for f in first if f not in after]
    assert len(gone) == 1
    assert set(first) - set(gone) <= set(after)
    assert not any(GRID.cell_of(topo.nodes[f].position) in GRID.occupied(topo) for f in after)


def test_frontier_equivalence_random():
    rng = np.random.default_rng(0)
    for _ in range(100):
        R = int(rng.integers(2, 12))
        lam = float(rng.uniform(0.5, 3))
        grid = ExplorationGrid(tuple(rng.uniform(-5, 5, 2)), R, lam)
        topo = TopoMap()
        half = R * lam / 2
        for _ in range(int(rng.integers(0, 30))):
            p = grid.center + rng.uniform(-half * 1.2, half * 1.2, 2)
            topo.add_node(Pose(float(p[0]), float(p[1])), NodeKind.VISITED)
        fids = compute_frontiers(topo, grid, 3.0, Const(EdgeState.UNKNOWN))
        got = {grid.cell_of(topo.nodes[f].position) for f in fids}
        want = scan_frontier_cells(grid, [topo.nodes[n].position for n in topo.visited_ids()])
        assert got == want
        assert len(fids) == len(got)


def _topo_with_frontiers(robot_xy, frontiers, state=EdgeState.TRAVERSABLE):
    topo = TopoMap()
    n0 = topo.add_node(Pose(*robot_xy), NodeKind.VISITED)
    ids = []
    for xy in frontiers:
        f = topo.add_node(Pose(*xy), NodeKind.FRONTIER)
        topo.set_edge(n0, f, state)
        ids.append(f)
    return topo, n0, ids


def test_select_ahead_vs_behind():
    topo, n0, (ahead, behind) = _topo_with_frontiers((0, 0), [(4, 0), (-3, 0)])
    robot = RobotState(Pose(0, 0, 0), 0.0, n0)
    assert kinematic_time(robot.pose, (4, 0), P) == pytest.approx(4.0)
    assert kinematic_time(robot.pose, (-3, 0), P) == pytest.approx(math.pi + 3)
    assert select_frontier(topo, robot, [ahead, behind], P) == ahead
    assert select_frontier(topo, robot, [ahead, behind], P, metric="euclidean") == behind


def test_select_single_and_none():
    topo, n0, (f,) = _topo_with_frontiers((0, 0), [(2, 2)])
    robot = RobotState(Pose(0, 0, 0), 0.0, n0)
    assert select_frontier(topo, robot, [f], P) == f
    topo, n0, fs = _topo_with_frontiers((0, 0), [(2, 0), (0, 2)], EdgeState.UNTRAVERSABLE)
    assert select_frontier(topo, RobotState(Pose(0, 0), 0.0, n0), fs, P) is None
    topo, n0, fs = _topo_with_frontiers((0, 0), [(2, 0)], EdgeState.UNKNOWN)
    assert select_frontier(topo, RobotState(Pose(0, 0), 0.0, n0), fs, P) is None


def test_select_tie_lowest_id():
    topo, n0, fs = _topo_with_frontiers((0, 0), [(0, 2), (0, -2)])
    assert select_frontier(topo, RobotState(Pose(0, 0, 0), 0.0, n0), fs, P) == min(fs)


def test_astar_chain_example():
    topo = TopoMap()
    a = topo.add_node(Pose(0, 0), NodeKind.VISITED)
    b = topo.add_node(Pose(1, 0), NodeKind.VISITED)
    c = topo.add_node(Pose(2, 0), NodeKind.VISITED)
    topo.set_edge(a, b, EdgeState.TRAVERSABLE)
    topo.set_edge(b, c, EdgeState.TRAVERSABLE)
    topo.set_edge(a, c, EdgeState.UNTRAVERSABLE)
    path = plan_astar(topo, a, c)
    assert path == [a, b, c]
    assert path_cost(topo, path) == pytest.approx(2.0)
    assert plan_astar(topo, a, b) == [a, b]
    with pytest.raises(ValueError):
        plan_astar(topo, a, a)


def test_astar_disconnected():
    topo = TopoMap()
    a = topo.add_node(Pose(0, 0), NodeKind.VISITED)
    b = topo.add_node(Pose(1, 0), NodeKind.VISITED)
    topo.set_edge(a, b, EdgeState.UNKNOWN)
    assert plan_astar(topo, a, b) is None


def test_astar_matches_dijkstra_sample():
    rng = np.random.default_rng(3)
    for _ in range(10):
        topo = random_geometric_map(rng, 120, 3.0)
        a, b = (int(x) for x in rng.choice(120, 2, replace=False))
        path = plan_astar(topo, a, b)
        want = dijkstra_cost(topo, a, b)
        if want is None:
            assert path is None
        else:
            assert abs(path_cost(topo, path) - want) <= 1e-9


def test_init_error_when_start_unsafe(empty_world):
    with pytest.raises(InitError):
        explore_loop(empty_world, RunConfig(footprint=12.0))


def test_obstacle_free_full_coverage(empty_world):
    res = explore_loop(empty_world, RunConfig())
    st = res.status
    assert st.visited_cells == 100 and st.complete and not st.interventions
    assert st.unreached_cells == []
    assert st.reachable_frontiers == 0


def test_tick_budget():
    res = explore_loop(flat_world(), RunConfig(max_ticks=30))
    assert res.status.budget_exceeded and not res.status.complete


@pytest.fixture(scope="module")
def instrumented_run():
    """Default-density world with false positives, recording every drive and selection."""
    world = generate_world(4, WorldParams())
    drives, selections = [], []
    real_drive, real_select = ex.drive_to_goal, ex.select_frontier

    def drive(state, goal, topo, *a, **kw):
        drives.append((kw["from_node"], goal, topo.state(kw["from_node"], goal)))
        return real_drive(state, goal, topo, *a, **kw)

    def select(topo, robot, frontiers, params, metric="kinematic", reachable=None):
        got = real_select(topo, robot, frontiers, params, metric, reachable)
        g = nx.Graph()
        g.add_nodes_from(topo.nodes)
        g.add_edges_from(k for k, e in topo.edges.items() if e.state is EdgeState.TRAVERSABLE)
        reach = nx.node_connected_component(g, robot.node)
        cands = sorted((kinematic_time(robot.pose, topo.nodes[f].position, params), f)
                       for f in frontiers if f in reach)
        selections.append((got, cands[0][1] if cands else None))
        return got

    mp = pytest.MonkeyPatch()
    mp.setattr(ex, "drive_to_goal", drive)
    mp.setattr(ex, "select_frontier", select)
    try:
        res = explore_loop(world, RunConfig(seed=4, p_fp=0.2))
    finally:
        mp.undo()
    return res, drives, selections


def test_never_drives_non_traversable_edges(instrumented_run):
    _, drives, _ = instrumented_run
    assert drives
    assert all(state is EdgeState.TRAVERSABLE for _, _, state in drives)


def test_selection_recomputed_every_iteration(instrumented_run):
    _, _, selections = instrumented_run
    assert len(selections) > 10
    assert all(got == want for got, want in selections)


def test_failures_relabel_and_never_repeat(instrumented_run):
    res, _, _ = instrumented_run
    evs = res.status.interventions
    assert evs
    edges = [ev.edge for ev in evs]
    assert len(edges) == len(set(edges))
    for ev in evs:
        a, b = ev.edge
        # a frontier endpoint disappears once its cell is occupied
        if a in res.topo.nodes and b in res.topo.nodes:
            assert res.topo.state(a, b) is EdgeState.UNTRAVERSABLE


def test_status_consistency(instrumented_run):
    res, _, _ = instrumented_run
    st = res.status
    assert st.complete == (st.reachable_frontiers == 0)
    assert st.visited_cells + len(st.unreached_cells) == st.cells_total
    assert set(st.abandoned_cells) <= set(st.unreached_cells)
    occupied = res.grid.occupied(res.topo)
    assert not any(res.grid.cell_of(res.topo.nodes[f].position) in occupied
                   for f in res.topo.frontier_ids())


def test_chain_edges_are_traversable(instrumented_run):
    res, _, _ = instrumented_run
    assert all(e.state is EdgeState.TRAVERSABLE for e in res.topo.edges.values()
               if e.driven and not e.locked)


def test_blocked_start_terminates():
    # boxed in by tall rocks: nothing reachable, loop ends at once
    rocks = [Rock((10 + 2.6 * math.cos(t), 10 + 2.6 * math.sin(t)), 0.9, 1.0)
             for t in np.linspace(0, 2 * math.pi, 12, endpoint=False)]
    res = explore_loop(flat_world(rocks), RunConfig())
    assert res.status.complete
    assert res.status.visited_cells <= 4
