"""Frontier-based exploration over the topological map."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace

from .config import RunConfig
from .controller import (
    InterventionCause,
    InterventionEvent,
    Outcome,
    RobotState,
    SkidSteerParams,
    drive_to_goal,
    kinematic_time,
)
from .geometry import Point
from .terrain import TerrainWorld, is_safe
from .topomap import (
    EdgePredictor,
    EdgeState,
    NodeKind,
    Pose,
    TopoMap,
    connect_neighbors,
    insert_visited_node,
)
from .traversability import AlwaysTraversable, NoisyPredictor, OraclePredictor

__all__ = [
    "ExplorationGrid", "ExplorationStatus", "ExplorationResult", "InitError",
    "compute_frontiers", "kinematic_time", "select_frontier", "plan_astar",
    "shortest_paths", "explore_loop", "make_predictor",
]

Cell = tuple[int, int]

# failed drives toward one frontier cell before it is given up
MAX_CELL_FAILURES = 3


class InitError(RuntimeError):
    """The start pose is not safe for the robot footprint."""


@dataclass(frozen=True)
class ExplorationGrid:
    """R x R cells of side ``lam`` centered on the start position."""

    center: Point
    R: int = 10
    lam: float = 2.0

    @property
    def origin(self) -> Point:
        half = 0.5 * self.R * self.lam
        return (self.center[0] - half, self.center[1] - half)

    def cell_of(self, p: Point) -> Cell | None:
        ox, oy = self.origin
        i = math.floor((p[0] - ox) / self.lam)
        j = math.floor((p[1] - oy) / self.lam)
        if 0 <= i < self.R and 0 <= j < self.R:
            return (i, j)
        return None

    def cell_center(self, c: Cell) -> Point:
        ox, oy = self.origin
        return (ox + (c[0] + 0.5) * self.lam, oy + (c[1] + 0.5) * self.lam)

    def cells(self) -> list[Cell]:
        return [(i, j) for i in range(self.R) for j in range(self.R)]

    def occupied(self, topo: TopoMap) -> set[Cell]:
        out = set()
        for nid in topo.visited_ids():
            c = self.cell_of(topo.nodes[nid].position)
            if c is not None:
                out.add(c)
        return out

    def frontier_cells(self, occupied: set[Cell]) -> set[Cell]:
        out = set()
        for i, j in occupied:
            for c in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
                if 0 <= c[0] < self.R and 0 <= c[1] < self.R and c not in occupied:
                    out.add(c)
        return out


def compute_frontiers(topo: TopoMap, grid: ExplorationGrid, r: float,
                      predictor: EdgePredictor,
                      excluded: set[Cell] = frozenset()) -> list[int]:
    """Sync frontier nodes with the grid and return their ids (sorted).

    Frontier nodes whose cell is no longer a frontier cell are dropped; each
    frontier cell without a node gets one at its center, connected to its
    neighbors. Surviving frontier nodes keep their ids and edge states.
    Cells in ``excluded`` never get a frontier node.
    """
    cells = grid.frontier_cells(grid.occupied(topo)) - set(excluded)
    have: dict[Cell, int] = {}
    for nid in topo.frontier_ids():
        c = grid.cell_of(topo.nodes[nid].position)
        if c is None or c not in cells or c in have:
            topo.remove_node(nid)
        else:
            have[c] = nid
    for c in sorted(cells - have.keys()):
        x, y = grid.cell_center(c)
        nid = topo.add_node(Pose(x, y, 0.0), NodeKind.FRONTIER)
        connect_neighbors(topo, nid, r, predictor)
        have[c] = nid
    return sorted(have.values())


def shortest_paths(topo: TopoMap, src: int) -> tuple[dict[int, float], dict[int, int]]:
    """Single-source Dijkstra over Traversable edges."""
    dist = {src: 0.0}
    parent: dict[int, int] = {}
    heap = [(0.0, src)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v, length in topo.traversable_edges(u):
            nd = d + length
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                parent[v] = u
                heapq.heappush(heap, (nd, v))
    return dist, parent


def plan_astar(topo: TopoMap, start: int, goal: int) -> list[int] | None:
    """Shortest path along Traversable edges; straight-line distance heuristic."""
    if start == goal:
        raise ValueError("start and goal must differ")
    gx, gy = topo.nodes[goal].position

    def h(n: int) -> float:
        x, y = topo.nodes[n].position
        return math.hypot(gx - x, gy - y)

    g = {start: 0.0}
    parent: dict[int, int] = {}
    heap = [(h(start), start)]
    closed = set()
    while heap:
        _, u = heapq.heappop(heap)
        if u in closed:
            continue
        if u == goal:
            path = [u]
            while u in parent:
                u = parent[u]
                path.append(u)
            return path[::-1]
        closed.add(u)
        for v in topo.neighbors(u, EdgeState.TRAVERSABLE):
            if v in closed:
                continue
            ng = g[u] + topo.edge(u, v).length
            if ng < g.get(v, math.inf):
                g[v] = ng
                parent[v] = u
                heapq.heappush(heap, (ng + h(v), v))
    return None


def path_cost(topo: TopoMap, path: list[int]) -> float:
    return sum(topo.edge(a, b).length for a, b in zip(path, path[1:]))


def select_frontier(topo: TopoMap, robot: RobotState, frontiers: list[int],
                    params: SkidSteerParams, metric: str = "kinematic",
                    reachable: set[int] | None = None) -> int | None:
    """Reachable frontier with the smallest turn-then-drive time (ties: lowest id).

    ``metric="euclidean"`` ranks by straight-line distance instead; kept as
    the comparison baseline.
    """
    if reachable is None:
        reachable = set(shortest_paths(topo, robot.node)[0])
    best = None
    for fid in sorted(frontiers):
        if fid not in reachable:
            continue
        p = topo.nodes[fid].position
        if metric == "kinematic":
            cost = kinematic_time(robot.pose, p, params)
        elif metric == "euclidean":
            cost = math.hypot(p[0] - robot.pose.x, p[1] - robot.pose.y)
        else:
            raise ValueError(f"unknown metric {metric!r}")
        if best is None or cost < best[0]:
            best = (cost, fid)
    return None if best is None else best[1]


@dataclass
class ExplorationStatus:
    visited_cells: int = 0
    cells_total: int = 0
    reachable_frontiers: int = 0
    distance_traveled: float = 0.0
    interventions: list[InterventionEvent] = field(default_factory=list)
    complete: bool = False
    ticks: int = 0
    iterations: int = 0
    budget_exceeded: bool = False
    unreached_cells: list[Cell] = field(default_factory=list)
    abandoned_cells: list[Cell] = field(default_factory=list)

    def interventions_by_cause(self) -> dict[str, int]:
        out = {c.value: 0 for c in InterventionCause}
        for ev in self.interventions:
            out[ev.cause.value] += 1
        return out


@dataclass
class ExplorationResult:
    topo: TopoMap
    status: ExplorationStatus
    trajectory: list[list]  # rows: tick, x, y, heading, v, w, event
    grid: ExplorationGrid
    predictor: OraclePredictor


def make_predictor(world: TerrainWorld, config: RunConfig) -> OraclePredictor:
    if config.predictor == "always_traversable":
        return AlwaysTraversable(world, config.footprint)
    return NoisyPredictor(world, config.footprint, p_fp=config.p_fp, p_fn=config.p_fn,
                          seed=config.seed)


def explore_loop(world: TerrainWorld, config: RunConfig,
                 predictor: OraclePredictor | None = None,
                 max_iterations: int = 100_000,
                 max_cell_failures: int = MAX_CELL_FAILURES) -> ExplorationResult:
    """Explore until no reachable frontier is left (or the tick budget runs out).

    Each iteration recomputes frontiers, picks one, plans with A* and drives
    only to the first waypoint of the plan. A frontier cell whose drives
    fail ``max_cell_failures`` times is abandoned: it stops being a target
    and is reported as unreached.
    """
    params = config.skid_params()
    predictor = predictor or make_predictor(world, config)
    topo = TopoMap(config.view_params())
    grid = ExplorationGrid(world.start, config.R, config.lam)
    sx, sy = world.start
    start = Pose(sx, sy, world.params.start_heading)
    if not is_safe(world, start.position, params.footprint_radius):
        raise InitError(f"start {start.position} is not safe for footprint {params.footprint_radius}")

    status = ExplorationStatus(cells_total=config.R * config.R)
    log: list[list] = []
    n0 = insert_visited_node(topo, start, None, config.r, predictor)
    state = RobotState(start, 0.0, n0, n0)
    log.append([0, start.x, start.y, start.heading, 0.0, 0.0, f"node:{n0}"])
    tick = 0

    chain = {"prev": n0}
    failures: dict[Cell, int] = {}
    abandoned: set[Cell] = set()

    def clear(nid: int) -> bool:
        return is_safe(world, topo.nodes[nid].position,
                       params.footprint_radius + params.recovery_margin)

    def on_tick(s: RobotState, tick_index: int) -> RobotState:
        if s.odometer >= config.d - 1e-9:
            nid = insert_visited_node(topo, s.pose, chain["prev"], config.r, predictor)
            chain["prev"] = nid
            log[-1][6] = _join(log[-1][6], f"node:{nid}")
            return replace(s, odometer=0.0, last_safe_node=nid if clear(nid) else s.last_safe_node)
        return s

    frontiers: list[int] = []
    while True:
        if status.iterations >= max_iterations or tick >= config.max_ticks:
            status.budget_exceeded = True
            break
        status.iterations += 1
        frontiers = compute_frontiers(topo, grid, config.r, predictor, abandoned)
        reachable = set(shortest_paths(topo, state.node)[0])
        target = select_frontier(topo, state, frontiers, params, reachable=reachable)
        if target is None:
            break
        target_cell = grid.cell_of(topo.nodes[target].position)
        path = plan_astar(topo, state.node, target)
        waypoint = path[1]
        from_node = state.node
        # driven edges were not approved by the predictor, so a failure on
        # one is the controller's fault
        if topo.edge(from_node, waypoint).driven:
            truth = EdgeState.TRAVERSABLE
        else:
            truth = predictor.truth(topo, from_node, waypoint)
        result = drive_to_goal(state, waypoint, topo, world, params, from_node=from_node,
                               edge_truth=truth, tick0=tick, on_tick=on_tick, log=log)
        tick += result.ticks
        state = result.state
        if result.outcome is Outcome.REACHED:
            if topo.nodes[waypoint].kind is NodeKind.FRONTIER:
                topo.remove_node(waypoint)
                nid = insert_visited_node(topo, state.pose, chain["prev"], config.r, predictor)
                state = replace(state, odometer=0.0, node=nid)
                tag = f"reached:{waypoint};node:{nid}"
            else:
                state = replace(state, node=waypoint)
                tag = f"reached:{waypoint}"
            if clear(state.node):
                state = replace(state, last_safe_node=state.node)
            chain["prev"] = state.node
            if log[-1][0] == tick:
                log[-1][6] = _join(log[-1][6], tag)
            else:
                p = state.pose
                log.append([tick, p.x, p.y, p.heading, 0.0, 0.0, tag])
        else:
            status.interventions.append(result.event)
            chain["prev"] = state.node
            failures[target_cell] = failures.get(target_cell, 0) + 1
            if failures[target_cell] >= max_cell_failures:
                abandoned.add(target_cell)

    status.distance_traveled = sum(row[4] for row in log) * params.tick
    status.ticks = tick
    occupied = grid.occupied(topo)
    status.visited_cells = len(occupied)
    status.unreached_cells = sorted(set(grid.cells()) - occupied)
    status.abandoned_cells = sorted(abandoned - occupied)
    frontiers = topo.frontier_ids()
    reachable = set(shortest_paths(topo, state.node)[0])
    status.reachable_frontiers = sum(1 for f in frontiers if f in reachable)
    status.complete = status.reachable_frontiers == 0
    return ExplorationResult(topo, status, log, grid, predictor)


def _join(a: str, b: str) -> str:
    return f"{a};{b}" if a else b
