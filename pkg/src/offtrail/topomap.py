"""Topological map: pose-stamped nodes joined by three-state edges."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Protocol

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Point, wrap_angle

MAP_SCHEMA_VERSION = 1

# camera bearings relative to the robot heading: left, front, right
CAMERA_BEARINGS = (math.pi / 2, 0.0, -math.pi / 2)


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "heading", wrap_angle(float(self.heading)))

    @property
    def position(self) -> Point:
        return (self.x, self.y)


@dataclass(frozen=True)
class Sector:
    """Ground footprint of one camera: bearing interval plus a range cutoff."""

    bearing: float  # center, relative to the capture heading
    fov: float      # full angle
    range: float

    def contains(self, g_local: Point) -> bool:
        """``g_local`` is in the capturing robot's frame."""
        d = math.hypot(g_local[0], g_local[1])
        if d > self.range:
            return False
        if d == 0.0:
            return True
        return abs(wrap_angle(math.atan2(g_local[1], g_local[0]) - self.bearing)) <= self.fov / 2


@dataclass(frozen=True)
class ViewRecord:
    capture_heading: float
    sectors: tuple[Sector, Sector, Sector]
    range: float


def make_view(capture_heading: float, fov: float, rng: float) -> ViewRecord:
    sectors = tuple(Sector(b, fov, rng) for b in CAMERA_BEARINGS)
    return ViewRecord(wrap_angle(capture_heading), sectors, rng)


@dataclass(frozen=True)
class ViewParams:
    fov: float = math.radians(100.0)
    range: float = 10.0


class NodeKind(str, enum.Enum):
    VISITED = "visited"
    FRONTIER = "frontier"


class EdgeState(str, enum.Enum):
    TRAVERSABLE = "traversable"
    UNTRAVERSABLE = "untraversable"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Node:
    id: int
    pose: Pose
    kind: NodeKind
    view: ViewRecord | None = None

    @property
    def position(self) -> Point:
        return self.pose.position

    @property
    def visited(self) -> bool:
        return self.kind is NodeKind.VISITED


@dataclass
class Edge:
    state: EdgeState
    length: float
    locked: bool = False  # set by intervention relabeling; never re-evaluated
    driven: bool = False  # created by odometry between consecutive visited nodes


class EdgePredictor(Protocol):
    def predict_edge(self, topo: "TopoMap", a: int, b: int) -> EdgeState: ...


def edge_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def to_local(pose: Pose, g: Point) -> Point:
    """Express global point ``g`` in the frame of ``pose``."""
    dx, dy = g[0] - pose.x, g[1] - pose.y
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    return (c * dx + s * dy, -s * dx + c * dy)


@dataclass
class TopoMap:
    view_params: ViewParams = field(default_factory=ViewParams)
    nodes: dict[int, Node] = field(default_factory=dict)
    edges: dict[tuple[int, int], Edge] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self._adj: dict[int, set[int]] = {i: set() for i in self.nodes}
        for a, b in self.edges:
            self._adj[a].add(b)
            self._adj[b].add(a)
        self._next_id = max(self.nodes, default=-1) + 1
        self._tree: cKDTree | None = None
        self._tree_ids: list[int] = []
        self._dirty = True

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TopoMap):
            return NotImplemented
        return (self.view_params == other.view_params and self.nodes == other.nodes
                and self.edges == other.edges)

    # nodes

    def add_node(self, pose: Pose, kind: NodeKind) -> int:
        nid = self._next_id
        self._next_id += 1
        view = None
        if kind is NodeKind.VISITED:
            view = make_view(pose.heading, self.view_params.fov, self.view_params.range)
        self.nodes[nid] = Node(nid, pose, kind, view)
        self._adj[nid] = set()
        self._dirty = True
        return nid

    def remove_node(self, nid: int) -> None:
        for other in list(self._adj[nid]):
            del self.edges[edge_key(nid, other)]
            self._adj[other].discard(nid)
        del self._adj[nid]
        del self.nodes[nid]
        self._dirty = True

    def visited_ids(self) -> list[int]:
        return [i for i, n in self.nodes.items() if n.kind is NodeKind.VISITED]

    def frontier_ids(self) -> list[int]:
        return [i for i, n in self.nodes.items() if n.kind is NodeKind.FRONTIER]

    # edges

    def edge(self, a: int, b: int) -> Edge | None:
        return self.edges.get(edge_key(a, b))

    def state(self, a: int, b: int) -> EdgeState | None:
        e = self.edges.get(edge_key(a, b))
        return e.state if e else None

    def set_edge(self, a: int, b: int, state: EdgeState, *, locked: bool = False,
                 driven: bool = False) -> Edge:
        if a == b:
            raise ValueError("edges must connect distinct nodes")
        key = edge_key(a, b)
        e = self.edges.get(key)
        if e is None:
            pa, pb = self.nodes[a].position, self.nodes[b].position
            e = Edge(state, math.hypot(pb[0] - pa[0], pb[1] - pa[1]), locked, driven)
            self.edges[key] = e
            self._adj[a].add(b)
            self._adj[b].add(a)
        elif not e.locked:
            e.state = state
            e.locked = locked
            e.driven = e.driven or driven
        return e

    def relabel_untraversable(self, a: int, b: int) -> None:
        """Intervention relabeling: permanent, survives any later predictor call."""
        self.set_edge(a, b, EdgeState.UNTRAVERSABLE, locked=True)

    def traversable_edges(self, nid: int) -> Iterable[tuple[int, float]]:
        """(neighbor, length) over Traversable edges, unordered."""
        for o in self._adj[nid]:
            e = self.edges[edge_key(nid, o)]
            if e.state is EdgeState.TRAVERSABLE:
                yield o, e.length

    def neighbors(self, nid: int, state: EdgeState | None = None) -> Iterable[int]:
        if state is None:
            return sorted(self._adj[nid])
        return sorted(o for o in self._adj[nid] if self.edges[edge_key(nid, o)].state is state)

    # spatial index

    def radius_query(self, p: Point, r: float) -> list[int]:
        """Ids of nodes with ``|position - p| <= r``."""
        if r < 0:
            raise ValueError("radius must be >= 0")
        if not self.nodes:
            return []
        if self._dirty:
            self._tree_ids = sorted(self.nodes)
            pts = np.array([self.nodes[i].position for i in self._tree_ids], dtype=float)
            self._tree = cKDTree(pts)
            self._dirty = False
        cand = self._tree.query_ball_point(p, r * (1 + 1e-9) + 1e-12)
        out = []
        for k in cand:
            nid = self._tree_ids[k]
            q = self.nodes[nid].position
            if math.hypot(q[0] - p[0], q[1] - p[1]) <= r:
                out.append(nid)
        return sorted(out)


def connect_neighbors(topo: TopoMap, nid: int, r: float, predictor: EdgePredictor
                      ) -> list[tuple[tuple[int, int], EdgeState]]:
    """Create or refresh the edges from ``nid`` to every node within ``r``.

    Existing decided (or intervention-locked) edges keep their state; only
    Unknown edges are re-evaluated.
    """
    out = []
    for other in topo.radius_query(topo.nodes[nid].position, r):
        if other == nid:
            continue
        e = topo.edge(nid, other)
        if e is not None and (e.locked or e.state is not EdgeState.UNKNOWN):
            continue
        state = predictor.predict_edge(topo, nid, other)
        topo.set_edge(nid, other, state)
        out.append((edge_key(nid, other), state))
    return out


def insert_visited_node(topo: TopoMap, pose: Pose, prev: int | None, r: float,
                        predictor: EdgePredictor) -> int:
    """Add a visited node; link it to ``prev`` as driven (Traversable), then to neighbors."""
    nid = topo.add_node(pose, NodeKind.VISITED)
    if prev is not None:
        topo.set_edge(prev, nid, EdgeState.TRAVERSABLE, driven=True)
    connect_neighbors(topo, nid, r, predictor)
    return nid


# JSON export

def map_to_dict(topo: TopoMap, height_at=None) -> dict:
    nodes = []
    for nid in sorted(topo.nodes):
        n = topo.nodes[nid]
        nodes.append({
            "id": nid, "x": n.pose.x, "y": n.pose.y, "heading": n.pose.heading,
            "kind": n.kind.value,
            "terrain_height": height_at(n.position) if height_at else 0.0,
        })
    edges = [{"a": a, "b": b, "state": e.state.value, "length": e.length,
              "locked": e.locked, "driven": e.driven}
             for (a, b), e in sorted(topo.edges.items())]
    return {
        "schema_version": MAP_SCHEMA_VERSION,
        "view": {"fov": topo.view_params.fov, "range": topo.view_params.range},
        "nodes": nodes,
        "edges": edges,
    }


def map_from_dict(d: dict) -> TopoMap:
    if d.get("schema_version") != MAP_SCHEMA_VERSION:
        raise ValueError(f"unsupported map schema_version {d.get('schema_version')!r}")
    vp = ViewParams(float(d["view"]["fov"]), float(d["view"]["range"]))
    nodes = {}
    for rec in d["nodes"]:
        kind = NodeKind(rec["kind"])
        pose = Pose(float(rec["x"]), float(rec["y"]), float(rec["heading"]))
        view = make_view(pose.heading, vp.fov, vp.range) if kind is NodeKind.VISITED else None
        nodes[int(rec["id"])] = Node(int(rec["id"]), pose, kind, view)
    edges = {}
    for rec in d["edges"]:
        a, b = int(rec["a"]), int(rec["b"])
        if a == b or a not in nodes or b not in nodes:
            raise ValueError(f"edge ({a}, {b}) references missing or identical nodes")
        edges[edge_key(a, b)] = Edge(EdgeState(rec["state"]), float(rec["length"]),
                                     bool(rec.get("locked", False)), bool(rec.get("driven", False)))
    return TopoMap(vp, nodes, edges)
