"""Ground-truth traversability for views and edges, plus noisy predictors.

A view is traversable toward a goal when a chain of safe raster cells links
the observer to the goal without leaving one camera sector. An edge is
traversable when either endpoint has such a view of the other.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .geometry import Point, wrap_angle
from .terrain import TerrainWorld, sight_clear
from .topomap import EdgeState, Node, NodeKind, Pose, Sector, TopoMap, edge_key, to_local

DEFAULT_FOOTPRINT = 0.4
_EIGHT = np.ones((3, 3), dtype=int)


class GoalOutsideSector(ValueError):
    """The goal cannot be evaluated from this view; not the same as untraversable."""


def _window(world: TerrainWorld, pose: Pose, sector: Sector) -> tuple[int, int, int, int]:
    res = world.gt_resolution
    nx, ny = world.raster_shape
    reach = sector.range + res
    i0 = max(0, int(math.floor((pose.x - reach) / res)))
    i1 = min(nx, int(math.ceil((pose.x + reach) / res)) + 1)
    j0 = max(0, int(math.floor((pose.y - reach) / res)))
    j1 = min(ny, int(math.ceil((pose.y + reach) / res)) + 1)
    return i0, i1, j0, j1


def sector_mask(world: TerrainWorld, pose: Pose, sector: Sector, footprint: float):
    """Safe, in-sector raster cells around ``pose``.

    Returns ``(mask, origin, start)``: the boolean window, the raster index of
    its corner, and the observer's cell (always admitted if safe).
    """
    i0, i1, j0, j1 = _window(world, pose, sector)
    res = world.gt_resolution
    xs = (np.arange(i0, i1) + 0.5) * res - pose.x
    ys = (np.arange(j0, j1) + 0.5) * res - pose.y
    DX, DY = np.meshgrid(xs, ys, indexing="ij")
    rel = np.arctan2(DY, DX) - (pose.heading + sector.bearing)
    rel = np.abs((rel + math.pi) % (2 * math.pi) - math.pi)
    in_sector = (np.hypot(DX, DY) <= sector.range) & (rel <= sector.fov / 2)
    safe = world.safety_raster(footprint)[i0:i1, j0:j1]
    mask = in_sector & safe
    si, sj = world.raster_index(pose.position)
    mask[si - i0, sj - j0] = safe[si - i0, sj - j0]
    return mask, (i0, j0), (si, sj)


def _labels(world: TerrainWorld, pose: Pose, sector: Sector, footprint: float):
    key = ("labels", pose.x, pose.y, pose.heading, sector, footprint)
    hit = world._cache.get(key)
    if hit is None:
        mask, origin, start = sector_mask(world, pose, sector, footprint)
        labels, _ = ndimage.label(mask, structure=_EIGHT)
        hit = (labels, origin, start)
        world._cache[key] = hit
    return hit


def _goal_global(pose: Pose, g_local: Point) -> Point:
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    return (pose.x + c * g_local[0] - s * g_local[1], pose.y + s * g_local[0] + c * g_local[1])


def image_trav(world: TerrainWorld, obs_pose: Pose, sector: Sector, g_local: Point,
               footprint: float = DEFAULT_FOOTPRINT) -> bool:
    """Is there a safe path to ``g_local`` that stays inside ``sector``?

    ``g_local`` is expressed in the observer frame (see ``to_local``).
    """
    if not sector.contains(g_local):
        raise GoalOutsideSector(f"goal {g_local} not inside sector at bearing {sector.bearing:.3f}")
    labels, (i0, j0), (si, sj) = _labels(world, obs_pose, sector, footprint)
    start_label = labels[si - i0, sj - j0]
    if start_label == 0:
        return False
    gi, gj = world.raster_index(_goal_global(obs_pose, g_local))
    if (gi, gj) == (si, sj):
        return True
    li, lj = gi - i0, gj - j0
    if not (0 <= li < labels.shape[0] and 0 <= lj < labels.shape[1]):
        return False
    if labels[li, lj] != 0:
        return labels[li, lj] == start_label
    # goal cell is safe but its center lies just outside the sector: admit it
    # as the terminal cell if an in-sector neighbor connects to the start
    if not world.safety_raster(footprint)[gi, gj]:
        return False
    nb = labels[max(0, li - 1):li + 2, max(0, lj - 1):lj + 2]
    return bool(np.any(nb == start_label))


def witness_path(world: TerrainWorld, obs_pose: Pose, sector: Sector, g_local: Point,
                 footprint: float = DEFAULT_FOOTPRINT) -> list[tuple[int, int]] | None:
    """Breadth-first witness path (raster indices) for ``image_trav``, or None."""
    if not sector.contains(g_local):
        raise GoalOutsideSector(f"goal {g_local} not inside sector")
    mask, (i0, j0), start = sector_mask(world, obs_pose, sector, footprint)
    goal = world.raster_index(_goal_global(obs_pose, g_local))
    safe = world.safety_raster(footprint)
    if not mask[start[0] - i0, start[1] - j0]:
        return None
    if not safe[goal]:
        return None
    parent = {start: None}
    q = deque([start])
    while q:
        cur = q.popleft()
        if cur == goal:
            path = []
            while cur is not None:
                path.append(cur)
                cur = parent[cur]
            return path[::-1]
        ci, cj = cur
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                nxt = (ci + di, cj + dj)
                if nxt in parent:
                    continue
                li, lj = nxt[0] - i0, nxt[1] - j0
                if not (0 <= li < mask.shape[0] and 0 <= lj < mask.shape[1]):
                    continue
                if mask[li, lj] or nxt == goal:
                    parent[nxt] = cur
                    q.append(nxt)
    return None


def edge_trav_oracle(world: TerrainWorld, a: Node, b: Node,
                     footprint: float = DEFAULT_FOOTPRINT) -> EdgeState:
    """Edge verdict from whichever endpoints carry a view of the other."""
    if a.view is None and b.view is None:
        return EdgeState.UNKNOWN
    evaluable = False
    for obs, tgt in ((a, b), (b, a)):
        if obs.view is None:
            continue
        if not sight_clear(world, obs.position, tgt.position):
            continue
        g = to_local(obs.pose, tgt.position)
        for sector in obs.view.sectors:
            if sector.contains(g):
                evaluable = True
                if image_trav(world, obs.pose, sector, g, footprint):
                    return EdgeState.TRAVERSABLE
    return EdgeState.UNTRAVERSABLE if evaluable else EdgeState.UNKNOWN


def edge_rng(seed: int, a: int, b: int) -> np.random.Generator:
    """Per-edge random stream, stable across re-queries of the same pair."""
    lo, hi = edge_key(a, b)
    return np.random.default_rng([int(seed), 2, lo, hi])


def predict_edge_noisy(verdict: EdgeState, p_fp: float, p_fn: float,
                       rng: np.random.Generator) -> EdgeState:
    if not (0.0 <= p_fp <= 1.0 and 0.0 <= p_fn <= 1.0):
        raise ValueError("flip probabilities must lie in [0, 1]")
    if verdict is EdgeState.UNKNOWN:
        return verdict
    u = rng.random()
    if verdict is EdgeState.TRAVERSABLE:
        return EdgeState.UNTRAVERSABLE if u < p_fn else verdict
    return EdgeState.TRAVERSABLE if u < p_fp else verdict


@dataclass
class OraclePredictor:
    world: TerrainWorld
    footprint: float = DEFAULT_FOOTPRINT
    log: dict = field(default_factory=dict, repr=False)

    def truth(self, topo: TopoMap, a: int, b: int) -> EdgeState:
        return edge_trav_oracle(self.world, topo.nodes[a], topo.nodes[b], self.footprint)

    def predict_edge(self, topo: TopoMap, a: int, b: int) -> EdgeState:
        v = self.truth(topo, a, b)
        self.log[edge_key(a, b)] = (v, v)
        return v


@dataclass
class NoisyPredictor(OraclePredictor):
    p_fp: float = 0.0
    p_fn: float = 0.0
    seed: int = 0

    def predict_edge(self, topo: TopoMap, a: int, b: int) -> EdgeState:
        truth = self.truth(topo, a, b)
        v = predict_edge_noisy(truth, self.p_fp, self.p_fn, edge_rng(self.seed, a, b))
        self.log[edge_key(a, b)] = (v, truth)
        return v


@dataclass
class AlwaysTraversable(OraclePredictor):
    """Baseline that approves every edge with at least one visited endpoint."""

    def predict_edge(self, topo: TopoMap, a: int, b: int) -> EdgeState:
        truth = self.truth(topo, a, b)
        both_frontier = (topo.nodes[a].kind is NodeKind.FRONTIER
                         and topo.nodes[b].kind is NodeKind.FRONTIER)
        v = EdgeState.UNKNOWN if both_frontier else EdgeState.TRAVERSABLE
        self.log[edge_key(a, b)] = (v, truth)
        return v


@dataclass
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def fp_rate(self) -> float:
        neg = self.fp + self.tn
        return self.fp / neg if neg else 0.0

    @property
    def fn_rate(self) -> float:
        pos = self.tp + self.fn
        return self.fn / pos if pos else 0.0

    def table(self) -> str:
        """Rows are ground truth, columns the prediction."""
        w = max(5, len(str(max(self.tp, self.fp, self.tn, self.fn))))
        corner = "truth/pred"
        lines = [
            f"{corner:<14}{'trav':>{w + 2}}{'untrav':>{w + 2}}",
            f"{'trav':<14}{self.tp:>{w + 2}}{self.fn:>{w + 2}}",
            f"{'untrav':<14}{self.fp:>{w + 2}}{self.tn:>{w + 2}}",
        ]
        return "\n".join(lines)


def evaluate_confusion(topo: TopoMap | None, predicted: dict, oracle: dict) -> ConfusionMatrix:
    """Confusion counts with Traversable as the positive class.

    Edges whose ground truth is Unknown are skipped; when ``topo`` is given
    only edges still present in it are counted.
    """
    cm = ConfusionMatrix()
    keys = predicted.keys() & oracle.keys()
    if topo is not None:
        keys &= topo.edges.keys()
    for k in keys:
        truth = oracle[k]
        if truth is EdgeState.UNKNOWN:
            continue
        pos = predicted[k] is EdgeState.TRAVERSABLE
        if truth is EdgeState.TRAVERSABLE:
            if pos:
                cm.tp += 1
            else:
                cm.fn += 1
        elif pos:
            cm.fp += 1
        else:
            cm.tn += 1
    return cm


def split_log(log: dict) -> tuple[dict, dict]:
    """Split a predictor log into (predicted, oracle) verdict dicts."""
    return ({k: v[0] for k, v in log.items()}, {k: v[1] for k, v in log.items()})
