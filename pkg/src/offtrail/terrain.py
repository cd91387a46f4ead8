"""Seeded synthetic forest worlds and the ground-truth queries built on them.

A world is a rectangle with a heightmap and a list of obstacles. Fallen
trees and rocks block the robot and, when tall enough, block sight. Water
blocks the robot but never sight. Terrain steeper than ``slope_max_deg`` is
unsafe without being listed as an obstacle.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Union

import numpy as np

from .geometry import (
    Point,
    point_in_polygon,
    point_polygon_boundary_distance,
    point_segment_distance,
    points_in_polygon,
    points_polygon_boundary_distance,
    points_segment_distance,
    segment_segment_distance,
)

FIXTURE_SCHEMA_VERSION = 1
MAX_PLACEMENT_ATTEMPTS = 1000


class ParamError(ValueError):
    """World parameters cannot produce a valid world."""


class UnsafeStartError(ParamError):
    """The start position has no safe clearance disc."""


@dataclass(frozen=True)
class WorldParams:
    width: float = 20.0
    height: float = 20.0
    start_x: float | None = None  # None -> center of bounds
    start_y: float | None = None
    start_heading: float = 0.0
    start_clear_radius: float = 1.5
    h_cell: float = 0.5
    gt_resolution: float = 0.25
    slope_max_deg: float = 30.0
    h_occlude: float = 0.5
    perception_range: float = 10.0
    hill_amplitude: float = 1.0
    hill_spacing: float = 5.0
    # densities are expected counts per 100 m^2
    tree_density: float = 1.0
    rock_density: float = 0.5
    pond_density: float = 0.1
    steep_hill_density: float = 0.0
    tree_length: tuple[float, float] = (2.0, 6.0)
    tree_half_width: tuple[float, float] = (0.15, 0.4)
    tree_height: tuple[float, float] = (0.2, 1.0)
    rock_radius: tuple[float, float] = (0.3, 1.0)
    rock_height: tuple[float, float] = (0.2, 1.2)
    pond_radius: tuple[float, float] = (1.0, 2.5)

    @property
    def start(self) -> Point:
        x = self.width / 2 if self.start_x is None else self.start_x
        y = self.height / 2 if self.start_y is None else self.start_y
        return (float(x), float(y))

    def validate(self) -> None:
        if self.width <= 0 or self.height <= 0 or self.width * self.height < 4.0:
            raise ParamError("world bounds must cover at least 4 m^2")
        for name in ("tree_density", "rock_density", "pond_density", "steep_hill_density"):
            if getattr(self, name) < 0:
                raise ParamError(f"{name} must be >= 0")
        if self.h_cell <= 0 or self.gt_resolution <= 0:
            raise ParamError("h_cell and gt_resolution must be > 0")

    @classmethod
    def from_dict(cls, d: dict) -> "WorldParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ParamError(f"unknown world params: {sorted(unknown)}")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**kw)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


@dataclass(frozen=True)
class FallenTree:
    a: Point
    b: Point
    half_width: float
    height: float
    occludes_sight: bool = False
    kind = "fallen_tree"


@dataclass(frozen=True)
class Rock:
    center: Point
    radius: float
    height: float
    occludes_sight: bool = False
    kind = "rock"


@dataclass(frozen=True)
class Water:
    polygon: tuple[Point, ...]
    occludes_sight: bool = False
    kind = "water"


Obstacle = Union[FallenTree, Rock, Water]


def obstacle_to_dict(ob: Obstacle) -> dict:
    if isinstance(ob, FallenTree):
        return {"kind": ob.kind, "a": list(ob.a), "b": list(ob.b),
                "half_width": ob.half_width, "height": ob.height}
    if isinstance(ob, Rock):
        return {"kind": ob.kind, "center": list(ob.center), "radius": ob.radius, "height": ob.height}
    return {"kind": ob.kind, "polygon": [list(p) for p in ob.polygon]}


def obstacle_from_dict(d: dict, h_occlude: float) -> Obstacle:
    kind = d.get("kind")
    if kind == "fallen_tree":
        h = float(d["height"])
        return FallenTree(tuple(d["a"]), tuple(d["b"]), float(d["half_width"]), h, h >= h_occlude)
    if kind == "rock":
        h = float(d["height"])
        return Rock(tuple(d["center"]), float(d["radius"]), h, h >= h_occlude)
    if kind == "water":
        poly = tuple(tuple(map(float, p)) for p in d["polygon"])
        if len(poly) < 3:
            raise ParamError("water polygon needs at least 3 vertices")
        return Water(poly)
    raise ParamError(f"unknown obstacle kind {kind!r}")


def _bilinear(grid: np.ndarray, spacing: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample a vertex grid (indexed [ix, iy]) at world coordinates."""
    nx, ny = grid.shape
    fx = np.clip(x / spacing, 0.0, nx - 1.000001)
    fy = np.clip(y / spacing, 0.0, ny - 1.000001)
    ix = np.floor(fx).astype(int)
    iy = np.floor(fy).astype(int)
    tx = fx - ix
    ty = fy - iy
    h00 = grid[ix, iy]
    h10 = grid[ix + 1, iy]
    h01 = grid[ix, iy + 1]
    h11 = grid[ix + 1, iy + 1]
    return (h00 * (1 - tx) * (1 - ty) + h10 * tx * (1 - ty)
            + h01 * (1 - tx) * ty + h11 * tx * ty)


def _build_heightmap(seed: int, p: WorldParams) -> np.ndarray:
    rng = np.random.default_rng([seed, 0])
    nx = int(round(p.width / p.h_cell)) + 1
    ny = int(round(p.height / p.h_cell)) + 1
    xs = np.arange(nx) * p.h_cell
    ys = np.arange(ny) * p.h_cell
    X, Y = np.meshgrid(xs, ys, indexing="ij")

    cx = int(math.ceil(p.width / p.hill_spacing)) + 1
    cy = int(math.ceil(p.height / p.hill_spacing)) + 1
    coarse = rng.uniform(0.0, p.hill_amplitude, size=(cx, cy)) if p.hill_amplitude > 0 else np.zeros((cx, cy))
    hm = _bilinear(coarse, p.hill_spacing, X, Y)

    # steep hills: gaussian bumps kept clear of the start disc
    n_hills = rng.poisson(p.steep_hill_density * p.width * p.height / 100.0)
    sx, sy = p.start
    placed = attempts = 0
    while placed < n_hills:
        attempts += 1
        if attempts > MAX_PLACEMENT_ATTEMPTS:
            raise ParamError("could not place steep hills clear of the start")
        hx, hy = rng.uniform(0, p.width), rng.uniform(0, p.height)
        amp = rng.uniform(2.0, 4.0)
        sigma = rng.uniform(1.0, 2.0)
        if math.hypot(hx - sx, hy - sy) < p.start_clear_radius + 3.0 * sigma:
            continue
        hm = hm + amp * np.exp(-((X - hx) ** 2 + (Y - hy) ** 2) / (2 * sigma * sigma))
        placed += 1
    return hm


def _generate_obstacles(seed: int, p: WorldParams) -> list[Obstacle]:
    rng = np.random.default_rng([seed, 1])
    area = p.width * p.height
    counts = {
        "fallen_tree": rng.poisson(p.tree_density * area / 100.0),
        "rock": rng.poisson(p.rock_density * area / 100.0),
        "water": rng.poisson(p.pond_density * area / 100.0),
    }
    start = p.start
    clear = p.start_clear_radius
    out: list[Obstacle] = []
    attempts = 0
    for kind in ("fallen_tree", "rock", "water"):
        placed = 0
        while placed < counts[kind]:
            attempts += 1
            if attempts > MAX_PLACEMENT_ATTEMPTS:
                raise ParamError(
                    f"obstacle densities leave no safe start after {MAX_PLACEMENT_ATTEMPTS} attempts")
            cx, cy = float(rng.uniform(0, p.width)), float(rng.uniform(0, p.height))
            if kind == "fallen_tree":
                L = rng.uniform(*p.tree_length)
                th = rng.uniform(-math.pi, math.pi)
                hw = float(rng.uniform(*p.tree_half_width))
                h = float(rng.uniform(*p.tree_height))
                a = (cx - 0.5 * L * math.cos(th), cy - 0.5 * L * math.sin(th))
                b = (cx + 0.5 * L * math.cos(th), cy + 0.5 * L * math.sin(th))
                ob: Obstacle = FallenTree(a, b, hw, h, h >= p.h_occlude)
                ok = point_segment_distance(start, a, b) >= hw + clear
            elif kind == "rock":
                rad = float(rng.uniform(*p.rock_radius))
                h = float(rng.uniform(*p.rock_height))
                ob = Rock((cx, cy), rad, h, h >= p.h_occlude)
                ok = math.hypot(cx - start[0], cy - start[1]) >= rad + clear
            else:
                R = rng.uniform(*p.pond_radius)
                n = 8
                angles = (np.arange(n) + rng.uniform(-0.3, 0.3, n)) * 2 * math.pi / n
                radii = R * rng.uniform(0.7, 1.3, n)
                poly = tuple((float(cx + r * math.cos(t)), float(cy + r * math.sin(t)))
                             for r, t in zip(radii, angles))
                ob = Water(poly)
                ok = (not point_in_polygon(start, list(poly))
                      and point_polygon_boundary_distance(start, list(poly)) >= clear)
            if ok:
                out.append(ob)
                placed += 1
    return out


@dataclass(eq=False)
class TerrainWorld:
    """Immutable ground truth. Build with ``generate_world`` or ``world_from_dict``."""

    seed: int
    params: WorldParams
    obstacles: tuple[Obstacle, ...]
    heightmap: np.ndarray = field(repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        p = self.params
        self.bounds = (0.0, 0.0, float(p.width), float(p.height))
        hm = self.heightmap
        c = p.h_cell
        # max gradient magnitude of each bilinear patch is reached at a corner
        gx0 = (hm[1:, :-1] - hm[:-1, :-1]) / c
        gx1 = (hm[1:, 1:] - hm[:-1, 1:]) / c
        gy0 = (hm[:-1, 1:] - hm[:-1, :-1]) / c
        gy1 = (hm[1:, 1:] - hm[1:, :-1]) / c
        self.cell_slope = np.maximum.reduce([
            np.hypot(gx0, gy0), np.hypot(gx0, gy1), np.hypot(gx1, gy0), np.hypot(gx1, gy1)])
        steep = np.argwhere(self.cell_slope > math.tan(math.radians(p.slope_max_deg)))
        self._steep_cells = steep
        self._steep_rects = np.column_stack([
            steep[:, 0] * c, steep[:, 1] * c, (steep[:, 0] + 1) * c, (steep[:, 1] + 1) * c,
        ]).astype(float) if len(steep) else np.zeros((0, 4))
        self._occluders = [ob for ob in self.obstacles if ob.occludes_sight]

    @property
    def start(self) -> Point:
        return self.params.start

    @property
    def perception_range(self) -> float:
        return self.params.perception_range

    @property
    def gt_resolution(self) -> float:
        return self.params.gt_resolution

    def height_at(self, p: Point) -> float:
        return float(_bilinear(self.heightmap, self.params.h_cell, np.asarray(p[0]), np.asarray(p[1])))

    def in_bounds(self, p: Point) -> bool:
        x0, y0, x1, y1 = self.bounds
        return x0 <= p[0] <= x1 and y0 <= p[1] <= y1

    # raster geometry for gt_resolution queries
    @property
    def raster_shape(self) -> tuple[int, int]:
        res = self.params.gt_resolution
        return (int(round(self.params.width / res)), int(round(self.params.height / res)))

    def raster_center(self, i: int, j: int) -> Point:
        res = self.params.gt_resolution
        return ((i + 0.5) * res, (j + 0.5) * res)

    def raster_index(self, p: Point) -> tuple[int, int]:
        res = self.params.gt_resolution
        nx, ny = self.raster_shape
        i = min(nx - 1, max(0, int(math.floor(p[0] / res))))
        j = min(ny - 1, max(0, int(math.floor(p[1] / res))))
        return i, j

    def safety_raster(self, footprint_radius: float) -> np.ndarray:
        """``is_safe`` evaluated at every raster cell center, shape (nx, ny)."""
        key = ("safety", float(footprint_radius))
        if key not in self._cache:
            self._cache[key] = _safety_raster(self, float(footprint_radius))
        return self._cache[key]


def generate_world(seed: int, params: WorldParams | None = None) -> TerrainWorld:
    params = params or WorldParams()
    params.validate()
    seed = int(seed)
    if seed < 0 or seed >= 2 ** 64:
        raise ParamError("seed must be a 64-bit unsigned integer")
    world = TerrainWorld(seed, params, tuple(_generate_obstacles(seed, params)),
                         _build_heightmap(seed, params))
    _check_start(world)
    return world


def _with_occlusion(ob: Obstacle, h_occlude: float) -> Obstacle:
    if isinstance(ob, Water):
        return replace(ob, occludes_sight=False)
    return replace(ob, occludes_sight=ob.height >= h_occlude)


def world_with_obstacles(seed: int, params: WorldParams, obstacles) -> TerrainWorld:
    """World with the seeded heightmap and an explicit obstacle list.

    Occlusion flags are recomputed from ``params.h_occlude``.
    """
    params.validate()
    obstacles = tuple(_with_occlusion(ob, params.h_occlude) for ob in obstacles)
    world = TerrainWorld(int(seed), params, obstacles, _build_heightmap(int(seed), params))
    _check_start(world)
    return world


def _check_start(world: TerrainWorld) -> None:
    if not is_safe(world, world.start, 1.0):
        raise UnsafeStartError("no safe 1 m disc around the start position")


def is_safe(world: TerrainWorld, p: Point, footprint_radius: float) -> bool:
    """True iff a disc of ``footprint_radius`` at ``p`` lies on safe ground."""
    r = float(footprint_radius)
    if r < 0:
        raise ValueError("footprint_radius must be >= 0")
    x, y = float(p[0]), float(p[1])
    x0, y0, x1, y1 = world.bounds
    if x - r < x0 or x + r > x1 or y - r < y0 or y + r > y1:
        return False
    for ob in world.obstacles:
        if isinstance(ob, FallenTree):
            if point_segment_distance((x, y), ob.a, ob.b) < ob.half_width + r:
                return False
        elif isinstance(ob, Rock):
            if math.hypot(x - ob.center[0], y - ob.center[1]) < ob.radius + r:
                return False
        else:
            poly = list(ob.polygon)
            if point_in_polygon((x, y), poly) or point_polygon_boundary_distance((x, y), poly) < r:
                return False
    rects = world._steep_rects
    if len(rects):
        dx = np.maximum(np.maximum(rects[:, 0] - x, 0.0), x - rects[:, 2])
        dy = np.maximum(np.maximum(rects[:, 1] - y, 0.0), y - rects[:, 3])
        if np.any(dx * dx + dy * dy <= r * r):
            return False
    return True


def _safety_raster(world: TerrainWorld, r: float) -> np.ndarray:
    nx, ny = world.raster_shape
    res = world.params.gt_resolution
    xs = (np.arange(nx) + 0.5) * res
    ys = (np.arange(ny) + 0.5) * res
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    x0, y0, x1, y1 = world.bounds
    safe = (X - r >= x0) & (X + r <= x1) & (Y - r >= y0) & (Y + r <= y1)
    for ob in world.obstacles:
        if isinstance(ob, FallenTree):
            safe &= ~(points_segment_distance(X, Y, ob.a, ob.b) < ob.half_width + r)
        elif isinstance(ob, Rock):
            safe &= ~(np.hypot(X - ob.center[0], Y - ob.center[1]) < ob.radius + r)
        else:
            poly = list(ob.polygon)
            safe &= ~(points_in_polygon(X, Y, poly) | (points_polygon_boundary_distance(X, Y, poly) < r))
    for rx0, ry0, rx1, ry1 in world._steep_rects:
        i0 = max(0, int(math.floor((rx0 - r) / res)) - 1)
        i1 = min(nx, int(math.ceil((rx1 + r) / res)) + 1)
        j0 = max(0, int(math.floor((ry0 - r) / res)) - 1)
        j1 = min(ny, int(math.ceil((ry1 + r) / res)) + 1)
        if i0 >= i1 or j0 >= j1:
            continue
        sx, sy = X[i0:i1, j0:j1], Y[i0:i1, j0:j1]
        dx = np.maximum(np.maximum(rx0 - sx, 0.0), sx - rx1)
        dy = np.maximum(np.maximum(ry0 - sy, 0.0), sy - ry1)
        safe[i0:i1, j0:j1] &= ~(dx * dx + dy * dy <= r * r)
    return safe


def sight_clear(world: TerrainWorld, a: Point, b: Point) -> bool:
    """Line of sight: within perception range and not crossing a tall obstacle."""
    if a[0] == b[0] and a[1] == b[1]:
        return True
    if math.hypot(b[0] - a[0], b[1] - a[1]) > world.params.perception_range:
        return False
    for ob in world._occluders:
        if isinstance(ob, FallenTree):
            if segment_segment_distance(a, b, ob.a, ob.b) < ob.half_width:
                return False
        elif isinstance(ob, Rock):
            if point_segment_distance(ob.center, a, b) < ob.radius:
                return False
    return True


# fixture I/O

def world_to_dict(world: TerrainWorld) -> dict:
    return {
        "schema_version": FIXTURE_SCHEMA_VERSION,
        "seed": world.seed,
        "params": world.params.to_dict(),
        "obstacles": [obstacle_to_dict(ob) for ob in world.obstacles],
    }


def world_from_dict(d: dict) -> TerrainWorld:
    if d.get("schema_version") != FIXTURE_SCHEMA_VERSION:
        raise ParamError(f"unsupported world schema_version {d.get('schema_version')!r}")
    params = WorldParams.from_dict(d.get("params", {}))
    params.validate()
    obstacles = [obstacle_from_dict(o, params.h_occlude) for o in d.get("obstacles", [])]
    return world_with_obstacles(int(d["seed"]), params, obstacles)


def load_world(path: str | Path) -> TerrainWorld:
    with open(path) as fh:
        return world_from_dict(json.load(fh))


def save_world(world: TerrainWorld, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(world_to_dict(world), fh, indent=2, sort_keys=True)
        fh.write("\n")


def fixture_path(name: str) -> Path:
    """Path of a bundled fixture world, e.g. ``fixture_path("river")``."""
    return Path(__file__).parent / "fixtures" / f"{name}.json"
