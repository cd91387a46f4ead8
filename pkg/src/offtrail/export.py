"""File formats: map JSON, trajectory CSV, summary and confusion CSVs.

Every writer produces deterministic bytes for identical inputs (sorted keys,
fixed float formatting, ``\\n`` line endings).
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .explore import ExplorationGrid, ExplorationResult
from .terrain import TerrainWorld, world_from_dict, world_to_dict
from .topomap import MAP_SCHEMA_VERSION, TopoMap, map_from_dict, map_to_dict

TRAJECTORY_SCHEMA_VERSION = 1
TRAJECTORY_COLUMNS = ["tick", "x", "y", "heading", "v", "w", "event"]


class SchemaError(ValueError):
    """An input file does not match the expected schema."""


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def _write_text(path: str | Path, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


# map.json

def map_document(result: ExplorationResult, world: TerrainWorld, config_hash: str = "",
                 seed: int | None = None) -> dict:
    doc = map_to_dict(result.topo, world.height_at)
    g = result.grid
    doc["grid"] = {"center": list(g.center), "R": g.R, "lambda": g.lam}
    doc["world"] = world_to_dict(world)
    doc["run"] = {"seed": world.seed if seed is None else seed, "config_hash": config_hash}
    return doc


def dumps_json(doc: dict) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def write_map(path: str | Path, doc: dict) -> None:
    _write_text(path, dumps_json(doc))


def read_map(path: str | Path) -> tuple[TopoMap, TerrainWorld | None, ExplorationGrid | None, dict]:
    """Parse a map.json; returns (map, world or None, grid or None, raw document)."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: {exc}") from None
    if not isinstance(doc, dict) or doc.get("schema_version") != MAP_SCHEMA_VERSION:
        raise SchemaError(f"{path}: expected map schema_version {MAP_SCHEMA_VERSION}")
    try:
        topo = map_from_dict(doc)
        world = world_from_dict(doc["world"]) if "world" in doc else None
        grid = None
        if "grid" in doc:
            gd = doc["grid"]
            grid = ExplorationGrid(tuple(gd["center"]), int(gd["R"]), float(gd["lambda"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: {exc}") from None
    return topo, world, grid, doc


# trajectory.csv

def trajectory_text(rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_COLUMNS)
    for tick, x, y, heading, v, wz, event in rows:
        w.writerow([tick, _fmt(float(x)), _fmt(float(y)), _fmt(float(heading)),
                    _fmt(float(v)), _fmt(float(wz)), event])
    return buf.getvalue()


def write_trajectory(path: str | Path, rows: list[list]) -> None:
    _write_text(path, trajectory_text(rows))


def read_trajectory(path: str | Path) -> list[list]:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != TRAJECTORY_COLUMNS:
                raise SchemaError(f"{path}: expected columns {TRAJECTORY_COLUMNS}")
            return [[int(r[0]), float(r[1]), float(r[2]), float(r[3]), float(r[4]),
                     float(r[5]), r[6]] for r in reader]
    except (OSError, ValueError, IndexError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"{path}: {exc}") from None


# summary.csv / confusion.csv

def rows_text(columns: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: _fmt(row[k]) for k in columns})
    return buf.getvalue()


def write_rows(path: str | Path, columns: list[str], rows: list[dict]) -> None:
    _write_text(path, rows_text(columns, rows))


def read_rows(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
