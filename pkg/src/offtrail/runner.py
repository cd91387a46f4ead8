"""Single runs and sweeps: world construction, exploration, result rows."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .config import RunConfig
from .explore import ExplorationResult, explore_loop
from .terrain import TerrainWorld, fixture_path, generate_world, world_from_dict
from .traversability import ConfusionMatrix, evaluate_confusion, split_log

SUMMARY_SCHEMA_VERSION = 1
CAUSES = ("TraversabilityError", "ControllerError", "Timeout")

SUMMARY_COLUMNS = (
    ["schema_version", "run_id", "seed", "p_fp", "p_fn", "cells_total", "cells_visited",
     "cells_unreached", "distance_m"]
    + [f"interventions_{c}" for c in CAUSES]
    + ["ticks", "complete", "budget_exceeded", "config_hash"]
)
CONFUSION_COLUMNS = ["schema_version", "run_id", "p_fp", "p_fn", "tp", "fp", "tn", "fn"]


def resolve_fixture(name: str) -> Path:
    """A bundled fixture name (``river``) or a path to a world JSON file."""
    p = Path(name)
    if p.suffix == ".json" or p.exists():
        return p
    return fixture_path(name)


def build_world(config: RunConfig) -> TerrainWorld:
    """World for a run; the config's ``rho`` sets the sight range."""
    if config.fixture:
        with open(resolve_fixture(config.fixture)) as fh:
            d = json.load(fh)
        d = dict(d, params=dict(d.get("params", {}), perception_range=config.rho))
        return world_from_dict(d)
    params = dataclasses.replace(config.world, perception_range=config.rho)
    return generate_world(config.seed, params)


def run_id(config: RunConfig) -> str:
    return f"s{config.seed}_fp{config.p_fp:g}_fn{config.p_fn:g}"


@dataclass
class RunRecord:
    """Picklable digest of one run, as aggregated by sweeps."""

    summary: dict
    confusion: dict


def summary_row(config: RunConfig, result: ExplorationResult) -> dict:
    st = result.status
    causes = st.interventions_by_cause()
    row = {
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "run_id": run_id(config),
        "seed": config.seed,
        "p_fp": config.p_fp,
        "p_fn": config.p_fn,
        "cells_total": st.cells_total,
        "cells_visited": st.visited_cells,
        "cells_unreached": len(st.unreached_cells),
        "distance_m": round(st.distance_traveled, 6),
    }
    row.update({f"interventions_{c}": causes[c] for c in CAUSES})
    row.update({"ticks": st.ticks, "complete": int(st.complete),
                "budget_exceeded": int(st.budget_exceeded),
                "config_hash": config.config_hash()})
    return row


def confusion_of(result: ExplorationResult) -> ConfusionMatrix:
    """Every verdict the predictor issued during the run, against the oracle."""
    predicted, oracle = split_log(result.predictor.log)
    return evaluate_confusion(None, predicted, oracle)


def confusion_row(config: RunConfig, cm: ConfusionMatrix) -> dict:
    return {"schema_version": SUMMARY_SCHEMA_VERSION, "run_id": run_id(config),
            "p_fp": config.p_fp, "p_fn": config.p_fn,
            "tp": cm.tp, "fp": cm.fp, "tn": cm.tn, "fn": cm.fn}


def run_config(config: RunConfig) -> tuple[TerrainWorld, ExplorationResult]:
    world = build_world(config)
    return world, explore_loop(world, config)


def run_record(config: RunConfig) -> RunRecord:
    """Worker entry point for sweeps."""
    _, result = run_config(config)
    return RunRecord(summary_row(config, result), confusion_row(config, confusion_of(result)))
