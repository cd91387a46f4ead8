"""Command-line front end: ``offtrail run|sweep|render|validate-config``.

Any config key can be overridden with a flag of the same name, e.g.
``--map.r 4``, ``--noise.p_fp=0.1`` or the bare ``--seed 7``.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import ConfigError, RunConfig, dump_config, load_config
from .explore import InitError
from .export import (
    SchemaError,
    map_document,
    read_map,
    read_trajectory,
    write_map,
    write_rows,
    write_trajectory,
)
from .render import render_svg
from .runner import (
    CONFUSION_COLUMNS,
    SUMMARY_COLUMNS,
    confusion_of,
    confusion_row,
    run_config,
    run_record,
    summary_row,
)
from .terrain import ParamError, UnsafeStartError
from .traversability import ConfusionMatrix

log = logging.getLogger("offtrail")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INIT = 2
EXIT_BUDGET = 3


def parse_overrides(extra: list[str]) -> dict[str, str]:
    """``["--map.r", "4", "--seed=3"]`` -> ``{"map.r": "4", "seed": "3"}``."""
    out: dict[str, str] = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or len(tok) <= 2:
            raise ConfigError(f"unexpected argument {tok!r}", source="command line")
        if "=" in tok:
            k, v = tok[2:].split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigError("missing value", key=tok[2:], source="command line")
            k, v = tok[2:], extra[i + 1]
            i += 2
        out[k] = v
    return out


def _load(args, extra) -> RunConfig:
    return load_config(args.config, parse_overrides(extra))


def write_run_outputs(out: Path, config: RunConfig, world, result) -> None:
    out.mkdir(parents=True, exist_ok=True)
    doc = map_document(result, world, config.config_hash(), config.seed)
    write_map(out / "map.json", doc)
    write_trajectory(out / "trajectory.csv", result.trajectory)
    write_rows(out / "summary.csv", SUMMARY_COLUMNS, [summary_row(config, result)])
    cm = confusion_of(result)
    write_rows(out / "confusion.csv", CONFUSION_COLUMNS, [confusion_row(config, cm)])
    render_files(out / "map.json", out / "trajectory.csv", out / "map.svg")


def render_files(map_path, traj_path, out_path) -> None:
    """Render from the exported files, so ``run`` and ``render`` agree byte for byte."""
    topo, world, _, doc = read_map(map_path)
    traj = read_trajectory(traj_path) if traj_path else None
    heights = {int(n["id"]): float(n["terrain_height"]) for n in doc["nodes"]}
    Path(out_path).write_text(render_svg(topo, world, traj, heights))


def cmd_run(args, extra) -> int:
    try:
        config = _load(args, extra)
    except ConfigError as exc:
        print(f"config error: {exc.diagnostic()}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        world, result = run_config(config)
    except (InitError, UnsafeStartError) as exc:
        print(f"init error: {exc}", file=sys.stderr)
        return EXIT_INIT
    except (ParamError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_run_outputs(Path(args.out), config, world, result)
    st = result.status
    log.info("visited %d/%d cells, %.1f m, %d interventions, complete=%s",
             st.visited_cells, st.cells_total, st.distance_traveled, len(st.interventions),
             st.complete)
    return EXIT_OK if st.complete and not st.budget_exceeded else EXIT_BUDGET


def cmd_sweep(args, extra) -> int:
    try:
        base = _load(args, extra)
    except ConfigError as exc:
        print(f"config error: {exc.diagnostic()}", file=sys.stderr)
        return EXIT_CONFIG
    combos = base.sweep.combos()
    if len(combos) > base.sweep.max_runs:
        print(f"config error: sweep has {len(combos)} runs, cap is {base.sweep.max_runs}",
              file=sys.stderr)
        return EXIT_CONFIG
    configs = [dataclasses.replace(base, p_fp=a, p_fn=b, seed=s) for a, b, s in combos]
    try:
        if base.sweep.workers > 1:
            with ProcessPoolExecutor(max_workers=base.sweep.workers) as pool:
                records = list(pool.map(run_record, configs))
        else:
            records = [run_record(c) for c in configs]
    except (InitError, UnsafeStartError) as exc:
        print(f"init error: {exc}", file=sys.stderr)
        return EXIT_INIT
    except (ParamError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_rows(out / "summary.csv", SUMMARY_COLUMNS, [r.summary for r in records])
    write_rows(out / "confusion.csv", CONFUSION_COLUMNS, [r.confusion for r in records])
    pooled: dict[tuple[float, float], ConfusionMatrix] = defaultdict(ConfusionMatrix)
    for r in records:
        cm = pooled[(r.confusion["p_fp"], r.confusion["p_fn"])]
        for k in ("tp", "fp", "tn", "fn"):
            setattr(cm, k, getattr(cm, k) + r.confusion[k])
    text = "".join(f"p_fp={a:g} p_fn={b:g}\n{cm.table()}\n\n" for (a, b), cm in sorted(pooled.items()))
    (out / "confusion.txt").write_text(text)
    log.info("%d runs written to %s", len(records), out)
    return EXIT_OK


def cmd_render(args, extra) -> int:
    if extra:
        print(f"unexpected arguments: {' '.join(extra)}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        render_files(args.map, args.trajectory, args.out)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def cmd_validate(args, extra) -> int:
    try:
        config = _load(args, extra)
    except ConfigError as exc:
        print(f"config error: {exc.diagnostic()}", file=sys.stderr)
        return EXIT_CONFIG
    sys.stdout.write(dump_config(config))
    print(f"# config_hash = {config.config_hash()}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="offtrail", allow_abbrev=False,
                                description=__doc__.splitlines()[0], epilog="Config keys may be overridden with --<key> <value>.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", allow_abbrev=False, help="one exploration run")
    r.add_argument("-c", "--config", help="config file (defaults apply when omitted)")
    r.add_argument("-o", "--out", default="out", help="output directory")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", allow_abbrev=False, help="p_fp x p_fn x seeds batch",
                       description="Sweep axes come from sweep.p_fp, sweep.p_fn, sweep.seeds "
                                   "(e.g. --sweep.seeds 0-9); sweep.workers bounds parallelism.")
    s.add_argument("-c", "--config")
    s.add_argument("-o", "--out", default="sweep_out")
    s.set_defaults(func=cmd_sweep)

    d = sub.add_parser("render", help="map.json + trajectory.csv -> SVG")
    d.add_argument("map")
    d.add_argument("trajectory", nargs="?")
    d.add_argument("out")
    d.set_defaults(func=cmd_render)

    v = sub.add_parser("validate-config", allow_abbrev=False, help="resolve and print a config")
    v.add_argument("-c", "--config")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    return args.func(args, extra)


if __name__ == "__main__":
    sys.exit(main())
