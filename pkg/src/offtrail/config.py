"""Run configuration: defaults, a flat ``section.key = value`` file format, validation."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .controller import SkidSteerParams
from .terrain import WorldParams
from .topomap import ViewParams

SEED_ENV = "OFFTRAIL_SEED"


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None,
                 source: str | None = None):
        self.message, self.key, self.line, self.source = message, key, line, source
        super().__init__(self.diagnostic())

    def diagnostic(self) -> str:
        where = ""
        if self.source:
            where += f"{self.source}:"
        if self.line is not None:
            where += f"{self.line}:"
        if self.key:
            where += f" {self.key}:" if where else f"{self.key}:"
        return f"{where} {self.message}".strip()


@dataclass(frozen=True)
class SweepSpec:
    p_fp: tuple[float, ...] = (0.0,)
    p_fn: tuple[float, ...] = (0.0,)
    seeds: tuple[int, ...] = (0,)
    max_runs: int = 1000
    workers: int = 1

    def combos(self) -> list[tuple[float, float, int]]:
        return [(a, b, s) for a in self.p_fp for b in self.p_fn for s in self.seeds]


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    world: WorldParams = field(default_factory=WorldParams)
    fixture: str | None = None  # bundled fixture name or path to a world JSON
    d: float = 1.0
    r: float = 3.0
    lam: float = 2.0
    R: int = 10
    f: float = 100.0  # per-camera field of view, degrees
    rho: float = 10.0
    footprint: float = 0.4
    v_max: float = 1.0
    w_max: float = 1.0
    tick: float = 0.2
    seq_len: int = 5
    goal_tol: float = 0.3
    timeout_factor: float = 3.0
    k_w: float = 2.0
    p_fp: float = 0.0
    p_fn: float = 0.0
    predictor: str = "noisy"
    max_ticks: int = 200_000
    sweep: SweepSpec = field(default_factory=SweepSpec)

    def validate(self) -> "RunConfig":
        def bad(key, msg):
            raise ConfigError(msg, key=key)

        if not (self.d > 0):
            bad("map.d", "d must be > 0")
        if not (self.r > self.d):
            bad("map.r", "r must exceed d")
        if not (self.lam > 0):
            bad("explore.lambda", "lambda must be > 0")
        if self.R < 2:
            bad("explore.R", "R must be >= 2")
        for key, p in (("noise.p_fp", self.p_fp), ("noise.p_fn", self.p_fn)):
            if not (0.0 <= p <= 1.0):
                bad(key, "probabilities must lie in [0, 1]")
        if not (0 < self.f <= 360):
            bad("camera.f", "f must be in (0, 360] degrees")
        if self.rho <= 0:
            bad("camera.rho", "rho must be > 0")
        if self.footprint < 0:
            bad("robot.footprint", "footprint must be >= 0")
        if self.predictor not in ("noisy", "always_traversable"):
            bad("noise.predictor", "predictor must be 'noisy' or 'always_traversable'")
        if self.seed < 0 or self.seed >= 2 ** 64:
            bad("run.seed", "seed must be a 64-bit unsigned integer")
        if self.max_ticks <= 0:
            bad("run.max_ticks", "max_ticks must be > 0")
        try:
            self.skid_params()
        except ValueError as exc:
            bad("robot", str(exc))
        for key, vals in (("sweep.p_fp", self.sweep.p_fp), ("sweep.p_fn", self.sweep.p_fn)):
            if any(not (0.0 <= v <= 1.0) for v in vals):
                bad(key, "probabilities must lie in [0, 1]")
        return self

    def skid_params(self) -> SkidSteerParams:
        return SkidSteerParams(self.v_max, self.w_max, self.tick, self.footprint, self.seq_len,
                               self.k_w, self.goal_tol, self.timeout_factor)

    def view_params(self) -> ViewParams:
        return ViewParams(math.radians(self.f), self.rho)

    def to_dict(self) -> dict:
        d = {}
        for key, (attr, _) in KEYS.items():
            d[key] = _get(self, attr)
        return d

    def config_hash(self) -> str:
        """Hash of the resolved config without the seed or sweep axes."""
        d = {k: v for k, v in self.to_dict().items()
             if k != "run.seed" and not k.startswith("sweep.")}
        blob = json.dumps(d, sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.replace(",", " ").split())


def _ints(s: str) -> tuple[int, ...]:
    out: list[int] = []
    for tok in s.replace(",", " ").split():
        if "-" in tok[1:]:
            lo, hi = tok.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(tok))
    return tuple(out)


def _range(s: str) -> tuple[float, float]:
    v = _floats(s)
    if len(v) != 2:
        raise ValueError("expected two numbers")
    return v  # type: ignore[return-value]


def _opt_float(s: str):
    return None if s.strip().lower() in ("", "none", "center") else float(s)


def _opt_str(s: str):
    return None if s.strip().lower() in ("", "none") else s.strip()


KEYS: dict[str, tuple[str, object]] = {
    "run.seed": ("seed", int),
    "run.max_ticks": ("max_ticks", int),
    "map.d": ("d", float),
    "map.r": ("r", float),
    "explore.lambda": ("lam", float),
    "explore.R": ("R", int),
    "camera.f": ("f", float),
    "camera.rho": ("rho", float),
    "robot.footprint": ("footprint", float),
    "robot.v_max": ("v_max", float),
    "robot.w_max": ("w_max", float),
    "robot.tick": ("tick", float),
    "robot.seq_len": ("seq_len", int),
    "robot.goal_tol": ("goal_tol", float),
    "robot.timeout_factor": ("timeout_factor", float),
    "robot.k_w": ("k_w", float),
    "noise.p_fp": ("p_fp", float),
    "noise.p_fn": ("p_fn", float),
    "noise.predictor": ("predictor", str),
    "world.fixture": ("fixture", _opt_str),
    "sweep.p_fp": ("sweep.p_fp", _floats),
    "sweep.p_fn": ("sweep.p_fn", _floats),
    "sweep.seeds": ("sweep.seeds", _ints),
    "sweep.max_runs": ("sweep.max_runs", int),
    "sweep.workers": ("sweep.workers", int),
}
for _f in fields(WorldParams):
    if _f.name in ("start_x", "start_y"):
        KEYS[f"world.{_f.name}"] = (f"world.{_f.name}", _opt_float)
    elif _f.name.startswith(("tree_length", "tree_half", "tree_height", "rock_r", "rock_h", "pond_r")):
        KEYS[f"world.{_f.name}"] = (f"world.{_f.name}", _range)
    else:
        KEYS[f"world.{_f.name}"] = (f"world.{_f.name}", float)

# bare names accepted wherever unambiguous: "seed", "r", "lambda", "tree_density", ...
ALIASES: dict[str, str] = {}
_seen: dict[str, int] = {}
for _k in KEYS:
    _short = _k.split(".", 1)[1]
    _seen[_short] = _seen.get(_short, 0) + 1
for _k in KEYS:
    _short = _k.split(".", 1)[1]
    if _seen[_short] == 1:
        ALIASES[_short] = _k
ALIASES.update({"seeds": "sweep.seeds", "workers": "sweep.workers", "max_runs": "sweep.max_runs",
                "fixture": "world.fixture", "R": "explore.R",
                "p_fp": "noise.p_fp", "p_fn": "noise.p_fn"})


def resolve_key(key: str) -> str:
    key = key.strip().replace("-", "_") if key.strip() not in KEYS else key.strip()
    if key in KEYS:
        return key
    if key in ALIASES:
        return ALIASES[key]
    raise KeyError(key)


def _get(cfg: RunConfig, attr: str):
    if "." in attr:
        sub, name = attr.split(".", 1)
        return getattr(getattr(cfg, sub), name)
    return getattr(cfg, attr)


def apply(cfg: RunConfig, values: dict[str, object]) -> RunConfig:
    """Return ``cfg`` with already-typed values (keyed by dotted key) applied."""
    top: dict[str, object] = {}
    sub: dict[str, dict[str, object]] = {"world": {}, "sweep": {}}
    for key, val in values.items():
        attr = KEYS[key][0]
        if "." in attr:
            s, name = attr.split(".", 1)
            sub[s][name] = val
        else:
            top[attr] = val
    if sub["world"]:
        top["world"] = dataclasses.replace(cfg.world, **sub["world"])
    if sub["sweep"]:
        top["sweep"] = dataclasses.replace(cfg.sweep, **sub["sweep"])
    return dataclasses.replace(cfg, **top)


def convert(key: str, raw: str, *, line: int | None = None, source: str | None = None):
    conv = KEYS[key][1]
    try:
        return conv(raw)  # type: ignore[operator]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"cannot parse {raw!r}: {exc}", key=key, line=line, source=source)


def parse_text(text: str, source: str | None = None) -> dict[str, object]:
    """Parse ``key = value`` lines; ``[section]`` headers prefix bare keys."""
    out: dict[str, object] = {}
    section = None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=n, source=source)
        k, v = (s.strip() for s in line.split("=", 1))
        name = f"{section}.{k}" if section and "." not in k else k
        try:
            key = resolve_key(name)
        except KeyError:
            raise ConfigError("unknown key", key=name, line=n, source=source) from None
        out[key] = convert(key, v, line=n, source=source)
    return out


def load_config(path: str | Path | None = None, overrides: dict[str, str] | None = None,
                env: dict | None = None) -> RunConfig:
    """Defaults, then the file, then ``overrides`` (raw strings), then $OFFTRAIL_SEED."""
    env = os.environ if env is None else env
    cfg = RunConfig()
    values: dict[str, object] = {}
    if path is not None:
        values.update(parse_text(Path(path).read_text(), source=str(path)))
    for k, v in (overrides or {}).items():
        try:
            key = resolve_key(k)
        except KeyError:
            raise ConfigError("unknown key", key=k, source="command line") from None
        values[key] = convert(key, v, source="command line")
    if env.get(SEED_ENV):
        values["run.seed"] = convert("run.seed", env[SEED_ENV], source=SEED_ENV)
    try:
        cfg = apply(cfg, values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), source=str(path) if path else None) from None
    try:
        return cfg.validate()
    except ConfigError as exc:
        exc.source = str(path) if path else None
        raise ConfigError(exc.message, exc.key, _line_of(path, exc.key), exc.source) from None


def _line_of(path, key) -> int | None:
    if path is None or key is None:
        return None
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        k = raw.split("#", 1)[0].split("=", 1)[0].strip()
        try:
            if k and resolve_key(k) == key:
                return n
        except KeyError:
            continue
    return None


def dump_config(cfg: RunConfig) -> str:
    """Render a config in the file format (round-trips through ``parse_text``)."""
    lines = []
    for key, val in cfg.to_dict().items():
        if isinstance(val, tuple):
            val = ", ".join(str(v) for v in val)
        elif val is None:
            val = "none"
        lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"
