"""YAML run configuration with line-precise validation.

Schema (all sections optional except ``seed`` and ``schedule``)::

    seed: 7
    output_dir: runs/demo
    scenario: {include: thulium.yaml, field: 4.80}   # path relative to this file,
                                                     # or a bundled scenario name
    trap:
      horizontal: {waist_x: 24.0, waist_y: 54.2}
      vertical: {waist_x: 100.0, waist_y: 100.0}
      polarizability: 3.0e4                          # µK per W/µm^2
      crossed_threshold: 0.05
    sim: {n_initial: 3.0e6, t_initial: 22.5, rtol: 1.0e-8, ...}
    schedule: {times: [...], P_H: [...], P_V: [...]}  # s, W, W
    search:
      H: [0.005, 20.0]            # W, one box for every breakpoint ...
      V: {lo: [...], hi: [...]}   # ... or per-breakpoint bounds (null holds the beam)
      time_bounds: [12.0, 18.0]
      n_tail: 3
      warm_start: true            # evaluate the schedule itself first
    cost: {mode: combined, beta_gamma: 1.0, n_scale: 1.0e4}
    optimizer: {budget: 60, batch: 1, refit_interval: 5, restarts: 8, epsilon: 0.02}
    imaging: {full_loop: false, shape: [128, 128]}

Any scalar can be overridden from the environment with ``EVAPTWIN_`` plus the
upper-cased key path joined by ``__``, e.g. ``EVAPTWIN_SCENARIO__FIELD=4.8``
or ``EVAPTWIN_OPTIMIZER__BUDGET=20``. Values are parsed as YAML scalars.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import _yaml

from .bayesopt.optimizer import OptimizerSettings
from .cost import COMBINED, EFFICIENCY_ONLY, CostWeights
from .evap_sim import SimConfig
from .feshbach import FeshbachScenario, scenario_from_dict, scenario_to_dict
from .ramps import RampSchedule
from .trap_model import HORIZONTAL, VERTICAL, BeamGeometry

ENV_PREFIX = "EVAPTWIN_"
DATA_DIR = Path(__file__).parent / "data"
SCENARIO_DIR = DATA_DIR / "scenarios"
DEFAULT_CONFIG = DATA_DIR / "configs" / "default.yaml"

# named random sub-streams derived from the single config seed
STREAMS = {"optimizer": 1, "noise": 2}

SIM_KEYS = {
    "n_initial", "t_initial", "eta_floor", "rtol", "atol_n", "atol_t", "condensate_correlation_factor",
    "method", "evaporation", "spill", "adiabatic", "three_body", "three_body_heating", "condensate",
}
OPTIMIZER_KEYS = {"budget", "batch", "min_init", "refit_interval", "restarts", "epsilon", "xi", "n_candidates", "n_local", "fit_noise", "noise_variance"}
TOP_KEYS = {"seed", "output_dir", "scenario", "trap", "sim", "schedule", "search", "cost", "optimizer", "imaging"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int
    schedule: RampSchedule
    scenario: FeshbachScenario
    sim: SimConfig = field(default_factory=SimConfig)
    box: dict = field(default_factory=lambda: {"H": (0.005, 20.0), "V": (0.05, 8.0)})
    time_bounds: tuple[float, float] | None = None
    n_tail: int = 3
    warm_start: bool = True
    weights: CostWeights = field(default_factory=CostWeights)
    mode: str = COMBINED
    settings: OptimizerSettings = field(default_factory=OptimizerSettings)
    budget: int = 60
    batch: int = 1
    full_loop: bool = False
    image_shape: tuple[int, int] = (128, 128)
    output_dir: Path = Path("runs")
    source: Path | None = None
    scenario_path: Path | None = None
    scenario_digest: str = ""

    def resolved(self) -> dict:
        """Plain-data view of everything that affects results (no paths)."""
        return {
            "seed": self.seed,
            "schedule": self.schedule.to_dict(),
            "scenario": scenario_to_dict(self.scenario),
            "sim": dataclasses.asdict(self.sim),
            "box": {k: None if b is None else [list(v) if isinstance(v, (list, tuple)) else v for v in b] for k, b in self.box.items()},
            "time_bounds": list(self.time_bounds) if self.time_bounds else None,
            "n_tail": self.n_tail,
            "warm_start": self.warm_start,
            "weights": dataclasses.asdict(self.weights),
            "mode": self.mode,
            "settings": dataclasses.asdict(self.settings),
            "batch": self.batch,
            "full_loop": self.full_loop,
            "image_shape": list(self.image_shape),
        }

    def stream_seed(self, name: str) -> int:
        return substream_seed(self.seed, name)

    @property
    def config_hash(self) -> str:
        text = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class RunRecord:
    command: str
    config_hash: str
    scenario_digest: str
    log_path: str | None
    summary: dict
    started: str
    finished: str

    def write(self, path):
        with open(path, "w") as fh:
            json.dump(dataclasses.asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


def substream_seed(seed: int, name: str) -> int:
    """Independent 32-bit seed for the named sub-stream of ``seed``."""
    return int(np.random.SeedSequence([seed, STREAMS[name]]).generate_state(1)[0])


def git_blob_digest(data: bytes) -> str:
    """Content digest computed the way git hashes a blob."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


# ------------------------------------------------------------------ loading


class _Locator:
    """Maps key paths of the parsed document back to source lines."""

    def __init__(self, path: Path | None, root):
        self.path = path
        self.root = root

    def line(self, keys) -> int | None:
        node = self.root
        for key in keys:
            if isinstance(node, yaml.MappingNode):
                for k, v in node.value:
                    if k.value == key:
                        node = v
                        break
                else:
                    break
            elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
                node = node.value[key]
            else:
                break
        return None if node is None else node.start_mark.line + 1

    def error(self, keys, message) -> ConfigError:
        where = ".".join(str(k) for k in keys) or "<root>"
        line = self.line(keys)
        src = str(self.path) if self.path else "<config>"
        loc = f"{src}:{line}" if line else src
        return ConfigError(f"{loc}: {where}: {message}")


def _parse_env_value(text: str):
    try:
        return _yaml.load(text)
    except yaml.YAMLError:
        return text


def apply_env_overrides(doc: dict, environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = copy.deepcopy(doc)
    for name in sorted(environ):
        if not name.startswith(ENV_PREFIX):
            continue
        keys = [k.lower() for k in name[len(ENV_PREFIX):].split("__") if k]
        if not keys:
            continue
        node = out
        for k in keys[:-1]:
            if not isinstance(node.get(k), dict):
                node[k] = {}
            node = node[k]
        node[keys[-1]] = _parse_env_value(environ[name])
    return out


def _num(loc, keys, value, positive=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise loc.error(keys, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        raise loc.error(keys, f"expected an integer, got {value!r}")
    if positive and value <= 0:
        raise loc.error(keys, f"must be positive, got {value!r}")
    return int(value) if integer else float(value)


def _check_keys(loc, keys, section: dict, allowed: set):
    if not isinstance(section, dict):
        raise loc.error(keys, "expected a mapping")
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise loc.error(keys + [unknown[0]], f"unknown key (allowed: {', '.join(sorted(allowed))})")


def _resolve_scenario(loc, spec, base_dir: Path):
    if spec is None:
        spec = {"include": "thulium.yaml"}
    if isinstance(spec, str):
        spec = {"include": spec}
    _check_keys(loc, ["scenario"], spec, {"include", "field", "inline"})
    if "inline" in spec:
        raw = yaml.safe_dump(spec["inline"], sort_keys=True).encode()
        data, path = spec["inline"], None
    else:
        name = spec.get("include", "thulium.yaml")
        if not isinstance(name, str):
            raise loc.error(["scenario", "include"], "expected a file name")
        candidates = [base_dir / name, SCENARIO_DIR / name]
        path = next((p for p in candidates if p.is_file()), None)
        if path is None:
            raise loc.error(["scenario", "include"], f"scenario file {name!r} not found")
        raw = path.read_bytes()
        data = _yaml.load(raw)
    try:
        scen = scenario_from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise loc.error(["scenario"], f"invalid scenario: {exc}") from exc
    if "field" in spec:
        scen = scen.at_field(_num(loc, ["scenario", "field"], spec["field"], positive=True))
    return scen, path, git_blob_digest(raw)


def _beam(loc, keys, d, default: BeamGeometry, axis, alpha):
    d = d or {}
    _check_keys(loc, keys, d, {"waist_x", "waist_y"})
    wx = _num(loc, keys + ["waist_x"], d.get("waist_x", default.waist_x), positive=True)
    wy = _num(loc, keys + ["waist_y"], d.get("waist_y", default.waist_y), positive=True)
    return BeamGeometry(wx, wy, axis, alpha, default.wavelength)


def _box_side(loc, keys, v, n):
    if isinstance(v, dict):
        _check_keys(loc, keys, v, {"lo", "hi"})
        lo, hi = v.get("lo"), v.get("hi")
        if not (isinstance(lo, list) and isinstance(hi, list) and len(lo) == n and len(hi) == n):
            raise loc.error(keys, f"per-breakpoint bounds need lo and hi lists of length {n}")
        lo = [_num(loc, keys + ["lo", i], x, positive=True) for i, x in enumerate(lo)]
        hi = [_num(loc, keys + ["hi", i], x, positive=True) for i, x in enumerate(hi)]
        return (tuple(lo), tuple(hi))
    if not (isinstance(v, list) and len(v) == 2):
        raise loc.error(keys, "expected [lo, hi] or {lo: [...], hi: [...]}")
    lo = _num(loc, keys + [0], v[0], positive=True)
    hi = _num(loc, keys + [1], v[1], positive=True)
    if hi <= lo:
        raise loc.error(keys, "hi must exceed lo")
    return (lo, hi)


def build_config(doc: dict, loc: _Locator, base_dir: Path) -> RunConfig:
    if not isinstance(doc, dict):
        raise loc.error([], "configuration must be a mapping")
    _check_keys(loc, [], doc, TOP_KEYS)
    if "seed" not in doc:
        raise loc.error([], "seed is required (no wall-clock seeding)")
    seed = _num(loc, ["seed"], doc["seed"], integer=True)

    scenario, scen_path, digest = _resolve_scenario(loc, doc.get("scenario"), base_dir)

    trap = doc.get("trap") or {}
    _check_keys(loc, ["trap"], trap, {"horizontal", "vertical", "polarizability", "crossed_threshold"})
    base = SimConfig()
    alpha = _num(loc, ["trap", "polarizability"], trap.get("polarizability", base.geom_h.polarizability_coefficient), positive=True)
    geom_h = _beam(loc, ["trap", "horizontal"], trap.get("horizontal"), base.geom_h, HORIZONTAL, alpha)
    geom_v = _beam(loc, ["trap", "vertical"], trap.get("vertical"), base.geom_v, VERTICAL, alpha)
    threshold = _num(loc, ["trap", "crossed_threshold"], trap.get("crossed_threshold", base.crossed_threshold), positive=True)

    sim = doc.get("sim") or {}
    _check_keys(loc, ["sim"], sim, SIM_KEYS)
    kwargs = {}
    for k, v in sim.items():
        if isinstance(getattr(base, k), bool):
            if not isinstance(v, bool):
                raise loc.error(["sim", k], f"expected true/false, got {v!r}")
            kwargs[k] = v
        elif k == "method":
            kwargs[k] = str(v)
        else:
            kwargs[k] = _num(loc, ["sim", k], v, positive=True)
    try:
        sim_cfg = SimConfig(geom_h=geom_h, geom_v=geom_v, crossed_threshold=threshold, **kwargs)
    except ValueError as exc:
        raise loc.error(["sim"], str(exc)) from exc

    sched = doc.get("schedule")
    if sched is None:
        raise loc.error([], "schedule is required")
    _check_keys(loc, ["schedule"], sched, {"times", "P_H", "P_V"})
    cols = {}
    for k in ("times", "P_H", "P_V"):
        v = sched.get(k)
        if not isinstance(v, list):
            raise loc.error(["schedule", k], "expected a list")
        cols[k] = [_num(loc, ["schedule", k, i], x) for i, x in enumerate(v)]
    try:
        schedule = RampSchedule(cols["times"], cols["P_H"], cols["P_V"])
    except ValueError as exc:
        raise loc.error(["schedule"], str(exc)) from exc
    n = len(schedule.times)

    search = doc.get("search") or {}
    _check_keys(loc, ["search"], search, {"H", "V", "time_bounds", "n_tail", "warm_start"})
    box = {"H": (0.005, 20.0), "V": (0.05, 8.0)}
    for beam in ("H", "V"):
        if beam in search and search[beam] is None:
            box[beam] = None  # held at the base ramp
        elif beam in search:
            box[beam] = _box_side(loc, ["search", beam], search[beam], n)
    time_bounds = None
    if search.get("time_bounds") is not None:
        tb = search["time_bounds"]
        if not (isinstance(tb, list) and len(tb) == 2):
            raise loc.error(["search", "time_bounds"], "expected [lo, hi]")
        time_bounds = (_num(loc, ["search", "time_bounds", 0], tb[0], positive=True), _num(loc, ["search", "time_bounds", 1], tb[1], positive=True))
        if time_bounds[1] <= time_bounds[0]:
            raise loc.error(["search", "time_bounds"], "hi must exceed lo")
    n_tail = _num(loc, ["search", "n_tail"], search.get("n_tail", min(3, n - 1)), positive=True, integer=True)
    if n_tail >= n:
        raise loc.error(["search", "n_tail"], f"must be below the number of breakpoints ({n})")
    warm_start = search.get("warm_start", True)
    if not isinstance(warm_start, bool):
        raise loc.error(["search", "warm_start"], "expected true/false")

    cost = doc.get("cost") or {}
    _check_keys(loc, ["cost"], cost, {"mode", "beta_gamma", "beta_bec", "n_scale"})
    mode = cost.get("mode", COMBINED)
    if mode not in (COMBINED, EFFICIENCY_ONLY):
        raise loc.error(["cost", "mode"], f"expected {COMBINED} or {EFFICIENCY_ONLY}")
    if "beta_bec" in cost and "n_scale" in cost:
        raise loc.error(["cost", "n_scale"], "give either beta_bec or n_scale, not both")
    beta_g = _num(loc, ["cost", "beta_gamma"], cost.get("beta_gamma", 1.0))
    if "beta_bec" in cost:
        beta_b = _num(loc, ["cost", "beta_bec"], cost["beta_bec"])
    else:
        beta_b = 1.0 / _num(loc, ["cost", "n_scale"], cost.get("n_scale", 1.0e4), positive=True)
    try:
        weights = CostWeights(beta_g, beta_b)
    except ValueError as exc:
        raise loc.error(["cost"], str(exc)) from exc

    opt = doc.get("optimizer") or {}
    _check_keys(loc, ["optimizer"], opt, OPTIMIZER_KEYS)
    budget = _num(loc, ["optimizer", "budget"], opt.get("budget", 60), positive=True, integer=True)
    batch = _num(loc, ["optimizer", "batch"], opt.get("batch", 1), positive=True, integer=True)
    skw = {}
    for k in OPTIMIZER_KEYS - {"budget", "batch"}:
        if k not in opt:
            continue
        v = opt[k]
        if k == "fit_noise":
            if not isinstance(v, bool):
                raise loc.error(["optimizer", k], "expected true/false")
            skw[k] = v
        elif k == "min_init" and v is None:
            skw[k] = None
        elif k in ("min_init", "refit_interval", "restarts", "n_candidates", "n_local"):
            skw[k] = _num(loc, ["optimizer", k], v, positive=True, integer=True)
        elif k == "xi":
            skw[k] = _num(loc, ["optimizer", k], v)
        else:
            skw[k] = _num(loc, ["optimizer", k], v, positive=True)
    settings = OptimizerSettings(**skw)

    img = doc.get("imaging") or {}
    _check_keys(loc, ["imaging"], img, {"full_loop", "shape"})
    full_loop = img.get("full_loop", False)
    if not isinstance(full_loop, bool):
        raise loc.error(["imaging", "full_loop"], "expected true/false")
    shape = img.get("shape", [128, 128])
    if not (isinstance(shape, list) and len(shape) == 2):
        raise loc.error(["imaging", "shape"], "expected [ny, nx]")
    shape = tuple(_num(loc, ["imaging", "shape", i], v, positive=True, integer=True) for i, v in enumerate(shape))

    out = doc.get("output_dir", "runs")
    if not isinstance(out, str):
        raise loc.error(["output_dir"], "expected a path string")

    return RunConfig(
        seed=seed,
        schedule=schedule,
        scenario=scenario,
        sim=sim_cfg,
        box=box,
        time_bounds=time_bounds,
        n_tail=n_tail,
        warm_start=warm_start,
        weights=weights,
        mode=mode,
        settings=settings,
        budget=budget,
        batch=batch,
        full_loop=full_loop,
        image_shape=shape,
        output_dir=Path(out),
        scenario_path=scen_path,
        scenario_digest=digest,
    )


def load_config(path=None, environ=None) -> RunConfig:
    path = Path(path) if path is not None else DEFAULT_CONFIG
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read configuration ({exc.strerror})") from exc
    try:
        root = _yaml.compose(text)
        doc = _yaml.load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f":{mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"{path}{line}: YAML syntax error: {getattr(exc, 'problem', exc)}") from exc
    doc = apply_env_overrides(doc or {}, environ)
    cfg = build_config(doc, _Locator(path, root), path.parent)
    cfg.source = path
    return cfg
