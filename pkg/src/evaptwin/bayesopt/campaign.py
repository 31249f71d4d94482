"""Optimization campaigns over ramp schedules, with a resumable JSONL log.

A campaign couples a :class:`ParamLayout` (which schedule slots are searched),
a simulator objective and the EI optimizer. Every completed batch of
evaluations is appended to the log as one record per observation; restarting
with the same log replays it through the optimizer before proposing anything
new, so an interrupted campaign finishes with the same log as an
uninterrupted one.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import cost as costmod
from .. import imaging
from ..evap_sim import SimConfig, run
from ..feshbach import FeshbachScenario, scattering_length, scenario_to_dict
from ..ramps import ParamLayout, RampSchedule, decode, encode, full_layout, make_vector, tail_layout
from .optimizer import CampaignState, Observation, OptimizerSettings, propose, update

log = logging.getLogger(__name__)

FIXED_TIME = "fixed_time"
TAIL_ONLY = "tail_only"
FULL = "full"
VARIABLE_TIME = "variable_time"
PROTOCOLS = (FIXED_TIME, TAIL_ONLY, FULL, VARIABLE_TIME)

LOG_VERSION = 1


class ResumeMismatchError(RuntimeError):
    """The existing log was written by a different campaign configuration."""


# ---------------------------------------------------------------- objective


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    return v


@dataclass
class SimulatorObjective:
    """Schedule -> (cost, info). Picklable so it can run in worker processes.

    With ``full_loop`` the condensate number entering the cost is measured by
    synthesizing an absorption image of the final cloud and running the
    bimodal fit, instead of being read from the simulator state.
    """

    scenario: FeshbachScenario
    sim: SimConfig = field(default_factory=SimConfig)
    weights: costmod.CostWeights = field(default_factory=costmod.CostWeights)
    mode: str = costmod.COMBINED
    full_loop: bool = False
    image_shape: tuple[int, int] = (128, 128)

    def measured_n_bec(self, traj) -> float:
        end = traj.final
        if end.cloud.n_total <= 0:
            return 0.0
        params = imaging.auto_params(end.cloud, end.trap, self.image_shape, mass=self.sim.mass)
        a = abs(scattering_length(self.scenario))
        img = imaging.synthesize(end.cloud, end.trap, params, a_bohr=a, mass=self.sim.mass)
        try:
            fit = imaging.fit_bimodal(img)
        except imaging.ImagingError:
            return 0.0
        return fit.n_bec if fit.detected else 0.0

    def __call__(self, schedule: RampSchedule):
        traj = run(schedule, self.scenario, self.sim)
        n_bec = self.measured_n_bec(traj) if self.full_loop and not traj.lost else None
        cv = costmod.evaluate(traj, self.weights, self.mode, n_bec=n_bec)
        info = {"gamma": cv.gamma, "n_bec": cv.n_bec, "lost": cv.lost, "degenerate": cv.degenerate}
        info["summary"] = traj.summary()
        return cv.cost, _jsonable(info)

    def describe(self) -> dict:
        return {
            "scenario": scenario_to_dict(self.scenario),
            "sim": dataclasses.asdict(self.sim),
            "weights": dataclasses.asdict(self.weights),
            "mode": self.mode,
            "full_loop": self.full_loop,
            "image_shape": list(self.image_shape),
        }


# ------------------------------------------------------------------ layout


@dataclass
class CampaignSpec:
    protocol: str = FULL
    budget: int = 60
    batch: int = 1
    seed: int = 0
    n_tail: int = 3
    box: dict = field(default_factory=lambda: {"H": (0.01, 25.0), "V": (0.05, 12.0)})
    time_bounds: tuple[float, float] | None = None
    settings: OptimizerSettings = field(default_factory=OptimizerSettings)

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}; choose from {PROTOCOLS}")
        if self.budget < 1 or self.batch < 1:
            raise ValueError("budget and batch must be >= 1")
        if self.protocol == VARIABLE_TIME and self.time_bounds is None:
            raise ValueError("variable_time needs time_bounds")


def build_layout(base: RampSchedule, spec: CampaignSpec) -> ParamLayout:
    """Search coordinates for a protocol.

    fixed_time and full both expose every power after the initial breakpoint
    with the total duration frozen; tail_only exposes the last ``n_tail``
    powers of each beam; variable_time adds the total duration.
    """
    if spec.protocol == TAIL_ONLY:
        return tail_layout(base, spec.box, spec.n_tail)
    if spec.protocol == VARIABLE_TIME:
        return full_layout(base, spec.box, time_bounds=spec.time_bounds)
    return full_layout(base, spec.box)


def _layout_dict(layout: ParamLayout) -> dict:
    return {
        "base": layout.base.to_dict(),
        "slots": layout.names,
        "bounds": [list(b) for b in layout.bounds],
        "log_power": layout.log_power,
    }


def canonical_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"))


def campaign_digest(layout: ParamLayout, spec: CampaignSpec, objective: SimulatorObjective, warm_start=()) -> str:
    """Content hash of everything that determines the observation sequence (budget excluded)."""
    payload = {
        "version": LOG_VERSION,
        "protocol": spec.protocol,
        "batch": spec.batch,
        "seed": spec.seed,
        "settings": dataclasses.asdict(spec.settings),
        "layout": _layout_dict(layout),
        "objective": objective.describe(),
        "warm_start": [s.to_dict() for s in warm_start],
    }
    return hashlib.sha256(canonical_json(payload).encode()).hexdigest()


# --------------------------------------------------------------------- log


def _write_records(path: Path, records):
    with open(path, "a") as fh:
        for r in records:
            fh.write(canonical_json(r) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def read_log(path) -> tuple[dict, list[dict]]:
    header, records = None, []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{n}: corrupt log record ({exc.msg})") from exc
            if rec.get("type") == "header":
                header = rec
            else:
                records.append(rec)
    if header is None:
        raise ValueError(f"{path}: missing header record")
    return header, records


# ---------------------------------------------------------------- campaign


@dataclass
class CampaignResult:
    state: CampaignState
    layout: ParamLayout
    best_schedule: RampSchedule | None
    best_info: dict
    log_path: Path | None
    history: list[dict]

    @property
    def best_cost(self) -> float:
        return self.state.best_cost

    @property
    def flagged(self) -> list[str]:
        return [n for n, f in zip(self.layout.names, self.state.flags) if f]

    def report(self) -> str:
        lines = [
            f"observations: {self.state.iteration}",
            f"best cost: {self.state.best_cost!r}",
            f"clamp events: {self.state.clamp_events}",
        ]
        if self.best_info:
            lines.append(f"best N_BEC: {self.best_info.get('n_bec', 0.0):.1f}")
        if self.flagged:
            lines.append("boundary saturation in: " + ", ".join(self.flagged))
            lines.append("the best point sits on the search-box edge; widen the box or extend the total time")
        else:
            lines.append("boundary saturation: none")
        return "\n".join(lines)


def _observation_record(iteration, x, cost, info, clamped, state_flags, best):
    return {
        "type": "observation",
        "iteration": iteration,
        "x": list(x),
        "cost": cost,
        "clamped": clamped,
        "info": info,
        "flags": list(state_flags),
        "best_cost": best,
    }


def _evaluate(objective, schedules, workers):
    if workers <= 1 or len(schedules) == 1:
        return [objective(s) for s in schedules]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(objective, schedules))


def run_campaign(
    base: RampSchedule,
    spec: CampaignSpec,
    objective: SimulatorObjective,
    log_path=None,
    resume: bool = False,
    workers: int = 1,
    warm_start: tuple[RampSchedule, ...] = (),
    layout: ParamLayout | None = None,
) -> CampaignResult:
    """Run (or continue) a campaign until ``spec.budget`` observations exist.

    ``warm_start`` schedules are evaluated first, clamped into the box; the
    running maximum then guarantees the campaign never ends below them.
    """
    layout = layout or build_layout(base, spec)
    warm_start = tuple(warm_start)
    digest = campaign_digest(layout, spec, objective, warm_start)
    state = CampaignState(layout.dim, spec.seed, dataclasses.replace(spec.settings), n_warm=len(warm_start))
    history: list[dict] = []
    path = Path(log_path) if log_path is not None else None

    if path is not None and path.exists() and path.stat().st_size > 0:
        if not resume:
            raise FileExistsError(f"{path} exists; pass resume=True to continue it")
        header, records = read_log(path)
        if header.get("digest") != digest:
            raise ResumeMismatchError(
                f"{path} was written by a different configuration "
                f"(log digest {header.get('digest', '?')[:12]}, current {digest[:12]}); refusing to resume"
            )
        for rec in records:
            if rec.get("type") != "observation":
                continue
            update(state, Observation(tuple(rec["x"]), rec["cost"], rec["info"], rec["clamped"]))
            history.append(rec)
        log.info("replayed %d observations from %s", len(history), path)
    elif path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        header = {
            "type": "header",
            "version": LOG_VERSION,
            "digest": digest,
            "protocol": spec.protocol,
            "names": layout.names,
            "bounds": [list(b) for b in layout.bounds],
            "seed": spec.seed,
        }
        _write_records(path, [header])

    pending_warm = [encode(s, layout) for s in warm_start][len(history):]
    while len(history) < spec.budget:
        n_batch = min(spec.batch, spec.budget - len(history))
        if pending_warm:
            vectors = pending_warm[:n_batch]
            pending_warm = pending_warm[n_batch:]
        else:
            vectors = [make_vector(x, layout) for x in propose(state, n_batch)]
        schedules = [decode(v) for v in vectors]
        outcomes = _evaluate(objective, schedules, workers)
        batch_records = []
        for v, (c, info) in zip(vectors, outcomes):
            update(state, Observation(tuple(v.values), c, info, v.n_clamped))
            rec = _observation_record(len(history), v.values, c, info, v.n_clamped, state.flags, state.best_cost)
            history.append(rec)
            batch_records.append(rec)
        if path is not None:
            _write_records(path, batch_records)

    best_schedule, best_info = None, {}
    if state.best_x is not None:
        best_schedule = decode(make_vector(state.best_x, layout))
        for rec in history:
            if tuple(rec["x"]) == tuple(state.best_x) and rec["cost"] == state.best_cost:
                best_info = rec["info"]
                break
    return CampaignResult(state, layout, best_schedule, best_info, path, history)


def best_n_bec_history(history: list[dict]) -> list[float]:
    out, best = [], 0.0
    for rec in history:
        best = max(best, float(rec["info"].get("n_bec", 0.0)))
        out.append(best)
    return out


def critical_number_history(history: list[dict]) -> list[float]:
    """Atom number at the PSD crossing for each observation (NaN if it never condensed)."""
    out = []
    for rec in history:
        v = rec["info"].get("summary", {}).get("N_at_critical")
        out.append(float(v) if v is not None and math.isfinite(float(v)) else math.nan)
    return out
