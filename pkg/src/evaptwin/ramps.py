"""Piecewise-linear beam power schedules and the optimizer parameter codec.

A schedule holds K+1 breakpoints with the power of each beam at each
breakpoint; powers are interpolated linearly in watts between breakpoints.
A :class:`ParamLayout` exposes a subset of the (beam, breakpoint) slots, and
optionally the total duration, as coordinates in the unit box.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

H = "H"
V = "V"
TIME = "time"


@dataclass(frozen=True)
class RampSchedule:
    times: tuple[float, ...]
    powers_h: tuple[float, ...]
    powers_v: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(self, "powers_h", tuple(float(p) for p in self.powers_h))
        object.__setattr__(self, "powers_v", tuple(float(p) for p in self.powers_v))
        if not (len(self.times) == len(self.powers_h) == len(self.powers_v)):
            raise ValueError("times and power lists must have equal length")
        if len(self.times) == 0 or self.times[0] != 0.0:
            raise ValueError("schedule must start at t = 0")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("breakpoint times must be strictly increasing")
        if min(self.powers_h) < 0 or min(self.powers_v) < 0:
            raise ValueError("powers must be non-negative")

    @property
    def duration(self) -> float:
        return self.times[-1]

    @property
    def n_segments(self) -> int:
        return len(self.times) - 1

    def powers(self, beam: str) -> tuple[float, ...]:
        if beam == H:
            return self.powers_h
        if beam == V:
            return self.powers_v
        raise ValueError(f"unknown beam {beam!r}")

    def to_dict(self) -> dict:
        return {"times": list(self.times), "powers_h": list(self.powers_h), "powers_v": list(self.powers_v)}

    @classmethod
    def from_dict(cls, d: dict) -> "RampSchedule":
        """Inverse of :meth:`to_dict`; the config spellings ``P_H``/``P_V`` also work."""
        h = d["powers_h"] if "powers_h" in d else d["P_H"]
        v = d["powers_v"] if "powers_v" in d else d["P_V"]
        return cls(d["times"], h, v)


def _segment(schedule: RampSchedule, t: float) -> int:
    if not 0.0 <= t <= schedule.duration:
        raise ValueError(f"t={t} outside [0, {schedule.duration}]")
    i = int(np.searchsorted(schedule.times, t, side="right")) - 1
    return min(i, schedule.n_segments - 1) if schedule.n_segments else 0


def power_at(schedule: RampSchedule, t: float, beam: str) -> float:
    p = schedule.powers(beam)
    if schedule.n_segments == 0:
        if t != 0.0:
            raise ValueError(f"t={t} outside [0, 0]")
        return p[0]
    i = _segment(schedule, t)
    t0, t1 = schedule.times[i], schedule.times[i + 1]
    if t == t0:
        return p[i]
    if t == t1:
        return p[i + 1]
    w = (t - t0) / (t1 - t0)
    return p[i] + w * (p[i + 1] - p[i])


def power_slope(schedule: RampSchedule, segment: int, beam: str) -> float:
    """dP/dt (W/s) on segment ``segment``."""
    p = schedule.powers(beam)
    dt = schedule.times[segment + 1] - schedule.times[segment]
    return (p[segment + 1] - p[segment]) / dt


def extend_tail(schedule: RampSchedule, n_segments: int, segment_duration: float) -> RampSchedule:
    """Append flat segments holding the final powers; new endpoints become free parameters."""
    if n_segments < 1 or segment_duration <= 0:
        raise ValueError("need n_segments >= 1 and a positive segment duration")
    t_end = schedule.duration
    new_t = [t_end + (k + 1) * segment_duration for k in range(n_segments)]
    return RampSchedule(
        schedule.times + tuple(new_t),
        schedule.powers_h + (schedule.powers_h[-1],) * n_segments,
        schedule.powers_v + (schedule.powers_v[-1],) * n_segments,
    )


def extend_box(box: dict, n_segments: int) -> dict:
    """Grow per-breakpoint bounds to match :func:`extend_tail`.

    New breakpoints inherit the bounds of the old final breakpoint; scalar
    bounds and held beams (None) are returned unchanged.
    """
    out = {}
    for beam, side in box.items():
        if side is None or np.ndim(side[0]) == 0:
            out[beam] = side
            continue
        lo, hi = (tuple(float(v) for v in seq) for seq in side)
        out[beam] = (lo + (lo[-1],) * n_segments, hi + (hi[-1],) * n_segments)
    return out


def rescale_time(schedule: RampSchedule, total: float) -> RampSchedule:
    if total <= 0:
        raise ValueError("total time must be positive")
    f = total / schedule.duration
    return RampSchedule([t * f for t in schedule.times], schedule.powers_h, schedule.powers_v)


@dataclass(frozen=True)
class Slot:
    beam: str  # H, V or TIME
    index: int = -1  # breakpoint index; unused for TIME

    def __str__(self):
        return TIME if self.beam == TIME else f"{self.beam}[{self.index}]"


@dataclass(frozen=True)
class ParamLayout:
    """Which schedule slots the optimizer sees, with their physical bounds."""

    base: RampSchedule
    slots: tuple[Slot, ...]
    bounds: tuple[tuple[float, float], ...]
    log_power: bool = True  # power coordinates are uniform in log10(P)

    def __post_init__(self):
        if len(self.slots) != len(self.bounds):
            raise ValueError("one (lo, hi) bound per slot")
        if len(set(self.slots)) != len(self.slots):
            raise ValueError("layout slots must be disjoint")
        n = len(self.base.times)
        for s, (lo, hi) in zip(self.slots, self.bounds):
            if hi <= lo:
                raise ValueError(f"empty bound for {s}")
            if s.beam in (H, V) and not 0 <= s.index < n:
                raise ValueError(f"slot {s} outside a {n}-breakpoint schedule")
            if s.beam == TIME and lo <= 0:
                raise ValueError("total-time bound must be positive")
            if s.beam in (H, V) and self.log_power and lo <= 0:
                raise ValueError(f"log-scaled bound for {s} must be positive")

    @property
    def dim(self) -> int:
        return len(self.slots)

    @property
    def names(self) -> list[str]:
        return [str(s) for s in self.slots]

    def frozen_mask(self) -> dict[str, list[bool]]:
        """True where the schedule slot is held fixed at the base value."""
        exposed = {(s.beam, s.index) for s in self.slots}
        n = len(self.base.times)
        return {b: [(b, i) not in exposed for i in range(n)] for b in (H, V)}

    def with_base(self, base: RampSchedule) -> "ParamLayout":
        return ParamLayout(base, self.slots, self.bounds, self.log_power)

    def to_unit(self, k: int, x: float) -> float:
        lo, hi = self.bounds[k]
        if self.slots[k].beam != TIME and self.log_power:
            return _normalize(math.log10(max(x, 1e-300)), math.log10(lo), math.log10(hi))
        return _normalize(x, lo, hi)

    def from_unit(self, k: int, u: float) -> float:
        lo, hi = self.bounds[k]
        if self.slots[k].beam != TIME and self.log_power:
            a, b = math.log10(lo), math.log10(hi)
            # exact endpoints keep encode/decode stable at the box faces
            return lo if u == 0.0 else hi if u == 1.0 else 10.0 ** (a + u * (b - a))
        return lo + u * (hi - lo)


@dataclass(frozen=True)
class ParamVector:
    values: tuple[float, ...]
    layout: ParamLayout
    clamped: tuple[bool, ...] = ()

    @property
    def n_clamped(self) -> int:
        return sum(self.clamped)


def _normalize(x: float, lo: float, hi: float) -> float:
    return (x - lo) / (hi - lo)


def clamp_unit(values: Sequence[float]) -> tuple[tuple[float, ...], tuple[bool, ...]]:
    out, flags = [], []
    for v in values:
        c = min(max(float(v), 0.0), 1.0)
        out.append(c)
        flags.append(c != v)
    return tuple(out), tuple(flags)


def encode(schedule: RampSchedule, layout: ParamLayout) -> ParamVector:
    """Map the exposed slots of ``schedule`` into the unit box, clamping out-of-box values."""
    if len(schedule.times) != len(layout.base.times):
        raise ValueError("schedule shape does not match layout")
    raw = []
    for k, s in enumerate(layout.slots):
        x = schedule.duration if s.beam == TIME else schedule.powers(s.beam)[s.index]
        raw.append(layout.to_unit(k, x))
    values, flags = clamp_unit(raw)
    return ParamVector(values, layout, flags)


def make_vector(values: Sequence[float], layout: ParamLayout) -> ParamVector:
    if len(values) != layout.dim:
        raise ValueError(f"expected {layout.dim} coordinates, got {len(values)}")
    v, flags = clamp_unit(values)
    return ParamVector(v, layout, flags)


def decode(pv: ParamVector) -> RampSchedule:
    layout = pv.layout
    base = layout.base
    ph, pv_, total = list(base.powers_h), list(base.powers_v), base.duration
    for k, (s, u) in enumerate(zip(layout.slots, pv.values)):
        x = layout.from_unit(k, u)
        if s.beam == TIME:
            total = x
        elif s.beam == H:
            ph[s.index] = x
        else:
            pv_[s.index] = x
    f = total / base.duration if base.duration > 0 else 1.0
    times = [t * f for t in base.times]
    times[-1] = total  # t_K * (total / t_K) can miss total by an ulp
    return RampSchedule(times, ph, pv_)


def _power_bounds(beam_box, beam, i):
    lo, hi = beam_box[beam]
    if np.ndim(lo) == 0:
        return float(lo), float(hi)
    return float(lo[i]), float(hi[i])


def full_layout(base: RampSchedule, box: dict, time_bounds=None, first: int = 1, log_power: bool = True) -> ParamLayout:
    """Expose every breakpoint power from index ``first`` on, optionally the total time.

    ``box`` maps beam -> (lo, hi), either scalars or per-breakpoint sequences.
    A beam missing from ``box`` (or mapped to None) is held at its base ramp.
    """
    slots, bounds = [], []
    n = len(base.times)
    for beam in (H, V):
        if box.get(beam) is None:
            continue
        for i in range(first, n):
            slots.append(Slot(beam, i))
            bounds.append(_power_bounds(box, beam, i))
    if time_bounds is not None:
        slots.append(Slot(TIME))
        bounds.append((float(time_bounds[0]), float(time_bounds[1])))
    return ParamLayout(base, tuple(slots), tuple(bounds), log_power)


def tail_layout(base: RampSchedule, box: dict, n_tail: int = 3, log_power: bool = True) -> ParamLayout:
    """Expose only the last ``n_tail`` powers of each beam."""
    n = len(base.times)
    if not 1 <= n_tail < n:
        raise ValueError(f"n_tail must be in [1, {n - 1}]")
    return full_layout(base, box, first=n - n_tail, log_power=log_power)


def write_schedule_csv(schedule: RampSchedule, path, n_points: int = 200):
    """Uniform-grid (t, P_H, P_V) samples for plotting."""
    ts = np.linspace(0.0, schedule.duration, n_points)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "P_H_W", "P_V_W"])
        for t in ts:
            t = min(float(t), schedule.duration)
            w.writerow([repr(float(v)) for v in (t, power_at(schedule, t, H), power_at(schedule, t, V))])
