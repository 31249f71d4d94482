"""Rate-equation model of forced evaporation into a condensate.

State is (N, T, N_bec). Channels:

* evaporation over the trap lip, truncated-Boltzmann scaling laws:
  dN/dt = -N_th Gamma_el (eta - 4) e^-eta, each atom carrying
  (eta + (eta - 5)/(eta - 4)) k_B T away; the channel is off for eta <= 4
  and its cooling is clamped at zero below eta = 3 + sqrt(2);
* spilling when the depth drops faster than adiabatic cooling follows
  (atoms in the truncated tail are cut off, each carrying eta k_B T);
* adiabatic heating/cooling, T proportional to omega_bar;
* thermal three-body loss, -L3 <n^2> N_th with <n^2> = n0^2 / (3 sqrt 3),
  and its anti-evaporation heating +(T/3) L3 <n^2>;
* condensate growth, relaxing N_bec to N (1 - (T/T_c)^3) at Gamma_el;
* condensate three-body loss, suppressed by the correlation factor and
  weighted by 8/21 for the Thomas-Fermi profile.

Thomas-Fermi peak density: mu = (hbar omega_bar / 2) (15 N a / a_ho)^(2/5),
n_p = mu / g with g = 4 pi hbar^2 a / m, hence n_p = c_TF N^(2/5).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import gammainc

from . import ramps
from .cloud import CloudState, critical_temperature, condensate_fraction, peak_density, psd, total_psd
from .constants import BOHR_RADIUS, CM6_TO_UM6, CRITICAL_PSD, HBAR, KB, TM_MASS, UK, UM
from .feshbach import FeshbachScenario, elastic_cross_section, scattering_length, three_body_rate
from .trap_model import (
    DEFAULT_CROSSED_THRESHOLD,
    HORIZONTAL_BEAM,
    VERTICAL_BEAM,
    BeamGeometry,
    TrapState,
    beam_depth,
    trap_state,
)

log = logging.getLogger(__name__)

TF_DENSITY_WEIGHT = 8.0 / 21.0
THERMAL_DENSITY_WEIGHT = 1.0 / (3.0 * math.sqrt(3.0))

CHANNELS = ("evaporation", "spill", "adiabatic", "three_body", "growth", "bec_three_body")


class UntrappedError(ValueError):
    """Trap too shallow for the truncated-evaporation model (eta below the floor)."""


@dataclass(frozen=True)
class SimConfig:
    mass: float = TM_MASS
    n_initial: float = 3.0e6
    t_initial: float = 22.5  # µK
    eta_floor: float = 1.0
    rtol: float = 1e-8
    atol_n: float = 1e-6  # atoms
    atol_t: float = 1e-12  # µK
    condensate_correlation_factor: float = 1.0 / 6.0
    geom_h: BeamGeometry = HORIZONTAL_BEAM
    geom_v: BeamGeometry = VERTICAL_BEAM
    crossed_threshold: float = DEFAULT_CROSSED_THRESHOLD
    method: str = "LSODA"
    # channel switches, used by analytic-limit checks
    evaporation: bool = True
    spill: bool = True
    adiabatic: bool = True
    three_body: bool = True
    three_body_heating: bool = True
    condensate: bool = True

    def __post_init__(self):
        if self.rtol <= 0 or self.atol_n <= 0 or self.atol_t <= 0:
            raise ValueError("tolerances must be positive")
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.n_initial <= 0 or self.t_initial <= 0:
            raise ValueError("initial N and T must be positive")


@dataclass(frozen=True)
class Rates:
    dn_dt: float
    dt_dt: float
    dnbec_dt: float
    channels: dict  # name -> (dN/dt, dT/dt, dN_bec/dt)
    gamma_el: float = 0.0
    eta: float = math.inf


def mean_speed(temperature: float, mass: float = TM_MASS) -> float:
    """Mean thermal speed sqrt(8 k_B T / (pi m)) in µm/s."""
    return math.sqrt(8.0 * KB * temperature * UK / (math.pi * mass)) / UM


def tf_density_constant(omega_bar: float, a_bohr: float, mass: float = TM_MASS) -> float:
    """c_TF such that the Thomas-Fermi peak density is c_TF * N_bec^(2/5), in µm^-3."""
    a = max(abs(a_bohr), 1.0) * BOHR_RADIUS
    a_ho = math.sqrt(HBAR / (mass * omega_bar))
    mu_per = 0.5 * HBAR * omega_bar * (15.0 * a / a_ho) ** 0.4
    g = 4.0 * math.pi * HBAR**2 * a / mass
    return mu_per / g * UM**3


def _rates(
    n: float,
    temperature: float,
    n_bec: float,
    trap: TrapState,
    l3: float,
    sigma_el: float,
    a_bohr: float,
    config: SimConfig,
    dln_depth: float = 0.0,
    dln_omega: float = 0.0,
) -> Rates:
    zero = (0.0, 0.0, 0.0)
    ch = dict.fromkeys(CHANNELS, zero)
    n = max(n, 0.0)
    n_bec = min(max(n_bec, 0.0), n)
    n_th = n - n_bec
    T = temperature
    if not trap.trapped or T <= 0:
        return Rates(0.0, 0.0, 0.0, ch, 0.0, 0.0)
    eta = trap.depth / T
    cloud = CloudState(n, T, n_bec)
    n0 = peak_density(cloud, trap, config.mass)
    gamma_el = n0 * sigma_el * mean_speed(T, config.mass) / math.sqrt(2.0)
    l3_um = l3 * CM6_TO_UM6

    if config.evaporation and eta > 4.0 and n_th > 0:
        e = math.exp(-eta)
        dn = -n_th * gamma_el * (eta - 4.0) * e
        # (eta - 4) * ((eta + (eta-5)/(eta-4)) / 3 - 1) = (eta^2 - 6 eta + 7) / 3.
        # Below eta = 3 + sqrt(2) that factor turns negative (the truncated
        # distribution would heat); it is clamped at zero so dT/dt stays
        # continuous at the cutoff instead of chattering around eta = 4.
        dT = -T * gamma_el * e * max(eta * eta - 6.0 * eta + 7.0, 0.0) / 3.0
        ch["evaporation"] = (dn, dT, 0.0)

    if config.spill and n_th > 0:
        external = dln_depth - dln_omega
        if external < 0:
            tail = eta * eta * math.exp(-eta) / (2.0 * gammainc(3.0, eta))
            dn = n_th * tail * eta * external
            ch["spill"] = (dn, (eta / 3.0 - 1.0) * T * dn / n_th, 0.0)

    if config.adiabatic:
        ch["adiabatic"] = (0.0, T * dln_omega, 0.0)

    if config.three_body and n_th > 0:
        loss = l3_um * n0 * n0 * THERMAL_DENSITY_WEIGHT
        heat = T / 3.0 * loss if config.three_body_heating else 0.0
        ch["three_body"] = (-loss * n_th, heat, 0.0)

    if config.condensate and n > 0:
        t_c = critical_temperature(n, trap.omega_bar)
        target = n * condensate_fraction(T, t_c)
        if target > 0 or n_bec > 0:
            ch["growth"] = (0.0, 0.0, gamma_el * (target - n_bec))
        if config.three_body and n_bec > 0:
            n_p = tf_density_constant(trap.omega_bar, a_bohr, config.mass) * n_bec**0.4
            dnb = -l3_um * config.condensate_correlation_factor * TF_DENSITY_WEIGHT * n_p * n_p * n_bec
            ch["bec_three_body"] = (dnb, 0.0, dnb)

    dn_dt = sum(c[0] for c in ch.values())
    dt_dt = sum(c[1] for c in ch.values())
    dnb_dt = sum(c[2] for c in ch.values())
    return Rates(dn_dt, dt_dt, dnb_dt, ch, gamma_el, eta)


def derivatives(
    state: CloudState,
    trap: TrapState,
    l3: float,
    sigma_el: float,
    a_bohr: float = 144.0,
    config: SimConfig = SimConfig(),
    dln_depth: float = 0.0,
    dln_omega: float = 0.0,
) -> Rates:
    """Time derivatives of (N, T, N_bec) for a trapped cloud.

    ``l3`` in cm^6/s, ``sigma_el`` in µm^2, ``a_bohr`` sets the Thomas-Fermi
    density. ``dln_depth``/``dln_omega`` are the logarithmic rates of change of
    the trap depth and of omega_bar imposed by the power ramp.
    """
    if not trap.trapped:
        raise UntrappedError("trap has zero depth")
    if state.temperature <= 0:
        raise ValueError("temperature must be positive")
    eta = trap.depth / state.temperature
    if eta < config.eta_floor:
        raise UntrappedError(f"eta={eta:.3g} below floor {config.eta_floor}")
    return _rates(
        state.n_total, state.temperature, state.n_bec, trap, l3, sigma_el, a_bohr, config, dln_depth, dln_omega
    )


@dataclass(frozen=True)
class TrajectoryPoint:
    time: float
    cloud: CloudState
    trap: TrapState
    psd: float
    p_h: float
    p_v: float
    l3: float
    rates: Rates


@dataclass
class Trajectory:
    points: list[TrajectoryPoint] = field(default_factory=list)
    lost: bool = False
    lost_time: float | None = None
    t_critical: float | None = None
    n_at_critical: float | None = None
    clip_events: int = 0

    def __len__(self):
        return len(self.points)

    @property
    def initial(self) -> TrajectoryPoint:
        return self.points[0]

    @property
    def final(self) -> TrajectoryPoint:
        return self.points[-1]

    def column(self, name: str) -> np.ndarray:
        getters = {
            "time": lambda p: p.time,
            "n": lambda p: p.cloud.n_total,
            "T": lambda p: p.cloud.temperature,
            "n_bec": lambda p: p.cloud.n_bec,
            "psd": lambda p: p.psd,
            "p_h": lambda p: p.p_h,
            "p_v": lambda p: p.p_v,
        }
        return np.array([getters[name](p) for p in self.points])

    def summary(self) -> dict:
        f = self.final
        return {
            "time_s": f.time,
            "N": f.cloud.n_total,
            "T_uK": f.cloud.temperature,
            "N_bec": f.cloud.n_bec,
            "psd": f.psd,
            "psd_initial": self.initial.psd,
            "N_initial": self.initial.cloud.n_total,
            "max_N_bec": max(p.cloud.n_bec for p in self.points),
            "N_at_critical": self.n_at_critical,
            "t_critical_s": self.t_critical,
            "lost": self.lost,
            "lost_time_s": self.lost_time,
            "clip_events": self.clip_events,
            "P_H_W": f.p_h,
            "P_V_W": f.p_v,
        }


class _Segment:
    """Trap along one linear ramp segment, with precomputed per-watt coefficients."""

    def __init__(self, schedule, i, config: SimConfig):
        self.t0 = schedule.times[i]
        self.t1 = schedule.times[i + 1] if i < schedule.n_segments else self.t0
        self.ph0 = schedule.powers_h[i]
        self.pv0 = schedule.powers_v[i]
        if i < schedule.n_segments:
            self.sh = ramps.power_slope(schedule, i, ramps.H)
            self.sv = ramps.power_slope(schedule, i, ramps.V)
        else:
            self.sh = self.sv = 0.0
        self.config = config
        self.uh = beam_depth(1.0, config.geom_h)
        self.uv = beam_depth(1.0, config.geom_v)
        unit_h = trap_state(1.0, 0.0, config.geom_h, config.geom_v, mass=config.mass)
        unit_v = trap_state(0.0, 1.0, config.geom_h, config.geom_v, mass=config.mass)
        self.w2h = np.array(unit_h.omegas) ** 2
        self.w2v = np.array(unit_v.omegas) ** 2

    def powers(self, t):
        dt = t - self.t0
        return max(self.ph0 + self.sh * dt, 0.0), max(self.pv0 + self.sv * dt, 0.0)

    def trap(self, t) -> TrapState:
        ph, pv = self.powers(t)
        c = self.config
        return trap_state(ph, pv, c.geom_h, c.geom_v, c.crossed_threshold, c.mass)

    def log_rates(self, t):
        ph, pv = self.powers(t)
        depth = self.uh * ph + self.uv * pv
        if depth <= 0:
            return 0.0, 0.0
        dln_depth = (self.uh * self.sh + self.uv * self.sv) / depth
        w2 = self.w2h * ph + self.w2v * pv
        if np.any(w2 <= 0):
            return dln_depth, 0.0
        dln_omega = float(np.mean(0.5 * (self.w2h * self.sh + self.w2v * self.sv) / w2))
        return dln_depth, dln_omega


def _field_terms(scenario: FeshbachScenario):
    a = scattering_length(scenario)
    return a, elastic_cross_section(scenario)


def _make_point(t, y, seg: _Segment, scenario, config, a_bohr, sigma) -> tuple[TrajectoryPoint, bool]:
    n, T, nb = float(y[0]), float(y[1]), float(y[2])
    clipped = n < 0 or nb < 0 or nb > max(n, 0.0)
    n = max(n, 0.0)
    nb = min(max(nb, 0.0), n)
    T = max(T, 1e-12)
    cloud = CloudState(n, T, nb, float(t))
    trap = seg.trap(t)
    ph, pv = seg.powers(t)
    l3 = three_body_rate(scenario, None, T)
    if trap.trapped:
        value = psd(cloud, trap, config.mass).value
        dd, dw = seg.log_rates(t)
        rates = _rates(n, T, nb, trap, l3, sigma, a_bohr, config, dd, dw)
    else:
        value = 0.0
        rates = _rates(0.0, T, 0.0, trap, l3, sigma, a_bohr, config)
    return TrajectoryPoint(float(t), cloud, trap, value, ph, pv, l3, rates), clipped


def run(schedule: ramps.RampSchedule, scenario: FeshbachScenario, config: SimConfig = SimConfig()) -> Trajectory:
    """Integrate the cloud through ``schedule``; a lost cloud truncates the trajectory."""
    a_bohr, sigma = _field_terms(scenario)
    traj = Trajectory()
    y = np.array([config.n_initial, config.t_initial, 0.0])
    seg0 = _Segment(schedule, 0, config)
    p0, _ = _make_point(0.0, y, seg0, scenario, config, a_bohr, sigma)
    traj.points.append(p0)
    if not p0.trap.trapped or p0.trap.depth / config.t_initial < config.eta_floor:
        traj.lost, traj.lost_time = True, 0.0
        return traj
    if total_psd(config.n_initial, config.t_initial, p0.trap.omega_bar) >= CRITICAL_PSD:
        traj.t_critical, traj.n_at_critical = 0.0, config.n_initial

    atol = np.array([config.atol_n, config.atol_t, config.atol_n])
    for i in range(schedule.n_segments):
        seg = _Segment(schedule, i, config)

        def rhs(t, yy, seg=seg):
            T = max(yy[1], 1e-12)
            trap = seg.trap(t)
            dd, dw = seg.log_rates(t)
            l3 = three_body_rate(scenario, None, T)
            r = _rates(yy[0], T, yy[2], trap, l3, sigma, a_bohr, config, dd, dw)
            return [r.dn_dt, r.dt_dt, r.dnbec_dt]

        def lost_event(t, yy, seg=seg):
            T = max(yy[1], 1e-12)
            ph, pv = seg.powers(t)
            depth = seg.uh * ph + seg.uv * pv
            return depth / T - config.eta_floor

        lost_event.terminal = True
        lost_event.direction = -1

        def critical_event(t, yy, seg=seg):
            trap = seg.trap(t)
            if not trap.trapped or yy[0] <= 0:
                return -1.0
            return math.log(total_psd(yy[0], max(yy[1], 1e-12), trap.omega_bar) / CRITICAL_PSD)

        critical_event.direction = 1

        sol = solve_ivp(
            rhs,
            (seg.t0, seg.t1),
            y,
            method=config.method,
            rtol=config.rtol,
            atol=atol,
            events=[lost_event, critical_event],
        )
        if sol.status == -1:
            log.warning("integration failed on segment %d: %s", i, sol.message)
            traj.lost, traj.lost_time = True, float(sol.t[-1])
        if traj.t_critical is None and len(sol.t_events[1]):
            traj.t_critical = float(sol.t_events[1][0])
            traj.n_at_critical = float(sol.y_events[1][0][0])
        for k in range(1, len(sol.t)):
            pt, clipped = _make_point(sol.t[k], sol.y[:, k], seg, scenario, config, a_bohr, sigma)
            traj.clip_events += clipped
            traj.points.append(pt)
        if traj.clip_events:
            log.debug("%d population clips so far (t=%g)", traj.clip_events, sol.t[-1])
        last = traj.points[-1].cloud
        y = np.array([last.n_total, last.temperature, last.n_bec])
        if sol.status == 1 and len(sol.t_events[0]):
            traj.lost, traj.lost_time = True, float(sol.t_events[0][0])
        if traj.lost:
            break
    return traj


def decay_bec(
    initial: CloudState,
    trap: TrapState,
    scenario: FeshbachScenario,
    duration: float,
    config: SimConfig = SimConfig(),
    n_points: int = 101,
) -> list[tuple[float, float]]:
    """Three-body decay of a condensate held in a constant trap.

    dN/dt = -K N^(9/5) with K = L3 * f_corr * 8/21 * c_TF^2, a gradual
    (decelerating) decay rather than an exponential one.
    """
    if initial.n_bec <= 0:
        raise ValueError("decay needs a condensed initial state")
    if duration <= 0:
        raise ValueError("duration must be positive")
    k = bec_decay_constant(initial, trap, scenario, config)
    ts = np.linspace(0.0, duration, n_points)
    if k == 0:
        return [(float(t), initial.n_bec) for t in ts]
    sol = solve_ivp(
        lambda t, y: [-k * max(y[0], 0.0) ** 1.8],
        (0.0, duration),
        [initial.n_bec],
        method="DOP853",
        t_eval=ts,
        rtol=1e-11,
        atol=1e-9,
    )
    return [(float(t), float(n)) for t, n in zip(sol.t, sol.y[0])]


def bec_decay_constant(initial: CloudState, trap: TrapState, scenario, config: SimConfig = SimConfig()) -> float:
    """K in dN_bec/dt = -K N_bec^(9/5), per second."""
    if not config.three_body:
        return 0.0
    l3 = three_body_rate(scenario, None, max(initial.temperature, 0.0)) * CM6_TO_UM6
    c_tf = tf_density_constant(trap.omega_bar, scattering_length(scenario), config.mass)
    return l3 * config.condensate_correlation_factor * TF_DENSITY_WEIGHT * c_tf * c_tf


def rescale_curve(curve, x_factor: float, y_factor: float):
    if x_factor <= 0 or y_factor <= 0:
        raise ValueError("rescale factors must be positive")
    return [(t * x_factor, n * y_factor) for t, n in curve]


TRAJECTORY_COLUMNS = ["time_s", "N", "T_uK", "N_bec", "psd", "P_H_W", "P_V_W", "L3"]


def write_trajectory_csv(traj: Trajectory, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS)
        for p in traj.points:
            c = p.cloud
            w.writerow([repr(float(v)) for v in (p.time, c.n_total, c.temperature, c.n_bec, p.psd, p.p_h, p.p_v, p.l3)])
