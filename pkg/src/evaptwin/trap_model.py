"""Crossed optical dipole trap built from two Gaussian beams.

Lab frame: x runs along the horizontal beam, z along the vertical beam,
y is the remaining horizontal direction. Each beam carries two transverse
waists (``waist_x``, ``waist_y``) in its own frame:

* horizontal beam: ``waist_x`` -> lab y, ``waist_y`` -> lab z
* vertical beam:   ``waist_x`` -> lab x, ``waist_y`` -> lab y

Depths are reported in µK (energy / k_B) and are positive numbers; the
potential itself is ``-depth`` at the crossing point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import KB, TM_MASS, UK, UM

# placeholder calibration, roughly a scalar polarizability of 140 a.u. at 1064 nm
DEFAULT_POLARIZABILITY = 3.0e4  # µK per W/µm²
DEFAULT_CROSSED_THRESHOLD = 0.05

HORIZONTAL = "horizontal"
VERTICAL = "vertical"
SINGLE_BEAM = "single_beam"
CROSSED = "crossed"


@dataclass(frozen=True)
class BeamGeometry:
    waist_x: float  # µm
    waist_y: float  # µm
    axis: str = HORIZONTAL
    polarizability_coefficient: float = DEFAULT_POLARIZABILITY
    wavelength: float = 1.064  # µm

    def __post_init__(self):
        if self.waist_x <= 0 or self.waist_y <= 0:
            raise ValueError("beam waists must be positive")
        if self.polarizability_coefficient <= 0:
            raise ValueError("polarizability coefficient must be positive")
        if self.axis not in (HORIZONTAL, VERTICAL):
            raise ValueError(f"unknown beam axis {self.axis!r}")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")

    @property
    def rayleigh_x(self) -> float:
        return math.pi * self.waist_x**2 / self.wavelength

    @property
    def rayleigh_y(self) -> float:
        return math.pi * self.waist_y**2 / self.wavelength


# the 1064 nm beams of the thulium setup
HORIZONTAL_BEAM = BeamGeometry(24.0, 54.2, HORIZONTAL)
VERTICAL_BEAM = BeamGeometry(100.0, 100.0, VERTICAL)


@dataclass(frozen=True)
class TrapState:
    depth: float  # µK
    omega_x: float  # rad/s
    omega_y: float
    omega_z: float
    config: str = SINGLE_BEAM
    depth_h: float = 0.0
    depth_v: float = 0.0

    @property
    def omega_bar(self) -> float:
        return (self.omega_x * self.omega_y * self.omega_z) ** (1.0 / 3.0)

    @property
    def omegas(self) -> tuple[float, float, float]:
        return (self.omega_x, self.omega_y, self.omega_z)

    @property
    def trapped(self) -> bool:
        return self.depth > 0 and min(self.omegas) > 0


def beam_depth(power: float, geom: BeamGeometry) -> float:
    """Peak light shift (µK) of a Gaussian beam, U = 2 alpha P / (pi w_x w_y)."""
    if power < 0:
        raise ValueError(f"negative beam power {power}")
    return geom.polarizability_coefficient * 2.0 * power / (math.pi * geom.waist_x * geom.waist_y)


def _curvatures(depth: float, geom: BeamGeometry) -> tuple[float, float, float]:
    """Potential curvature d²U/dq² at the focus along (transverse x, transverse y, axial), µK/µm²."""
    kx = 4.0 * depth / geom.waist_x**2
    ky = 4.0 * depth / geom.waist_y**2
    kz = depth * (1.0 / geom.rayleigh_x**2 + 1.0 / geom.rayleigh_y**2)
    return kx, ky, kz


def _lab_curvatures(depth: float, geom: BeamGeometry) -> np.ndarray:
    kx, ky, kz = _curvatures(depth, geom)
    if geom.axis == HORIZONTAL:
        return np.array([kz, kx, ky])
    return np.array([kx, ky, kz])


def curvature_to_omega(kappa, mass: float = TM_MASS):
    """Convert curvature in µK/µm² into angular frequency (rad/s)."""
    return np.sqrt(np.asarray(kappa) * KB * UK / (mass * UM**2))


def trap_state(
    p_h: float,
    p_v: float,
    geom_h: BeamGeometry = HORIZONTAL_BEAM,
    geom_v: BeamGeometry = VERTICAL_BEAM,
    crossed_threshold: float = DEFAULT_CROSSED_THRESHOLD,
    mass: float = TM_MASS,
) -> TrapState:
    """Harmonic description of the summed beam potentials at the crossing.

    Both powers zero gives a zero-depth state with ``trapped == False``.
    """
    u_h = beam_depth(p_h, geom_h)
    u_v = beam_depth(p_v, geom_v)
    kappa = _lab_curvatures(u_h, geom_h) + _lab_curvatures(u_v, geom_v)
    wx, wy, wz = (float(w) for w in curvature_to_omega(kappa, mass))
    if u_h > 0:
        config = CROSSED if u_v / u_h > crossed_threshold else SINGLE_BEAM
    else:
        config = CROSSED if u_v > 0 else SINGLE_BEAM
    return TrapState(u_h + u_v, wx, wy, wz, config, u_h, u_v)


def beam_potential(x, y, z, power: float, geom: BeamGeometry):
    """Full Gaussian-beam potential (µK, negative inside the beam) at lab coordinates in µm."""
    if geom.axis == HORIZONTAL:
        a, b, s = y, z, x
    else:
        a, b, s = x, y, z
    u0 = beam_depth(power, geom)
    fx = 1.0 + (s / geom.rayleigh_x) ** 2
    fy = 1.0 + (s / geom.rayleigh_y) ** 2
    wx2 = geom.waist_x**2 * fx
    wy2 = geom.waist_y**2 * fy
    return -u0 / np.sqrt(fx * fy) * np.exp(-2.0 * a**2 / wx2 - 2.0 * b**2 / wy2)


def potential(x, y, z, p_h: float, p_v: float, geom_h=HORIZONTAL_BEAM, geom_v=VERTICAL_BEAM):
    return beam_potential(x, y, z, p_h, geom_h) + beam_potential(x, y, z, p_v, geom_v)
