"""Thermodynamic state of the cloud: densities, phase-space density, condensation.

The phase-space density is the peak-density value n0 * lambda_dB^3 of the
thermal (non-condensed) atoms in a harmonic trap. Both configuration-specific
methods reduce to the same harmonic expression evaluated with the frequency
triple that the trap reports for its current configuration; the experimental
per-configuration formulas are not available, so this is a declared model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .constants import CRITICAL_PSD, HBAR, KB, TM_MASS, UK, UM
from .trap_model import CROSSED, TrapState

HARMONIC = "harmonic"
SINGLE_BEAM_METHOD = "single_beam"


@dataclass(frozen=True)
class CloudState:
    n_total: float
    temperature: float  # µK
    n_bec: float = 0.0
    time: float = 0.0

    def __post_init__(self):
        if self.n_total < 0 or self.n_bec < 0:
            raise ValueError("atom numbers must be non-negative")
        if self.n_bec > self.n_total * (1 + 1e-12):
            raise ValueError(f"n_bec={self.n_bec} exceeds n_total={self.n_total}")
        if self.temperature < 0:
            raise ValueError("negative temperature")

    @property
    def n_thermal(self) -> float:
        return max(self.n_total - self.n_bec, 0.0)

    def at(self, time: float) -> "CloudState":
        return replace(self, time=time)


@dataclass(frozen=True)
class PsdValue:
    value: float
    method: str

    def __float__(self):
        return self.value

    @property
    def condensed(self) -> bool:
        return is_condensed(self.value)


def is_condensed(psd_value: float) -> bool:
    return psd_value >= CRITICAL_PSD


def _check(cloud: CloudState, trap: TrapState):
    if not trap.trapped:
        raise ValueError("cloud is not trapped (zero depth or frequency)")
    if cloud.temperature <= 0 and cloud.n_thermal > 0:
        raise ValueError("zero temperature with thermal atoms present")


def thermal_wavelength(temperature: float, mass: float = TM_MASS) -> float:
    """Thermal de Broglie wavelength in µm for a temperature in µK."""
    return HBAR * math.sqrt(2.0 * math.pi / (mass * KB * temperature * UK)) / UM


def peak_density(cloud: CloudState, trap: TrapState, mass: float = TM_MASS) -> float:
    """Boltzmann peak density of the thermal component, µm^-3."""
    _check(cloud, trap)
    n = cloud.n_thermal
    if n == 0:
        return 0.0
    kt = KB * cloud.temperature * UK
    n0 = n * trap.omega_bar**3 * (mass / (2.0 * math.pi * kt)) ** 1.5
    return n0 * UM**3


def _psd_harmonic(n: float, omega_bar: float, temperature: float) -> float:
    return n * (HBAR * omega_bar / (KB * temperature * UK)) ** 3


def _psd_single_beam(n: float, trap: TrapState, temperature: float, mass: float) -> float:
    # radial pair and the weak axial frequency enter separately
    kt = KB * temperature * UK
    radial = trap.omega_y * trap.omega_z
    axial = trap.omega_x
    n0 = n * radial * axial * (mass / (2.0 * math.pi * kt)) ** 1.5
    return n0 * (thermal_wavelength(temperature, mass) * UM) ** 3


def psd(cloud: CloudState, trap: TrapState, mass: float = TM_MASS) -> PsdValue:
    """Phase-space density of the thermal atoms; method follows the trap configuration."""
    _check(cloud, trap)
    method = HARMONIC if trap.config == CROSSED else SINGLE_BEAM_METHOD
    n = cloud.n_thermal
    if n == 0:
        return PsdValue(0.0, method)
    if method == HARMONIC:
        value = _psd_harmonic(n, trap.omega_bar, cloud.temperature)
    else:
        value = _psd_single_beam(n, trap, cloud.temperature, mass)
    return PsdValue(value, method)


def total_psd(n_total: float, temperature: float, omega_bar: float) -> float:
    """PSD the whole sample would have as a Boltzmann gas; condensation iff >= CRITICAL_PSD."""
    return _psd_harmonic(n_total, omega_bar, temperature)


def condensate_fraction(temperature: float, t_c: float) -> float:
    if temperature < 0 or t_c <= 0:
        raise ValueError("need T >= 0 and T_c > 0")
    return max(0.0, 1.0 - (temperature / t_c) ** 3)


def critical_temperature(n: float, omega_bar: float) -> float:
    """Temperature (µK) at which ``n`` Boltzmann atoms reach ``CRITICAL_PSD``.

    Uses CRITICAL_PSD rather than zeta(3) so that the condensation trigger of
    the simulator and T_c are the same condition.
    """
    if n <= 0 or omega_bar <= 0:
        raise ValueError("need N > 0 and omega_bar > 0")
    return HBAR * omega_bar / KB * (n / CRITICAL_PSD) ** (1.0 / 3.0) / UK
