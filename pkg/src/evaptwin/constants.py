"""Physical constants and unit helpers shared across the package.

Internally the physics is evaluated in SI; public interfaces take the
lab-friendly units named in each signature (µK, µm, W, G, cm^6/s).
"""

from scipy.constants import atomic_mass, hbar, k as k_B, physical_constants
from scipy.special import zeta

HBAR = hbar
KB = k_B
BOHR_RADIUS = physical_constants["Bohr radius"][0]

# 169Tm, the only stable isotope
TM_MASS = 168.934218 * atomic_mass

# peak-density phase-space density at the ideal-gas condensation point
CRITICAL_PSD = float(zeta(1.5))

UK = 1e-6  # K per µK
UM = 1e-6  # m per µm
CM6_TO_UM6 = 1e24  # 1 cm^6 = 1e24 µm^6


def uk_to_joule(t_uk):
    return t_uk * UK * KB


def joule_to_uk(e):
    return e / (KB * UK)
