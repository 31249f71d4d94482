"""Field-dependent scattering length and three-body loss coefficient.

Low-order resonances enter the scattering length through the product form
``a(B) = a_bg * prod(1 - width_i / (B - B0_i))`` and push L3 up as a^4.
High-order resonances do not move ``a`` appreciably; they add a Lorentzian
L3 enhancement that is thermally activated (centrifugal-barrier suppressed at
low temperature). The thulium scenario shipped in ``data/scenarios`` is
illustrative: positions and strengths are chosen to reproduce the qualitative
field dependence, not taken from a measured spectrum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

from . import _yaml
from .constants import BOHR_RADIUS, UM

LOW = "low"
HIGH = "high"
T_FLOOR = 1e-3  # µK

SATURATING = "saturating"
RELIEVED = "relieved"

_DATA = Path(__file__).parent / "data" / "scenarios"


class PoleError(ArithmeticError):
    """Field sits exactly on a low-order resonance pole."""


@dataclass(frozen=True)
class Resonance:
    position: float  # G
    width: float  # G; zero-crossing offset for low order, Lorentzian HWHM for high order
    order: str = LOW
    strength: float = 0.0  # peak L3 enhancement in units of l3_background (high order)
    activation_temperature: float = 0.0  # µK

    def __post_init__(self):
        if self.width == 0:
            raise ValueError("resonance width must be non-zero")
        if self.position <= 0:
            raise ValueError("resonance position must be positive")
        if self.order not in (LOW, HIGH):
            raise ValueError(f"unknown resonance order {self.order!r}")
        if self.order == HIGH and self.width < 0:
            raise ValueError("high-order Lorentzian width must be positive")


@dataclass(frozen=True)
class FeshbachScenario:
    field_B: float  # G
    a_background: float  # Bohr radii
    resonances: tuple[Resonance, ...] = ()
    l3_background: float = 1e-28  # cm^6/s
    l3_cap: float = 1e-24
    name: str = "scenario"
    table_fields: tuple[float, ...] = ()
    reference_temperature: float = 0.5  # µK, for scenario_table
    saturation_ratio: float = 2.0

    def __post_init__(self):
        if self.field_B <= 0:
            raise ValueError("field must be positive")
        if not (self.l3_cap >= self.l3_background > 0):
            raise ValueError("need l3_cap >= l3_background > 0")
        if self.a_background == 0:
            raise ValueError("background scattering length must be non-zero")

    def at_field(self, field_B: float) -> "FeshbachScenario":
        return replace(self, field_B=float(field_B))

    @property
    def low_order(self):
        return [r for r in self.resonances if r.order == LOW]

    @property
    def high_order(self):
        return [r for r in self.resonances if r.order == HIGH]


def scattering_length(scenario: FeshbachScenario, B: float | None = None) -> float:
    """Scattering length in Bohr radii; raises PoleError at a low-order resonance."""
    B = scenario.field_B if B is None else B
    a = scenario.a_background
    for res in scenario.low_order:
        detuning = B - res.position
        if detuning == 0:
            raise PoleError(f"B={B} G is on the resonance at {res.position} G")
        a *= 1.0 - res.width / detuning
    return a


def elastic_cross_section(scenario: FeshbachScenario, B: float | None = None) -> float:
    """Identical-boson cross-section 8 pi a^2 in µm^2."""
    a = scattering_length(scenario, B) * BOHR_RADIUS / UM
    return 8.0 * math.pi * a * a


def activation(res: Resonance, T: float) -> float:
    return math.exp(-res.activation_temperature / max(T, T_FLOOR))


def three_body_rate(scenario: FeshbachScenario, B: float | None = None, T: float = 0.0) -> float:
    """L3 in cm^6/s, clamped to [l3_background, l3_cap]."""
    if T < 0:
        raise ValueError("negative temperature")
    B = scenario.field_B if B is None else B
    bg = scenario.l3_background
    try:
        ratio = scattering_length(scenario, B) / scenario.a_background
    except PoleError:
        return scenario.l3_cap
    l3 = bg * ratio**4
    for res in scenario.high_order:
        lorentz = 1.0 / (1.0 + ((B - res.position) / res.width) ** 2)
        l3 += bg * res.strength * activation(res, T) * lorentz
    if not math.isfinite(l3):
        return scenario.l3_cap
    return min(max(l3, bg), scenario.l3_cap)


def scenario_table(scenario: FeshbachScenario | None = None, T: float | None = None):
    """(B, L3, tag) rows for the scenario's table fields, tag from the L3 level."""
    scenario = scenario or load_builtin()
    T = scenario.reference_temperature if T is None else T
    rows = []
    for B in scenario.table_fields:
        l3 = three_body_rate(scenario, B, T)
        tag = SATURATING if l3 >= scenario.saturation_ratio * scenario.l3_background else RELIEVED
        rows.append((B, l3, tag))
    return rows


def scenario_from_dict(d: dict) -> FeshbachScenario:
    resonances = tuple(
        Resonance(
            position=float(r["position"]),
            width=float(r["width"]),
            order=r.get("order", LOW),
            strength=float(r.get("strength", 0.0)),
            activation_temperature=float(r.get("activation_temperature", 0.0)),
        )
        for r in d.get("resonances", [])
    )
    return FeshbachScenario(
        field_B=float(d["field"]),
        a_background=float(d["a_background"]),
        resonances=resonances,
        l3_background=float(d["l3_background"]),
        l3_cap=float(d["l3_cap"]),
        name=d.get("name", "scenario"),
        table_fields=tuple(float(b) for b in d.get("table_fields", [])),
        reference_temperature=float(d.get("reference_temperature", 0.5)),
        saturation_ratio=float(d.get("saturation_ratio", 2.0)),
    )


def scenario_to_dict(s: FeshbachScenario) -> dict:
    return {
        "name": s.name,
        "field": s.field_B,
        "a_background": s.a_background,
        "l3_background": s.l3_background,
        "l3_cap": s.l3_cap,
        "reference_temperature": s.reference_temperature,
        "saturation_ratio": s.saturation_ratio,
        "table_fields": list(s.table_fields),
        "resonances": [
            {
                "position": r.position,
                "width": r.width,
                "order": r.order,
                "strength": r.strength,
                "activation_temperature": r.activation_temperature,
            }
            for r in s.resonances
        ],
    }


def load_scenario(path) -> FeshbachScenario:
    with open(path) as fh:
        return scenario_from_dict(_yaml.load(fh))


def load_builtin(field_B: float | None = None) -> FeshbachScenario:
    s = load_scenario(_DATA / "thulium.yaml")
    return s if field_B is None else s.at_field(field_B)
