"""Evaporation efficiency and the condensate-weighted cost.

gamma = ln(D / D0) / ln(N0 / N)            (orders of PSD per order of atoms)
C     = beta_gamma * gamma + beta_bec * N_bec

A failed evaporation (lost cloud, or no condensate) still gets a finite cost
through gamma, so the learner keeps information from it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

EFFICIENCY_ONLY = "efficiency_only"
COMBINED = "combined"

# bounds the ratio when the atom loss is numerically tiny
GAMMA_LIMIT = 50.0


class DegenerateCostError(ValueError):
    """No atoms were lost, so the efficiency ratio is undefined."""


@dataclass(frozen=True)
class CostWeights:
    beta_gamma: float = 1.0
    beta_bec: float = 1.0e-4

    def __post_init__(self):
        if self.beta_gamma < 0 or self.beta_bec < 0:
            raise ValueError("cost weights must be non-negative")
        if self.beta_gamma == 0 and self.beta_bec == 0:
            raise ValueError("cost weights cannot both be zero")

    @classmethod
    def normalized(cls, n_scale: float = 1.0e4) -> "CostWeights":
        return cls(1.0, 1.0 / n_scale)


@dataclass(frozen=True)
class CostValue:
    cost: float
    gamma: float
    n_bec: float
    mode: str
    lost: bool = False
    degenerate: bool = False


def gamma_efficiency(psd0: float, psd: float, n0: float, n: float) -> float:
    if psd0 <= 0 or psd <= 0:
        raise ValueError("phase-space densities must be positive")
    if n0 <= 0 or n <= 0:
        raise ValueError("atom numbers must be positive")
    if n >= n0:
        raise DegenerateCostError(f"no atom loss (N0={n0}, N={n})")
    return math.log(psd / psd0) / math.log(n0 / n)


def combined_cost(gamma: float, n_bec: float, weights: CostWeights = CostWeights()) -> float:
    if n_bec < 0:
        raise ValueError("negative condensate number")
    return weights.beta_gamma * gamma + weights.beta_bec * n_bec


def _last_valid(trajectory):
    for p in reversed(trajectory.points):
        if p.psd > 0 and p.cloud.n_total > 0:
            return p
    return None


def evaluate(trajectory, weights: CostWeights = CostWeights(), mode: str = COMBINED, n_bec: float | None = None) -> CostValue:
    """Cost of a simulated run.

    ``n_bec`` overrides the trajectory's terminal condensate number, e.g. with
    the value extracted from a synthetic absorption image (full-loop mode).
    Lost clouds are scored with gamma at the last valid point and N_BEC = 0.
    """
    if trajectory is None or len(trajectory) == 0:
        raise ValueError("empty trajectory")
    if mode not in (EFFICIENCY_ONLY, COMBINED):
        raise ValueError(f"unknown cost mode {mode!r}")
    first = trajectory.points[0]
    last = _last_valid(trajectory)
    degenerate = False
    gamma = 0.0
    if last is not None and first.psd > 0:
        try:
            gamma = gamma_efficiency(first.psd, last.psd, first.cloud.n_total, last.cloud.n_total)
        except DegenerateCostError:
            degenerate = True
    else:
        degenerate = True
    gamma = min(max(gamma, -GAMMA_LIMIT), GAMMA_LIMIT)
    if trajectory.lost:
        nb = 0.0
    elif n_bec is not None:
        nb = max(float(n_bec), 0.0)
    else:
        nb = trajectory.final.cloud.n_bec
    if mode == EFFICIENCY_ONLY:
        value = gamma
    else:
        value = combined_cost(gamma, nb, weights)
    if not math.isfinite(value):
        value = 0.0
    return CostValue(value, gamma, nb, mode, trajectory.lost, degenerate)
