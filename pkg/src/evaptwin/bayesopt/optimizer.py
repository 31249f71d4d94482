"""Expected-improvement Bayesian optimization over the unit box (maximization).

The first ``min_init`` points come from a Latin-hypercube design; afterwards
proposals maximize expected improvement over a GP surrogate. Every random
draw is keyed on (seed, purpose, observation count), so replaying a log
reproduces the optimizer state exactly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtr
from scipy.stats import qmc

from .gp import GaussianProcess

log = logging.getLogger(__name__)

_LHS, _REFIT, _PROPOSE = 1, 2, 3


@dataclass
class OptimizerSettings:
    min_init: int | None = None  # defaults to 2 * dim
    refit_interval: int = 5
    restarts: int = 8
    epsilon: float = 0.02
    xi: float = 0.0
    n_candidates: int = 2048
    n_local: int = 8
    fit_noise: bool = True
    noise_variance: float = 1e-4


@dataclass
class Observation:
    x: tuple[float, ...]
    cost: float
    info: dict = field(default_factory=dict)
    clamped: int = 0


@dataclass
class CampaignState:
    dim: int
    seed: int
    settings: OptimizerSettings = field(default_factory=OptimizerSettings)
    observations: list[Observation] = field(default_factory=list)
    best_x: tuple[float, ...] | None = None
    best_cost: float = -math.inf
    flags: tuple[bool, ...] = ()
    clamp_events: int = 0
    rejected: int = 0
    surrogate: GaussianProcess | None = None
    design: np.ndarray | None = None
    n_warm: int = 0  # leading observations supplied from outside the design

    def __post_init__(self):
        if self.settings.min_init is None:
            self.settings.min_init = 2 * self.dim
        if self.surrogate is None:
            self.surrogate = GaussianProcess(
                self.dim, fit_noise=self.settings.fit_noise, noise_variance=self.settings.noise_variance
            )
        if self.design is None:
            self.design = latin_hypercube(self.settings.min_init, self.dim, self._rng(_LHS))
        if not self.flags:
            self.flags = (False,) * self.dim

    @property
    def iteration(self) -> int:
        return len(self.observations)

    @property
    def X(self) -> np.ndarray:
        return np.array([o.x for o in self.observations]).reshape(-1, self.dim)

    @property
    def y(self) -> np.ndarray:
        return np.array([o.cost for o in self.observations])

    def best_history(self) -> list[float]:
        return list(np.maximum.accumulate(self.y)) if self.observations else []

    def _rng(self, purpose: int, k: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.seed, purpose, self.iteration, k])


def latin_hypercube(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    if n == 0:
        return np.empty((0, dim))
    return qmc.LatinHypercube(d=dim, seed=rng).random(n)


_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _pdf(z):
    return _INV_SQRT_2PI * np.exp(-0.5 * z * z)


def expected_improvement(mean, var, best: float, xi: float = 0.0):
    sd = np.sqrt(np.maximum(var, 0.0))
    imp = mean - best - xi
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sd > 0, imp / sd, 0.0)
    ei = np.where(sd > 1e-12, imp * ndtr(z) + sd * _pdf(z), np.maximum(imp, 0.0))
    return np.maximum(ei, 0.0)


def _ei_and_gradient(gp: GaussianProcess, x, best: float, xi: float):
    m, v, dm, dv = gp.posterior_with_gradient(x)
    sd = math.sqrt(max(v, 0.0))
    imp = m - best - xi
    if sd < 1e-12:
        return max(imp, 0.0), (dm if imp > 0 else np.zeros_like(dm))
    z = imp / sd
    cdf, pdf = float(ndtr(z)), float(_pdf(z))
    ei = imp * cdf + sd * pdf
    dsd = dv / (2.0 * sd)
    return max(ei, 0.0), cdf * dm + pdf * dsd


def boundary_saturation(state: CampaignState, epsilon: float | None = None) -> tuple[bool, ...]:
    """Flag coordinates of the best point lying within ``epsilon`` of a box face."""
    if state.best_x is None:
        raise ValueError("boundary check needs at least one observation")
    eps = state.settings.epsilon if epsilon is None else epsilon
    return tuple(bool(v <= eps or v >= 1.0 - eps) for v in state.best_x)


def update(state: CampaignState, obs: Observation) -> CampaignState:
    """Record an observation; refit hyperparameters every ``refit_interval`` points."""
    if not math.isfinite(obs.cost):
        log.warning("rejected non-finite cost %r at x=%s", obs.cost, obs.x)
        state.rejected += 1
        return state
    state.observations.append(obs)
    state.clamp_events += obs.clamped
    if obs.cost > state.best_cost:
        state.best_cost, state.best_x = obs.cost, tuple(obs.x)
    gp = state.surrogate
    gp.set_data(state.X, state.y)
    if state.iteration >= 2 and state.iteration % state.settings.refit_interval == 0:
        gp.optimize(state._rng(_REFIT), state.settings.restarts)
    state.flags = boundary_saturation(state)
    return state


def _maximize_ei(gp: GaussianProcess, best: float, state: CampaignState, rng: np.random.Generator) -> np.ndarray:
    s = state.settings
    d = state.dim
    cands = [rng.uniform(size=(s.n_candidates, d))]
    if state.observations:
        top = state.X[np.argsort(state.y)[::-1][: min(5, state.iteration)]]
        for x in top:
            cands.append(np.clip(x + rng.normal(scale=0.05, size=(64, d)), 0.0, 1.0))
    cands = np.vstack(cands)
    mean, var = gp.posterior(cands)
    ei = expected_improvement(mean, var, best, s.xi)
    order = np.argsort(ei)[::-1][: s.n_local]
    scale = max(float(np.max(ei)), 1e-300)

    def neg_ei(x):
        val, grad = _ei_and_gradient(gp, x, best, s.xi)
        return -val / scale, -grad / scale

    best_x, best_val = cands[order[0]], -ei[order[0]] / scale
    for i in order:
        res = minimize(neg_ei, cands[i], jac=True, method="L-BFGS-B", bounds=[(0.0, 1.0)] * d)
        if res.fun < best_val:
            best_x, best_val = np.clip(res.x, 0.0, 1.0), res.fun
    return best_x


def propose(state: CampaignState, batch: int = 1) -> list[np.ndarray]:
    """Next ``batch`` points: design points first, then EI with constant-liar fill-in."""
    if batch < 1:
        raise ValueError("batch must be >= 1")
    out = []
    gp = None
    n = state.iteration
    for k in range(batch):
        idx = n + k - state.n_warm
        if 0 <= idx < len(state.design):
            out.append(state.design[idx].copy())
            continue
        if gp is None:
            gp = state.surrogate.copy()
        if gp.n == 0:
            out.append(state._rng(_PROPOSE, k).uniform(size=state.dim))
            continue
        best = float(np.max(gp.y))
        x = _maximize_ei(gp, best, state, state._rng(_PROPOSE, k))
        out.append(x)
        if k + 1 < batch:
            lie = float(np.min(gp.y))
            gp.set_data(np.vstack([gp.X, x]), np.append(gp.y, lie))
    return out


def maximize(f, dim: int, budget: int, seed: int = 0, settings: OptimizerSettings | None = None) -> CampaignState:
    """Run the optimizer on a plain function of the unit box for ``budget`` evaluations."""
    state = CampaignState(dim, seed, settings or OptimizerSettings())
    while state.iteration < budget:
        x = propose(state, 1)[0]
        update(state, Observation(tuple(float(v) for v in x), float(f(x))))
    return state
