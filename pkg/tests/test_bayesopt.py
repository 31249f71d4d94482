import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evaptwin.bayesopt import (
    FIXED_TIME,
    FULL,
    TAIL_ONLY,
    VARIABLE_TIME,
    CampaignSpec,
    CampaignState,
    GaussianProcess,
    Observation,
    OptimizerSettings,
    ResumeMismatchError,
    SimulatorObjective,
    boundary_saturation,
    build_layout,
    expected_improvement,
    latin_hypercube,
    maximize,
    propose,
    read_log,
    run_campaign,
    se_kernel,
    update,
)
from evaptwin.bayesopt.campaign import best_n_bec_history, critical_number_history
from evaptwin.bayesopt.optimizer import _ei_and_gradient
from evaptwin.feshbach import load_builtin
from evaptwin.ramps import RampSchedule


# --- GP against an independent dense solve ---------------------------------

def dense_posterior(X, y, xs, ls, sv, nv):
    """Textbook GP regression on standardized targets, written with explicit loops."""
    mu, sd = y.mean(), y.std()
    sd = sd if sd > 1e-12 else 1.0
    z = (y - mu) / sd

    def k(a, b):
        return sv * math.exp(-0.5 * sum(((ai - bi) / li) ** 2 for ai, bi, li in zip(a, b, ls)))

    n = len(X)
    K = np.array([[k(X[i], X[j]) for j in range(n)] for i in range(n)]) + nv * np.eye(n)
    means, variances = [], []
    for x in xs:
        kv = np.array([k(x, X[i]) for i in range(n)])
        means.append(mu + sd * kv @ np.linalg.solve(K, z))
        variances.append(sd**2 * (sv - kv @ np.linalg.solve(K, kv)))
    return np.array(means), np.array(variances)


@pytest.mark.parametrize("n,d", [(5, 1), (20, 2), (50, 3)])
def test_posterior_matches_dense_oracle(n, d):
    rng = np.random.default_rng(n)
    X = rng.uniform(size=(n, d))
    y = np.sin(4 * X).sum(1) + 0.1 * rng.normal(size=n)
    ls = rng.uniform(0.2, 0.6, d)
    gp = GaussianProcess(d, ls, 1.3, 1e-3).set_data(X, y)
    xs = rng.uniform(size=(15, d))
    m, v = gp.posterior(xs)
    # the factorization adds a small jitter; the oracle carries the same diagonal
    mo, vo = dense_posterior(X, y, xs, ls, 1.3, 1e-3 + gp.jitter)
    np.testing.assert_allclose(m, mo, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(v, vo, rtol=1e-8, atol=1e-10)


def test_interpolation_and_prior():
    X = np.array([[0.1], [0.5], [0.9]])
    y = np.array([1.0, -2.0, 0.5])
    gp = GaussianProcess(1, [0.2], 1.0, 1e-10, fit_noise=False).set_data(X, y)
    m, v = gp.posterior(X)
    np.testing.assert_allclose(m, y, atol=1e-6)
    assert np.all(v <= 1e-6 * np.var(y) + 1e-12)
    empty = GaussianProcess(2, signal_variance=2.5)
    m0, v0 = empty.posterior([[0.3, 0.3]])
    assert m0[0] == 0.0 and v0[0] == 2.5


def test_duplicate_points_with_different_costs():
    X = np.array([[0.4], [0.4], [0.8]])
    gp = GaussianProcess(1, [0.3], 1.0, 1e-2).set_data(X, [1.0, 2.0, 0.0])
    m, _ = gp.posterior([[0.4]])
    assert 1.0 < m[0] < 2.0


def test_posterior_gradient_matches_finite_difference():
    rng = np.random.default_rng(3)
    X = rng.uniform(size=(12, 3))
    gp = GaussianProcess(3, [0.3, 0.5, 0.4], 1.1, 1e-3).set_data(X, rng.normal(size=12))
    x = rng.uniform(size=3)
    m, v, dm, dv = gp.posterior_with_gradient(x)
    m2, v2 = gp.posterior(x[None])
    assert m == pytest.approx(m2[0], rel=1e-12) and v == pytest.approx(v2[0], rel=1e-9)
    h = 1e-6
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        mp, vp = gp.posterior((x + e)[None])
        mm, vm = gp.posterior((x - e)[None])
        assert dm[i] == pytest.approx((mp[0] - mm[0]) / (2 * h), rel=1e-5, abs=1e-7)
        assert dv[i] == pytest.approx((vp[0] - vm[0]) / (2 * h), rel=1e-5, abs=1e-7)


def test_marginal_likelihood_gradient():
    rng = np.random.default_rng(5)
    X = rng.uniform(size=(15, 2))
    gp = GaussianProcess(2).set_data(X, np.cos(3 * X[:, 0]) + X[:, 1])
    theta = np.array([math.log(0.4), math.log(0.7), math.log(1.2), math.log(1e-3)])
    _, g = gp.log_marginal_likelihood(theta, gradient=True)
    h = 1e-6
    for i in range(len(theta)):
        e = np.zeros_like(theta)
        e[i] = h
        fd = (gp.log_marginal_likelihood(theta + e) - gp.log_marginal_likelihood(theta - e)) / (2 * h)
        assert g[i] == pytest.approx(fd, rel=1e-5, abs=1e-6)


def test_refit_beats_grid_on_two_parameter_slice():
    rng = np.random.default_rng(11)
    X = rng.uniform(size=(25, 1))
    y = np.sin(6 * X[:, 0]) + 0.05 * rng.normal(size=25)
    gp = GaussianProcess(1, fit_noise=False, noise_variance=1e-3).set_data(X, y)
    before = gp.log_marginal_likelihood()
    after = gp.optimize(np.random.default_rng(0), restarts=8)
    assert after >= before
    assert gp.log_marginal_likelihood() == pytest.approx(after, rel=1e-12)
    grid = [
        gp.log_marginal_likelihood(np.array([a, b]))
        for a in np.linspace(math.log(1e-2), math.log(1e1), 60)
        for b in np.linspace(math.log(1e-2), math.log(1e2), 60)
    ]
    assert after >= max(grid) - 1e-6


def test_kernel_symmetry_and_diagonal():
    rng = np.random.default_rng(0)
    A = rng.uniform(size=(6, 2))
    K = se_kernel(A, A, np.array([0.3, 0.5]), 2.0)
    np.testing.assert_allclose(K, K.T, rtol=1e-14)
    np.testing.assert_allclose(np.diag(K), 2.0, rtol=1e-14)


# --- acquisition -------------------------------------------------------------

def test_ei_vanishes_without_improvement_or_variance():
    assert expected_improvement(np.array([0.5]), np.array([1e-30]), 1.0)[0] == pytest.approx(0.0, abs=1e-12)
    assert expected_improvement(np.array([2.0]), np.array([0.0]), 1.0)[0] == 1.0


@given(st.floats(-3, 3), st.floats(1e-4, 4.0), st.floats(-3, 3))
def test_ei_closed_form(m, v, best):
    sd = math.sqrt(v)
    z = (m - best) / sd
    cdf = 0.5 * (1 + math.erf(z / math.sqrt(2)))
    pdf = math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    expected = (m - best) * cdf + sd * pdf
    assert expected_improvement(np.array([m]), np.array([v]), best)[0] == pytest.approx(expected, rel=1e-9, abs=1e-12)


def test_ei_gradient_matches_finite_difference():
    rng = np.random.default_rng(2)
    X = rng.uniform(size=(10, 2))
    y = -((X - 0.4) ** 2).sum(1)
    gp = GaussianProcess(2, [0.3, 0.3], 1.0, 1e-4).set_data(X, y)
    best = y.max()
    for x in rng.uniform(size=(5, 2)):
        val, g = _ei_and_gradient(gp, x, best, 0.0)
        h = 1e-6
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            fp = _ei_and_gradient(gp, x + e, best, 0.0)[0]
            fm = _ei_and_gradient(gp, x - e, best, 0.0)[0]
            assert g[i] == pytest.approx((fp - fm) / (2 * h), rel=1e-4, abs=1e-9)


@given(st.integers(2, 30), st.integers(1, 6), st.integers(0, 10**6))
def test_latin_hypercube_stratified(n, d, seed):
    pts = latin_hypercube(n, d, np.random.default_rng(seed))
    assert pts.shape == (n, d)
    for j in range(d):
        bins = np.floor(pts[:, j] * n).astype(int)
        assert sorted(bins) == list(range(n))


def test_initial_design_comes_first():
    st_ = CampaignState(3, seed=4)
    for k in range(st_.settings.min_init):
        x = propose(st_)[0]
        np.testing.assert_array_equal(x, st_.design[k])
        update(st_, Observation(tuple(x), float(-np.sum(x))))
    with pytest.raises(ValueError):
        propose(st_, 0)


def test_proposals_deterministic_under_seed():
    def go():
        s = CampaignState(2, seed=9)
        xs = []
        for _ in range(8):
            x = propose(s, 2)
            for xi in x:
                update(s, Observation(tuple(xi), float(-np.sum((xi - 0.6) ** 2))))
            xs.extend(x)
        return np.array(xs)

    np.testing.assert_array_equal(go(), go())


# --- update and boundary flags ---------------------------------------------------

def test_best_so_far_and_rejection():
    s = CampaignState(1, seed=0)
    costs = [0.3, 0.1, 0.5, float("nan"), 0.4, float("inf")]
    bests = []
    for i, c in enumerate(costs):
        update(s, Observation((i / 10,), c))
        bests.append(s.best_cost)
    assert bests == [0.3, 0.3, 0.5, 0.5, 0.5, 0.5]
    assert s.rejected == 2 and s.iteration == 4
    assert s.best_cost == max(s.y)
    assert s.best_history() == [0.3, 0.3, 0.5, 0.5]


def test_boundary_flags():
    s = CampaignState(3, seed=0)
    with pytest.raises(ValueError):
        boundary_saturation(s)
    update(s, Observation((0.0, 0.5, 1.0), 1.0))
    assert boundary_saturation(s) == (True, False, True)
    update(s, Observation((0.5, 0.5, 0.5), 2.0))
    assert s.flags == (False, False, False)
    update(s, Observation((0.015, 0.5, 0.99), 3.0))
    assert s.flags == (True, False, True)
    assert boundary_saturation(s, epsilon=0.005) == (False, False, False)


# --- quadratic goldens -------------------------------------------------------------

def test_quadratic_1d_within_budget():
    s = maximize(lambda x: -(x[0] - 0.3) ** 2, 1, 25, seed=0)
    hist = s.best_history()
    assert all(b >= a for a, b in zip(hist, hist[1:]))
    assert abs(s.best_x[0] - 0.3) < 0.02


@pytest.mark.slow
def test_quadratic_2d_within_budget():
    s = maximize(lambda x: -(x[0] - 0.3) ** 2 - 2 * (x[1] - 0.7) ** 2, 2, 60, seed=0)
    assert np.max(np.abs(np.array(s.best_x) - [0.3, 0.7])) < 0.02


def test_quadratic_1d_matches_recorded_golden():
    from importlib.resources import files

    golden = json.loads(files("evaptwin").joinpath("data/golden/optimizer_quadratic.json").read_text())
    s = maximize(lambda x: -(x[0] - 0.3) ** 2, 1, golden["budget"], seed=golden["seed"])
    assert s.best_x[0] == pytest.approx(golden["best_x"][0], abs=1e-9)
    assert s.best_cost == pytest.approx(golden["best_cost"], abs=1e-12)


# --- campaigns -------------------------------------------------------------------

BASE = RampSchedule([0, 2, 4, 6, 8], [20, 2, 0.3, 0.05, 0.01], [0, 1.5, 1.0, 0.4, 0.15])
OBJ = SimulatorObjective(load_builtin(4.8))
FAST = OptimizerSettings(n_candidates=256, n_local=2, restarts=2)


def spec(protocol=FIXED_TIME, budget=6, **kw):
    return CampaignSpec(protocol, budget, settings=FAST, **kw)


def test_protocol_layouts():
    seven = RampSchedule(range(7), [5] * 7, [1] * 7)
    assert build_layout(seven, spec(TAIL_ONLY)).dim == 6
    assert build_layout(seven, spec(FULL)).dim == 12
    assert build_layout(seven, spec(FIXED_TIME)).names == build_layout(seven, spec(FULL)).names
    vt = build_layout(seven, spec(VARIABLE_TIME, time_bounds=(3.0, 9.0)))
    assert vt.dim == 13 and vt.names[-1] == "time"
    with pytest.raises(ValueError):
        CampaignSpec("sideways")
    with pytest.raises(ValueError):
        CampaignSpec(VARIABLE_TIME)
    with pytest.raises(ValueError):
        CampaignSpec(FULL, budget=0)


def test_fixed_time_freezes_duration_and_warm_start_floor():
    r = run_campaign(BASE, spec(), OBJ, warm_start=[BASE])
    assert r.best_schedule.duration == BASE.duration
    warm_cost = r.history[0]["cost"]
    assert r.best_cost >= warm_cost
    assert len(r.history) == 6
    assert r.best_cost == max(h["cost"] for h in r.history)
    hist = best_n_bec_history(r.history)
    assert all(b >= a for a, b in zip(hist, hist[1:]))
    assert len(critical_number_history(r.history)) == 6
    assert "best cost" in r.report()


def test_full_after_tail_never_worse():
    tail = run_campaign(BASE, spec(TAIL_ONLY, 5), OBJ, warm_start=[BASE])
    full = run_campaign(BASE, spec(FULL, 5), OBJ, warm_start=[tail.best_schedule])
    assert full.best_cost >= tail.best_cost


def test_resume_reproduces_log(tmp_path):
    whole = tmp_path / "whole.jsonl"
    part = tmp_path / "part.jsonl"
    run_campaign(BASE, spec(budget=6), OBJ, log_path=whole)
    run_campaign(BASE, spec(budget=3), OBJ, log_path=part)
    with pytest.raises(FileExistsError):
        run_campaign(BASE, spec(budget=6), OBJ, log_path=part)
    run_campaign(BASE, spec(budget=6), OBJ, log_path=part, resume=True)
    assert whole.read_bytes() == part.read_bytes()
    header, records = read_log(whole)
    assert header["type"] == "header" and len(records) == 6


def test_resume_with_other_configuration_refused(tmp_path):
    p = tmp_path / "log.jsonl"
    run_campaign(BASE, spec(budget=2, seed=1), OBJ, log_path=p)
    with pytest.raises(ResumeMismatchError):
        run_campaign(BASE, spec(budget=4, seed=2), OBJ, log_path=p, resume=True)


def test_corrupt_log(tmp_path):
    p = tmp_path / "log.jsonl"
    p.write_text('{"type": "header"}\n{not json\n')
    with pytest.raises(ValueError):
        read_log(p)
    p.write_text('{"type": "observation"}\n')
    with pytest.raises(ValueError):
        read_log(p)


@settings(max_examples=10, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=12))
def test_best_cost_is_running_max(costs):
    s = CampaignState(2, seed=0)
    rng = np.random.default_rng(len(costs))
    for c in costs:
        update(s, Observation(tuple(rng.uniform(size=2)), c))
    assert s.best_cost == max(costs)
    assert s.best_history()[-1] == max(costs)
