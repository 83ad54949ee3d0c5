import math

import numpy as np
import pytest

from conftest import ETA_PER, ETA_TEM
from liquidator.constant_vol import h_closed_form, solve_constant_vol
from liquidator.errors import UnstableScheme, ValidationError
from liquidator.market import ConstantVol, ModelParams, SlowOU, validate_venues
from liquidator.stoch_vol import (
    default_nu_grid,
    generator_L0_h0,
    h0,
    h1,
    h1_table,
    ou_transition,
    StochVolProblem,
    pde_value,
    residual_order_study,
    solve_h_pde,
    theta_corrected,
    theta_moving_constant,
)


def test_ou_transition_limits():
    ou = SlowOU(1.0, 0.5, 2.0, 0.0)
    assert ou_transition(0.3, 0.0, ou) == pytest.approx((0.3, 0.0), abs=1e-15)
    mean, var = ou_transition(0.3, 200.0, ou)
    assert mean == pytest.approx(1.0, abs=1e-12)
    assert var == pytest.approx(ou.xi**2 / 2, rel=1e-12)
    with pytest.raises(ValidationError):
        ou_transition(0.3, -1.0, ou)


def test_ou_transition_reference_point():
    mean, var = ou_transition(0.5, 1.0, SlowOU(1.0, 0.01, 2.0, -0.4))
    assert mean == pytest.approx(1 - 0.5 * math.exp(-0.01), abs=1e-15)
    assert var == pytest.approx(2 * (1 - math.exp(-0.02)), abs=1e-15)


def test_ou_transition_matches_simulation():
    ou = SlowOU(1.0, 0.8, 0.7, 0.0)
    rng = np.random.default_rng(3)
    nu, dt = np.full(200_000, -0.5), 1e-3
    for _ in range(1000):
        nu += ou.epsilon * (ou.m - nu) * dt + ou.xi * math.sqrt(ou.epsilon * dt) * rng.standard_normal(nu.size)
    mean, var = ou_transition(-0.5, 1.0, ou)
    assert nu.mean() == pytest.approx(mean, abs=4e-3)
    assert nu.var() == pytest.approx(var, rel=1e-2)


def test_h0_is_frozen_constant_vol(stoch_problem):
    for nu in (-0.2, 0.5, 1.3):
        p = stoch_problem.params
        frozen = solve_constant_vol(ModelParams(p.Q, p.T, p.lam, p.K, ConstantVol(math.exp(nu))),
                                    validate_venues([(1.0, ETA_TEM)], ETA_PER))
        grid = np.linspace(0, 1, 9)
        assert np.max(np.abs(h0(grid, nu, stoch_problem) - h_closed_form(grid, frozen))) < 1e-14
    assert h0(1.0, 0.5, stoch_problem) == -0.1


def test_h1_vanishes_at_horizon_and_agrees_with_table(stoch_problem):
    assert h1(1.0, 0.5, stoch_problem) == 0.0
    nus = [0.3, 0.5, 0.9]
    t = np.linspace(0, 1, 101)
    tab = h1_table(t, nus, stoch_problem)
    assert np.all(tab[-1] == 0.0)
    for i in (0, 37, 80):
        assert np.asarray(h1(float(t[i]), nus, stoch_problem)) == pytest.approx(tab[i], rel=1e-6, abs=1e-10)


def test_h1_is_the_epsilon_derivative_of_the_pde(stoch_problem):
    eps = 1e-3
    pe = stoch_problem.with_epsilon(eps)
    slope = (pde_value(pe, 0.0, 0.5, 0.02, 400) - h0(0.0, 0.5, pe)) / eps
    assert slope == pytest.approx(h1(0.0, 0.5, pe), rel=1e-3)


def test_pde_reduces_to_h0_when_factor_is_frozen(stoch_problem):
    pe = stoch_problem.with_epsilon(0.0)
    grid = default_nu_grid(pe, 0.5, 0.05)
    sol = solve_h_pde(pe, 50, grid, store_times=[0.0, 0.5])
    for t in (0.0, 0.5):
        assert np.max(np.abs(sol.h[list(sol.times).index(t)] - h0(t, grid, pe))) < 1e-13


def test_corrected_rate_reduces_without_mean_reversion(stoch_problem):
    pe = stoch_problem.with_epsilon(0.0)
    assert theta_corrected(0.2, 0.5, 40.0, pe) == theta_moving_constant(0.2, 0.5, 40.0, pe)
    # with eps > 0 the correction is eps * h1 scaled by the inventory
    base = theta_moving_constant(0.2, 0.5, 40.0, stoch_problem)
    gap = theta_corrected(0.2, 0.5, 40.0, stoch_problem) - base
    assert gap == pytest.approx(-0.01 * h1(0.2, 0.5, stoch_problem) * 40.0 / ETA_TEM, rel=1e-12)


def test_generator_on_quadratic_in_nu():
    # phi = sqrt keeps lam phi^2 linear, so the frozen Delta is affine in nu
    vol = SlowOU(m=1.0, epsilon=0.01, xi=0.0, rho=0.0, phi=np.sqrt)
    prob = StochVolProblem(ModelParams(100.0, 1.0, 0.1, 0.1, vol), ETA_TEM, ETA_PER)
    d = 1e-4
    fd = (h0(0.3, 2.0 + d, prob) - h0(0.3, 2.0 - d, prob)) / (2 * d)
    assert generator_L0_h0(0.3, 2.0, prob) == pytest.approx((1.0 - 2.0) * fd, rel=1e-6)


def test_coarse_grid_reports_peclet(stoch_problem):
    with pytest.raises(UnstableScheme):
        solve_h_pde(stoch_problem, 10, np.linspace(-20.0, 20.0, 9))


def test_pde_grid_must_be_uniform(stoch_problem):
    with pytest.raises(ValidationError):
        solve_h_pde(stoch_problem, 10, [0.0, 0.1, 0.3, 0.4, 0.5])


def test_constant_phi_has_no_correction():
    vol = SlowOU(m=1.0, epsilon=0.05, xi=2.0, rho=0.0, phi=lambda nu: np.full(np.shape(nu), 2.0))
    prob = StochVolProblem(ModelParams(100.0, 1.0, 0.1, 0.1, vol), ETA_TEM, ETA_PER)
    assert h1(0.0, 0.5, prob) == 0.0
    assert np.all(h1_table(np.linspace(0, 1, 11), [0.0, 1.0], prob) == 0.0)


def test_moving_constant_rate_is_nonnegative(stoch_problem):
    t, nu = np.meshgrid(np.linspace(0, 1, 21), np.linspace(-2.0, 3.0, 26))
    assert np.all(2 * h0(t, nu, stoch_problem) + ETA_PER <= 0)
    assert theta_moving_constant(0.3, 0.5, 0.0, stoch_problem) == 0.0


def test_residual_shrinks_with_epsilon(stoch_problem):
    study = residual_order_study(stoch_problem, [0.0, 0.01, 0.02, 0.04], dnu=0.02, t_steps=200)
    assert study.residuals[0] < 1e-9
    assert np.all(np.diff(study.residuals) > 0)
