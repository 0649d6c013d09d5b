"""Path simulation: step formulas, data generators, strong convergence."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdemcmc import (
    TimeGrid,
    euler_step,
    generate_cir_observations,
    generate_gbm_observations,
    milstein_step,
    simulate_path,
    strong_error_curve,
)
from sdemcmc.models import DiffusionModel
from sdemcmc.schemes import fine_step_for


def _const_diffusion_model():
    # additive-noise model: dX = -X dt + 0.7 dB, diffusion derivative is zero
    return DiffusionModel(
        name="ou",
        drift=lambda x, th: -np.asarray(x, dtype=float),
        diffusion=lambda x, th: 0.7 * np.ones_like(np.asarray(x, dtype=float)),
        diffusion_deriv=lambda x, th: np.zeros_like(np.asarray(x, dtype=float)),
        param_names=("dummy",),
        positive_mask=(False,),
        state_lower_bound=-np.inf,
        kernel_id=-1,
    )


def test_step_formulas_by_hand(gbm):
    th = np.array([1.0, 2.0])
    x, dt, dB = 100.0, 0.02, 0.13
    sig = math.sqrt(2.0)
    mu = 1.0 * x
    e = x + mu * dt + sig * x * dB
    m = e + 0.5 * (sig * x) * sig * (dB * dB - dt)
    assert euler_step(gbm, x, th, dt, dB) == pytest.approx(e, rel=1e-14)
    assert milstein_step(gbm, x, th, dt, dB) == pytest.approx(m, rel=1e-14)


def test_cir_step_formulas_by_hand(cir):
    th = np.array([1.0, 1.0, 0.25])
    x, dt, dB = 3.0, 0.004, -0.05
    sig = math.sqrt(0.25 * x)
    dsig = 0.5 * math.sqrt(0.25 / x)
    e = x + 1.0 * (1.0 - x) * dt + sig * dB
    m = e + 0.5 * sig * dsig * (dB * dB - dt)
    assert euler_step(cir, x, th, dt, dB) == pytest.approx(e, rel=1e-14)
    assert milstein_step(cir, x, th, dt, dB) == pytest.approx(m, rel=1e-14)


def test_milstein_equals_euler_for_constant_diffusion(rng):
    model = _const_diffusion_model()
    th = np.array([0.0])
    x = rng.normal(size=1000)
    dB = rng.normal(scale=0.1, size=1000)
    e = euler_step(model, x, th, 0.01, dB)
    m = milstein_step(model, x, th, 0.01, dB)
    np.testing.assert_allclose(m, e, rtol=0.0, atol=1e-12)


def test_time_grid():
    g = TimeGrid.uniform(0.0, 1.0, 50)
    assert g.n_steps == 50
    assert g.times[0] == 0.0 and g.times[-1] == pytest.approx(1.0)
    np.testing.assert_allclose(g.dts, 0.02, rtol=1e-12)
    with pytest.raises(ValueError):
        TimeGrid(np.array([0.0, 0.5, 0.4]))


def test_simulate_path_reproducible(gbm):
    th = np.array([1.0, 2.0])
    grid = TimeGrid.uniform(0.0, 1.0, 100)
    p1 = simulate_path(gbm, th, 100.0, grid, "milstein",
                       rng=np.random.default_rng(5))
    p2 = simulate_path(gbm, th, 100.0, grid, "milstein",
                       rng=np.random.default_rng(5))
    assert p1.values[0] == 100.0
    assert p1.values.shape == (101,)
    np.testing.assert_array_equal(p1.values, p2.values)


def test_simulate_path_accepts_fixed_increments(gbm):
    th = np.array([0.2, 0.5])
    grid = TimeGrid.uniform(0.0, 0.5, 4)
    dB = np.array([0.1, -0.2, 0.05, 0.0])
    p = simulate_path(gbm, th, 10.0, grid, "euler", dB=dB)
    x = 10.0
    for i in range(4):
        x = euler_step(gbm, x, th, grid.dts[i], dB[i])
    assert p.values[-1] == pytest.approx(x, rel=1e-14)


def test_gbm_observations_layout_and_determinism():
    th = (1.0, 2.0)
    seed = np.random.SeedSequence((11, 0, 0, 0))
    obs = generate_gbm_observations(th, 100.0, 50, 1.0, seed)
    assert obs.times.shape == (50,) and obs.values.shape == (50,)
    assert obs.times[0] == 0.0 and obs.values[0] == 100.0
    np.testing.assert_allclose(np.diff(obs.times), 1.0 / 49.0, rtol=1e-12)
    assert np.all(obs.values > 0)
    assert obs.seed_info["generator"] == "exact"

    again = generate_gbm_observations(th, 100.0, 50, 1.0,
                                      np.random.SeedSequence((11, 0, 0, 0)))
    np.testing.assert_array_equal(obs.values, again.values)


def test_cir_observations_positive_and_deterministic():
    th = (1.0, 1.0, 0.25)
    seed = np.random.SeedSequence((13, 4, 0, 0))
    obs = generate_cir_observations(th, 3.0, 50, 1.0, seed, fine_dt=1e-3)
    assert obs.values.shape == (50,)
    assert np.all(obs.values > 0)
    assert obs.seed_info["generator"] == "fine-euler"
    assert obs.seed_info["attempts"] >= 1

    again = generate_cir_observations(th, 3.0, 50, 1.0,
                                      np.random.SeedSequence((13, 4, 0, 0)),
                                      fine_dt=1e-3)
    np.testing.assert_array_equal(obs.values, again.values)


@given(target=st.floats(1e-7, 0.1), n=st.integers(2, 200))
@settings(max_examples=200, deadline=None)
def test_fine_step_divides_observation_gap(target, n):
    obs_dt = 1.0 / n
    fine = fine_step_for(target, obs_dt)
    assert fine <= target * (1.0 + 1e-12)
    k = obs_dt / fine
    assert abs(k - round(k)) < 1e-9


def test_strong_error_orders(gbm):
    dts = [0.05, 0.025, 0.0125, 0.00625]
    curve = strong_error_curve(gbm, (1.0, 2.0), 100.0, 0.5, dts, 4000,
                               np.random.SeedSequence(99))
    log_dt = np.log(curve["dt"])
    slope_e = np.polyfit(log_dt, np.log(curve["euler"]), 1)[0]
    slope_m = np.polyfit(log_dt, np.log(curve["milstein"]), 1)[0]
    # generous bands here; the gated check runs at larger scale
    assert 0.3 < slope_e < 0.75
    assert 0.75 < slope_m < 1.25
    assert np.all(curve["milstein"] < curve["euler"])


def test_strong_error_requires_nested_steps(gbm):
    with pytest.raises(ValueError):
        strong_error_curve(gbm, (1.0, 2.0), 100.0, 1.0, [0.4, 0.3], 10,
                           np.random.SeedSequence(1))
