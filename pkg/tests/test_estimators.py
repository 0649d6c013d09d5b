"""Closed-form ML and simplex MAP against independent numerical optima."""

import math

import numpy as np
import pytest
from scipy import optimize, stats

from sdemcmc import (
    InverseGammaPrior,
    NormalPrior,
    exact_gbm_loglik,
    generate_gbm_observations,
    map_estimate_gbm,
    ml_estimate_gbm,
)
from sdemcmc import estimators
from sdemcmc.schemes import Observations

PRIORS = (NormalPrior(0.0, 10.0), InverseGammaPrior(2.0, 2.0))


def _dataset(seed, n_obs=50):
    return generate_gbm_observations((1.0, 2.0), 100.0, n_obs, 1.0,
                                     np.random.SeedSequence((seed, 0, 0, 0)))


def test_exact_loglik_is_lognormal_product():
    obs = _dataset(1, n_obs=10)
    th = np.array([0.7, 1.3])
    dt = obs.times[1] - obs.times[0]
    want = 0.0
    for a, b in zip(obs.values[:-1], obs.values[1:]):
        ref = stats.lognorm(s=math.sqrt(1.3 * dt),
                            scale=a * math.exp((0.7 - 1.3 / 2) * dt))
        want += ref.logpdf(b)
    assert exact_gbm_loglik(th, obs) == pytest.approx(want, abs=1e-10)


def test_ml_closed_form_equals_numeric_maximum():
    for seed in range(5):
        obs = _dataset(seed)
        a_hat, s_hat = ml_estimate_gbm(obs)
        res = optimize.minimize(
            lambda z: -exact_gbm_loglik((z[0], math.exp(z[1])), obs),
            np.array([a_hat + 0.5, math.log(s_hat) + 0.3]),
            method="Nelder-Mead",
            options={"xatol": 1e-12, "fatol": 1e-14, "maxfev": 20_000})
        assert res.success
        assert a_hat == pytest.approx(res.x[0], abs=1e-6)
        assert s_hat == pytest.approx(math.exp(res.x[1]), abs=1e-6)


def test_ml_formula_by_hand():
    obs = _dataset(3)
    r = np.diff(np.log(obs.values))
    dt = obs.times[1] - obs.times[0]
    s_hand = float(np.sum((r - r.mean()) ** 2) / (r.size * dt))
    a_hand = float(r.mean() / dt + s_hand / 2.0)
    a_hat, s_hat = ml_estimate_gbm(obs)
    assert (a_hat, s_hat) == (pytest.approx(a_hand), pytest.approx(s_hand))


def test_map_with_diffuse_priors_approaches_ml():
    # the kappa = nu -> 0 limit of the inverse gamma is a 1/s prior whose
    # score -1/s still shifts the variance mode by about -2 s / M, so the gap
    # to ML closes only as the number of increments M grows
    obs = _dataset(4, n_obs=20_001)
    a_ml, s_ml = ml_estimate_gbm(obs)
    diffuse = (NormalPrior(0.0, 1e8),
               InverseGammaPrior(1e-6, 1e-6))
    a_map, s_map = map_estimate_gbm(obs, diffuse)
    assert a_map == pytest.approx(a_ml, abs=1e-3)
    rel_gap = (s_ml - s_map) / s_ml
    assert 0.0 < rel_gap < 5e-4


def test_map_is_pulled_toward_the_prior_mode():
    # posterior mode sits between the ML point and the prior mode, so the
    # shift away from ML has the sign of (prior mode - ML)
    prior_mode = PRIORS[1].scale / (PRIORS[1].shape + 1.0)
    pulled = 0
    for seed in range(50):
        obs = _dataset(seed + 100)
        _, s_ml = ml_estimate_gbm(obs)
        _, s_map = map_estimate_gbm(obs, PRIORS)
        if s_map != pytest.approx(s_ml, abs=1e-10):
            assert (s_map - s_ml) * (prior_mode - s_ml) > 0, (seed, s_ml, s_map)
            pulled += 1
    assert pulled >= 45


def test_map_reports_nonconvergence(monkeypatch):
    obs = _dataset(6)
    monkeypatch.setattr(estimators, "MAP_MAX_EVALS", 4)
    with pytest.raises(estimators.MapConvergenceError) as exc:
        map_estimate_gbm(obs, PRIORS)
    a, s = exc.value.best_point
    assert np.isfinite(a) and s > 0


def test_increment_validation():
    with pytest.raises(ValueError):
        ml_estimate_gbm(Observations(
            times=np.array([0.0, 1.0]), values=np.array([1.0, 2.0]),
            model_name="gbm", theta_true=(), seed_info={}))
    with pytest.raises(ValueError):
        ml_estimate_gbm(Observations(
            times=np.array([0.0, 0.5, 1.5]), values=np.array([1.0, 2.0, 3.0]),
            model_name="gbm", theta_true=(), seed_info={}))
    with pytest.raises(ValueError):
        ml_estimate_gbm(Observations(
            times=np.array([0.0, 0.5, 1.0]), values=np.array([1.0, -2.0, 3.0]),
            model_name="gbm", theta_true=(), seed_info={}))
