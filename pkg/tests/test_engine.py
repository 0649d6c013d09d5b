"""MCMC engine: block algebra, update steps, determinism, exact cancellation."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdemcmc import (
    McmcConfig,
    MethodCombo,
    choose_update_blocks,
    generate_gbm_observations,
    generate_cir_observations,
    hpd_interval,
    point_estimates,
    run_chain,
    study_combos,
    study_priors,
)
from sdemcmc import _kernels, bridges, density
from sdemcmc.engine import _calibrate_rows, _segments, parameter_update

GBM_PRIORS = study_priors("gbm")
CIR_PRIORS = study_priors("cir")


def _gbm_obs(n_obs=20, seed=7):
    return generate_gbm_observations((1.0, 2.0), 100.0, n_obs, 1.0,
                                     np.random.SeedSequence((seed, 0, 0, 0)))


def _cir_obs(n_obs=20, seed=7):
    return generate_cir_observations((1.0, 1.0, 0.25), 3.0, n_obs, 1.0,
                                     np.random.SeedSequence((seed, 0, 0, 0)),
                                     fine_dt=1e-3)


def _config(**kw):
    base = dict(iterations=300, m=2, burn_in_fraction=0.1, lam=5.0,
                rw_variances=(0.25, 0.25), theta_init=(1.0, 2.0), seed=123)
    base.update(kw)
    return McmcConfig(**base)


# --- method combos ----------------------------------------------------------

def test_method_combo_validation_and_labels():
    c = MethodCombo("mb", "milstein", "euler")
    assert c.label == "mb/mil/eul"
    assert MethodCombo("lc", "euler", "exact").label == "lc/eul/exact"
    with pytest.raises(ValueError):
        MethodCombo("rb", "euler", "euler")
    with pytest.raises(ValueError):
        MethodCombo("lc", "exact", "euler")  # exact cannot drive proposals


def test_study_combos_cover_the_grid():
    combos = study_combos()
    assert len(combos) == 8
    assert len(set(combos)) == 8
    assert all(c.likelihood_scheme in ("euler", "milstein") for c in combos)


# --- block decomposition ----------------------------------------------------

def test_choose_update_blocks_invariants_bulk():
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        cuts = choose_update_blocks(100, 5.0, rng)
        assert cuts[0] == 0 and cuts[-1] == 100
        assert np.all(np.diff(cuts) > 0)


@given(n=st.integers(1, 400), lam=st.floats(0.3, 20.0), seed=st.integers(0, 10_000))
@settings(max_examples=300, deadline=None)
def test_choose_update_blocks_invariants_hypothesis(n, lam, seed):
    cuts = choose_update_blocks(n, lam, np.random.default_rng(seed))
    assert cuts[0] == 0 and cuts[-1] == n
    assert np.all(np.diff(cuts) > 0)
    assert np.all(cuts <= n)


def test_block_gap_mean_matches_poisson_parameter():
    rng = np.random.default_rng(1)
    gaps = []
    for _ in range(4000):
        cuts = choose_update_blocks(1000, 5.0, rng)
        gaps.append(np.diff(cuts))
    mean_gap = np.concatenate(gaps).mean()
    # Poisson(5) thinned of zero draws by the dedupe
    assert 4.6 < mean_gap < 5.6


def test_segments_partition_the_path():
    cuts = np.array([0, 3, 9, 14, 20])
    obs_idx = np.array([0, 5, 10, 15, 20])
    left, right, n_int, block_of = _segments(cuts, obs_idx)
    anchors = np.union1d(cuts, obs_idx)
    np.testing.assert_array_equal(left, anchors[:-1])
    np.testing.assert_array_equal(right, anchors[1:])
    np.testing.assert_array_equal(n_int, right - left - 1)
    # every segment lands in the block that contains its left anchor
    for l, b in zip(left, block_of):
        assert cuts[b] <= l < cuts[b + 1]


# --- parameter update -------------------------------------------------------

def test_parameter_update_moves_all_or_none(gbm):
    obs = _gbm_obs()
    cfg = _config(m=1)
    rng = np.random.default_rng(3)
    combo = MethodCombo("lc", "euler", "euler")
    theta = np.array([1.0, 2.0])
    dts = np.diff(obs.times)
    moved = rejected = 0
    for _ in range(200):
        th2, acc, _ = parameter_update(combo, gbm, GBM_PRIORS, theta,
                                       obs.values, dts, cfg, rng)
        if acc:
            assert th2[0] != theta[0] and th2[1] != theta[1]
            moved += 1
        else:
            np.testing.assert_array_equal(th2, theta)
            rejected += 1
        theta = th2
    assert moved > 20 and rejected > 20


def test_parameter_update_keeps_fixed_components(cir):
    obs = _cir_obs()
    cfg = _config(rw_variances=(float("nan"), 0.25, 0.25),
                  theta_init=(1.0, 1.0, 0.25))
    rng = np.random.default_rng(4)
    combo = MethodCombo("lc", "euler", "euler")
    theta = np.array([1.0, 1.0, 0.25])
    dts = np.diff(obs.times)
    changed = 0
    for _ in range(150):
        th2, acc, _ = parameter_update(combo, cir, CIR_PRIORS, theta,
                                       obs.values, dts, cfg, rng)
        assert th2[0] == 1.0
        changed += int(acc)
        theta = th2
    assert changed > 10


def test_parameter_update_returns_consistent_loglik(gbm):
    obs = _gbm_obs()
    cfg = _config()
    rng = np.random.default_rng(5)
    combo = MethodCombo("lc", "milstein", "milstein")
    dts = np.diff(obs.times)
    th2, acc, ll = parameter_update(combo, gbm, GBM_PRIORS,
                                    np.array([1.0, 2.0]), obs.values, dts,
                                    cfg, rng)
    want = density.path_loglikelihood(gbm, "milstein", obs.values, dts, th2)
    assert ll == pytest.approx(want, abs=1e-9)


# --- kernels versus the numpy reference implementations ----------------------

def test_kernel_logpdf_matches_density_module(gbm, cir, rng):
    for model, mid, th in ((gbm, _kernels.MODEL_GBM, np.array([1.0, 2.0])),
                           (cir, _kernels.MODEL_CIR, np.array([1.0, 1.0, 0.25]))):
        x0 = 100.0 if model.name == "gbm" else 3.0
        yf = x0 * np.exp(rng.normal(scale=0.05, size=400))
        yt = yf * np.exp(rng.normal(scale=0.05, size=400))
        dt = np.full(400, 0.02)
        for scheme, sid in (("euler", _kernels.SCHEME_EULER),
                            ("milstein", _kernels.SCHEME_MILSTEIN)):
            out = np.empty(400)
            k_th = np.asarray(th, dtype=np.float64)
            _kernels.k_logpdf(mid, sid, k_th, yf, yt, dt, out)
            want = density.transition_logpdf(model, scheme, yf, yt, dt, th)
            np.testing.assert_allclose(out, want, rtol=1e-11, atol=1e-11)


def test_kernel_exact_gbm_matches_density(rng):
    yf = 100.0 * np.exp(rng.normal(scale=0.05, size=200))
    yt = yf * np.exp(rng.normal(scale=0.05, size=200))
    dt = np.full(200, 0.02)
    th = np.array([1.0, 2.0])
    out = np.empty(200)
    _kernels.k_logpdf(_kernels.MODEL_GBM, _kernels.SCHEME_EXACT_GBM,
                      th, yf, yt, dt, out)
    from sdemcmc import gbm_exact_transition_logpdf
    want = gbm_exact_transition_logpdf(yf, yt, dt, th)
    np.testing.assert_allclose(out, want, rtol=1e-11, atol=1e-11)


def test_kernel_loglik_sum_matches_path_loglikelihood(gbm, rng):
    values = 100.0 * np.exp(np.cumsum(rng.normal(scale=0.03, size=30)))
    dts = np.full(29, 0.01)
    th = np.array([1.0, 2.0])
    got = _kernels.k_loglik_sum(_kernels.MODEL_GBM, _kernels.SCHEME_MILSTEIN,
                                th, values, dts)
    want = density.path_loglikelihood(gbm, "milstein", values, dts, th)
    assert got == pytest.approx(want, abs=1e-9)


def test_kernel_mb_unnorm_matches_bridges(gbm, cir, rng):
    for model, mid, th, xl, xr in (
            (gbm, _kernels.MODEL_GBM, np.array([1.0, 2.0]), 100.0, 103.0),
            (cir, _kernels.MODEL_CIR, np.array([1.0, 1.0, 0.25]), 3.0, 2.9)):
        feas = bridges.mb_feasible_interval(model, th, xl, xr, 0.01, 0.02)
        u = np.linspace(feas.lo + 1e-6 * xl,
                        min(feas.hi, xl * 1.5), 200)
        out = np.empty(200)
        _kernels.k_mb_unnorm_points(mid, th, u,
                                    np.full(200, xl), np.full(200, xr),
                                    np.full(200, 0.01), np.full(200, 0.02),
                                    out)
        want = bridges.mb_milstein_unnorm_logpdf(model, th, u, xl, xr,
                                                 0.01, 0.02)
        np.testing.assert_allclose(out, want, rtol=1e-10, atol=1e-10)


def test_engine_calibration_mass_matches_public_calibration(gbm):
    th = np.array([1.0, 2.0])
    xl, xr, dtk, dtp = 100.0, 103.0, 0.01, 0.02
    lo, hi = bridges.mb_feasible_bounds(gbm, th, np.array([xl]),
                                        np.array([xr]), np.array([dtk]),
                                        np.array([dtp]))
    cal = _calibrate_rows(gbm, th, np.array([xl]), np.array([xr]),
                          np.array([dtk]), np.array([dtp]), lo, hi,
                          need_z=True)
    ref = bridges.calibrate_mb_bridge(gbm, th, xl, xr, dtk, dtp)
    assert cal.log_z[0] == pytest.approx(ref.log_z, abs=5e-3)
    assert cal.a[0] == pytest.approx(ref.lo, rel=0.05)
    assert cal.b[0] == pytest.approx(ref.hi, rel=0.05)


@pytest.mark.parametrize("combo", [
    MethodCombo("lc", "euler", "euler"),
    MethodCombo("lc", "milstein", "euler"),
    MethodCombo("mb", "euler", "euler"),
    MethodCombo("mb", "milstein", "milstein"),
])
def test_propose_segment_reverse_matches_forward(gbm, combo):
    # evaluating a freshly proposed interior as the "current" one must give
    # back the forward log-density: same endpoints, same chaining, same law
    from sdemcmc.engine import propose_segment

    th = np.array([1.0, 2.0])
    t_seg = np.linspace(0.0, 0.03, 4)
    first = propose_segment(combo, gbm, th, t_seg, 100.0, 103.0,
                            np.array([101.0, 102.0]),
                            np.random.default_rng(5))
    again = propose_segment(combo, gbm, th, t_seg, 100.0, 103.0,
                            np.array([101.0, 102.0]),
                            np.random.default_rng(5))
    np.testing.assert_array_equal(first.points, again.points)
    assert first.points.shape == (2,)
    assert (first.points > 0).all()

    second = propose_segment(combo, gbm, th, t_seg, 100.0, 103.0,
                             first.points, np.random.default_rng(99))
    assert second.log_q_reverse == pytest.approx(first.log_q_forward,
                                                 abs=1e-10)
    with pytest.raises(ValueError):
        propose_segment(combo, gbm, th, t_seg, 100.0, 103.0,
                        np.array([101.0]), np.random.default_rng(1))


# --- full chains -------------------------------------------------------------

def test_run_chain_is_deterministic(gbm):
    obs = _gbm_obs()
    combo = MethodCombo("mb", "euler", "euler")
    r1 = run_chain(combo, gbm, GBM_PRIORS, obs, _config())
    r2 = run_chain(combo, gbm, GBM_PRIORS, obs, _config())
    np.testing.assert_array_equal(r1.samples, r2.samples)
    np.testing.assert_array_equal(r1.log_posterior, r2.log_posterior)
    assert r1.param_accept_rate == r2.param_accept_rate
    assert r1.path_accept_rate == r2.path_accept_rate
    r3 = run_chain(combo, gbm, GBM_PRIORS, obs, _config(seed=124))
    assert not np.array_equal(r1.samples, r3.samples)


def test_run_chain_never_touches_observed_points(gbm):
    obs = _gbm_obs()
    cfg = _config(m=3)
    res = run_chain(MethodCombo("lc", "milstein", "milstein"), gbm,
                    GBM_PRIORS, obs, cfg)
    obs_idx = np.arange(0, res.final_path_values.size, 3)
    np.testing.assert_array_equal(res.final_path_values[obs_idx], obs.values)
    np.testing.assert_allclose(res.final_path_times[obs_idx], obs.times,
                               rtol=1e-12)


def test_run_chain_m1_skips_path_updates(gbm):
    obs = _gbm_obs()
    res = run_chain(MethodCombo("lc", "euler", "euler"), gbm, GBM_PRIORS,
                    obs, _config(m=1))
    assert res.n_path_updates == 0
    assert math.isnan(res.path_accept_rate)
    assert res.samples.shape == (300, 2)


def test_mb_milstein_m2_acceptance_is_exactly_one(gbm):
    obs = _gbm_obs()
    res = run_chain(MethodCombo("mb", "milstein", "milstein"), gbm,
                    GBM_PRIORS, obs, _config(iterations=250))
    assert res.path_accept_rate == 1.0
    assert res.path_logratio_max == 0.0
    assert res.n_path_updates > 1000


def test_mb_milstein_m2_acceptance_is_exactly_one_cir(cir):
    obs = _cir_obs()
    cfg = _config(rw_variances=(float("nan"), 0.25, 0.25),
                  theta_init=(1.0, 1.0, 0.25), iterations=250)
    res = run_chain(MethodCombo("mb", "milstein", "milstein"), cir,
                    CIR_PRIORS, obs, cfg)
    assert res.path_accept_rate == 1.0
    assert res.path_logratio_max == 0.0


def test_mb_euler_m2_acceptance_is_high_but_not_one(gbm):
    # the Gaussian bridge freezes its coefficients at the left point, so the
    # two-factor cancellation is only approximate for it
    obs = _gbm_obs()
    res = run_chain(MethodCombo("mb", "euler", "euler"), gbm, GBM_PRIORS,
                    obs, _config(iterations=400))
    assert 0.6 < res.path_accept_rate < 1.0


def test_lc_m2_acceptance_near_reference_band(gbm):
    obs = _gbm_obs()
    res = run_chain(MethodCombo("lc", "euler", "euler"), gbm, GBM_PRIORS,
                    obs, _config(iterations=400))
    assert 0.30 < res.path_accept_rate < 0.55


def _batch_se(x, n_batches=30):
    n = x.size - (x.size % n_batches)
    means = x[:n].reshape(n_batches, -1).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def test_normalization_constants_cancel(gbm):
    # the bridge normalization constants appear on both sides of every
    # acceptance ratio, so rescaling them all must not change a single
    # decision; forcing them on where the engine would skip them may change
    # proposal-stream details (the quadrature pads the truncation interval by
    # one node) but must leave the chain law alone
    obs = _gbm_obs()
    combo = MethodCombo("mb", "milstein", "milstein")
    for m in (2, 3):
        base = run_chain(combo, gbm, GBM_PRIORS, obs,
                         _config(m=m, iterations=1200))
        forced = run_chain(combo, gbm, GBM_PRIORS, obs,
                           _config(m=m, iterations=1200,
                                   mb_force_normalization=True))
        scaled = run_chain(combo, gbm, GBM_PRIORS, obs,
                           _config(m=m, iterations=1200,
                                   mb_force_normalization=True,
                                   mb_norm_scale=7.5))
        np.testing.assert_array_equal(forced.samples, scaled.samples)
        assert forced.path_accept_rate == scaled.path_accept_rate
        # law-level agreement with the default chain: posterior means within
        # batch-means error (KS is unreliable on autocorrelated draws)
        for j in (0, 1):
            diff = abs(base.samples[:, j].mean() - forced.samples[:, j].mean())
            se = math.hypot(_batch_se(base.samples[:, j]),
                            _batch_se(forced.samples[:, j]))
            assert diff < 6.0 * se, (m, j, diff, se)
        if m == 2:
            # shared anchors: every forced constant cancels within rounding,
            # so the two-scheme pairing still accepts every move
            assert forced.path_accept_rate == 1.0
            assert abs(forced.path_logratio_max) < 1e-9


def test_run_chain_counters_zero_on_study_settings(gbm):
    obs = _gbm_obs()
    res = run_chain(MethodCombo("mb", "milstein", "milstein"), gbm,
                    GBM_PRIORS, obs, _config(m=5, iterations=200))
    assert res.counters["fallback_empty"] == 0
    assert res.counters["fallback_cap"] == 0


def test_run_chain_validation_errors(gbm, cir):
    obs = _gbm_obs()
    with pytest.raises(ValueError):
        run_chain(MethodCombo("lc", "euler", "exact"), cir, CIR_PRIORS,
                  _cir_obs(), _config(rw_variances=(float("nan"), .25, .25),
                                      theta_init=(1., 1., .25)))
    with pytest.raises(ValueError):
        run_chain(MethodCombo("lc", "euler", "euler"), gbm, GBM_PRIORS, obs,
                  _config(theta_init=(1.0, 2.0, 3.0)))
    with pytest.raises(ValueError):
        # prior list marks no component fixed but the variance says otherwise
        run_chain(MethodCombo("lc", "euler", "euler"), gbm, GBM_PRIORS, obs,
                  _config(rw_variances=(float("nan"), 0.25)))


def test_run_chain_rejects_non_equidistant_observations(gbm):
    obs = _gbm_obs()
    times = obs.times.copy()
    times[3] += 0.004
    from sdemcmc.schemes import Observations
    bad = Observations(times=times, values=obs.values, model_name="gbm",
                       theta_true=(1.0, 2.0), seed_info={})
    with pytest.raises(ValueError):
        run_chain(MethodCombo("lc", "euler", "euler"), gbm, GBM_PRIORS, bad,
                  _config())


# --- point estimation --------------------------------------------------------

def test_point_estimates_on_synthetic_samples(rng):
    a = rng.normal(loc=2.0, scale=0.3, size=5000)
    b = rng.lognormal(mean=0.5, sigma=0.4, size=5000)
    samples = np.column_stack([a, b])
    mean, mode = point_estimates(samples, burn_in_fraction=0.0)
    assert mean[0] == pytest.approx(2.0, abs=0.02)
    assert mean[1] == pytest.approx(np.exp(0.5 + 0.08), abs=0.05)
    # mode of the lognormal marginal sits below its mean
    assert mode[1] < mean[1]
    assert mode[0] == pytest.approx(2.0, abs=0.05)


def test_point_estimates_requires_enough_samples():
    with pytest.raises(ValueError):
        point_estimates(np.zeros((50, 2)), burn_in_fraction=0.5)


def test_hpd_interval_uniform_and_normal(rng):
    u = rng.uniform(size=20_000)
    lo, hi = hpd_interval(u, 0.9)
    assert (hi - lo) == pytest.approx(0.9, abs=0.02)
    z = rng.normal(size=20_000)
    lo, hi = hpd_interval(z, 0.95)
    assert lo == pytest.approx(-1.96, abs=0.08)
    assert hi == pytest.approx(1.96, abs=0.08)
    lo, hi = hpd_interval(np.array([1.0, 2.0, 3.0]), 0.999)
    assert (lo, hi) == (1.0, 3.0)
