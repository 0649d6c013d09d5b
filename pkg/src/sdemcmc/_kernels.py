"""Compiled numerical kernels.

Everything in here is a numba nopython kernel used by the MCMC engine and the
bridge-calibration machinery. The public modules (`density`, `bridges`) carry
plain-numpy reference implementations of the same formulas; the test suite pins
the two against each other. Kernels never draw random numbers: all randomness
is generated by the caller with numpy Generators so that seeding stays in one
place.

Model coefficients are evaluated from the chain parameterization:

    GBM: theta = (alpha, sigma^2)          mu = alpha*x, sigma = sqrt(sigma^2)*x
    CIR: theta = (alpha, beta, sigma^2)    mu = alpha*(beta-x), sigma = sqrt(sigma^2*x)
"""

import numpy as np
from numba import njit

MODEL_GBM = 0
MODEL_CIR = 1

SCHEME_EULER = 0
SCHEME_MILSTEIN = 1
SCHEME_EXACT_GBM = 2

LOG2PI = 1.8378770664093453
NEG_INF = -np.inf

# log(1e-20): relative cutoff defining the bridge truncation interval
LOG_TRUNC = -46.051701859880914


@njit(cache=True)
def _coeffs(model_id, theta, x):
    """(mu, sigma, dsigma/dx) at state x for the chain parameter vector."""
    if model_id == MODEL_GBM:
        s = np.sqrt(theta[1])
        return theta[0] * x, s * x, s
    else:
        s = np.sqrt(theta[2])
        sq = np.sqrt(x)
        return theta[0] * (theta[1] - x), s * sq, 0.5 * s / sq


@njit(cache=True)
def _euler_logpdf(mu, s, yf, yt, dt):
    z = yt - yf - mu * dt
    v = s * s * dt
    return -0.5 * (z * z / v + LOG2PI + np.log(v))


@njit(cache=True)
def _milstein_logpdf(mu, s, d, yf, yt, dt):
    # One-step law of the Milstein iterate; reduces to the Euler Gaussian when
    # the diffusion derivative vanishes. Stable rearrangement: the exponent
    # (sqrt(A)-C)/D is evaluated as -dyc^2 / (s*dt*(sqrt(A)+C)) which never
    # cancels catastrophically, and the two cosh branches collapse into a
    # log1p(exp(-2 sqrt(A)/D)) correction.
    if abs(d) <= 1e-14 * s:
        return _euler_logpdf(mu, s, yf, yt, dt)
    dyc = yt - yf - (mu - 0.5 * s * d) * dt
    a = s * s + 2.0 * s * d * dyc
    if a <= 0.0:
        return NEG_INF
    sqa = np.sqrt(a)
    c = s + d * dyc
    dd = s * d * d * dt
    return (
        -dyc * dyc / (s * dt * (sqa + c))
        - 0.5 * (LOG2PI + np.log(dt * a))
        + np.log1p(np.exp(-2.0 * sqa / dd))
    )


@njit(cache=True)
def _exact_gbm_logpdf(theta, yf, yt, dt):
    if yt <= 0.0:
        return NEG_INF
    s2 = theta[1]
    v = s2 * dt
    z = np.log(yt / yf) - (theta[0] - 0.5 * s2) * dt
    return -np.log(yt) - 0.5 * (z * z / v + LOG2PI + np.log(v))


@njit(cache=True)
def _transition_logpdf(model_id, scheme_id, theta, yf, yt, dt):
    if scheme_id == SCHEME_EXACT_GBM:
        return _exact_gbm_logpdf(theta, yf, yt, dt)
    mu, s, d = _coeffs(model_id, theta, yf)
    if scheme_id == SCHEME_EULER:
        return _euler_logpdf(mu, s, yf, yt, dt)
    return _milstein_logpdf(mu, s, d, yf, yt, dt)


@njit(cache=True)
def k_logpdf(model_id, scheme_id, theta, yf, yt, dt, out):
    """Elementwise transition log-density over parallel arrays."""
    for i in range(yf.shape[0]):
        out[i] = _transition_logpdf(model_id, scheme_id, theta, yf[i], yt[i], dt[i])
    return out


@njit(cache=True)
def k_loglik_sum(model_id, scheme_id, theta, values, dts):
    """Log-likelihood of a full path: sum of consecutive transition log-densities."""
    total = 0.0
    for i in range(dts.shape[0]):
        total += _transition_logpdf(
            model_id, scheme_id, theta, values[i], values[i + 1], dts[i]
        )
    return total


@njit(cache=True)
def _mb_unnorm(model_id, theta, u, xl, xr, dtk, dtp):
    """Unnormalized Milstein bridge log-density of candidate u.

    First factor: Milstein transition xl -> u over dtk (coefficients at xl).
    Second factor: Milstein transition u -> xr over dtp (coefficients at u,
    deliberately not frozen at xl).
    """
    if u <= 0.0:
        return NEG_INF
    mu1, s1, d1 = _coeffs(model_id, theta, xl)
    f1 = _milstein_logpdf(mu1, s1, d1, xl, u, dtk)
    if f1 == NEG_INF:
        return NEG_INF
    mu2, s2, d2 = _coeffs(model_id, theta, u)
    f2 = _milstein_logpdf(mu2, s2, d2, u, xr, dtp)
    return f1 + f2


@njit(cache=True)
def k_mb_unnorm_points(model_id, theta, u, xl, xr, dtk, dtp, out):
    for i in range(u.shape[0]):
        out[i] = _mb_unnorm(model_id, theta, u[i], xl[i], xr[i], dtk[i], dtp[i])
    return out


@njit(cache=True)
def k_mb_calibrate(
    model_id,
    theta,
    xl,
    xr,
    dtk,
    dtp,
    lo,
    hi,
    can_expand_lo,
    can_expand_hi,
    n_scan,
    need_z,
    log_dmax,
    x_max,
    i_lo,
    i_hi,
    log_z,
    expand_lo,
    expand_hi,
):
    """Scan-based calibration of the Milstein bridge density per segment.

    For each row: evaluate the unnormalized log-density on a uniform n_scan
    grid over [lo, hi], locate the maximum, find the outermost grid indices
    whose value stays within 1e-20 of it, and (optionally) integrate the
    rescaled density over that index range with composite Simpson directly on
    the scan nodes. Rows whose window edge is still above the threshold and
    could be widened get an expand flag; the caller widens and retries.
    """
    ns = xl.shape[0]
    grid = np.empty(n_scan)
    logf = np.empty(n_scan)
    for s in range(ns):
        h = (hi[s] - lo[s]) / (n_scan - 1)
        for j in range(n_scan):
            grid[j] = lo[s] + h * j
            logf[j] = _mb_unnorm(model_id, theta, grid[j], xl[s], xr[s], dtk[s], dtp[s])
        jmax = 0
        fmax = logf[0]
        for j in range(1, n_scan):
            if logf[j] > fmax:
                fmax = logf[j]
                jmax = j
        log_dmax[s] = fmax
        x_max[s] = grid[jmax]
        thr = fmax + LOG_TRUNC

        jlo = jmax
        while jlo > 0 and logf[jlo - 1] >= thr:
            jlo -= 1
        if jlo > 0:
            jlo -= 1  # one conservative node beyond the threshold crossing
        jhi = jmax
        while jhi < n_scan - 1 and logf[jhi + 1] >= thr:
            jhi += 1
        if jhi < n_scan - 1:
            jhi += 1

        expand_lo[s] = jlo == 0 and logf[0] >= thr and can_expand_lo[s]
        expand_hi[s] = jhi == n_scan - 1 and logf[n_scan - 1] >= thr and can_expand_hi[s]

        if need_z:
            # Simpson needs an odd node count on [jlo, jhi]
            if (jhi - jlo) % 2 == 1:
                if jhi < n_scan - 1:
                    jhi += 1
                elif jlo > 0:
                    jlo -= 1
                else:
                    jhi -= 1  # full-window interval: drop one threshold-tail node
            acc = 0.0
            for j in range(jlo, jhi + 1):
                w = 4.0 if (j - jlo) % 2 == 1 else 2.0
                if j == jlo or j == jhi:
                    w = 1.0
                acc += w * np.exp(logf[j] - fmax)
            log_z[s] = fmax + np.log(acc * h / 3.0)
        i_lo[s] = jlo
        i_hi[s] = jhi


@njit(cache=True)
def k_mb_sample_round(
    model_id, theta, xl, xr, dtk, dtp, a, b, log_env, u1, logu2, found, out,
    out_logf,
):
    """One batched rejection-sampling round over the truncation interval [a, b].

    u1 holds uniform(0,1) candidates (rows x batch), logu2 the log of uniform
    heights. A candidate y = a + u1*(b-a) is accepted when its unnormalized
    log-density reaches log_env + logu2. First acceptance per row wins; the
    accepted point and its log-density are written out so the caller reuses
    the exact evaluated value.
    """
    ns = xl.shape[0]
    nb = u1.shape[1]
    for s in range(ns):
        if found[s]:
            continue
        for j in range(nb):
            y = a[s] + u1[s, j] * (b[s] - a[s])
            lf = _mb_unnorm(model_id, theta, y, xl[s], xr[s], dtk[s], dtp[s])
            if lf >= log_env[s] + logu2[s, j]:
                out[s] = y
                out_logf[s] = lf
                found[s] = True
                break


@njit(cache=True)
def k_euler_path(model_id, theta, x0, dt, z):
    """Fine Euler path driven by pre-drawn standard normals.

    Returns (path, ok); ok flips to False on the first nonpositive iterate
    (the caller resamples the whole path, it never clamps).
    """
    n = z.shape[0]
    path = np.empty(n + 1)
    path[0] = x0
    sq = np.sqrt(dt)
    x = x0
    for i in range(n):
        mu, s, _ = _coeffs(model_id, theta, x)
        x = x + mu * dt + s * sq * z[i]
        if x <= 0.0:
            return path, False
        path[i + 1] = x
    return path, True


def warmup():
    """Force-compile every kernel on tiny inputs (numba caches to disk)."""
    th_g = np.array([1.0, 2.0])
    th_c = np.array([1.0, 1.0, 0.25])
    yf = np.array([100.0, 90.0])
    yt = np.array([101.0, 95.0])
    dt = np.array([0.01, 0.01])
    out = np.empty(2)
    for mid, th in ((MODEL_GBM, th_g), (MODEL_CIR, th_c)):
        x = yf if mid == MODEL_GBM else np.array([3.0, 2.5])
        y = yt if mid == MODEL_GBM else np.array([3.1, 2.4])
        for sch in (SCHEME_EULER, SCHEME_MILSTEIN):
            k_logpdf(mid, sch, th, x, y, dt, out)
            k_loglik_sum(mid, sch, th, x, dt[:1])
        k_mb_unnorm_points(mid, th, y, x, y, dt, dt, out)
        n = 2
        k_mb_calibrate(
            mid, th, x, y, dt, dt,
            x * 0.9, x * 1.1,
            np.zeros(n, dtype=np.bool_), np.ones(n, dtype=np.bool_),
            17, True,
            np.empty(n), np.empty(n),
            np.empty(n, dtype=np.int64), np.empty(n, dtype=np.int64),
            np.empty(n), np.empty(n, dtype=np.bool_), np.empty(n, dtype=np.bool_),
        )
        k_mb_sample_round(
            mid, th, x, y, dt, dt, x * 0.9, x * 1.1, np.zeros(n),
            np.full((n, 2), 0.5), np.log(np.full((n, 2), 0.5)),
            np.zeros(n, dtype=np.bool_), np.empty(n), np.empty(n),
        )
        k_euler_path(mid, th, float(x[0]), 0.01, np.zeros(3))
    k_logpdf(MODEL_GBM, SCHEME_EXACT_GBM, th_g, yf, yt, dt, out)
