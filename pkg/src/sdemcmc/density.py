"""One-step transition densities for the Euler and Milstein schemes.

Everything here is plain vectorized numpy and works for any scalar diffusion
model; the jitted kernels in ``_kernels`` duplicate the two-model fast paths
for the sampler hot loop, and the test suite pins the two implementations
against each other.

The Milstein one-step law is the exact distribution of
``x + mu dt + s dB + 0.5 s s' (dB^2 - dt)`` with ``dB ~ N(0, dt)``: a quadratic
in a Gaussian, supported on a half-line when ``s s' != 0``. Its density has an
integrable inverse-square-root singularity at the support boundary, which the
normalization quadrature removes with the substitution ``u = sqrt(y - bound)``.
"""

from __future__ import annotations

import math

import numpy as np

from .models import DiffusionModel, gbm_exact_transition_logpdf

__all__ = [
    "euler_logpdf",
    "milstein_logpdf",
    "milstein_support_bound",
    "transition_logpdf",
    "path_loglikelihood",
    "milstein_normalization",
    "make_milstein_cdf",
    "density_profile",
]

LOG2PI = math.log(2.0 * math.pi)
# Below this ratio |s'|/s the Milstein correction is numerically invisible and
# the density evaluates through the Euler branch.
DERIV_TINY = 1e-14


def _coeffs(model, x, theta):
    th = np.asarray(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    return (np.asarray(model.drift(x, th), dtype=float),
            np.asarray(model.diffusion(x, th), dtype=float),
            np.asarray(model.diffusion_deriv(x, th), dtype=float))


def euler_logpdf(model, x, y, dt, theta):
    """Gaussian log-density of the Euler step from x to y over dt."""
    mu, s, _ = _coeffs(model, x, theta)
    y = np.asarray(y, dtype=float)
    dt = np.asarray(dt, dtype=float)
    v = s * s * dt
    z = y - x - mu * dt
    return -0.5 * (z * z / v + LOG2PI + np.log(v))


def milstein_logpdf(model, x, y, dt, theta):
    """Log-density of the Milstein one-step law from x to y over dt.

    Returns -inf outside the support half-line. Computed in a form that stays
    finite in float64 whenever the point is inside the support: the dominant
    exponent uses the identity
    ``(sqrt(A) - C)/D = -dyc^2 / (s dt (sqrt(A) + C))`` with
    ``A = s^2 + 2 s s' dyc``, ``C = s + s' dyc``, ``D = s s'^2 dt``,
    ``dyc = y - x - (mu - s s'/2) dt``, and the two-branch sum enters through
    ``log1p(exp(-2 sqrt(A)/D))``.
    """
    mu, s, ds = _coeffs(model, x, theta)
    y = np.asarray(y, dtype=float)
    dt = np.asarray(dt, dtype=float)

    euler_mask = np.abs(ds) <= DERIV_TINY * s
    dyc = y - x - (mu - 0.5 * s * ds) * dt
    A = s * s + 2.0 * s * ds * dyc
    C = s + ds * dyc
    D = s * ds * ds * dt
    ok = A > 0.0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        A_safe = np.where(ok, A, 1.0)
        sqA = np.sqrt(A_safe)
        main = (-dyc * dyc / (s * dt * (sqA + C))
                - 0.5 * (LOG2PI + np.log(dt * A_safe))
                + np.log1p(np.exp(-2.0 * sqA / np.where(D > 0, D, 1.0))))
        out = np.where(ok, main, -np.inf)
        if np.any(euler_mask):
            v = s * s * dt
            z = y - x - mu * dt
            eul = -0.5 * (z * z / v + LOG2PI + np.log(v))
            out = np.where(euler_mask, eul, out)
    return out if out.ndim else float(out)


def milstein_support_bound(model, x, dt, theta):
    """Support boundary of the Milstein one-step law started from x.

    Returns
    -------
    bound : ndarray or float
        ``x - s/(2 s') + (mu - s s'/2) dt``.
    is_lower : ndarray or bool
        True where ``s s' > 0`` (support is (bound, inf)), False where the
        bound is an upper limit. Where s' == 0 the support is the whole line
        and the bound is +/- inf accordingly.
    """
    mu, s, ds = _coeffs(model, x, theta)
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = x - 0.5 * s / ds + (mu - 0.5 * s * ds) * dt
    is_lower = s * ds > 0
    degenerate = np.abs(ds) <= DERIV_TINY * s
    bound = np.where(degenerate, np.where(is_lower, -np.inf, np.inf), bound)
    if np.ndim(bound):
        return bound, is_lower
    return float(bound), bool(is_lower)


def transition_logpdf(model, scheme, x, y, dt, theta):
    """Dispatch on scheme name: "euler", "milstein", or "exact" (GBM only)."""
    if scheme == "euler":
        return euler_logpdf(model, x, y, dt, theta)
    if scheme == "milstein":
        return milstein_logpdf(model, x, y, dt, theta)
    if scheme == "exact":
        if model.name != "gbm":
            raise ValueError("exact transition density available for gbm only")
        return gbm_exact_transition_logpdf(x, y, dt, theta)
    raise ValueError(f"unknown scheme '{scheme}'")


def path_loglikelihood(model, scheme, values, dts, theta):
    """Sum of transition log-densities along consecutive points of a path."""
    v = np.asarray(values, dtype=float)
    dts = np.asarray(dts, dtype=float)
    if v.size != dts.size + 1:
        raise ValueError("need one dt per transition")
    terms = transition_logpdf(model, scheme, v[:-1], v[1:], dts, theta)
    return float(np.sum(terms))


def _u_grid_integrand(model, x, dt, theta, n_nodes, tail_sds):
    """Singularity-free integrand g(u) = f(bound + u^2) 2u on a uniform u grid.

    Only the lower-bound case arises for the models here; the upper-bound case
    mirrors it with y = bound - u^2.
    """
    bound, is_lower = milstein_support_bound(model, x, dt, theta)
    mu, s, _ = _coeffs(model, x, theta)
    m = x + mu * dt
    sd = s * math.sqrt(dt)
    if is_lower:
        far = m + tail_sds * sd
        span = far - bound
    else:
        far = m - tail_sds * sd
        span = bound - far
    if span <= 0:
        raise ValueError("empty integration range; bound beyond the bulk")
    u = np.linspace(0.0, math.sqrt(span), n_nodes)
    y = bound + u * u if is_lower else bound - u * u
    logf = milstein_logpdf(model, x, y, dt, theta)
    with np.errstate(over="ignore"):
        g = np.where(np.isfinite(logf), np.exp(logf) * 2.0 * u, 0.0)
    return u, y, g, bound, is_lower


def milstein_normalization(model, x, dt, theta, n_nodes=200001, tail_sds=60.0):
    """Quadrature mass of the Milstein one-step density (should be 1).

    Composite Simpson after the substitution u = sqrt(|y - bound|), which makes
    the integrand bounded and smooth; n_nodes is forced odd. With the diffusion
    derivative numerically zero the law is Gaussian and the integral is taken
    on a symmetric window in y instead.
    """
    mu, s, ds = _coeffs(model, x, theta)
    if abs(ds) <= DERIV_TINY * s:
        m = x + mu * dt
        sd = s * math.sqrt(dt)
        y = np.linspace(m - tail_sds * sd, m + tail_sds * sd, n_nodes | 1)
        f = np.exp(euler_logpdf(model, x, y, dt, theta))
        return float(_simpson(f, y[1] - y[0]))
    u, _, g, _, _ = _u_grid_integrand(model, x, dt, theta, n_nodes | 1, tail_sds)
    return float(_simpson(g, u[1] - u[0]))


def _simpson(f, h):
    n = f.size
    if n % 2 == 0:
        raise ValueError("composite Simpson needs an odd node count")
    return h / 3.0 * (f[0] + f[-1] + 4.0 * f[1:-1:2].sum() + 2.0 * f[2:-1:2].sum())


def make_milstein_cdf(model, x, dt, theta, n_nodes=400001, tail_sds=60.0):
    """Callable CDF of the Milstein one-step law, for distribution tests.

    Built by cumulative trapezoid integration of the substituted integrand on
    a dense grid, renormalized to end at 1, then linearly interpolated in y.
    """
    from scipy.integrate import cumulative_trapezoid

    u, y, g, bound, is_lower = _u_grid_integrand(model, x, dt, theta,
                                                 n_nodes, tail_sds)
    mass = cumulative_trapezoid(g, u, initial=0.0)
    mass /= mass[-1]

    if is_lower:
        def cdf(q):
            q = np.asarray(q, dtype=float)
            return np.interp(q, y, mass, left=0.0, right=1.0)
    else:
        y_rev, m_rev = y[::-1], 1.0 - mass[::-1]

        def cdf(q):
            q = np.asarray(q, dtype=float)
            return np.interp(q, y_rev, m_rev, left=0.0, right=1.0)

    return cdf


def density_profile(model, scheme, x, dt, theta, n_points=512,
                    y_lo=None, y_hi=None):
    """Grid of (y, logpdf) values for one transition, e.g. for plotting.

    Default window covers the Euler bulk +/- 6 sd intersected with the
    scheme's support.
    """
    mu, s, ds = _coeffs(model, x, theta)
    m = x + mu * dt
    sd = s * math.sqrt(dt)
    lo = m - 6.0 * sd if y_lo is None else y_lo
    hi = m + 6.0 * sd if y_hi is None else y_hi
    if scheme == "milstein":
        bound, is_lower = milstein_support_bound(model, x, dt, theta)
        if is_lower:
            lo = max(lo, bound + 1e-12 * max(abs(bound), 1.0))
        else:
            hi = min(hi, bound - 1e-12 * max(abs(bound), 1.0))
    if scheme == "exact" or model.state_lower_bound == 0.0:
        lo = max(lo, 1e-300)
    y = np.linspace(lo, hi, n_points)
    return y, np.asarray(transition_logpdf(model, scheme, x, y, dt, theta))
