"""Reference estimators for GBM from its exact transition law.

Used as benchmarks next to the MCMC posterior summaries: the closed-form
maximum likelihood estimate, and the maximum a posteriori estimate found by
a simplex search on the exact log-posterior.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize

from .models import gbm_exact_transition_logpdf, prior_logdensity

__all__ = ["ml_estimate_gbm", "map_estimate_gbm", "exact_gbm_loglik",
           "MapConvergenceError"]


def _increments(observations):
    t = np.asarray(observations.times, dtype=float)
    x = np.asarray(observations.values, dtype=float)
    if x.size < 3:
        raise ValueError("need at least 3 observations")
    if np.any(x <= 0):
        raise ValueError("GBM observations must be positive")
    dtau = np.diff(t)
    if not np.allclose(dtau, dtau[0], rtol=1e-9):
        raise ValueError("observations must be equidistant")
    return np.log(x[1:] / x[:-1]), float(dtau[0]), x


def exact_gbm_loglik(theta, observations) -> float:
    """Exact log-likelihood of equidistant GBM observations."""
    r, dtau, x = _increments(observations)
    th = np.asarray(theta, dtype=float)
    return float(np.sum(gbm_exact_transition_logpdf(x[:-1], x[1:], dtau, th)))


def ml_estimate_gbm(observations):
    """Closed-form MLE from i.i.d. Gaussian log-increments.

    sigma2_hat = sum((r_i - rbar)^2) / (M * dtau) over the M increments
    r_i = log(x_{i+1}/x_i), and alpha_hat = rbar/dtau + sigma2_hat/2.
    """
    r, dtau, _ = _increments(observations)
    M = r.size
    rbar = float(np.mean(r))
    sigma2 = float(np.sum((r - rbar) ** 2) / (M * dtau))
    alpha = rbar / dtau + sigma2 / 2.0
    return alpha, sigma2


class MapConvergenceError(RuntimeError):
    """Simplex search did not converge; carries the best point found."""

    def __init__(self, message, best_point):
        super().__init__(message)
        self.best_point = best_point


MAP_MAX_EVALS = 10_000


def map_estimate_gbm(observations, priors):
    """Posterior mode of (alpha, sigma2) under the exact likelihood.

    Nelder-Mead from the ML estimate, sigma2 searched on log scale so the
    positivity constraint disappears. priors is the (alpha, sigma2) prior
    pair as used by the chain.
    """
    a0, s0 = ml_estimate_gbm(observations)
    s0 = max(s0, 1e-12)

    def neg_log_post(z):
        th = np.array([z[0], np.exp(z[1])])
        return -(exact_gbm_loglik(th, observations)
                 + prior_logdensity(priors, th))

    res = minimize(neg_log_post, np.array([a0, np.log(s0)]),
                   method="Nelder-Mead",
                   options={"maxfev": MAP_MAX_EVALS, "xatol": 1e-10,
                            "fatol": 1e-12})
    point = (float(res.x[0]), float(np.exp(res.x[1])))
    if not res.success:
        raise MapConvergenceError(
            f"simplex search stopped without convergence: {res.message}",
            best_point=point)
    return point
