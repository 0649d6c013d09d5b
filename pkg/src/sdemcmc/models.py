"""Diffusion models, parameter vectors, and prior distributions.

The two concrete models (geometric Brownian motion and Cox-Ingersoll-Ross) are
scalar Ito diffusions dX = mu(X, theta) dt + sigma(X, theta) dB with one noise
source. Parameters are carried in the reporting parameterization used by the
chains: GBM (alpha, sigma^2), CIR (alpha, beta, sigma^2); coefficient
evaluations convert to sigma internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

__all__ = [
    "ParameterVector",
    "DiffusionModel",
    "GBM",
    "CIR",
    "gbm_model",
    "cir_model",
    "model_eval",
    "NormalPrior",
    "LogNormalPrior",
    "InverseGammaPrior",
    "prior_logdensity",
    "sample_from_priors",
    "gbm_exact_transition_logpdf",
    "gbm_exact_sample",
]

LOG2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ParameterVector:
    """Model parameters with per-component positivity constraints."""

    values: np.ndarray
    positive_mask: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        m = np.asarray(self.positive_mask, dtype=bool)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "positive_mask", m)
        if v.ndim != 1 or v.size < 1:
            raise ValueError("parameter vector must be 1-d and nonempty")
        if m.shape != v.shape:
            raise ValueError("positivity mask must match parameter shape")
        if np.any(v[m] <= 0.0):
            raise ValueError("positivity-constrained component is not > 0")


@dataclass(frozen=True)
class DiffusionModel:
    """Scalar diffusion: drift, diffusion, and the analytic diffusion derivative.

    `kernel_id` selects the compiled coefficient branch used by the engine;
    models without one (e.g. ad-hoc constant-diffusion test models) are fully
    usable through the numpy API but not through the jitted engine.
    """

    name: str
    drift: callable
    diffusion: callable
    diffusion_deriv: callable
    param_names: tuple
    positive_mask: tuple
    state_lower_bound: float = -np.inf
    kernel_id: int = -1

    @property
    def n_params(self):
        return len(self.param_names)

    def check_state(self, x):
        if np.any(np.asarray(x) <= self.state_lower_bound):
            raise ValueError(
                f"state outside the {self.name} state space "
                f"(lower bound {self.state_lower_bound})"
            )

    def params(self, values) -> ParameterVector:
        return ParameterVector(np.asarray(values, dtype=float),
                               np.asarray(self.positive_mask))


def _gbm_drift(x, th):
    return th[0] * x


def _gbm_diffusion(x, th):
    return np.sqrt(th[1]) * x


def _gbm_diffusion_deriv(x, th):
    return np.sqrt(th[1]) * np.ones_like(np.asarray(x, dtype=float))


GBM = DiffusionModel(
    name="gbm",
    drift=_gbm_drift,
    diffusion=_gbm_diffusion,
    diffusion_deriv=_gbm_diffusion_deriv,
    param_names=("alpha", "sigma2"),
    positive_mask=(False, True),
    state_lower_bound=0.0,
    kernel_id=_kernels.MODEL_GBM,
)


def _cir_drift(x, th):
    return th[0] * (th[1] - x)


def _cir_diffusion(x, th):
    return np.sqrt(th[2] * np.asarray(x, dtype=float))


def _cir_diffusion_deriv(x, th):
    return 0.5 * np.sqrt(th[2] / np.asarray(x, dtype=float))


CIR = DiffusionModel(
    name="cir",
    drift=_cir_drift,
    diffusion=_cir_diffusion,
    diffusion_deriv=_cir_diffusion_deriv,
    param_names=("alpha", "beta", "sigma2"),
    positive_mask=(True, True, True),
    state_lower_bound=0.0,
    kernel_id=_kernels.MODEL_CIR,
)


def gbm_model() -> DiffusionModel:
    """dX = alpha X dt + sigma X dB, theta = (alpha, sigma^2)."""
    return GBM


def cir_model() -> DiffusionModel:
    """dX = alpha (beta - X) dt + sigma sqrt(X) dB, theta = (alpha, beta, sigma^2).

    Strictly positive when 2 alpha beta > sigma^2.
    """
    return CIR


def cir_strictly_positive(theta) -> bool:
    th = np.asarray(theta, dtype=float)
    return bool(2.0 * th[0] * th[1] > th[2])


def model_lookup(name: str) -> DiffusionModel:
    try:
        return {"gbm": GBM, "cir": CIR}[name.lower()]
    except KeyError:
        raise ValueError(f"unknown model '{name}'") from None


def model_eval(model: DiffusionModel, x, theta):
    """(mu, sigma, dsigma/dx) at state x. Raises on states outside the space."""
    model.check_state(x)
    th = np.asarray(theta, dtype=float)
    return model.drift(x, th), model.diffusion(x, th), model.diffusion_deriv(x, th)


# --- priors -----------------------------------------------------------------
# The second argument of Normal/LogNormal is a VARIANCE throughout.


@dataclass(frozen=True)
class NormalPrior:
    mean: float
    variance: float

    def __post_init__(self):
        if self.variance <= 0:
            raise ValueError("variance must be > 0")

    def logpdf(self, x):
        z = x - self.mean
        return -0.5 * (z * z / self.variance + LOG2PI + math.log(self.variance))

    def sample(self, rng):
        return self.mean + math.sqrt(self.variance) * rng.standard_normal()


@dataclass(frozen=True)
class LogNormalPrior:
    log_mean: float
    log_variance: float

    def __post_init__(self):
        if self.log_variance <= 0:
            raise ValueError("variance must be > 0")

    def logpdf(self, x):
        if x <= 0:
            return -np.inf
        z = math.log(x) - self.log_mean
        return (
            -0.5 * (z * z / self.log_variance + LOG2PI + math.log(self.log_variance))
            - math.log(x)
        )

    def sample(self, rng):
        return math.exp(self.log_mean + math.sqrt(self.log_variance) * rng.standard_normal())


@dataclass(frozen=True)
class InverseGammaPrior:
    """InverseGamma(kappa, nu): density ~ x^-(kappa+1) exp(-nu/x).

    Mean nu/(kappa-1) for kappa > 1, mode nu/(kappa+1).
    """

    shape: float
    scale: float

    def __post_init__(self):
        if self.shape <= 0 or self.scale <= 0:
            raise ValueError("shape and scale must be > 0")

    @property
    def mean(self):
        return self.scale / (self.shape - 1.0) if self.shape > 1 else math.inf

    @property
    def mode(self):
        return self.scale / (self.shape + 1.0)

    def logpdf(self, x):
        if x <= 0:
            return -np.inf
        k, v = self.shape, self.scale
        return k * math.log(v) - math.lgamma(k) - (k + 1.0) * math.log(x) - v / x

    def sample(self, rng):
        # 1/X ~ Gamma(shape=kappa, rate=nu)
        return 1.0 / rng.gamma(self.shape, 1.0 / self.scale)


def prior_logdensity(priors, theta) -> float:
    """Sum of per-component log prior densities; None entries are fixed components."""
    th = np.asarray(theta, dtype=float)
    total = 0.0
    for p, x in zip(priors, th):
        if p is None:
            continue
        total += p.logpdf(float(x))
        if total == -np.inf:
            return -np.inf
    return total


def sample_from_priors(priors, theta_init, rng) -> np.ndarray:
    """Draw each free component from its prior; fixed components keep theta_init."""
    th = np.array(theta_init, dtype=float)
    for j, p in enumerate(priors):
        if p is not None:
            th[j] = p.sample(rng)
    return th


# --- exact GBM law ----------------------------------------------------------


def gbm_exact_transition_logpdf(x, y, dt, theta):
    """Exact GBM transition log-density: log(y/x) ~ N((alpha - sigma^2/2) dt, sigma^2 dt)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    th = np.asarray(theta, dtype=float)
    if np.any(x <= 0) or np.any(np.asarray(dt) <= 0) or th[1] <= 0:
        raise ValueError("gbm exact density needs x > 0, dt > 0, sigma^2 > 0")
    v = th[1] * dt
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.log(y / x) - (th[0] - 0.5 * th[1]) * dt
        out = -np.log(y) - 0.5 * (z * z / v + LOG2PI + np.log(v))
    return np.where(y > 0, out, -np.inf) if np.ndim(out) else (out if y > 0 else -np.inf)


def gbm_exact_sample(x, dt, theta, rng):
    """Exact GBM step: x * exp((alpha - sigma^2/2) dt + sigma sqrt(dt) Z)."""
    th = np.asarray(theta, dtype=float)
    if np.any(np.asarray(x) <= 0) or np.any(np.asarray(dt) <= 0):
        raise ValueError("gbm exact sampling needs x > 0 and dt > 0")
    z = rng.standard_normal(np.shape(x)) if np.ndim(x) else rng.standard_normal()
    return x * np.exp((th[0] - 0.5 * th[1]) * dt + np.sqrt(th[1] * dt) * z)
