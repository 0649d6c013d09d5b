"""Time-stepping schemes and synthetic data generation.

Single-step maps for the Euler and Milstein discretizations, whole-path
simulation on a fine grid (optionally driving both schemes with the same
Brownian increments, for strong-error comparisons), and generation of the
observation records used by the estimation studies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .models import DiffusionModel, gbm_exact_sample

__all__ = [
    "TimeGrid",
    "euler_step",
    "milstein_step",
    "simulate_path",
    "SimulatedPath",
    "Observations",
    "generate_gbm_observations",
    "generate_cir_observations",
    "strong_error_curve",
]


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing time points; steps need not be uniform."""

    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", t)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("time grid needs at least two points")
        if np.any(np.diff(t) <= 0):
            raise ValueError("time grid must be strictly increasing")

    @property
    def dts(self):
        return np.diff(self.times)

    @property
    def n_steps(self):
        return self.times.size - 1

    @staticmethod
    def uniform(t0: float, t1: float, n_steps: int) -> "TimeGrid":
        if n_steps < 1:
            raise ValueError("need n_steps >= 1")
        return TimeGrid(np.linspace(t0, t1, n_steps + 1))


def euler_step(model: DiffusionModel, x, theta, dt, dB):
    """One Euler-Maruyama step: x + mu dt + sigma dB."""
    th = np.asarray(theta, dtype=float)
    mu = model.drift(x, th)
    s = model.diffusion(x, th)
    return x + mu * dt + s * dB


def milstein_step(model: DiffusionModel, x, theta, dt, dB):
    """One Milstein step: Euler plus 0.5 sigma sigma' (dB^2 - dt)."""
    th = np.asarray(theta, dtype=float)
    mu = model.drift(x, th)
    s = model.diffusion(x, th)
    ds = model.diffusion_deriv(x, th)
    return x + mu * dt + s * dB + 0.5 * s * ds * (dB * dB - dt)


_STEPPERS = {"euler": euler_step, "milstein": milstein_step}


@dataclass(frozen=True)
class SimulatedPath:
    grid: TimeGrid
    values: np.ndarray
    # False when the iteration left the state space (e.g. hit x <= 0 for CIR);
    # values past that point are not meaningful.
    valid: bool


def simulate_path(model, theta, x0, grid: TimeGrid, scheme, rng=None, dB=None):
    """Iterate a scheme along `grid` from x0.

    Parameters
    ----------
    scheme : str or sequence of str
        "euler", "milstein", or several scheme names to drive with one shared
        set of Brownian increments (returns a list in matching order).
    rng : numpy Generator, optional
        Required when dB is not given.
    dB : ndarray, optional
        Brownian increments, shape (n_steps,). Drawn from rng if omitted.

    Returns
    -------
    SimulatedPath or list of SimulatedPath
    """
    multi = not isinstance(scheme, str)
    names = list(scheme) if multi else [scheme]
    for nm in names:
        if nm not in _STEPPERS:
            raise ValueError(f"unknown scheme '{nm}'")
    dts = grid.dts
    if dB is None:
        if rng is None:
            raise ValueError("provide rng or dB")
        dB = rng.standard_normal(dts.size) * np.sqrt(dts)
    else:
        dB = np.asarray(dB, dtype=float)
        if dB.shape != dts.shape:
            raise ValueError("dB must have one increment per step")

    th = np.asarray(theta, dtype=float)
    lower = model.state_lower_bound
    out = []
    for nm in names:
        step = _STEPPERS[nm]
        vals = np.empty(grid.times.size)
        vals[0] = x0
        ok = x0 > lower
        x = x0
        for i in range(dts.size):
            if ok:
                x = step(model, x, th, dts[i], dB[i])
                if not (x > lower) or not np.isfinite(x):
                    ok = False
            vals[i + 1] = x
        out.append(SimulatedPath(grid, vals, ok))
    return out if multi else out[0]


@dataclass(frozen=True)
class Observations:
    """Discrete observations of one sample path."""

    times: np.ndarray
    values: np.ndarray
    model_name: str
    theta_true: np.ndarray
    seed_info: dict

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "theta_true", np.asarray(self.theta_true, dtype=float))
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("times and values must be equal-length 1-d arrays")


def generate_gbm_observations(theta, x0, n_obs, horizon, seed_seq) -> Observations:
    """Observations from the exact GBM law at n_obs uniform times on [0, horizon]."""
    rng = np.random.default_rng(seed_seq)
    times = np.linspace(0.0, horizon, n_obs)
    vals = np.empty(n_obs)
    vals[0] = x0
    dts = np.diff(times)
    for i in range(n_obs - 1):
        vals[i + 1] = gbm_exact_sample(vals[i], dts[i], theta, rng)
    return Observations(times, vals, "gbm", np.asarray(theta, float),
                        {"generator": "exact"})


def fine_step_for(target_dt: float, obs_dt: float) -> float:
    """Largest step <= target_dt that divides the observation spacing exactly."""
    if target_dt <= 0 or obs_dt <= 0:
        raise ValueError("steps must be > 0")
    return obs_dt / math.ceil(obs_dt / target_dt)


def generate_cir_observations(theta, x0, n_obs, horizon, seed_seq,
                              fine_dt=1e-4, max_attempts=100) -> Observations:
    """CIR observations by subsampling a fine Euler path.

    The fine step is reduced to divide the observation spacing exactly, so
    every observation time is a fine-grid node. Paths that exit the positive
    half-line are discarded and regenerated from a fresh substream (bounded
    number of attempts).
    """
    th = np.asarray(theta, dtype=float)
    obs_dt = horizon / (n_obs - 1)
    dt = fine_step_for(fine_dt, obs_dt)
    per_obs = round(obs_dt / dt)
    n_fine = per_obs * (n_obs - 1)
    base = seed_seq if isinstance(seed_seq, np.random.SeedSequence) \
        else np.random.SeedSequence(seed_seq)
    for attempt in range(max_attempts):
        rng = np.random.default_rng(base.spawn(1)[0] if attempt else base)
        z = rng.standard_normal(n_fine)
        path, ok = _kernels.k_euler_path(_kernels.MODEL_CIR, th, x0, dt, z)
        if ok:
            times = np.linspace(0.0, horizon, n_obs)
            vals = path[::per_obs].copy()
            return Observations(times, vals, "cir", th,
                                {"generator": "fine-euler", "fine_dt": dt,
                                 "attempts": attempt + 1})
        base = base.spawn(1)[0]
    raise RuntimeError(
        f"no positive CIR path in {max_attempts} attempts (fine_dt={dt})")


def strong_error_curve(model, theta, x0, horizon, dt_list, n_paths, seed_seq,
                       schemes=("euler", "milstein"), ref_refine=64):
    """Monte Carlo strong error at the horizon versus step size.

    Couples each scheme at each dt to a reference endpoint driven by the same
    Brownian motion and averages |X_scheme(T) - X_ref(T)| over n_paths. For
    GBM the reference is the exact solution x0 exp((alpha - sigma^2/2) T +
    sigma B_T); otherwise a Milstein path on a grid `ref_refine` times finer
    than the smallest dt. All paths advance in lockstep (vectorized across
    paths), so only the time loop is sequential.

    Returns
    -------
    dict mapping scheme name -> ndarray of mean absolute endpoint errors,
    aligned with the (descending-sorted) "dt" entry.
    """
    th = np.asarray(theta, dtype=float)
    dt_list = sorted(dt_list, reverse=True)
    n_min = round(horizon / dt_list[-1])
    for dt in dt_list:
        if n_min % round(horizon / dt) != 0:
            raise ValueError("each coarser step count must divide the finest")
    rng = np.random.default_rng(seed_seq)

    if model.name == "gbm":
        n_master = n_min
    else:
        n_master = n_min * ref_refine
    dB_master = rng.standard_normal((n_paths, n_master)) * math.sqrt(horizon / n_master)

    if model.name == "gbm":
        b_T = dB_master.sum(axis=1)
        x_ref = x0 * np.exp((th[0] - 0.5 * th[1]) * horizon + math.sqrt(th[1]) * b_T)
    else:
        dt_f = horizon / n_master
        x_ref = np.full(n_paths, float(x0))
        for i in range(n_master):
            x_ref = milstein_step(model, x_ref, th, dt_f, dB_master[:, i])

    errs = {nm: np.zeros(len(dt_list)) for nm in schemes}
    for k, dt in enumerate(dt_list):
        n = round(horizon / dt)
        dB = dB_master.reshape(n_paths, n, n_master // n).sum(axis=2)
        for nm in schemes:
            step = _STEPPERS[nm]
            x = np.full(n_paths, float(x0))
            for i in range(n):
                x = step(model, x, th, dt, dB[:, i])
            errs[nm][k] = np.mean(np.abs(x - x_ref))
    return {"dt": np.asarray(dt_list, float), **errs}
