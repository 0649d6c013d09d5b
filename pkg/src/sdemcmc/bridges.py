"""Proposal distributions for unobserved points between two observations.

Two families:

* left-conditioned ("lc"): propose the next point from the one-step transition
  density of the chosen scheme, ignoring the right anchor;
* modified bridge ("mb"): condition on both the current left value and the
  next observation to the right. The Euler variant is a closed-form Gaussian.
  The Milstein variant has no closed form: its unnormalized density is the
  product of the Milstein factor from the left anchor times the Milstein
  factor from the candidate to the right anchor over the remaining time, and
  is sampled by envelope rejection on a truncated interval after a scan
  calibration.

This module is the plain-numpy reference used by tests and demos; the chain
engine runs the same procedure through compiled kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import LOG_TRUNC
from .density import milstein_logpdf, transition_logpdf
from .models import DiffusionModel
from .schemes import euler_step, milstein_step

__all__ = [
    "FeasibleSet",
    "mb_feasible_bounds",
    "mb_feasible_interval",
    "mb_euler_moments",
    "mb_milstein_unnorm_logpdf",
    "CalibrationResult",
    "calibrate_mb_bridge",
    "ProposalDraw",
    "propose_lc",
    "lc_logq",
    "propose_mb_euler",
    "mb_euler_logq",
    "propose_mb_milstein",
]

# Rejection envelope sits this factor above the calibrated maximum.
ENVELOPE_FACTOR = 1.05
# Hard cap on rejection draws before falling back to the Euler bridge.
REJECTION_CAP = 100_000
# Half-width of the initial calibration window, in Euler standard deviations.
WINDOW_SDS = 16.0
# Relative inset keeping scan endpoints strictly off singular support edges.
EDGE_INSET = 1e-9


@dataclass(frozen=True)
class FeasibleSet:
    """Open interval of candidate values with positive density both ways."""

    lo: float
    hi: float

    @property
    def empty(self) -> bool:
        return not (self.lo < self.hi)

    def contains(self, u) -> bool:
        return self.lo < u < self.hi


def mb_feasible_bounds(model, theta, x_left, x_right, dt_k, dt_plus):
    """Vectorized (lo, hi) bounds of the Milstein bridge feasible interval.

    The first factor requires the candidate above the support bound of the
    step from x_left; the second requires x_right inside the support of the
    step from the candidate. Both conditions reduce to interval constraints
    for these models, intersected with the positive half-line. hi is +inf
    where the second factor imposes no upper limit.
    """
    th = np.asarray(theta, dtype=float)
    x_left = np.asarray(x_left, dtype=float)
    x_right = np.asarray(x_right, dtype=float)
    if model.name == "gbm":
        a = th[0] - 0.5 * th[1]
        lo = np.maximum(0.0, x_left * (0.5 + a * np.asarray(dt_k)))
        h = 0.5 + a * np.asarray(dt_plus)
        with np.errstate(divide="ignore"):
            hi = np.where(h > 0, x_right / np.where(h > 0, h, 1.0), np.inf)
        return lo, hi
    if model.name == "cir":
        alpha, beta, s2 = th
        l_left = (alpha * (beta - x_left) - 0.25 * s2) * np.asarray(dt_k)
        l_right = beta - (x_right / np.asarray(dt_plus) + 0.25 * s2) / alpha
        lo = np.maximum(0.0, np.maximum(l_left, l_right))
        return lo, np.full_like(lo, np.inf)
    raise ValueError(f"no Milstein bridge feasibility rule for model '{model.name}'")


def mb_feasible_interval(model, theta, x_left, x_right, dt_k, dt_plus) -> FeasibleSet:
    """Scalar FeasibleSet wrapper around mb_feasible_bounds."""
    lo, hi = mb_feasible_bounds(model, theta, float(x_left), float(x_right),
                                float(dt_k), float(dt_plus))
    return FeasibleSet(float(lo), float(hi))


def mb_euler_moments(model, theta, x_k, t_k, x_obs, tau_end, dt_k):
    """Mean and variance of the Gaussian Euler bridge step from (t_k, x_k).

    Pulls toward the right anchor x_obs at tau_end with the Brownian-bridge
    variance deflation, diffusion coefficient frozen at x_k:
    mean = x_k + (x_obs - x_k) dt_k / (tau_end - t_k),
    var  = ((tau_end - t_k - dt_k) / (tau_end - t_k)) sigma^2(x_k) dt_k.
    """
    remain = tau_end - t_k
    if not (0 < dt_k <= remain):
        raise ValueError("need 0 < dt_k <= tau_end - t_k")
    th = np.asarray(theta, dtype=float)
    s = model.diffusion(x_k, th)
    mean = x_k + (x_obs - x_k) * dt_k / remain
    var = ((remain - dt_k) / remain) * s * s * dt_k
    return mean, var


def mb_milstein_unnorm_logpdf(model, theta, u, x_left, x_right, dt_k, dt_plus):
    """Unnormalized log-density of the Milstein bridge candidate u.

    First factor: Milstein step x_left -> u over dt_k. Second factor: Milstein
    step u -> x_right over the whole remaining time dt_plus, coefficients
    evaluated at u. -inf outside the positive half-line or either support.
    """
    u = np.asarray(u, dtype=float)
    with np.errstate(invalid="ignore"):
        f1 = milstein_logpdf(model, x_left, u, dt_k, theta)
        u_safe = np.where(u > 0, u, 1.0)
        f2 = milstein_logpdf(model, u_safe, x_right, dt_plus, theta)
        out = np.where(u > 0, f1 + f2, -np.inf)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class CalibrationResult:
    lo: float            # truncated sampling interval
    hi: float
    x_max: float         # location of the scanned/refined maximum
    log_max: float
    log_z: float         # log mass of the truncated, unnormalized density
    n_expansions: int


def calibrate_mb_bridge(model, theta, x_left, x_right, dt_k, dt_plus,
                        n_scan=1024, simpson_nodes=4097,
                        window_sds=WINDOW_SDS) -> CalibrationResult:
    """Locate and measure the Milstein bridge density for rejection sampling.

    Scans a window around the Euler-predicted bulk (intersected with the
    feasible interval, endpoints inset off singular support edges), truncates
    where the density falls below 1e-20 of its maximum (one conservative node
    beyond on each side), doubles the window while the truncation touches an
    expandable window edge, refines the maximum, and integrates the truncated
    range by composite Simpson in a square-root variable anchored at the
    finite feasible endpoints, where the density may blow up like an inverse
    square root.
    """
    feas = mb_feasible_interval(model, theta, x_left, x_right, dt_k, dt_plus)
    if feas.empty:
        raise ValueError("empty feasible interval; caller should fall back")
    th = np.asarray(theta, dtype=float)
    mu = model.drift(x_left, th)
    s = model.diffusion(x_left, th)
    m = x_left + mu * dt_k
    sd = s * math.sqrt(dt_k)

    lo_w = max(m - window_sds * sd, feas.lo)
    hi_w = min(m + window_sds * sd, feas.hi)
    if not (lo_w < hi_w):
        # Euler bulk entirely outside the feasible interval: start from the
        # nearest feasible edge instead.
        if m <= feas.lo:
            lo_w, hi_w = feas.lo, min(feas.hi, feas.lo + 2 * window_sds * sd)
        else:
            hi_w, lo_w = feas.hi, max(feas.lo, feas.hi - 2 * window_sds * sd)
    inset = EDGE_INSET * (hi_w - lo_w)
    if lo_w <= feas.lo:
        lo_w = feas.lo + inset
    if hi_w >= feas.hi:
        hi_w = feas.hi - inset

    def g(u):
        return mb_milstein_unnorm_logpdf(model, th, u, x_left, x_right,
                                         dt_k, dt_plus)

    n_exp = 0
    while True:
        grid = np.linspace(lo_w, hi_w, n_scan)
        logf = g(grid)
        i_max = int(np.argmax(logf))
        fmax = logf[i_max]
        if not np.isfinite(fmax):
            raise ValueError("bridge density vanished on the whole window")
        thr = fmax + LOG_TRUNC
        i_lo = i_max
        while i_lo > 0 and logf[i_lo - 1] >= thr:
            i_lo -= 1
        i_lo = max(i_lo - 1, 0)
        i_hi = i_max
        while i_hi < n_scan - 1 and logf[i_hi + 1] >= thr:
            i_hi += 1
        i_hi = min(i_hi + 1, n_scan - 1)

        span = hi_w - lo_w
        grew = False
        if i_lo == 0 and logf[0] >= thr and lo_w > feas.lo + inset:
            lo_w = max(feas.lo + inset, lo_w - span)
            grew = True
        if i_hi == n_scan - 1 and logf[-1] >= thr and hi_w < feas.hi - inset:
            hi_w = min(feas.hi - inset, hi_w + span)
            grew = True
        if not grew or n_exp >= 60:
            break
        n_exp += 1

    lo_s, hi_s = float(grid[i_lo]), float(grid[i_hi])
    x_max = float(grid[i_max])
    if 0 < i_max < n_scan - 1:
        from scipy.optimize import minimize_scalar
        res = minimize_scalar(lambda u: -g(u),
                              bounds=(grid[i_max - 1], grid[i_max + 1]),
                              method="bounded",
                              options={"xatol": 1e-12 * max(abs(x_max), 1.0)})
        if -res.fun > fmax:
            x_max, fmax = float(res.x), float(-res.fun)

    vmax = float(fmax)

    def piece(a, b, anchor, upper, n_nodes):
        # Composite Simpson in t with u = anchor +/- t^2. The substitution
        # absorbs the inverse-square-root growth the density keeps when the
        # truncated range is pinned against a singular feasible edge (same
        # device as the transition-density normalization quadrature). With no
        # finite anchor on that side the identity map is used: the density
        # decays smoothly there and plain Simpson is enough.
        if not (b > a):
            return 0.0
        if anchor is not None:
            if upper:
                t = np.linspace(math.sqrt(anchor - b), math.sqrt(anchor - a),
                                n_nodes)
                u = anchor - t * t
            else:
                t = np.linspace(math.sqrt(a - anchor), math.sqrt(b - anchor),
                                n_nodes)
                u = anchor + t * t
            w = np.exp(g(u) - vmax) * 2.0 * t
            h = t[1] - t[0]
        else:
            u = np.linspace(a, b, n_nodes)
            w = np.exp(g(u) - vmax)
            h = u[1] - u[0]
        return float((w[0] + w[-1] + 4.0 * w[1:-1:2].sum()
                      + 2.0 * w[2:-1:2].sum()) * h / 3.0)

    n_total = simpson_nodes | 1
    lo_anchor = feas.lo if math.isfinite(feas.lo) else None
    hi_anchor = feas.hi if math.isfinite(feas.hi) else None
    if lo_anchor is not None and hi_anchor is not None:
        mid = 0.5 * (lo_s + hi_s)
        half = (n_total // 2) | 1
        mass = (piece(lo_s, mid, lo_anchor, False, half)
                + piece(mid, hi_s, hi_anchor, True, half))
    elif lo_anchor is not None:
        mass = piece(lo_s, hi_s, lo_anchor, False, n_total)
    elif hi_anchor is not None:
        mass = piece(lo_s, hi_s, hi_anchor, True, n_total)
    else:
        mass = piece(lo_s, hi_s, None, False, n_total)
    log_z = vmax + math.log(mass)
    return CalibrationResult(lo_s, hi_s, x_max, vmax, float(log_z), n_exp)


@dataclass(frozen=True)
class ProposalDraw:
    value: float
    logq: float
    n_redraws: int = 0
    fallback: bool = False


def propose_lc(model, scheme, theta, x_left, dt, rng,
               max_redraws=1000) -> ProposalDraw:
    """One left-conditioned draw: simulate one scheme step from x_left.

    Draws outside the state space are discarded and redrawn (counted); the
    reported log-density is the plain one-step density without truncation
    correction, matching the reverse-side evaluation.
    """
    step = euler_step if scheme == "euler" else milstein_step
    lower = model.state_lower_bound
    for k in range(max_redraws + 1):
        dB = math.sqrt(dt) * rng.standard_normal()
        y = float(step(model, x_left, theta, dt, dB))
        if y > lower:
            return ProposalDraw(y, lc_logq(model, scheme, theta, x_left, y, dt), k)
    raise RuntimeError("left-conditioned proposal stuck outside the state space")


def lc_logq(model, scheme, theta, x_left, y, dt) -> float:
    return float(transition_logpdf(model, scheme, x_left, y, dt, theta))


def propose_mb_euler(model, theta, x_k, t_k, x_obs, tau_end, dt_k, rng,
                     max_redraws=1000) -> ProposalDraw:
    """One Gaussian bridge draw toward the right anchor (redrawn if <= 0)."""
    mean, var = mb_euler_moments(model, theta, x_k, t_k, x_obs, tau_end, dt_k)
    sd = math.sqrt(var)
    lower = model.state_lower_bound
    for k in range(max_redraws + 1):
        y = mean + sd * rng.standard_normal()
        if y > lower:
            return ProposalDraw(
                y, mb_euler_logq(model, theta, x_k, t_k, x_obs, tau_end, dt_k, y), k)
    raise RuntimeError("bridge proposal stuck outside the state space")


def mb_euler_logq(model, theta, x_k, t_k, x_obs, tau_end, dt_k, y) -> float:
    mean, var = mb_euler_moments(model, theta, x_k, t_k, x_obs, tau_end, dt_k)
    z = y - mean
    return -0.5 * (z * z / var + math.log(2.0 * math.pi) + math.log(var))


def propose_mb_milstein(model, theta, x_left, x_right, dt_k, dt_plus, rng,
                        t_k=None, tau_end=None,
                        rejection_cap=REJECTION_CAP) -> ProposalDraw:
    """One Milstein bridge draw by envelope rejection.

    Calibrates the truncated interval, then repeats uniform draws against the
    flat envelope 1.05 x the located maximum. Falls back to the Euler bridge
    (flagged) when the feasible interval is empty or the rejection cap is hit;
    the fallback needs t_k and tau_end for the bridge moments.
    """
    def euler_fallback():
        if t_k is None or tau_end is None:
            raise ValueError("fallback requires t_k and tau_end")
        d = propose_mb_euler(model, theta, x_left, t_k, x_right, tau_end,
                             dt_k, rng)
        return ProposalDraw(d.value, d.logq, d.n_redraws, fallback=True)

    feas = mb_feasible_interval(model, theta, x_left, x_right, dt_k, dt_plus)
    if feas.empty:
        return euler_fallback()
    cal = calibrate_mb_bridge(model, theta, x_left, x_right, dt_k, dt_plus)
    log_env = cal.log_max + math.log(ENVELOPE_FACTOR)
    for k in range(rejection_cap):
        u = rng.uniform(cal.lo, cal.hi)
        logg = mb_milstein_unnorm_logpdf(model, theta, u, x_left, x_right,
                                         dt_k, dt_plus)
        if math.log(rng.uniform()) <= logg - log_env:
            return ProposalDraw(float(u), float(logg - cal.log_z), k)
    return euler_fallback()
