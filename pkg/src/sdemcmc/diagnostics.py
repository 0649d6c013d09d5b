"""Chain quality summaries: multivariate ESS and per-method aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["EssReport", "multivariate_ess", "SummaryRow", "summarize_run"]


@dataclass(frozen=True)
class EssReport:
    multivariate_ess: float
    sample_covariance: np.ndarray
    batch_means_covariance: np.ndarray
    batch_size: int
    exceeds_n: bool = False


def multivariate_ess(samples) -> EssReport:
    """Effective sample size of a correlated chain via batch means.

    ESS = n * (det Lambda / det Sigma)^(1/p) with Lambda the sample covariance
    and Sigma the batch-means estimate of the long-run covariance, batch size
    floor(sqrt(n)), non-overlapping batches, tail remainder discarded. With
    p = 1 this is the univariate batch-means ESS. Anti-correlated chains can
    push ESS above n; that is flagged, not clamped.

    Raises a LinAlgError on a degenerate chain (singular covariance).
    """
    s = np.asarray(samples, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    n, p = s.shape
    if n < 100:
        raise ValueError("need at least 100 samples")
    b = math.isqrt(n)
    a = n // b
    use = s[: a * b]

    lam = np.atleast_2d(np.cov(s, rowvar=False, ddof=1))
    bmeans = use.reshape(a, b, p).mean(axis=1)
    d = bmeans - use.mean(axis=0)
    sig = (b / (a - 1)) * (d.T @ d)

    sign_l, logdet_l = np.linalg.slogdet(lam)
    sign_s, logdet_s = np.linalg.slogdet(sig)
    if sign_l <= 0 or sign_s <= 0:
        raise np.linalg.LinAlgError(
            "degenerate chain: singular covariance in the ESS estimate")
    ess = n * math.exp((logdet_l - logdet_s) / p)
    return EssReport(
        multivariate_ess=ess,
        sample_covariance=lam,
        batch_means_covariance=sig,
        batch_size=b,
        exceeds_n=ess > n,
    )


@dataclass(frozen=True)
class SummaryRow:
    """One aggregate line per (method combination, m): mean and sd over paths."""

    proposal_method: str
    proposal_density: str
    likelihood_density: str
    m: int
    ess_mean: float
    ess_sd: float
    param_acc_mean: float
    param_acc_sd: float
    path_acc_mean: float
    path_acc_sd: float
    time_mean_s: float
    time_sd_s: float


def _mean_sd(values):
    v = np.asarray(values, dtype=float)
    mean = float(np.mean(v))
    sd = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return mean, sd


def summarize_run(chains, burn_in_fraction: float = 0.1):
    """Aggregate per-path chains into one row per (combo, m).

    ESS is computed on the post-burn-in samples of each chain. Rows are
    ordered by combo (lc before mb, euler before milstein) and ascending m;
    the chain input order does not matter.
    """
    chains = list(chains)
    if len(chains) < 2:
        raise ValueError("need at least two chains to aggregate")
    groups = {}
    for ch in chains:
        key = (ch.combo.proposal_method, ch.combo.proposal_scheme,
               ch.combo.likelihood_scheme, ch.m)
        groups.setdefault(key, []).append(ch)

    rows = []
    for key in sorted(groups):
        pm, ps, ls, m = key
        grp = groups[key]
        ess_vals = []
        for ch in grp:
            lo = int(math.floor(burn_in_fraction * ch.samples.shape[0]))
            free = ch.samples[lo:]
            # fixed parameters (constant columns) carry no sample information
            free = free[:, np.ptp(free, axis=0) > 0]
            if free.shape[1] == 0:
                raise ValueError("all parameter components are constant")
            ess_vals.append(multivariate_ess(free).multivariate_ess)
        ess_mean, ess_sd = _mean_sd(ess_vals)
        pa_mean, pa_sd = _mean_sd([ch.param_accept_rate for ch in grp])
        pt = [ch.path_accept_rate for ch in grp]
        if all(math.isnan(v) for v in pt):
            pt_mean, pt_sd = float("nan"), float("nan")
        else:
            pt_mean, pt_sd = _mean_sd(pt)
        t_mean, t_sd = _mean_sd([ch.wall_time_s for ch in grp])
        rows.append(SummaryRow(pm, ps, ls, m, ess_mean, ess_sd,
                               pa_mean, pa_sd, pt_mean, pt_sd, t_mean, t_sd))
    return rows
