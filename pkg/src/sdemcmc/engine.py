"""Gibbs sampler for diffusion parameters with data augmentation.

Each iteration alternates a joint random-walk update of the parameters with a
block-wise update of the imputed path points. Blocks come from a Poisson
block-size cover of the augmented index range; inside a block the path is
decomposed at fixed anchors (block edges and observations) into segments whose
interior points are proposed left to right, and the whole block is accepted or
rejected with a single uniform draw.

Four named RNG substreams (parameter moves, block sizes, path proposals,
acceptance uniforms) are derived from the chain seed, so different method
combinations with the same seed consume common random numbers where their
control flow agrees.

The per-iteration hot path is vectorized across segments and runs through the
compiled kernels in ``_kernels``; ``bridges`` holds the readable scalar
reference of the same proposal logic.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .bridges import mb_feasible_bounds
from .models import DiffusionModel, prior_logdensity, sample_from_priors
from .schemes import Observations

__all__ = [
    "MethodCombo",
    "study_combos",
    "McmcConfig",
    "ChainResult",
    "choose_update_blocks",
    "parameter_update",
    "path_update",
    "run_chain",
    "SegmentProposal",
    "propose_segment",
    "point_estimates",
    "hpd_interval",
]

LOG2PI = math.log(2.0 * math.pi)

# Engine profile of the bridge calibration (the public reference in `bridges`
# uses a finer scan; both honor the same 1e-20 truncation rule).
N_SCAN = 129
WINDOW_SDS = 12.0
LOG_ENV_PAD = math.log(1.05)
EDGE_INSET_REL = 1e-9
REJECTION_CAP = 100_000
SAMPLE_BATCH = 8
REDRAW_CAP = 1000
INIT_REDRAW_CAP = 100

_SCHEME_IDS = {"euler": _kernels.SCHEME_EULER,
               "milstein": _kernels.SCHEME_MILSTEIN,
               "exact": _kernels.SCHEME_EXACT_GBM}

# Substream tags appended to the chain seed entropy.
_STREAM_PARAM = 1
_STREAM_BLOCKS = 2
_STREAM_PATH = 3
_STREAM_ACCEPT = 4


@dataclass(frozen=True)
class MethodCombo:
    """One of the 2x2x2 estimation method combinations.

    proposal_method: "lc" (left-conditioned) or "mb" (modified bridge);
    proposal_scheme / likelihood_scheme: "euler" or "milstein" ("exact" is
    additionally accepted as a likelihood for GBM reference runs).
    """

    proposal_method: str
    proposal_scheme: str
    likelihood_scheme: str

    def __post_init__(self):
        if self.proposal_method not in ("lc", "mb"):
            raise ValueError("proposal_method must be 'lc' or 'mb'")
        if self.proposal_scheme not in ("euler", "milstein"):
            raise ValueError("proposal_scheme must be 'euler' or 'milstein'")
        if self.likelihood_scheme not in ("euler", "milstein", "exact"):
            raise ValueError(
                "likelihood_scheme must be 'euler', 'milstein' or 'exact'")

    @property
    def label(self) -> str:
        short = {"euler": "eul", "milstein": "mil", "exact": "exact"}
        return (f"{self.proposal_method}/{short[self.proposal_scheme]}"
                f"/{short[self.likelihood_scheme]}")


def study_combos():
    """The eight method combinations, in reporting order."""
    out = []
    for pm in ("lc", "mb"):
        for ps in ("euler", "milstein"):
            for ls in ("euler", "milstein"):
                out.append(MethodCombo(pm, ps, ls))
    return out


@dataclass(frozen=True)
class McmcConfig:
    """Chain settings.

    rw_variances holds one random-walk proposal variance per parameter; NaN
    marks a component as fixed (kept at theta_init, no prior required).
    """

    iterations: int
    m: int = 2
    burn_in_fraction: float = 0.1
    lam: float = 5.0
    rw_variances: tuple = (0.25, 0.25)
    theta_init: tuple = (1.0, 2.0)
    seed: int = 0
    # Testing knobs for the bridge normalization constant; production runs
    # leave them alone. mb_norm_scale multiplies every normalization constant,
    # which must not change the m=2 chain law; mb_force_normalization forces
    # computing Z even where it provably cancels.
    mb_norm_scale: float = 1.0
    mb_force_normalization: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("need iterations >= 1")
        if self.m < 1:
            raise ValueError("need m >= 1")
        if self.lam <= 0:
            raise ValueError("need lam > 0")
        if not (0.0 <= self.burn_in_fraction < 1.0):
            raise ValueError("burn_in_fraction must be in [0, 1)")
        if len(self.rw_variances) != len(self.theta_init):
            raise ValueError("rw_variances and theta_init lengths differ")


@dataclass
class ChainResult:
    samples: np.ndarray            # iterations x p, state after each iteration
    log_posterior: np.ndarray
    param_accept_rate: float
    path_accept_rate: float        # NaN when no path updates ran (m = 1)
    n_path_updates: int            # nontrivial blocks attempted
    path_logratio_max: float       # max |log acceptance ratio| over finite ratios
    counters: dict
    wall_time_s: float
    model_name: str
    combo: MethodCombo
    m: int
    seed_entropy: tuple
    theta_names: tuple
    final_path_times: np.ndarray = field(repr=False, default=None)
    final_path_values: np.ndarray = field(repr=False, default=None)

    def summary_dict(self) -> dict:
        return {
            "model": self.model_name,
            "combo": self.combo.label,
            "m": self.m,
            "iterations": int(self.samples.shape[0]),
            "param_accept_rate": self.param_accept_rate,
            "path_accept_rate": self.path_accept_rate,
            "n_path_updates": self.n_path_updates,
            "path_logratio_max": self.path_logratio_max,
            "counters": dict(self.counters),
            "wall_time_s": self.wall_time_s,
            "seed_entropy": list(self.seed_entropy),
        }


def choose_update_blocks(n: int, lam: float, rng) -> np.ndarray:
    """Cut indices 0 = c_0 <= ... <= c_J = n from Poisson block sizes.

    Draws Z ~ Po(lam) and sets c_j = min(c_{j-1} + Z, n) until n is reached;
    zero draws produce duplicate cuts, which are dropped, so the result is a
    strictly increasing cover of [0, n].
    """
    if n < 1 or lam <= 0:
        raise ValueError("need n >= 1 and lam > 0")
    batch = max(8, int(n / lam * 1.8) + 8)
    cs = np.cumsum(rng.poisson(lam, batch))
    guard = 0
    while cs[-1] < n:
        cs = np.concatenate([cs, cs[-1] + np.cumsum(rng.poisson(lam, batch))])
        guard += 1
        if guard > 10000:
            raise RuntimeError("block cover failed to reach n")
    cs = cs[: np.searchsorted(cs, n) + 1]
    return np.unique(np.concatenate(([0], np.minimum(cs, n))))


def _segments(cuts, obs_idx):
    """Anchor-to-anchor segments: anchors are cut points and observations."""
    anchors = np.union1d(cuts, obs_idx)
    left = anchors[:-1]
    right = anchors[1:]
    n_int = right - left - 1
    block_of = np.searchsorted(cuts, left, side="right") - 1
    return left, right, n_int, block_of


def _free_mask(config) -> np.ndarray:
    return ~np.isnan(np.asarray(config.rw_variances, dtype=float))


def parameter_update(combo, model, priors, theta, path_values, dts, config,
                     rng, loglik_current=None):
    """Joint random-walk move of all free parameters (accept all or none).

    Real-line components take Normal(theta_j, gamma_j^2) proposals, positive
    components LogNormal(log theta_j, gamma_j^2); the acceptance ratio is the
    likelihood ratio under the combo's likelihood scheme times the prior
    ratio times the log-normal Jacobian prod theta*_j / theta_j over free
    positive components.

    Returns (theta_next, accepted, loglik_next).
    """
    th = np.asarray(theta, dtype=float)
    rw = np.asarray(config.rw_variances, dtype=float)
    free = _free_mask(config)
    pos = np.asarray(model.positive_mask, dtype=bool)
    kid = model.kernel_id
    sid = _SCHEME_IDS[combo.likelihood_scheme]

    if loglik_current is None:
        loglik_current = _kernels.k_loglik_sum(kid, sid, th, path_values, dts)

    z = rng.standard_normal(int(free.sum()))
    gam = np.sqrt(rw[free])
    pos_f = pos[free]
    stepped = np.empty(z.size)
    stepped[pos_f] = np.exp(np.log(th[free][pos_f]) + gam[pos_f] * z[pos_f])
    stepped[~pos_f] = th[free][~pos_f] + gam[~pos_f] * z[~pos_f]
    th_star = th.copy()
    th_star[free] = stepped
    fp = free & pos

    lik_star = _kernels.k_loglik_sum(kid, sid, th_star, path_values, dts)
    lp_cur = prior_logdensity(priors, th)
    lp_star = prior_logdensity(priors, th_star)
    jac = float(np.sum(np.log(th_star[fp]) - np.log(th[fp])))
    delta = (lik_star - loglik_current) + (lp_star - lp_cur) + jac
    if math.log(rng.random() + 1e-300) < delta:
        return th_star, True, lik_star
    return th, False, loglik_current


def _gauss_logpdf(y, mean, var):
    d = y - mean
    return -0.5 * (d * d / var + LOG2PI + np.log(var))


def _step_draw(model, th, xl, dtk, z, milstein):
    mu = model.drift(xl, th)
    s = model.diffusion(xl, th)
    dB = np.sqrt(dtk) * z
    y = xl + mu * dtk + s * dB
    if milstein:
        ds = model.diffusion_deriv(xl, th)
        y = y + 0.5 * s * ds * (dB * dB - dtk)
    return y


def _redraw_nonpositive(draw_fn, y, rng, counters):
    """Redraw entries <= 0 (counted); returns (y, still_bad_mask)."""
    bad = ~(y > 0.0)
    guard = 0
    while bad.any() and guard < REDRAW_CAP:
        k = int(bad.sum())
        counters["redraw_nonpositive"] += k
        y[bad] = draw_fn(bad, rng.standard_normal(k))
        bad = ~(y > 0.0)
        guard += 1
    return y, bad


def _mb_euler_moments_arrays(model, th, xl, xr, dtk, remain):
    s = model.diffusion(xl, th)
    mean = xl + (xr - xl) * (dtk / remain)
    var = ((remain - dtk) / remain) * s * s * dtk
    return mean, var


class _Calibration:
    """Per-row bridge calibration results (arrays aligned with input rows)."""

    __slots__ = ("a", "b", "log_env", "log_z", "x_max")

    def __init__(self, a, b, log_env, log_z, x_max):
        self.a, self.b, self.log_env, self.log_z, self.x_max = \
            a, b, log_env, log_z, x_max


def _calibrate_rows(model, th, xl, xr, dtk, dtp, lo_feas, hi_feas, need_z):
    """Windowed scan calibration for rows with nonempty feasible intervals.

    Initial window is the Euler bulk +/- WINDOW_SDS standard deviations
    intersected with the feasible interval (endpoints inset off singular
    edges); while the 1e-20 truncation region touches an expandable window
    edge the window doubles on that side.
    """
    kid = model.kernel_id
    nr = xl.size
    mu = model.drift(xl, th)
    s = model.diffusion(xl, th)
    m_e = xl + mu * dtk
    sd = s * np.sqrt(dtk)

    lo_w = np.maximum(m_e - WINDOW_SDS * sd, lo_feas)
    hi_w = np.minimum(m_e + WINDOW_SDS * sd, hi_feas)
    bad = ~(lo_w < hi_w)
    if bad.any():
        below = bad & (m_e <= lo_feas)
        lo_w[below] = lo_feas[below]
        hi_w[below] = np.minimum(hi_feas[below],
                                 lo_feas[below] + 2 * WINDOW_SDS * sd[below])
        above = bad & ~below
        hi_w[above] = hi_feas[above]
        lo_w[above] = np.maximum(lo_feas[above],
                                 hi_feas[above] - 2 * WINDOW_SDS * sd[above])
    inset = EDGE_INSET_REL * (hi_w - lo_w)
    at_lo = lo_w <= lo_feas
    lo_w[at_lo] = lo_feas[at_lo] + inset[at_lo]
    at_hi = hi_w >= hi_feas
    hi_w[at_hi] = hi_feas[at_hi] - inset[at_hi]

    log_dmax = np.empty(nr)
    x_max = np.empty(nr)
    i_lo = np.empty(nr, dtype=np.int64)
    i_hi = np.empty(nr, dtype=np.int64)
    log_z = np.empty(nr)
    expand_lo = np.empty(nr, dtype=np.bool_)
    expand_hi = np.empty(nr, dtype=np.bool_)
    can_lo = lo_w > lo_feas + inset
    can_hi = hi_w < hi_feas - inset
    _kernels.k_mb_calibrate(kid, th, xl, xr, dtk, dtp, lo_w, hi_w,
                            can_lo, can_hi, N_SCAN, need_z,
                            log_dmax, x_max, i_lo, i_hi, log_z,
                            expand_lo, expand_hi)
    for _ in range(60):
        grow = expand_lo | expand_hi
        if not grow.any():
            break
        rows = np.flatnonzero(grow)
        span = hi_w[rows] - lo_w[rows]
        lo_w[rows] = np.where(expand_lo[rows],
                              np.maximum(lo_feas[rows] + inset[rows],
                                         lo_w[rows] - span), lo_w[rows])
        hi_w[rows] = np.where(expand_hi[rows],
                              np.minimum(hi_feas[rows] - inset[rows],
                                         hi_w[rows] + span), hi_w[rows])
        can_lo_r = lo_w[rows] > lo_feas[rows] + inset[rows]
        can_hi_r = hi_w[rows] < hi_feas[rows] - inset[rows]
        sub = (np.empty(rows.size), np.empty(rows.size),
               np.empty(rows.size, dtype=np.int64),
               np.empty(rows.size, dtype=np.int64), np.empty(rows.size),
               np.empty(rows.size, dtype=np.bool_),
               np.empty(rows.size, dtype=np.bool_))
        _kernels.k_mb_calibrate(kid, th,
                                np.ascontiguousarray(xl[rows]),
                                np.ascontiguousarray(xr[rows]),
                                np.ascontiguousarray(dtk[rows]),
                                np.ascontiguousarray(dtp[rows]),
                                np.ascontiguousarray(lo_w[rows]),
                                np.ascontiguousarray(hi_w[rows]),
                                can_lo_r, can_hi_r, N_SCAN, need_z, *sub)
        (log_dmax[rows], x_max[rows], i_lo[rows], i_hi[rows], log_z[rows],
         expand_lo[rows], expand_hi[rows]) = sub
        keep = np.zeros(nr, dtype=bool)
        keep[rows] = True
        expand_lo &= keep
        expand_hi &= keep

    h = (hi_w - lo_w) / (N_SCAN - 1)
    a = lo_w + h * i_lo
    b = lo_w + h * i_hi
    return _Calibration(a, b, log_dmax + LOG_ENV_PAD, log_z, x_max)


def _mb_milstein_round(model, th, xl_f, xl_r, xr, cur, dtk, dtp, remain,
                       round0, rng, counters, norm_shift):
    """Propose one bridge point per row; return draws and both q increments.

    round0 marks rows whose forward and reverse anchors coincide (first
    interior point of a segment); there the normalization constant cancels in
    the acceptance ratio and is skipped unless the caller forces it via a
    non-None norm_shift semantics (norm_shift is log of the scale knob applied
    to every computed normalization constant; it must cancel between q_fwd and
    q_rev and is exercised by tests).
    """
    kid = model.kernel_id
    nr = xl_f.size
    y = np.empty(nr)
    logf_y = np.empty(nr)
    lq_f = np.empty(nr)
    lq_r = np.empty(nr)

    lo_f, hi_f = mb_feasible_bounds(model, th, xl_f, xr, dtk, dtp)
    empty_f = ~(lo_f < hi_f)
    rowsc = np.flatnonzero(~empty_f)
    capped = np.zeros(nr, dtype=bool)
    force_z = norm_shift is not None
    need_z = (not round0) or force_z

    if rowsc.size:
        cal = _calibrate_rows(model, th,
                              np.ascontiguousarray(xl_f[rowsc]),
                              np.ascontiguousarray(xr[rowsc]),
                              np.ascontiguousarray(dtk[rowsc]),
                              np.ascontiguousarray(dtp[rowsc]),
                              np.ascontiguousarray(lo_f[rowsc]),
                              np.ascontiguousarray(hi_f[rowsc]), need_z)
        found = np.zeros(rowsc.size, dtype=np.bool_)
        y_sub = np.empty(rowsc.size)
        lf_sub = np.empty(rowsc.size)
        xl_c = np.ascontiguousarray(xl_f[rowsc])
        xr_c = np.ascontiguousarray(xr[rowsc])
        dtk_c = np.ascontiguousarray(dtk[rowsc])
        dtp_c = np.ascontiguousarray(dtp[rowsc])
        tries = 0
        while tries < REJECTION_CAP and not found.all():
            u1 = rng.random((rowsc.size, SAMPLE_BATCH))
            lu2 = -rng.exponential(size=(rowsc.size, SAMPLE_BATCH))
            _kernels.k_mb_sample_round(kid, th, xl_c, xr_c, dtk_c, dtp_c,
                                       cal.a, cal.b, cal.log_env, u1, lu2,
                                       found, y_sub, lf_sub)
            tries += SAMPLE_BATCH
        y[rowsc] = y_sub
        logf_y[rowsc] = lf_sub
        cap_sub = ~found
        capped[rowsc[cap_sub]] = True
        ok = rowsc[found]
        shift = norm_shift if force_z else 0.0
        if round0 and not force_z:
            lq_f[ok] = logf_y[ok]
        else:
            lq_f[ok] = logf_y[ok] - (cal.log_z[found] + shift)

    fallback = empty_f | capped
    counters["fallback_empty"] += int(empty_f.sum())
    counters["fallback_cap"] += int(capped.sum())
    if fallback.any():
        fb = np.flatnonzero(fallback)
        mean, var = _mb_euler_moments_arrays(model, th, xl_f[fb], xr[fb],
                                             dtk[fb], remain[fb])
        sd = np.sqrt(var)
        y_fb = mean + sd * rng.standard_normal(fb.size)

        def draw(bad, z):
            return mean[bad] + sd[bad] * z

        y_fb, still_bad = _redraw_nonpositive(draw, y_fb, rng, counters)
        y[fb] = y_fb
        lq_f[fb] = _gauss_logpdf(y_fb, mean, var)

    # Reverse side: density of the current point under the mechanism started
    # from the current chain's left value.
    lo_r, hi_r = mb_feasible_bounds(model, th, xl_r, xr, dtk, dtp)
    empty_r = ~(lo_r < hi_r)
    rows_r = np.flatnonzero(~empty_r)
    if rows_r.size:
        g_rev = np.empty(rows_r.size)
        _kernels.k_mb_unnorm_points(kid, th,
                                    np.ascontiguousarray(cur[rows_r]),
                                    np.ascontiguousarray(xl_r[rows_r]),
                                    np.ascontiguousarray(xr[rows_r]),
                                    np.ascontiguousarray(dtk[rows_r]),
                                    np.ascontiguousarray(dtp[rows_r]), g_rev)
        if round0 and not force_z:
            # Same anchors as forward: Z cancels against the forward side for
            # sampled rows. Rows that fell back forward revert to computing
            # the reverse normalization explicitly (rare: rejection cap).
            lq_r[rows_r] = g_rev
            odd = rows_r[capped[rows_r]]
            if odd.size:
                cal_r = _calibrate_rows(model, th, xl_r[odd], xr[odd],
                                        dtk[odd], dtp[odd], lo_r[odd],
                                        hi_r[odd], True)
                sel = capped[rows_r]
                lq_r[odd] = g_rev[sel] - cal_r.log_z
                # the paired forward rows used the Gaussian fallback, which is
                # already normalized, so nothing cancels for them
        else:
            cal_r = _calibrate_rows(model, th,
                                    np.ascontiguousarray(xl_r[rows_r]),
                                    np.ascontiguousarray(xr[rows_r]),
                                    np.ascontiguousarray(dtk[rows_r]),
                                    np.ascontiguousarray(dtp[rows_r]),
                                    np.ascontiguousarray(lo_r[rows_r]),
                                    np.ascontiguousarray(hi_r[rows_r]), True)
            shift = norm_shift if force_z else 0.0
            lq_r[rows_r] = g_rev - (cal_r.log_z + shift)
    if empty_r.any():
        er = np.flatnonzero(empty_r)
        mean_r, var_r = _mb_euler_moments_arrays(model, th, xl_r[er], xr[er],
                                                 dtk[er], remain[er])
        lq_r[er] = _gauss_logpdf(cur[er], mean_r, var_r)

    bad = ~(y > 0.0)
    return y, lq_f, lq_r, bad


def path_update(combo, model, theta, t, dts, x, obs_idx, config,
                rng_blocks, rng_path, rng_accept, counters):
    """One full pass of block-wise path proposals; mutates x in place.

    Returns (accepted_blocks, nontrivial_blocks, max_abs_log_ratio). Blocks
    without proposable interior points are not counted.
    """
    th = np.asarray(theta, dtype=float)
    kid = model.kernel_id
    lsid = _SCHEME_IDS[combo.likelihood_scheme]
    n = x.size - 1
    cuts = choose_update_blocks(n, config.lam, rng_blocks)
    left, right, n_int, block_of = _segments(cuts, obs_idx)
    act = n_int >= 1
    if not act.any():
        return 0, 0, 0.0
    aleft = left[act]
    aright = right[act]
    a_nint = n_int[act]
    ablock = block_of[act]
    nseg = aleft.size

    x_prop = x.copy()
    q_fwd = np.zeros(nseg)
    q_rev = np.zeros(nseg)
    failed = np.zeros(nseg, dtype=bool)
    lc = combo.proposal_method == "lc"
    mb_mil = (not lc) and combo.proposal_scheme == "milstein"
    psid = _SCHEME_IDS[combo.proposal_scheme]
    milstein_prop = combo.proposal_scheme == "milstein"
    norm_shift = (math.log(config.mb_norm_scale)
                  if (config.mb_force_normalization
                      or config.mb_norm_scale != 1.0) else None)

    for r in range(int(a_nint.max())):
        rows = np.flatnonzero((a_nint > r) & ~failed)
        if rows.size == 0:
            continue
        idx = aleft[rows] + 1 + r
        xl_f = x_prop[idx - 1]
        xl_r = x[idx - 1]
        xr = x[aright[rows]]
        cur = x[idx]
        dtk = dts[idx - 1]
        t_right = t[aright[rows]]
        dtp = t_right - t[idx]
        remain = t_right - t[idx - 1]

        if lc:
            y = _step_draw(model, th, xl_f, dtk, rng_path.standard_normal(rows.size),
                           milstein_prop)

            def draw(bad, z, xl_f=xl_f, dtk=dtk):
                return _step_draw(model, th, xl_f[bad], dtk[bad], z, milstein_prop)

            y, bad = _redraw_nonpositive(draw, y, rng_path, counters)
            lq_f = np.empty(rows.size)
            lq_r = np.empty(rows.size)
            y_safe = np.where(bad, cur, y)
            _kernels.k_logpdf(kid, psid, th, xl_f, y_safe, dtk, lq_f)
            _kernels.k_logpdf(kid, psid, th, xl_r, cur, dtk, lq_r)
            y = y_safe
        elif not mb_mil:
            mean_f, var_f = _mb_euler_moments_arrays(model, th, xl_f, xr, dtk,
                                                     remain)
            sd_f = np.sqrt(var_f)
            y = mean_f + sd_f * rng_path.standard_normal(rows.size)

            def draw(bad, z, mean_f=mean_f, sd_f=sd_f):
                return mean_f[bad] + sd_f[bad] * z

            y, bad = _redraw_nonpositive(draw, y, rng_path, counters)
            y = np.where(bad, cur, y)
            lq_f = _gauss_logpdf(y, mean_f, var_f)
            mean_r, var_r = _mb_euler_moments_arrays(model, th, xl_r, xr, dtk,
                                                     remain)
            lq_r = _gauss_logpdf(cur, mean_r, var_r)
        else:
            y, lq_f, lq_r, bad = _mb_milstein_round(
                model, th, xl_f, xl_r, xr, cur, dtk, dtp, remain,
                round0=(r == 0), rng=rng_path, counters=counters,
                norm_shift=norm_shift)
            y = np.where(bad, cur, y)

        x_prop[idx] = y
        q_fwd[rows] += lq_f
        q_rev[rows] += lq_r
        if bad.any():
            failed[rows[bad]] = True

    # Likelihood difference over every transition of the active segments.
    lens = aright - aleft
    starts = np.concatenate(([0], np.cumsum(lens)))[:-1]
    total = int(lens.sum())
    itr = (np.arange(total) - np.repeat(starts, lens)) + np.repeat(aleft, lens)
    lik_p = np.empty(total)
    lik_c = np.empty(total)
    _kernels.k_logpdf(kid, lsid, th, np.ascontiguousarray(x_prop[itr]),
                      np.ascontiguousarray(x_prop[itr + 1]),
                      np.ascontiguousarray(dts[itr]), lik_p)
    _kernels.k_logpdf(kid, lsid, th, np.ascontiguousarray(x[itr]),
                      np.ascontiguousarray(x[itr + 1]),
                      np.ascontiguousarray(dts[itr]), lik_c)
    lik_p_seg = np.add.reduceat(lik_p, starts)
    lik_c_seg = np.add.reduceat(lik_c, starts)
    with np.errstate(invalid="ignore"):
        seg_ratio = (lik_p_seg - q_fwd) + (q_rev - lik_c_seg)
    seg_ratio[failed] = -np.inf

    new_grp = np.concatenate(([True], ablock[1:] != ablock[:-1]))
    grp_starts = np.flatnonzero(new_grp)
    block_ratio = np.add.reduceat(seg_ratio, grp_starts)
    nb = grp_starts.size
    u = rng_accept.random(nb)
    with np.errstate(invalid="ignore"):
        accept = np.log(u + 1e-300) < block_ratio

    finite = np.isfinite(block_ratio)
    mx = float(np.max(np.abs(block_ratio[finite]))) if finite.any() else 0.0

    grp_id = np.cumsum(new_grp) - 1
    acc_seg = accept[grp_id]
    if acc_seg.any():
        li = a_nint[acc_seg]
        st2 = np.concatenate(([0], np.cumsum(li)))[:-1]
        tot2 = int(li.sum())
        ii = (np.arange(tot2) - np.repeat(st2, li)) + np.repeat(
            aleft[acc_seg] + 1, li)
        x[ii] = x_prop[ii]
    return int(accept.sum()), int(nb), mx


def _substream(seed_entropy, tag):
    return np.random.default_rng(np.random.SeedSequence(tuple(seed_entropy) + (tag,)))


def run_chain(combo, model, priors, observations: Observations, config,
              seed_entropy=None) -> ChainResult:
    """Run one chain: prior-drawn start, interpolated path, Gibbs iterations.

    seed_entropy is a tuple mixed into every substream seed; it defaults to
    (config.seed,). Chains with equal entropy are bit-identical.
    """
    model_check_combo(model, combo)
    th0 = np.asarray(config.theta_init, dtype=float)
    p = th0.size
    if p != model.n_params:
        raise ValueError("theta_init length does not match the model")
    if len(priors) != p:
        raise ValueError("need one prior entry per parameter (None = fixed)")
    free = _free_mask(config)
    for j, pr in enumerate(priors):
        if (pr is None) == bool(free[j]):
            raise ValueError(
                "free parameters need a prior and a proposal variance; fixed "
                "parameters (NaN variance) must have prior None")

    if seed_entropy is None:
        seed_entropy = (config.seed,)
    seed_entropy = tuple(int(v) for v in seed_entropy)
    rng_param = _substream(seed_entropy, _STREAM_PARAM)
    rng_blocks = _substream(seed_entropy, _STREAM_BLOCKS)
    rng_path = _substream(seed_entropy, _STREAM_PATH)
    rng_accept = _substream(seed_entropy, _STREAM_ACCEPT)

    obs_t = np.asarray(observations.times, dtype=float)
    obs_v = np.asarray(observations.values, dtype=float)
    M = obs_t.size
    if M < 2:
        raise ValueError("need at least two observations")
    m = config.m
    n = (M - 1) * m
    t = np.linspace(obs_t[0], obs_t[-1], n + 1)
    if not np.allclose(np.diff(obs_t), np.diff(obs_t)[0], rtol=1e-9):
        raise ValueError("observations must be equidistant in time")
    obs_idx = np.arange(0, n + 1, m)
    x = np.interp(t, obs_t, obs_v)
    x[obs_idx] = obs_v
    dts = np.diff(t)

    kid = model.kernel_id
    lsid = _SCHEME_IDS[combo.likelihood_scheme]
    _kernels.warmup()

    theta = None
    loglik = -np.inf
    for _ in range(INIT_REDRAW_CAP):
        cand = sample_from_priors(priors, th0, rng_param)
        ll = _kernels.k_loglik_sum(kid, lsid, cand, x, dts)
        if np.isfinite(ll):
            theta, loglik = cand, ll
            break
    if theta is None:
        raise RuntimeError(
            f"no prior draw gave a finite likelihood in {INIT_REDRAW_CAP} tries")

    iters = config.iterations
    samples = np.empty((iters, p))
    logpost = np.empty(iters)
    counters = {"fallback_empty": 0, "fallback_cap": 0,
                "redraw_nonpositive": 0}
    n_param_acc = 0
    n_path_acc = 0
    n_path_tot = 0
    ratio_max = 0.0

    t_start = time.perf_counter()
    for it in range(iters):
        theta, acc, loglik = parameter_update(
            combo, model, priors, theta, x, dts, config, rng_param,
            loglik_current=loglik)
        n_param_acc += acc
        if m >= 2:
            na, nb, mx = path_update(combo, model, theta, t, dts, x, obs_idx,
                                     config, rng_blocks, rng_path, rng_accept,
                                     counters)
            n_path_acc += na
            n_path_tot += nb
            if mx > ratio_max:
                ratio_max = mx
            if na:
                loglik = _kernels.k_loglik_sum(kid, lsid, theta, x, dts)
        samples[it] = theta
        logpost[it] = loglik + prior_logdensity(priors, theta)
    wall = time.perf_counter() - t_start

    return ChainResult(
        samples=samples,
        log_posterior=logpost,
        param_accept_rate=n_param_acc / iters,
        path_accept_rate=(n_path_acc / n_path_tot) if n_path_tot else float("nan"),
        n_path_updates=n_path_tot,
        path_logratio_max=ratio_max,
        counters=counters,
        wall_time_s=wall,
        model_name=model.name,
        combo=combo,
        m=m,
        seed_entropy=seed_entropy,
        theta_names=tuple(model.param_names),
        final_path_times=t,
        final_path_values=x,
    )


def model_check_combo(model: DiffusionModel, combo: MethodCombo):
    if model.kernel_id < 0:
        raise ValueError(f"model '{model.name}' has no compiled kernels")
    if combo.likelihood_scheme == "exact" and model.name != "gbm":
        raise ValueError("exact likelihood is available for gbm only")


@dataclass(frozen=True)
class SegmentProposal:
    """Scalar reference proposal of one segment's interior points."""

    points: np.ndarray
    log_q_forward: float
    log_q_reverse: float
    fallback_count: int
    reproposal_count: int


def propose_segment(combo, model, theta, t_seg, x_left, x_right, current_interior,
                    rng) -> SegmentProposal:
    """Propose all interior points between two fixed endpoints, left to right.

    t_seg holds the segment's time points (anchors included); the forward
    log-density is accumulated over the proposed points and the reverse
    log-density evaluates the current interior points under the same law
    conditioned on the same endpoints. Readable scalar counterpart of the
    engine's vectorized rounds, for tests and demos.
    """
    from . import bridges

    t_seg = np.asarray(t_seg, dtype=float)
    cur = np.asarray(current_interior, dtype=float)
    k_int = t_seg.size - 2
    if cur.size != k_int:
        raise ValueError("current_interior length must match interior times")
    th = np.asarray(theta, dtype=float)
    pts = np.empty(k_int)
    lq_f = 0.0
    lq_r = 0.0
    n_fb = 0
    n_rd = 0
    xl_f = x_left
    xl_r = x_left
    tau_end = t_seg[-1]
    for k in range(k_int):
        dtk = t_seg[k + 1] - t_seg[k]
        dtp = tau_end - t_seg[k + 1]
        if combo.proposal_method == "lc":
            d = bridges.propose_lc(model, combo.proposal_scheme, th, xl_f, dtk, rng)
            lq_r += bridges.lc_logq(model, combo.proposal_scheme, th, xl_r,
                                    cur[k], dtk)
        elif combo.proposal_scheme == "euler":
            d = bridges.propose_mb_euler(model, th, xl_f, t_seg[k], x_right,
                                         tau_end, dtk, rng)
            lq_r += bridges.mb_euler_logq(model, th, xl_r, t_seg[k], x_right,
                                          tau_end, dtk, cur[k])
        else:
            d = bridges.propose_mb_milstein(model, th, xl_f, x_right, dtk, dtp,
                                            rng, t_k=t_seg[k], tau_end=tau_end)
            feas = bridges.mb_feasible_interval(model, th, xl_r, x_right, dtk, dtp)
            if feas.empty:
                lq_r += bridges.mb_euler_logq(model, th, xl_r, t_seg[k], x_right,
                                              tau_end, dtk, cur[k])
            else:
                cal = bridges.calibrate_mb_bridge(model, th, xl_r, x_right,
                                                  dtk, dtp)
                lq_r += bridges.mb_milstein_unnorm_logpdf(
                    model, th, cur[k], xl_r, x_right, dtk, dtp) - cal.log_z
        pts[k] = d.value
        lq_f += d.logq
        n_fb += int(getattr(d, "fallback", False))
        n_rd += d.n_redraws
        xl_f = d.value
        xl_r = cur[k]
    return SegmentProposal(pts, lq_f, lq_r, n_fb, n_rd)


def point_estimates(chain: ChainResult, burn_in_fraction=None):
    """Posterior mean and marginal KDE mode after burn-in removal.

    The mode of each marginal is the argmax of a Gaussian kernel density
    (Silverman bandwidth) on a 512-point grid over the sample range.
    """
    frac = 0.1 if burn_in_fraction is None else burn_in_fraction
    s = chain.samples if isinstance(chain, ChainResult) else np.asarray(chain)
    L = s.shape[0]
    lo = int(math.floor(frac * L))
    post = s[lo:]
    if post.shape[0] < 100:
        raise ValueError("need at least 100 post-burn-in samples")
    mean = post.mean(axis=0)
    mode = np.empty_like(mean)
    from scipy.stats import gaussian_kde

    for j in range(post.shape[1]):
        col = post[:, j]
        if np.ptp(col) == 0.0:
            mode[j] = col[0]
            continue
        kde = gaussian_kde(col, bw_method="silverman")
        grid = np.linspace(col.min(), col.max(), 512)
        mode[j] = grid[int(np.argmax(kde(grid)))]
    return mean, mode


def hpd_interval(samples, level: float):
    """Shortest interval containing ceil(level * n) sorted samples."""
    if not (0.0 < level < 1.0):
        raise ValueError("level must be in (0, 1)")
    s = np.sort(np.asarray(samples, dtype=float))
    n = s.size
    if n == 0:
        raise ValueError("empty sample")
    k = int(math.ceil(level * n))
    if k >= n:
        return float(s[0]), float(s[-1])
    widths = s[k - 1:] - s[: n - k + 1]
    i = int(np.argmin(widths))
    return float(s[i]), float(s[i + k - 1])
