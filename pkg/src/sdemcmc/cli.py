"""Command line front end.

Subcommands:
  simulate  generate an observation CSV from a model's data-generating law
  estimate  run a single chain on an observation CSV
  study     run the full simulation study (paths x combos x m)
  density   dump a transition-density profile as CSV

`study` accepts a JSON config file (--config) whose keys mirror StudyConfig;
command-line flags override file values. See README for the schema.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .density import density_profile
from .engine import McmcConfig, MethodCombo, run_chain
from .io import (fmt, read_observations_csv, write_chain_csv,
                 write_manifest, write_observations_csv)
from .models import model_lookup
from .schemes import generate_cir_observations, generate_gbm_observations
from .study import (SCALES, StudyConfig, cir_study_config, gbm_study_config,
                    run_study, study_priors)

_SCHEME_ALIASES = {"eul": "euler", "euler": "euler",
                   "mil": "milstein", "milstein": "milstein",
                   "exact": "exact"}


def _parse_theta(text: str) -> tuple:
    return tuple(float(v) for v in text.split(","))


def parse_combo(text: str) -> MethodCombo:
    """'mb/mil/mil' or 'lc/euler/milstein' -> MethodCombo."""
    parts = text.lower().split("/")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            "combo must look like 'mb/mil/eul' "
            "(proposal_method/proposal_scheme/likelihood_scheme)")
    pm, ps, ls = parts
    try:
        return MethodCombo(pm, _SCHEME_ALIASES[ps], _SCHEME_ALIASES[ls])
    except (KeyError, ValueError) as e:
        raise argparse.ArgumentTypeError(str(e))


def _add_simulate(sub):
    p = sub.add_parser("simulate", help="generate observations")
    p.add_argument("--model", required=True, choices=("gbm", "cir"))
    p.add_argument("--theta", required=True, type=_parse_theta,
                   help="comma-separated true parameters")
    p.add_argument("--x0", required=True, type=float)
    p.add_argument("--n-obs", type=int, default=50)
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fine-dt", type=float, default=1e-4,
                   help="fine simulation step for models without an exact law")
    p.add_argument("--out", required=True)


def _add_estimate(sub):
    p = sub.add_parser("estimate", help="run one chain on an observation CSV")
    p.add_argument("--obs", required=True, help="observation CSV (time,value)")
    p.add_argument("--model", required=True, choices=("gbm", "cir"))
    p.add_argument("--combo", required=True, type=parse_combo)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--iterations", type=int, default=20000)
    p.add_argument("--burn-in-fraction", type=float, default=0.1)
    p.add_argument("--lam", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="chain CSV path")
    p.add_argument("--summary-out", help="optional JSON summary path")


def _add_study(sub):
    p = sub.add_parser("study", help="run the simulation study")
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--model", choices=("gbm", "cir"))
    p.add_argument("--scale", choices=tuple(SCALES), default=None)
    p.add_argument("--out-dir")
    p.add_argument("--master-seed", type=int)
    p.add_argument("--n-paths", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--m-values", help="comma-separated, e.g. 1,2,5")
    p.add_argument("--combos", help="comma-separated combo labels, "
                                    "e.g. mb/mil/mil,lc/eul/eul")
    p.add_argument("--workers", type=int)
    p.add_argument("--write-chains", action="store_true", default=None)
    p.add_argument("--fine-dt", type=float)


def _add_density(sub):
    p = sub.add_parser("density", help="dump a transition-density profile")
    p.add_argument("--model", required=True, choices=("gbm", "cir"))
    p.add_argument("--scheme", required=True,
                   choices=("euler", "milstein", "exact"))
    p.add_argument("--theta", required=True, type=_parse_theta)
    p.add_argument("--x", required=True, type=float, help="conditioning state")
    p.add_argument("--dt", required=True, type=float)
    p.add_argument("--n-points", type=int, default=512)
    p.add_argument("--y-lo", type=float)
    p.add_argument("--y-hi", type=float)
    p.add_argument("--out", required=True)


def _cmd_simulate(args):
    seed = np.random.SeedSequence(args.seed)
    if args.model == "gbm":
        obs = generate_gbm_observations(args.theta, args.x0, args.n_obs,
                                        args.horizon, seed)
    else:
        obs = generate_cir_observations(args.theta, args.x0, args.n_obs,
                                        args.horizon, seed,
                                        fine_dt=args.fine_dt)
    write_observations_csv(args.out, obs)
    print(f"wrote {args.n_obs} observations to {args.out}")
    return 0


def _standalone_mcmc_config(model_name, args) -> McmcConfig:
    if model_name == "gbm":
        rw, init = (0.25, 0.25), (1.0, 2.0)
    else:
        rw, init = (float("nan"), 0.25, 0.25), (1.0, 1.0, 0.25)
    return McmcConfig(iterations=args.iterations, m=args.m,
                      burn_in_fraction=args.burn_in_fraction, lam=args.lam,
                      rw_variances=rw, theta_init=init, seed=args.seed)


def _cmd_estimate(args):
    model = model_lookup(args.model)
    obs = read_observations_csv(args.obs, model_name=args.model)
    priors = study_priors(args.model)
    config = _standalone_mcmc_config(args.model, args)
    chain = run_chain(args.combo, model, priors, obs, config)
    write_chain_csv(args.out, chain)
    print(f"chain written to {args.out}")
    print(f"param acceptance {chain.param_accept_rate:.3f}, "
          f"path acceptance {chain.path_accept_rate:.3f}, "
          f"wall time {chain.wall_time_s:.1f}s")
    if args.summary_out:
        write_manifest(args.summary_out, chain.summary_dict())
    return 0


def _study_config_from_args(args) -> StudyConfig:
    file_vals = {}
    if args.config:
        with open(args.config) as fh:
            file_vals = json.load(fh)

    model = args.model or file_vals.get("model")
    if model is None:
        raise SystemExit("study needs --model or a config file with 'model'")
    scale = args.scale or file_vals.get("scale") or "desk"
    base = (gbm_study_config if model == "gbm" else cir_study_config)(
        scale=scale,
        out_dir=args.out_dir or file_vals.get("out_dir") or f"study_{model}")
    cfg = base

    def pick(flag, key):
        return flag if flag is not None else file_vals.get(key)

    simple = {
        "master_seed": pick(args.master_seed, "master_seed"),
        "n_paths": pick(args.n_paths, "n_paths"),
        "workers": pick(args.workers, "workers"),
        "fine_dt": pick(args.fine_dt, "fine_dt"),
        "write_chains": pick(args.write_chains, "write_chains"),
        "theta_true": file_vals.get("theta_true"),
        "x0": file_vals.get("x0"),
        "n_obs": file_vals.get("n_obs"),
        "horizon": file_vals.get("horizon"),
    }
    updates = {k: (tuple(v) if isinstance(v, list) else v)
               for k, v in simple.items() if v is not None}

    m_values = pick(args.m_values, "m_values")
    if m_values is not None:
        if isinstance(m_values, str):
            m_values = [int(v) for v in m_values.split(",")]
        updates["m_values"] = tuple(int(v) for v in m_values)

    combos = pick(args.combos, "combos")
    if combos is not None:
        if isinstance(combos, str):
            combos = combos.split(",")
        updates["combos"] = tuple(parse_combo(c) for c in combos)

    mcmc = cfg.mcmc
    mcmc_vals = dict(file_vals.get("mcmc", {}))
    if args.iterations is not None:
        mcmc_vals["iterations"] = args.iterations
    elif "iterations" in file_vals:
        mcmc_vals["iterations"] = file_vals["iterations"]
    if mcmc_vals:
        if "rw_variances" in mcmc_vals:
            mcmc_vals["rw_variances"] = tuple(
                float("nan") if v in ("nan", None) else float(v)
                for v in mcmc_vals["rw_variances"])
        if "theta_init" in mcmc_vals:
            mcmc_vals["theta_init"] = tuple(mcmc_vals["theta_init"])
        mcmc = replace(mcmc, **mcmc_vals)
        updates["mcmc"] = mcmc

    return replace(cfg, **updates) if updates else cfg


def _cmd_study(args):
    cfg = _study_config_from_args(args)
    out = run_study(cfg)
    print(f"study artifacts in {out}")
    return 0


def _cmd_density(args):
    model = model_lookup(args.model)
    y, logf = density_profile(model, args.scheme, args.x, args.dt,
                              np.asarray(args.theta, dtype=float),
                              n_points=args.n_points,
                              y_lo=args.y_lo, y_hi=args.y_hi)
    with open(args.out, "w") as fh:
        fh.write("y,log_density,density\n")
        for yi, li in zip(y, logf):
            fh.write(f"{fmt(yi)},{fmt(li)},{fmt(np.exp(li))}\n")
    print(f"density profile ({args.n_points} points) written to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sdemcmc",
        description="Bayesian parameter estimation for discretely observed "
                    "diffusions via data-augmentation MCMC")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_simulate(sub)
    _add_estimate(sub)
    _add_study(sub)
    _add_density(sub)
    args = parser.parse_args(argv)
    handlers = {"simulate": _cmd_simulate, "estimate": _cmd_estimate,
                "study": _cmd_study, "density": _cmd_density}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
