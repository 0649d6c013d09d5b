"""Simulation-study harness: many paths x method combos x imputation levels.

Generates observation paths, runs one chain per (path, combo, m), aggregates
acceptance rates / ESS / wall time into a summary table, and dumps long-format
point-estimate rows for violin plots, together with a JSON manifest that pins
every seed so a re-run reproduces the stochastic outputs byte for byte.
"""

from __future__ import annotations

import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace, asdict
from pathlib import Path

import numpy as np

from .diagnostics import summarize_run
from .engine import McmcConfig, MethodCombo, point_estimates, run_chain, study_combos
from .estimators import ml_estimate_gbm, map_estimate_gbm
from .io import (write_chain_csv, write_manifest, write_observations_csv,
                 write_summary_csv, write_violin_csv)
from .models import (InverseGammaPrior, NormalPrior, model_lookup)
from .schemes import generate_cir_observations, generate_gbm_observations

__all__ = ["StudyConfig", "gbm_study_config", "cir_study_config",
           "study_priors", "run_study", "SCALES"]

# (n_paths, iterations) per named scale; "full" is the production scale,
# "desk" the acceptance gate, "smoke" the CI-sized variant.
SCALES = {
    "full": (100, 100_000),
    "desk": (10, 20_000),
    "smoke": (2, 12_000),
}

DEFAULT_MASTER_SEED = 20260819


@dataclass(frozen=True)
class StudyConfig:
    model: str
    theta_true: tuple
    x0: float
    n_paths: int
    n_obs: int
    horizon: float
    combos: tuple
    m_values: tuple
    mcmc: McmcConfig          # template; m is overridden per chain
    out_dir: str
    master_seed: int
    fine_dt: float = 1e-4    # data-generation step for models without exact law
    write_chains: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("need n_paths >= 1")
        if any(m < 1 for m in self.m_values):
            raise ValueError("all m values must be >= 1")
        if self.model not in ("gbm", "cir"):
            raise ValueError("model must be 'gbm' or 'cir'")
        combos = tuple(c if isinstance(c, MethodCombo) else MethodCombo(*c)
                       for c in self.combos)
        object.__setattr__(self, "combos", combos)


def study_priors(model_name: str):
    """The study's fixed priors; None marks a parameter held at its true value."""
    if model_name == "gbm":
        return (NormalPrior(0.0, 10.0), InverseGammaPrior(2.0, 2.0))
    if model_name == "cir":
        return (None, InverseGammaPrior(3.0, 3.0), InverseGammaPrior(3.0, 4.0))
    raise ValueError(f"unknown model '{model_name}'")


def _merge_mcmc(template: McmcConfig, overrides: dict) -> dict:
    """Allow mcmc overrides as a plain dict merged into the model template."""
    mc = overrides.get("mcmc")
    if isinstance(mc, dict):
        overrides = dict(overrides)
        overrides["mcmc"] = replace(template, **mc)
    return overrides


def gbm_study_config(scale="desk", out_dir="study_gbm",
                     master_seed=DEFAULT_MASTER_SEED, **overrides) -> StudyConfig:
    n_paths, iters = SCALES[scale]
    mcmc = McmcConfig(iterations=iters, m=2, burn_in_fraction=0.1, lam=5.0,
                      rw_variances=(0.25, 0.25), theta_init=(1.0, 2.0))
    cfg = StudyConfig(model="gbm", theta_true=(1.0, 2.0), x0=100.0,
                      n_paths=n_paths, n_obs=50, horizon=1.0,
                      combos=tuple(study_combos()), m_values=(1, 2, 5),
                      mcmc=mcmc, out_dir=out_dir, master_seed=master_seed)
    overrides = _merge_mcmc(mcmc, overrides)
    return replace(cfg, **overrides) if overrides else cfg


def cir_study_config(scale="desk", out_dir="study_cir",
                     master_seed=DEFAULT_MASTER_SEED, **overrides) -> StudyConfig:
    n_paths, iters = SCALES[scale]
    mcmc = McmcConfig(iterations=iters, m=2, burn_in_fraction=0.1, lam=5.0,
                      rw_variances=(float("nan"), 0.25, 0.25),
                      theta_init=(1.0, 1.0, 0.25))
    cfg = StudyConfig(model="cir", theta_true=(1.0, 1.0, 0.25), x0=3.0,
                      n_paths=n_paths, n_obs=50, horizon=1.0,
                      combos=tuple(study_combos()), m_values=(2, 5),
                      mcmc=mcmc, out_dir=out_dir, master_seed=master_seed,
                      fine_dt=1e-6 if scale == "full" else 1e-4)
    overrides = _merge_mcmc(mcmc, overrides)
    return replace(cfg, **overrides) if overrides else cfg


def _generate_observations(config: StudyConfig, path_id: int):
    seed = np.random.SeedSequence((config.master_seed, path_id, 0, 0))
    if config.model == "gbm":
        return generate_gbm_observations(config.theta_true, config.x0,
                                         config.n_obs, config.horizon, seed)
    return generate_cir_observations(config.theta_true, config.x0,
                                     config.n_obs, config.horizon, seed,
                                     fine_dt=config.fine_dt)


def _run_one(task):
    """One chain; top-level so a process pool can ship it."""
    combo, model_name, priors, obs, mcmc, entropy = task
    model = model_lookup(model_name)
    return run_chain(combo, model, priors, obs, mcmc, seed_entropy=entropy)


def _versions() -> dict:
    import numba
    import scipy

    from . import __version__

    return {
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "sdemcmc": __version__,
    }


def run_study(config: StudyConfig) -> Path:
    """Run the full sweep and write summary/violin/data CSVs plus a manifest.

    Individual chain failures are recorded in the manifest and the study
    continues; every surviving estimate row keeps its path id, combo and m.
    """
    out = Path(config.out_dir)
    (out / "data").mkdir(parents=True, exist_ok=True)
    if config.write_chains:
        (out / "chains").mkdir(exist_ok=True)
    model = model_lookup(config.model)
    priors = study_priors(config.model)

    observations = {}
    reference = {}
    for pid in range(config.n_paths):
        obs = _generate_observations(config, pid)
        observations[pid] = obs
        write_observations_csv(out / "data" / f"path_{pid:03d}.csv", obs)
        if config.model == "gbm":
            reference[pid] = {"ml": ml_estimate_gbm(obs),
                              "map": map_estimate_gbm(obs, priors)}

    tasks = []
    for pid in range(config.n_paths):
        for ci, combo in enumerate(config.combos):
            for m in config.m_values:
                mcmc = replace(config.mcmc, m=m)
                entropy = (config.master_seed, pid, m)
                tasks.append(((pid, ci, m),
                              (combo, config.model, priors,
                               observations[pid], mcmc, entropy)))

    chains = {}
    failures = []
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = {key: pool.submit(_run_one, t) for key, t in tasks}
        for key, fut in futures.items():
            exc = fut.exception()
            if exc is not None:
                failures.append(_failure_record(config, key, exc))
            else:
                chains[key] = fut.result()
    else:
        for key, t in tasks:
            try:
                chains[key] = _run_one(t)
            except Exception as exc:  # chain-level fault isolation
                failures.append(_failure_record(config, key, exc))

    ordered_keys = sorted(chains)
    ordered = [chains[k] for k in ordered_keys]
    rows = summarize_run(ordered, config.mcmc.burn_in_fraction) \
        if len(ordered) >= 2 else []
    write_summary_csv(out / "summary.csv", rows)

    violin = []
    chain_records = []
    for key in ordered_keys:
        pid, ci, m = key
        ch = chains[key]
        mean, mode = point_estimates(ch, config.mcmc.burn_in_fraction)
        for j, name in enumerate(ch.theta_names):
            violin.append(("posterior_mean", ch.combo.label, m, pid, name,
                           mean[j]))
            violin.append(("posterior_mode", ch.combo.label, m, pid, name,
                           mode[j]))
        rec = ch.summary_dict()
        rec["path_id"] = pid
        chain_records.append(rec)
        if config.write_chains:
            label = ch.combo.label.replace("/", "-")
            write_chain_csv(out / "chains" / f"path{pid:03d}_{label}_m{m}.csv",
                            ch)
    if config.model == "gbm":
        names = model.param_names
        for pid in sorted(reference):
            for est in ("ml", "map"):
                vals = reference[pid][est]
                for name, v in zip(names, vals):
                    violin.append((est, "exact", 0, pid, name, v))
    write_violin_csv(out / "violin.csv", violin)

    totals = {}
    for ch in ordered:
        for k, v in ch.counters.items():
            totals[k] = totals.get(k, 0) + v

    manifest = {
        "master_seed": config.master_seed,
        "model": config.model,
        "config": _config_echo(config),
        "data_seeds": {str(pid): [config.master_seed, pid, 0, 0]
                       for pid in range(config.n_paths)},
        "data_info": {str(pid): _jsonable(observations[pid].seed_info)
                      for pid in range(config.n_paths)},
        "chains": chain_records,
        "counter_totals": totals,
        "failures": failures,
        "versions": _versions(),
    }
    write_manifest(out / "manifest.json", manifest)
    return out


def _failure_record(config, key, exc):
    pid, ci, m = key
    return {"path_id": pid, "combo": config.combos[ci].label, "m": m,
            "error": f"{type(exc).__name__}: {exc}"}


def _config_echo(config: StudyConfig) -> dict:
    d = asdict(config)
    d["combos"] = [c.label for c in config.combos]
    d["mcmc"] = {k: _jsonable(v) for k, v in asdict(config.mcmc).items()}
    d["m_values"] = list(config.m_values)
    d["theta_true"] = list(config.theta_true)
    return {k: _jsonable(v) for k, v in d.items()}


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, float) and math.isnan(v):
        return "nan"
    return v
