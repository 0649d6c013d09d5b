"""CSV and manifest writers/readers for the study artifacts.

All floating-point values are written with %.17g so a round-trip through text
is exact in double precision and re-runs diff cleanly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .schemes import Observations

__all__ = [
    "fmt",
    "write_observations_csv",
    "read_observations_csv",
    "write_chain_csv",
    "read_chain_csv",
    "write_summary_csv",
    "read_summary_csv",
    "write_violin_csv",
    "write_manifest",
    "read_manifest",
]

SUMMARY_COLUMNS = ("proposal_method", "proposal_density", "likelihood_density",
                   "m", "ess_mean", "ess_sd", "param_acc_mean", "param_acc_sd",
                   "path_acc_mean", "path_acc_sd", "time_mean_s", "time_sd_s")

VIOLIN_COLUMNS = ("estimator", "combo", "m", "path_id", "parameter", "value")


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def write_observations_csv(path, obs: Observations):
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(("time", "value"))
        for t, v in zip(obs.times, obs.values):
            w.writerow((fmt(t), fmt(v)))


def read_observations_csv(path, model_name="", theta_true=()) -> Observations:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Observations(data[:, 0], data[:, 1], model_name,
                        np.asarray(theta_true, dtype=float),
                        {"source": str(path)})


def _chain_param_order(theta_names):
    """CSV parameter order: alpha, sigma2, then anything else (e.g. beta)."""
    names = list(theta_names)
    lead = [n for n in ("alpha", "sigma2") if n in names]
    rest = [n for n in names if n not in lead]
    return lead + rest


def write_chain_csv(path, chain):
    order = _chain_param_order(chain.theta_names)
    cols = [chain.theta_names.index(n) for n in order]
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["iteration"] + order + ["log_posterior"])
        for i in range(chain.samples.shape[0]):
            row = [str(i + 1)]
            row += [fmt(chain.samples[i, c]) for c in cols]
            row.append(fmt(chain.log_posterior[i]))
            w.writerow(row)


def read_chain_csv(path):
    """Returns (param_names, samples, log_posterior) in the CSV column order."""
    with open(path, newline="") as fh:
        header = fh.readline().strip().split(",")
    names = header[1:-1]
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return names, data[:, 1:-1], data[:, -1]


def write_summary_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow((r.proposal_method, r.proposal_density,
                        r.likelihood_density, str(r.m),
                        fmt(r.ess_mean), fmt(r.ess_sd),
                        fmt(r.param_acc_mean), fmt(r.param_acc_sd),
                        fmt(r.path_acc_mean), fmt(r.path_acc_sd),
                        fmt(r.time_mean_s), fmt(r.time_sd_s)))


def read_summary_csv(path):
    """Summary rows as a list of dicts with typed values."""
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            row = dict(rec)
            row["m"] = int(row["m"])
            for k in SUMMARY_COLUMNS[4:]:
                row[k] = float(row[k])
            out.append(row)
    return out


def write_violin_csv(path, rows):
    """rows: iterables (estimator, combo, m, path_id, parameter, value)."""
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(VIOLIN_COLUMNS)
        for est, combo, m, pid, param, value in rows:
            w.writerow((est, combo, str(m), str(pid), param, fmt(value)))


def write_manifest(path, manifest: dict):
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
