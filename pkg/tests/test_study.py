"""End-to-end checks of the study harness on miniature runs."""

import json
import math

import numpy as np
import pytest

from sdemcmc import io
from sdemcmc.engine import MethodCombo
from sdemcmc.study import (StudyConfig, cir_study_config, gbm_study_config,
                           run_study, study_priors)

MB_EUL = MethodCombo("mb", "euler", "euler")
LC_EUL = MethodCombo("lc", "euler", "euler")
MB_MIL = MethodCombo("mb", "milstein", "milstein")


def _micro_gbm(out_dir, **kw):
    base = dict(combos=(LC_EUL, MB_EUL), m_values=(2,), n_paths=2,
                mcmc={"iterations": 200}, out_dir=str(out_dir))
    base.update(kw)
    return gbm_study_config(scale="smoke", **base)


def test_micro_study_outputs(tmp_path):
    out = run_study(_micro_gbm(tmp_path / "s"))
    assert (out / "summary.csv").exists()
    assert (out / "violin.csv").exists()
    assert (out / "manifest.json").exists()
    assert (out / "data" / "path_000.csv").exists()
    assert (out / "data" / "path_001.csv").exists()
    assert not (out / "chains").exists()

    rows = io.read_summary_csv(out / "summary.csv")
    assert len(rows) == 2                       # one row per (combo, m)
    keys = {(r["proposal_method"], r["proposal_density"],
             r["likelihood_density"], r["m"]) for r in rows}
    assert keys == {("lc", "euler", "euler", 2), ("mb", "euler", "euler", 2)}
    for r in rows:
        assert 0.0 < r["param_acc_mean"] < 1.0
        assert 0.0 < r["path_acc_mean"] <= 1.0
        assert r["ess_mean"] > 0.0
        assert r["time_mean_s"] > 0.0

    man = io.read_manifest(out / "manifest.json")
    assert man["model"] == "gbm"
    assert man["failures"] == []
    assert len(man["chains"]) == 4              # 2 paths x 2 combos x 1 m
    assert set(man["counter_totals"]) == {"fallback_empty", "fallback_cap",
                                          "redraw_nonpositive"}
    assert man["config"]["n_paths"] == 2
    assert man["versions"]["numpy"] == np.__version__


def test_violin_contains_mcmc_and_reference_rows(tmp_path):
    out = run_study(_micro_gbm(tmp_path / "s"))
    lines = (out / "violin.csv").read_text().splitlines()
    assert lines[0] == "estimator,combo,m,path_id,parameter,value"
    recs = [ln.split(",") for ln in lines[1:]]
    estimators = {r[0] for r in recs}
    assert estimators == {"posterior_mean", "posterior_mode", "ml", "map"}
    ml_rows = [r for r in recs if r[0] == "ml"]
    # one ml row per (path, parameter), tagged combo="exact", m=0
    assert len(ml_rows) == 2 * 2
    assert all(r[1] == "exact" and r[2] == "0" for r in ml_rows)
    mean_rows = [r for r in recs if r[0] == "posterior_mean"]
    assert len(mean_rows) == 4 * 2              # chains x parameters
    assert {r[4] for r in recs} == {"alpha", "sigma2"}
    # values parse as finite floats
    assert all(math.isfinite(float(r[5])) for r in recs)


def test_write_chains_flag(tmp_path):
    out = run_study(_micro_gbm(tmp_path / "s", combos=(MB_EUL,),
                               write_chains=True))
    files = sorted(p.name for p in (out / "chains").iterdir())
    assert files == ["path000_mb-eul-eul_m2.csv", "path001_mb-eul-eul_m2.csv"]
    names, samples, _ = io.read_chain_csv(out / "chains" / files[0])
    assert samples.shape == (200, 2)


def _strip_times(manifest: dict) -> dict:
    man = json.loads(json.dumps(manifest))
    for rec in man["chains"]:
        rec.pop("wall_time_s")
    return man


def test_rerun_is_reproducible(tmp_path):
    out1 = run_study(_micro_gbm(tmp_path / "a"))
    out2 = run_study(_micro_gbm(tmp_path / "b"))

    for name in ("data/path_000.csv", "data/path_001.csv", "violin.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name

    r1 = io.read_summary_csv(out1 / "summary.csv")
    r2 = io.read_summary_csv(out2 / "summary.csv")
    for a, b in zip(r1, r2):
        for k in ("time_mean_s", "time_sd_s"):
            a.pop(k), b.pop(k)
        assert a == b

    m1 = _strip_times(io.read_manifest(out1 / "manifest.json"))
    m2 = _strip_times(io.read_manifest(out2 / "manifest.json"))
    m1["config"].pop("out_dir"), m2["config"].pop("out_dir")
    assert m1 == m2


def test_cir_micro_study(tmp_path):
    cfg = cir_study_config(scale="smoke", combos=(MB_MIL,), m_values=(2,),
                           n_paths=2, mcmc={"iterations": 250},
                           out_dir=str(tmp_path / "cir"))
    out = run_study(cfg)
    man = io.read_manifest(out / "manifest.json")
    assert man["failures"] == []
    # degenerate-ratio combo: every path update accepted exactly
    for rec in man["chains"]:
        assert rec["combo"] == "mb/mil/mil"
        assert rec["path_accept_rate"] == 1.0
        assert rec["path_logratio_max"] == 0.0
    lines = (out / "violin.csv").read_text().splitlines()[1:]
    params = {ln.split(",")[4] for ln in lines}
    assert params == {"alpha", "beta", "sigma2"}
    # no closed-form reference estimators for this model
    assert {ln.split(",")[0] for ln in lines} == {"posterior_mean",
                                                  "posterior_mode"}
    # alpha held fixed at its true value by the NaN random-walk entry
    alpha_rows = [ln for ln in lines if ln.split(",")[4] == "alpha"]
    assert all(float(ln.split(",")[5]) == 1.0 for ln in alpha_rows)


def test_chain_failure_is_recorded_and_study_continues(tmp_path, monkeypatch):
    import sdemcmc.study as study_mod
    real = study_mod.run_chain

    def flaky(combo, model, priors, obs, config, seed_entropy=None):
        if combo.proposal_method == "lc":
            raise RuntimeError("synthetic fault")
        return real(combo, model, priors, obs, config,
                    seed_entropy=seed_entropy)

    monkeypatch.setattr(study_mod, "run_chain", flaky)
    out = run_study(_micro_gbm(tmp_path / "s"))
    man = io.read_manifest(out / "manifest.json")
    assert len(man["failures"]) == 2
    for f in man["failures"]:
        assert f["combo"] == "lc/eul/eul"
        assert f["m"] == 2
        assert f["path_id"] in (0, 1)
        assert "synthetic fault" in f["error"]
    assert len(man["chains"]) == 2              # the mb chains survived
    rows = io.read_summary_csv(out / "summary.csv")
    assert len(rows) == 1 and rows[0]["proposal_method"] == "mb"


def test_parallel_workers_match_sequential(tmp_path):
    cfg_seq = _micro_gbm(tmp_path / "seq", combos=(MB_EUL,),
                         mcmc={"iterations": 150})
    cfg_par = _micro_gbm(tmp_path / "par", combos=(MB_EUL,),
                         mcmc={"iterations": 150}, workers=2)
    out1 = run_study(cfg_seq)
    out2 = run_study(cfg_par)
    assert ((out1 / "violin.csv").read_bytes()
            == (out2 / "violin.csv").read_bytes())
    r1 = io.read_summary_csv(out1 / "summary.csv")
    r2 = io.read_summary_csv(out2 / "summary.csv")
    for a, b in zip(r1, r2):
        for k in ("time_mean_s", "time_sd_s"):
            a.pop(k), b.pop(k)
        assert a == b


def test_config_validation():
    with pytest.raises(ValueError):
        gbm_study_config(scale="smoke", n_paths=0)
    with pytest.raises(ValueError):
        gbm_study_config(scale="smoke", m_values=(0, 2))
    with pytest.raises(KeyError):
        gbm_study_config(scale="galactic")
    cfg = gbm_study_config(scale="smoke",
                           combos=(("mb", "euler", "milstein"),))
    assert cfg.combos == (MethodCombo("mb", "euler", "milstein"),)


def test_study_priors_layout():
    gp = study_priors("gbm")
    assert len(gp) == 2 and gp[0].mean == 0.0 and gp[1].shape == 2.0
    cp = study_priors("cir")
    assert cp[0] is None and cp[1].shape == 3.0 and cp[2].scale == 4.0
    with pytest.raises(ValueError):
        study_priors("heston")


def test_scale_table():
    assert gbm_study_config(scale="desk").n_paths == 10
    assert gbm_study_config(scale="desk").mcmc.iterations == 20000
    assert cir_study_config(scale="full").fine_dt == 1e-6
    assert cir_study_config(scale="smoke").fine_dt == 1e-4
