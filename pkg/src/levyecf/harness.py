"""Experiment runner behind the command-line interface.

Each ``render_*`` function returns the exact text of every output file
(keyed by file name) so that writing and replaying share one code path.
Replication ``i`` of a study with master seed ``s`` draws its seeds from
``numpy.random.SeedSequence(s, spawn_key=(i,))``; see :func:`replication_seeds`.
"""
from __future__ import annotations

import copy
import hashlib
import warnings
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from . import __version__
from .config import (IDENTITY_SYSTEM, config_hash, default_truth, json_text, problem_from_config,
                     read_series_csv, series_csv_text, table_csv_text)
from .estimators import estimate_dynamics, estimate_iid_known_cf, estimate_iid_simulated, estimate_joint
from .exceptions import ConfigError, LevyECFError
from .levy import NoiseModel
from .optimize import BoundaryWarning
from .systems import SystemModel, apply_filter

__all__ = [
    "replication_seeds",
    "simulate_series",
    "run_estimation",
    "render_simulate",
    "render_estimate",
    "render_montecarlo",
    "summarize",
    "MIN_COV_REPLICATIONS",
    "FAILURE_TOLERANCE",
]

MIN_COV_REPLICATIONS = 30
FAILURE_TOLERANCE = 0.05
DEFAULT_COVCHECK_TOL = 0.25

_DISPATCH = {
    "iid_known_cf": estimate_iid_known_cf,
    "iid_simulated": estimate_iid_simulated,
    "dynamics": estimate_dynamics,
    "joint": estimate_joint,
}


def replication_seeds(master: int, i: int) -> dict:
    """Seeds of replication ``i``: ``data`` generates the observations, ``simulation``
    drives the common random numbers and the optimizer's Latin hypercube."""
    words = np.random.SeedSequence(int(master), spawn_key=(int(i),)).generate_state(2, np.uint64)
    return {"data": int(words[0]), "simulation": int(words[1])}


def _is_block_method(config) -> bool:
    return config.get("estimator", {}).get("method") in ("dynamics", "joint")


def simulate_series(config: dict, seed: int, n: int | None = None) -> np.ndarray:
    """Output ``dy`` of the configured system driven by the configured noise.

    Block methods get ``n + r`` outputs so that exactly ``n`` blocks result.
    """
    noise = NoiseModel.from_dict(config["noise"])
    system = SystemModel.from_dict(config.get("system", IDENTITY_SYSTEM))
    n = int(config["n"] if n is None else n)
    if _is_block_method(config):
        n += int(config["estimator"].get("r", 2))
    warmup = config.get("warmup")
    warmup = system.default_warmup() if warmup is None else int(warmup)
    z = noise.sample(n + warmup, seed)
    return apply_filter(system, z, warmup, n)


def run_estimation(config: dict, data, seed: int):
    method, problem = problem_from_config(config, data, seed)
    return _DISPATCH[method](problem)


# single runs ---------------------------------------------------------------

def _provenance(config, seed, kind):
    return {"kind": kind, "config_hash": config_hash(config), "seed": int(seed),
            "package_version": __version__}


def render_simulate(config: dict, seed: int) -> dict:
    y = simulate_series(config, seed)
    header = _provenance(config, seed, "simulate")
    header["config"] = config
    return {"series.csv": series_csv_text(y, header)}


def render_estimate(config: dict, seed: int, data_path) -> dict:
    data_path = Path(data_path)
    if not data_path.is_file():
        raise ConfigError(f"data: file {str(data_path)!r} does not exist")
    raw = data_path.read_bytes()
    y, _ = read_series_csv(data_path)
    if config.get("center_data", False):
        y = y - y.mean()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryWarning)
        result = run_estimation(config, y, seed)
    payload = _provenance(config, seed, "estimate")
    payload.update(config=config, data_path=str(data_path.resolve()),
                   data_sha256=hashlib.sha256(raw).hexdigest(), result=result.to_dict())
    files = {"result.json": json_text(payload)}
    if result.covariance is not None:
        rows = [dict(zip(["parameter"] + list(result.param_names), [name] + [float(c) for c in row]))
                for name, row in zip(result.param_names, result.covariance)]
        header = dict(_provenance(config, seed, "estimate"), config=config,
                      data_path=payload["data_path"])
        files["covariance.csv"] = table_csv_text(rows, header)
    return files


# Monte Carlo ----------------------------------------------------------------

def _factor2_config(config):
    """Known-c.f. counterpart of a simulated-score configuration."""
    known = copy.deepcopy(config)
    est = known["estimator"]
    est["method"] = "iid_known_cf"
    est.pop("n_sim", None)
    mech = est.pop("mechanism", None)
    if mech is not None and mech["kind"] == "shift":
        est["family"] = {"kind": "shift", "rho": mech["rho"], "start": mech.get("start", 0.0)}
    elif mech is not None and mech.get("free"):
        est["free_eta"] = mech["free"]
    return known


def _replicate(config: dict, master: int, i: int, factor2: bool) -> dict:
    seeds = replication_seeds(master, i)
    row = {"replication": i, "seed_data": seeds["data"], "seed_simulation": seeds["simulation"],
           "status": "ok", "message": ""}
    out = {"row": row, "estimate": None, "covariance": None, "known": None}
    try:
        y = simulate_series(config, seeds["data"])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", BoundaryWarning)
            res = run_estimation(config, y, seeds["simulation"])
            known = run_estimation(_factor2_config(config), y, seeds["simulation"]) if factor2 else None
    except LevyECFError as exc:
        row.update(status=type(exc).__name__, message=str(exc).splitlines()[0])
        return out
    for name, value in zip(res.param_names, res.estimate):
        row[f"est_{name}"] = float(value)
    row.update(cost=float(res.cost), grad_norm=float(res.grad_norm), boundary_hit=bool(res.boundary_hit))
    if res.covariance is not None:
        for name, se in zip(res.param_names, res.standard_errors):
            row[f"se_{name}"] = float(se)
    out.update(estimate=res.estimate, covariance=res.covariance, names=list(res.param_names),
               n_obs=res.n_obs)
    if known is not None:
        for name, value in zip(known.param_names, known.estimate):
            row[f"known_{name}"] = float(value)
        out["known"] = known.estimate
    return out


def summarize(outs: list, config: dict, covariance: bool, factor2: bool, tolerance: float) -> dict:
    """Summary statistics over replications (only successes enter the moments)."""
    n_req = len(outs)
    ok = [o for o in outs if o["estimate"] is not None]
    failures = n_req - len(ok)
    summary = {
        "replications_requested": n_req,
        "replications_succeeded": len(ok),
        "replications_failed": failures,
        "failure_rate": failures / n_req if n_req else 0.0,
    }
    summary["failure_flag"] = summary["failure_rate"] > FAILURE_TOLERANCE
    if not ok:
        return summary
    est = np.array([o["estimate"] for o in ok])
    N = ok[0]["n_obs"]
    truth = default_truth(config)
    summary.update(param_names=ok[0]["names"], n_obs=N, mean=est.mean(axis=0))
    if truth is not None and len(truth) == est.shape[1]:
        summary["truth"] = truth
        summary["bias"] = est.mean(axis=0) - np.asarray(truth)
    if covariance and len(ok) >= 2:
        emp = N * np.atleast_2d(np.cov(est, rowvar=False))
        summary["scaled_covariance_empirical"] = emp
        covs = [o["covariance"] for o in ok if o["covariance"] is not None]
        if covs:
            formula = N * np.mean(covs, axis=0)
            formula = 0.5 * (formula + formula.T)
            d = np.sqrt(np.diag(formula))
            rel = np.abs(emp - formula) / np.outer(d, d)
            summary["scaled_covariance_formula"] = formula
            summary["max_relative_deviation"] = float(rel.max())
            summary["variance_ratio_empirical_to_formula"] = np.diag(emp) / np.diag(formula)
            summary["covcheck_tolerance"] = tolerance
            summary["covcheck_pass"] = bool(rel.max() <= tolerance)
    if factor2 and len(ok) >= 2:
        known = np.array([o["known"] for o in ok])
        var_sim = est.var(axis=0, ddof=1)
        var_known = known.var(axis=0, ddof=1)
        summary["factor2"] = {"variance_simulated": var_sim, "variance_known_cf": var_known,
                              "ratio": var_sim / var_known}
    return summary


def render_montecarlo(config: dict, seed: int, jobs: int = 1) -> dict:
    kind = config["kind"]
    replications = int(config.get("replications", 1))
    study = config.get("study", {})
    covariance = kind == "covcheck" or bool(study.get("covariance", False))
    factor2 = bool(study.get("factor2", False))
    if covariance and replications < MIN_COV_REPLICATIONS:
        raise ConfigError(f"replications: covariance summaries need at least {MIN_COV_REPLICATIONS} "
                          f"replications, got {replications}")
    if factor2 and config["estimator"]["method"] != "iid_simulated":
        raise ConfigError("study.factor2: only defined for estimator.method 'iid_simulated'")
    if factor2 and replications < 2:
        raise ConfigError("replications: the factor-2 study needs at least 2 replications")
    outs = Parallel(n_jobs=int(jobs))(
        delayed(_replicate)(config, seed, i, factor2) for i in range(replications))
    tolerance = float(study.get("tolerance", DEFAULT_COVCHECK_TOL))
    summary = summarize(outs, config, covariance, factor2, tolerance)
    header = _provenance(config, seed, kind)
    header["seed_schedule"] = "numpy.random.SeedSequence(seed, spawn_key=(i,)).generate_state(2, uint64)"
    header["config"] = config
    payload = dict(header, summary=summary)
    rows = [o["row"] for o in outs]
    return {"replications.csv": table_csv_text(rows, header), "summary.json": json_text(payload)}
