"""Experiment configuration: JSON schema validation, hashing and file I/O.

A configuration is a plain JSON object (see ``docs/config.schema.json``
and ``docs/config.md``). Every output file carries the configuration hash
and the seeds it consumed so that ``replay`` can reproduce it.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .core import UGrid, WeightMatrix
from .estimators import EstimationProblem
from .exceptions import ConfigError
from .levy import NoiseModel
from .mechanisms import ShiftFamily, mechanism_from_dict
from .systems import SystemModel

__all__ = [
    "load_schema",
    "validate_config",
    "load_config",
    "config_hash",
    "problem_from_config",
    "default_truth",
    "canonical_json",
    "json_text",
    "write_json",
    "write_text",
    "read_json",
    "series_csv_text",
    "write_series_csv",
    "read_series_csv",
    "read_csv_header",
    "table_csv_text",
    "IDENTITY_SYSTEM",
]

SCHEMA_VERSION = 1
IDENTITY_SYSTEM = {"structure": "ma", "theta": []}


def load_schema() -> dict:
    text = resources.files("levyecf").joinpath("data/config.schema.json").read_text()
    return json.loads(text)


def _field_path(error) -> str:
    parts = [str(p) for p in error.absolute_path]
    return ".".join(parts) if parts else "<root>"


def validate_config(config) -> dict:
    """Check ``config`` against the schema; all violations are reported at once."""
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(config), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{_field_path(e)}: {e.message}" for e in errors]
        raise ConfigError("invalid config:\n  " + "\n  ".join(lines))
    kind = config["kind"]
    if kind in ("estimate", "montecarlo", "covcheck") and "estimator" not in config:
        raise ConfigError(f"estimator: required for kind {kind!r}")
    if kind == "estimate" and "data" not in config:
        raise ConfigError("data: required for kind 'estimate' (path to a series CSV)")
    if kind in ("simulate", "montecarlo", "covcheck") and "n" not in config:
        raise ConfigError(f"n: required for kind {kind!r}")
    # semantic checks of the nested models give their own field-level messages
    NoiseModel.from_dict(config["noise"])
    SystemModel.from_dict(config.get("system", IDENTITY_SYSTEM))
    return config


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {str(path)!r}: {exc.strerror}") from exc
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {str(path)!r} is not valid JSON: {exc}") from exc
    return validate_config(config)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


# problems -----------------------------------------------------------------

def _iid_truth(config, est):
    noise = NoiseModel.from_dict(config["noise"])
    method = est["method"]
    if method == "iid_known_cf" and "family" in est:
        return None
    if method == "iid_simulated" and est.get("mechanism", {}).get("kind") == "shift":
        return None
    names = est.get("free_eta") or (est.get("mechanism", {}).get("free") if method == "iid_simulated" else None)
    names = names or list(noise.param_names)
    return [float(getattr(noise, n)) for n in names]


def default_truth(config: dict):
    """True free-parameter values implied by the config (``None`` if not derivable)."""
    if "truth" in config:
        return list(config["truth"])
    est = config.get("estimator")
    if est is None:
        return None
    method = est["method"]
    if method in ("iid_known_cf", "iid_simulated"):
        return _iid_truth(config, est)
    theta = list(config.get("system", IDENTITY_SYSTEM)["theta"])
    free_theta = est.get("free_theta", list(range(len(theta))))
    out = [float(theta[i]) for i in free_theta]
    if method == "joint":
        noise = NoiseModel.from_dict(config["noise"])
        names = est.get("free_eta") or list(noise.param_names)
        out += [float(getattr(noise, n)) for n in names]
    return out


def problem_from_config(config: dict, data, seed: int, optimizer_seed: int | None = None):
    """``(method, EstimationProblem)`` for one estimation run on ``data``."""
    est = config["estimator"]
    method = est["method"]
    noise = NoiseModel.from_dict(config["noise"])
    system = SystemModel.from_dict(config.get("system", IDENTITY_SYSTEM))
    grid = UGrid.from_dict(est["grid"]) if "grid" in est else None
    K = None
    if "K" in est:
        K = np.asarray(est["K"]["real"], dtype=float)
        if "imag" in est["K"]:
            K = K + 1j * np.asarray(est["K"]["imag"], dtype=float)
        K = WeightMatrix(K)
    kwargs = dict(
        data=data, grid=grid, weighting=est.get("weighting", "two-stage"), K=K,
        bounds=est.get("bounds"), start=est.get("start"), n_sim=est.get("n_sim"),
        seed=seed, optimizer_seed=seed if optimizer_seed is None else optimizer_seed,
        n_starts=est.get("n_starts", 5), grid_size=est.get("grid_size"),
        grid_seed=(grid.seed or 0) if grid is not None else 0,
    )
    if method == "iid_known_cf":
        family = None
        if "family" in est:
            family = ShiftFamily(NoiseModel.from_dict(est["family"]["rho"]), est["family"].get("start", 0.0))
        problem = EstimationProblem(noise=noise, free_eta=est.get("free_eta"), family=family, **kwargs)
    elif method == "iid_simulated":
        if "mechanism" in est:
            mechanism = mechanism_from_dict(est["mechanism"])
        else:
            mechanism = mechanism_from_dict({"kind": "noise", "rho": config["noise"],
                                             "free": est.get("free_eta")})
        problem = EstimationProblem(noise=noise, mechanism=mechanism, **kwargs)
    elif method in ("dynamics", "joint"):
        problem = EstimationProblem(
            noise=noise, system=system, free_theta=est.get("free_theta"),
            free_eta=est.get("free_eta") if method == "joint" else None,
            r=est.get("r", 2), warmup=est.get("warmup"), **kwargs)
    else:  # pragma: no cover - the schema rejects other methods
        raise ConfigError(f"estimator.method: unknown method {method!r}")
    return method, problem


# files --------------------------------------------------------------------

def _atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None if np.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj):
    _atomic_write(path, json_text(obj))


def write_text(path, text: str):
    _atomic_write(path, text)


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {str(path)!r}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{str(path)!r} is not valid JSON: {exc}") from exc


def _header_lines(header: dict) -> str:
    return "".join(f"# {k}: {canonical_json(_jsonable(v))}\n" for k, v in header.items())


def series_csv_text(series, header: dict) -> str:
    """One-column CSV (``dy``) preceded by ``# key: value`` provenance lines."""
    buf = io.StringIO()
    buf.write(_header_lines(header))
    buf.write("dy\n")
    for v in np.asarray(series, dtype=float):
        buf.write(repr(float(v)) + "\n")
    return buf.getvalue()


def write_series_csv(path, series, header: dict):
    _atomic_write(path, series_csv_text(series, header))


def read_csv_header(path) -> dict:
    """The ``# key: value`` provenance lines of a CSV written by this package."""
    header = {}
    try:
        with open(path) as fh:
            for line in fh:
                if not line.startswith("#"):
                    break
                key, _, value = line[1:].partition(":")
                try:
                    header[key.strip()] = json.loads(value)
                except json.JSONDecodeError:
                    header[key.strip()] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read {str(path)!r}: {exc.strerror}") from exc
    return header


def read_series_csv(path):
    """``(series, header)`` from a file written by :func:`write_series_csv`."""
    header = read_csv_header(path)
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read data file {str(path)!r}: {exc.strerror}") from exc
    values = []
    for line in lines:
        if line.startswith("#") or not line.strip() or line.strip() == "dy":
            continue
        try:
            values.append(float(line.split(",")[0]))
        except ValueError as exc:
            raise ConfigError(f"data file {str(path)!r}: bad value {line!r}") from exc
    if not values:
        raise ConfigError(f"data file {str(path)!r} contains no observations")
    return np.array(values), header


def table_csv_text(rows: list, header: dict) -> str:
    buf = io.StringIO()
    buf.write(_header_lines(header))
    fields = []
    for row in rows:
        fields.extend(k for k in row if k not in fields)
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()
