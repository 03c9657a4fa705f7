"""Run configurations: TOML with one ``[model]`` table, optional ``[grid]``,
``[tolerances]``, ``[analysis]`` and ``[sweep]`` tables."""
from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .count_engine import MODELS


class ConfigError(ValueError):
    pass


# model -> (parameter defaults, required parameters)
_PARAMS: Dict[str, Dict[str, Any]] = {
    "nls": {"sigma": None, "omega": None},
    "dnls": {"eps": None, "pattern": None, "omega": 1.0, "sites": 41},
    "vortex": {"m": 1, "omega": None, "modes": [0, 1, 2]},
    "kdv": {"a1": 0.0, "a2": 0.0, "a3": None, "b1": 0.0, "b2": 0.0, "b3": 0.0, "c": None},
    "synthetic": {"pencil": None, "A": None, "K": None, "omega_plus": 1e6, "omega_minus": 1.0},
}

_GRID: Dict[str, Dict[str, Any]] = {
    "nls": {"n_points": 512, "L": None},
    "dnls": {},
    "vortex": {"n_points": 400, "r_max": 45.0},
    "kdv": {"n_points": 256, "L": 30.0},
    "synthetic": {},
}

# kernel tolerances are relative to the operator norm; the vortex L- has a
# discretized translation eigenvalue near 3e-9 relative
_TOL: Dict[str, Dict[str, float]] = {
    "nls": {"cluster": 1e-7, "kernel": 1e-10, "zero": 1e-6, "inertia": 1e-9},
    "dnls": {"cluster": 1e-7, "kernel": 1e-10, "zero": 1e-8, "inertia": 1e-9},
    "vortex": {"cluster": 1e-7, "kernel": 1e-8, "zero": 1e-6, "inertia": 1e-9},
    "kdv": {"cluster": 1e-7, "kernel": 1e-10, "zero": 1e-6, "inertia": 1e-9},
    "synthetic": {"cluster": 1e-7, "kernel": 1e-10, "zero": 1e-10, "inertia": 1e-9},
}

ENV_PREFIX = "KC_"


@dataclass
class RunConfig:
    model: str
    params: Dict[str, Any]
    grid: Dict[str, Any]
    tolerances: Dict[str, float]
    delta: Optional[float] = None
    seed: int = 0
    sweep: Optional[Dict[str, Any]] = None
    source: Optional[str] = None

    def as_dict(self) -> Dict[str, Any]:
        return {
            "model": self.model,
            "params": _plain(self.params),
            "grid": _plain(self.grid),
            "tolerances": dict(self.tolerances),
            "delta": self.delta,
            "seed": self.seed,
            "sweep": _plain(self.sweep) if self.sweep else None,
            "source": self.source,
        }

    def with_param(self, name: str, value: Any) -> "RunConfig":
        params, grid = dict(self.params), dict(self.grid)
        if name in params:
            params[name] = value
        elif name in grid:
            grid[name] = value
        else:
            raise ConfigError(f"sweep parameter {name!r} is not a parameter of model {self.model!r}")
        cfg = replace(self, params=params, grid=grid, sweep=None)
        validate(cfg)
        return cfg


def _plain(d):
    if d is None:
        return None
    out = {}
    for k, v in d.items():
        if isinstance(v, np.ndarray):
            v = v.tolist()
        out[k] = v
    return out


def _number(cfg: RunConfig, key: str, positive: bool = True) -> float:
    v = cfg.params[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{cfg.model}.{key} must be a number, got {v!r}")
    if positive and v <= 0:
        raise ConfigError(f"{cfg.model}.{key} must be positive, got {v!r}")
    return float(v)


def validate(cfg: RunConfig) -> None:
    """Model-specific schema checks; raises ConfigError."""
    m, P, G = cfg.model, cfg.params, cfg.grid
    if m == "nls":
        s = P["sigma"]
        if isinstance(s, bool) or not isinstance(s, int) or s < 1:
            raise ConfigError(f"nls.sigma must be a positive integer, got {s!r}")
        _number(cfg, "omega")
    elif m == "dnls":
        _number(cfg, "eps")
        _number(cfg, "omega")
        pat = P["pattern"]
        if not isinstance(pat, list) or not pat or any(v not in (1, -1) for v in pat):
            raise ConfigError("dnls.pattern must be a nonempty list of +1/-1 amplitudes")
        if not isinstance(P["sites"], int) or P["sites"] < len(pat) + 2:
            raise ConfigError("dnls.sites must be an integer exceeding the pattern length")
    elif m == "vortex":
        if not isinstance(P["m"], int) or P["m"] < 1:
            raise ConfigError("vortex.m must be a positive integer")
        w = _number(cfg, "omega")
        if w >= 3.0 / 16.0:
            raise ConfigError("vortex.omega must lie in (0, 3/16) for the cubic-quintic nonlinearity")
        modes = P["modes"]
        if not isinstance(modes, list) or not modes or any(
                not isinstance(n, int) or n < 0 for n in modes):
            raise ConfigError("vortex.modes must be a nonempty list of nonnegative integers")
    elif m == "kdv":
        for k in ("a1", "a2", "b1", "b2", "b3"):
            _number(cfg, k, positive=False)
        _number(cfg, "a3")
        _number(cfg, "c")
    elif m == "synthetic":
        if P["pencil"] is None and (P["A"] is None or P["K"] is None):
            raise ConfigError("synthetic needs either 'pencil' (an .npz path) or inline 'A' and 'K'")
        if P["pencil"] is None:
            A, K = np.asarray(P["A"], float), np.asarray(P["K"], float)
            if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape != K.shape:
                raise ConfigError("synthetic A and K must be square matrices of equal size")
    if "n_points" in G and G["n_points"] is not None:
        if not isinstance(G["n_points"], int) or G["n_points"] < 16:
            raise ConfigError("grid.n_points must be an integer >= 16")
    for k in ("L", "r_max"):
        if G.get(k) is not None and (not isinstance(G[k], (int, float)) or G[k] <= 0):
            raise ConfigError(f"grid.{k} must be positive")
    for k, v in cfg.tolerances.items():
        if not isinstance(v, (int, float)) or v <= 0:
            raise ConfigError(f"tolerances.{k} must be positive")
    if cfg.delta is not None and (not isinstance(cfg.delta, (int, float)) or cfg.delta <= 0):
        raise ConfigError("analysis.delta must be positive")
    if cfg.sweep is not None:
        _sweep_values(cfg)


def _sweep_values(cfg: RunConfig) -> List[float]:
    sw = cfg.sweep
    if "parameter" not in sw:
        raise ConfigError("[sweep] needs 'parameter'")
    name = sw["parameter"]
    if name not in cfg.params and name not in cfg.grid:
        raise ConfigError(f"sweep parameter {name!r} is not a parameter of model {cfg.model!r}")
    if "values" in sw:
        vals = list(sw["values"])
    elif {"start", "stop", "num"} <= set(sw):
        if not isinstance(sw["num"], int) or sw["num"] < 0:
            raise ConfigError("[sweep] num must be a nonnegative integer")
        vals = [round(float(v), 12) for v in np.linspace(float(sw["start"]), float(sw["stop"]), sw["num"])]
    else:
        raise ConfigError("[sweep] needs 'values' or 'start', 'stop', 'num'")
    if not vals:
        raise ConfigError("sweep range is empty")
    return [float(v) if not isinstance(v, int) else v for v in vals]


def sweep_values(cfg: RunConfig) -> List[float]:
    if cfg.sweep is None:
        raise ConfigError("config has no [sweep] table")
    return _sweep_values(cfg)


def _merge(defaults: Dict[str, Any], given: Dict[str, Any], where: str) -> Dict[str, Any]:
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in [{where}]: {sorted(unknown)}")
    out = dict(defaults)
    out.update(given)
    missing = [k for k, v in out.items() if v is None and where == "model"
               and k not in ("pencil", "A", "K")]
    if missing:
        raise ConfigError(f"missing required keys in [model]: {missing}")
    return out


def from_dict(doc: Dict[str, Any], source: Optional[str] = None) -> RunConfig:
    known = {"model", "grid", "tolerances", "analysis", "sweep"}
    extra = set(doc) - known
    if extra:
        raise ConfigError(f"unknown tables: {sorted(extra)}")
    if "model" not in doc or not isinstance(doc["model"], dict):
        raise ConfigError("config needs a [model] table")
    model_tbl = dict(doc["model"])
    name = model_tbl.pop("name", None)
    if name not in MODELS:
        raise ConfigError(f"model.name must be one of {MODELS}, got {name!r}")
    params = _merge(_PARAMS[name], model_tbl, "model")
    grid = _merge(_GRID[name], dict(doc.get("grid", {})), "grid")
    tol = _merge(_TOL[name], dict(doc.get("tolerances", {})), "tolerances")
    ana = dict(doc.get("analysis", {}))
    unknown = set(ana) - {"delta", "seed"}
    if unknown:
        raise ConfigError(f"unknown keys in [analysis]: {sorted(unknown)}")
    cfg = RunConfig(model=name, params=params, grid=grid, tolerances=tol,
                    delta=ana.get("delta"), seed=int(ana.get("seed", 0)),
                    sweep=dict(doc["sweep"]) if "sweep" in doc else None, source=source)
    if cfg.model == "synthetic" and cfg.params["pencil"] is not None and source is not None:
        path = Path(cfg.params["pencil"])
        if not path.is_absolute():
            cfg.params["pencil"] = str(Path(source).parent / path)
    validate(cfg)
    return cfg


def load(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML in {path}: {exc}")
    return from_dict(doc, source=str(path))


def apply_overrides(cfg: RunConfig, tol_cluster: Optional[float] = None,
                    tol_kernel: Optional[float] = None, delta: Optional[float] = None,
                    env: Optional[Dict[str, str]] = None) -> RunConfig:
    """Command-line flags take precedence over ``KC_*`` environment variables,
    which take precedence over the file."""
    env = os.environ if env is None else env
    tol = dict(cfg.tolerances)

    def pick(flag, key):
        if flag is not None:
            return float(flag)
        if ENV_PREFIX + key in env:
            try:
                return float(env[ENV_PREFIX + key])
            except ValueError:
                raise ConfigError(f"{ENV_PREFIX + key} is not a number: {env[ENV_PREFIX + key]!r}")
        return None

    v = pick(tol_cluster, "TOL_CLUSTER")
    if v is not None:
        tol["cluster"] = v
    v = pick(tol_kernel, "TOL_KERNEL")
    if v is not None:
        tol["kernel"] = v
    v = pick(None, "TOL_ZERO")
    if v is not None:
        tol["zero"] = v
    d = pick(delta, "DELTA")
    out = replace(cfg, tolerances=tol, delta=d if d is not None else cfg.delta)
    validate(out)
    return out
