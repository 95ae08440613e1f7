"""Run configuration: flat INI-style key-value files with sections.

A run is fully described by one config file; identical configs (including the
seed) must produce byte-identical data outputs.  Validation happens eagerly
so the CLI can exit with code 2 before any stage runs.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..coefficients import (
    CoefficientModel,
    constant_model,
    perturbation_family,
    power_law_model,
    tabulated_model,
)
from ..solver import SolverParams, kappa0

__all__ = ["ConfigError", "RunConfig", "load_config", "DEFAULTS"]


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


DEFAULTS = {
    "coefficients": {
        "family": "constant", "a0": "1.0", "alpha": "0.0", "table": "",
        "N": "1", "p": "3.0", "q": "1.0", "M": "1.0",
        "b0": "1.0", "b_slope": "0.0", "perturbation": "off",
    },
    "initial_data": {
        "preset": "flat_ode", "T0": "1.0", "amplitude": "1.0",
        "center": "1.0", "width": "0.35", "d_hat": "0.0",
    },
    "grid": {"h": "0.001953125", "X_max": "2.0"},
    "solver": {
        "cfl": "0.9", "t_max": "3.0", "threshold_base": "100.0",
        "threshold_factor": "2.0", "guard": "1.0e12",
        "near_dt_frac": "0.05", "store_frac": "0.01",
        "window_lo": "", "window_hi": "",
    },
    "analysis": {
        "x0_list": "1.0", "n_y": "257", "ds": "0.01", "s_margin": "0.5",
        "resolve_factor": "4.0", "mu": "1.0", "burn_in_fraction": "0.2",
        "quad_nodes": "96", "fit_crossings": "3", "seed": "0",
        "curve_window_lo": "", "curve_window_hi": "", "neighborhood": "0.1",
    },
    "solitons": {
        "k_list": "2 3 4", "p": "3.0", "c1": "1.0",
        "s_start": "10.0", "s_end": "1000.0", "tol": "1.0e-10",
    },
    "normcheck": {"dims": "2 3", "R": "24.0", "h": "0.01"},
    "output": {"directory": "out"},
}


@dataclass
class RunConfig:
    """Validated run configuration plus derived model and solver params."""

    raw: dict
    path: Optional[Path]

    family: str = "constant"
    p: float = 3.0
    q: float = 1.0
    M: float = 1.0
    N: int = 1
    preset: str = "flat_ode"
    out_dir: Path = Path("out")
    x0_list: tuple = (1.0,)

    def __post_init__(self):
        c = self.raw["coefficients"]
        self.family = c["family"]
        self.p = _pos_float(c, "p")
        self.q = float(c["q"])
        self.M = _pos_float(c, "M")
        self.N = int(c["N"])
        if self.p <= 1.0:
            raise ConfigError("coefficients.p must exceed 1")
        if self.q >= self.p:
            raise ConfigError("coefficients.q must stay below p")
        if self.family not in ("constant", "power_law", "tabulated"):
            raise ConfigError(f"unknown coefficient family {self.family!r}")
        self.preset = self.raw["initial_data"]["preset"]
        if self.preset not in ("flat_ode", "gaussian_bump", "soliton_seed"):
            raise ConfigError(f"unknown initial data preset {self.preset!r}")
        g = self.raw["grid"]
        if _pos_float(g, "h") >= _pos_float(g, "X_max"):
            raise ConfigError("grid.h must be far smaller than grid.X_max")
        s = self.raw["solver"]
        if not (0.0 < float(s["cfl"]) <= 0.9):
            raise ConfigError("solver.cfl must lie in (0, 0.9]")
        a = self.raw["analysis"]
        self.x0_list = tuple(float(v) for v in a["x0_list"].split())
        if not self.x0_list:
            raise ConfigError("analysis.x0_list must name at least one base point")
        if int(a["n_y"]) < 16:
            raise ConfigError("analysis.n_y too small to resolve frames")
        self.out_dir = Path(self.raw["output"]["directory"])
        try:
            self.model()
        except (ValueError, ConfigError) as err:
            raise ConfigError(str(err)) from err

    # -- derived objects ------------------------------------------------------

    def model(self) -> CoefficientModel:
        c = self.raw["coefficients"]
        b0 = float(c["b0"])
        b_slope = float(c["b_slope"])
        if b0 <= 0:
            raise ConfigError("coefficients.b0 must be positive")
        b = b0 if b_slope == 0.0 else (
            lambda x: b0 + b_slope * np.asarray(x, dtype=float))
        f = g = F = None
        if c["perturbation"] == "on":
            f, g, F = perturbation_family(self.M, self.q)
        kwargs = dict(N=self.N, p=self.p, q=self.q, M=self.M, b=b, f=f, g=g, F=F)
        if self.family == "constant":
            model = constant_model(a0=float(c["a0"]), **kwargs)
        elif self.family == "power_law":
            model = power_law_model(alpha=float(c["alpha"]), **kwargs)
        else:
            table = np.loadtxt(c["table"])
            kwargs.pop("F")
            model = tabulated_model(table[:, 0], table[:, 1], d=None, **kwargs)
        if c["perturbation"] == "on":
            from ..coefficients import check_perturbation_bounds

            check_perturbation_bounds(model)
        return model

    def solver_params(self) -> SolverParams:
        g = self.raw["grid"]
        s = self.raw["solver"]
        window = None
        if s["window_lo"] and s["window_hi"]:
            window = (float(s["window_lo"]), float(s["window_hi"]))
        return SolverParams(
            h=float(g["h"]), X_max=float(g["X_max"]), cfl=float(s["cfl"]),
            t_max=float(s["t_max"]), threshold_base=float(s["threshold_base"]),
            threshold_factor=float(s["threshold_factor"]),
            guard=float(s["guard"]), near_dt_frac=float(s["near_dt_frac"]),
            store_frac=float(s["store_frac"]), stop_window=window)

    def initial_data(self, X: np.ndarray):
        ini = self.raw["initial_data"]
        p = self.p
        if self.preset == "flat_ode":
            T0 = _pos_float(ini, "T0")
            u = kappa0(p) * T0 ** (-2.0 / (p - 1.0))
            U0 = np.full_like(X, u)
            V0 = np.full_like(X, 2.0 / (p - 1.0) * u / T0)
            return U0, V0
        if self.preset == "gaussian_bump":
            A = float(ini["amplitude"])
            c = float(ini["center"])
            w = _pos_float(ini, "width")
            U0 = A * np.exp(-(((X - c) / w) ** 2))
            return U0, np.zeros_like(X)
        T0 = _pos_float(ini, "T0")
        dh = float(ini["d_hat"])
        c = float(ini["center"])
        if abs(dh) >= 1.0:
            raise ConfigError("initial_data.d_hat must satisfy |d_hat| < 1")
        base = T0 + dh * (X - c)
        if np.any(base <= 0):
            raise ConfigError("soliton_seed needs T0 + d_hat (X - center) > 0 on the grid")
        amp = kappa0(p) * (1.0 - dh**2) ** (1.0 / (p - 1.0))
        U0 = amp * base ** (-2.0 / (p - 1.0))
        V0 = 2.0 / (p - 1.0) * amp * base ** (-2.0 / (p - 1.0) - 1.0)
        return U0, V0

    def analysis(self, key, cast=float):
        v = self.raw["analysis"][key]
        return cast(v) if v != "" else None

    def curve_window(self):
        a = self.raw["analysis"]
        if a["curve_window_lo"] and a["curve_window_hi"]:
            return (float(a["curve_window_lo"]), float(a["curve_window_hi"]))
        return None

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.raw, sort_keys=True).encode()).hexdigest()

    def section_hash(self, *sections) -> str:
        sub = {s: self.raw[s] for s in sections if s in self.raw}
        return hashlib.sha256(json.dumps(sub, sort_keys=True).encode()).hexdigest()


def _pos_float(section, key):
    v = float(section[key])
    if not (v > 0) or not math.isfinite(v):
        raise ConfigError(f"{key} must be a positive finite number, got {v!r}")
    return v


def load_config(path) -> RunConfig:
    """Parse and validate a config file; unknown keys are rejected."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str  # keys are case-sensitive (N vs n)
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    parser.read(path)
    raw = {}
    for section, defaults in DEFAULTS.items():
        raw[section] = dict(defaults)
        if parser.has_section(section):
            for key, val in parser.items(section):
                if key not in defaults:
                    raise ConfigError(f"unknown key {section}.{key}")
                raw[section][key] = val.strip()
    for section in parser.sections():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown config section [{section}]")
    return RunConfig(raw=raw, path=path)
