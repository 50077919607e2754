"""Scenario configuration: INI files, environment overrides, defaults table.

A run configuration is flat structured text (``key = value`` grouped in
sections).  Every key can be overridden from the environment as
``HYDROSWARM_<SECTION>__<KEY>`` (upper case), e.g. ``HYDROSWARM_MODEL__M=1.8``.
Unknown sections or keys are parse errors, as are values violating a model
constraint; the error message names the constraint.

All solver defaults live in DEFAULTS below; solver code contains no hidden
constants.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fields import Grid, ScalarField, State, VectorField, read_field
from .model import ModelParams, SolverOptions
from .potentials import ConfinementSpec, KernelSpec, load_tabulated_confinement

__all__ = ["ConfigError", "RunConfig", "load_config", "DEFAULTS", "initial_state"]

ENV_PREFIX = "HYDROSWARM_"


class ConfigError(ValueError):
    """Configuration violates a documented constraint (message names it)."""


# One table of defaults; section -> key -> value (as the INI would spell it).
DEFAULTS: dict[str, dict[str, str]] = {
    "scenario": {"name": "unnamed"},
    "grid": {
        "dimension": "1",
        "cells": "256",
        "extent": "4.0",
        "domain": "box",
        "ball_radius": "",
    },
    "model": {
        "mu": "1.0",
        "lambda": "0.0",
        "a": "1.0",
        "m": "2.0",
        "eps": "0.0",
        "delta": "0.0",
        "beta": "5.0",
        "damping": "linear",
    },
    "kernel": {"kind": "zero", "amplitude": "1.0", "b": "", "cutoff": ""},
    "confinement": {"kind": "zero", "amplitude": "1.0", "nu": "0.5", "table": ""},
    "alignment": {"kind": "zero", "amplitude": "1.0"},
    "initial": {
        "kind": "gaussian-blob",
        "center": "0.0",
        "width": "0.5",
        "mass": "1.0",
        "separation": "2.0",
        "radius": "1.0",
        "velocity": "0.0",
        "file": "",
    },
    "run": {"t_end": "1.0", "output_every": "0.1", "max_steps": "10000000"},
    "numerics": {
        "cfl_safety": "0.4",
        "dt_min": "1e-9",
        "dt_max": "0.05",
        "dt": "",
        "vacuum_factor": "1e-12",
    },
    "thresholds": {
        "steady_gradu": "1e-6",
        "steady_rhouu": "1e-10",
        "steady_rows": "100",
    },
    "steady": {
        "method": "both",
        "omega": "0.5",
        "tol_fp": "1e-10",
        "max_iter": "500",
        "tol_gf": "1e-9",
        "center": "0.0",
    },
    "verify": {"r_o": "", "q_samples": "3"},
    "sweep": {"parameter": "", "values": ""},
    "output": {"snapshots": "false", "snapshot_every": ""},
    "seed": {"value": "0"},
}


@dataclass
class RunConfig:
    name: str
    grid: Grid
    params: ModelParams
    opts: SolverOptions
    initial: dict
    t_end: float
    dt_override: float | None
    steady: dict
    verify: dict
    sweep: dict
    output: dict
    seed: int
    raw: dict = field(default_factory=dict)


def _merged(path) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str.lower
    if path is not None:
        read = parser.read([str(path)])
        if not read:
            raise ConfigError(f"config file {path} does not exist or is unreadable")
    merged = {sec: dict(vals) for sec, vals in DEFAULTS.items()}
    for sec in parser.sections():
        if sec not in merged:
            raise ConfigError(f"unknown config section [{sec}]")
        for key, val in parser.items(sec):
            if key not in merged[sec]:
                raise ConfigError(f"unknown key '{key}' in section [{sec}]")
            merged[sec][key] = val.strip()
    for env_key, val in os.environ.items():
        if not env_key.startswith(ENV_PREFIX):
            continue
        rest = env_key[len(ENV_PREFIX):].lower()
        if "__" not in rest:
            continue
        sec, key = rest.split("__", 1)
        if sec in merged and key in merged[sec]:
            merged[sec][key] = val
    return merged


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _kernel_from(sec: dict, label: str) -> KernelSpec:
    try:
        return KernelSpec(
            kind=sec["kind"],
            amplitude=float(sec["amplitude"]),
            b=float(sec["b"]) if sec.get("b") else None,
            cutoff_radius=float(sec["cutoff"]) if sec.get("cutoff") else None,
        )
    except ValueError as exc:
        raise ConfigError(f"[{label}] {exc}") from exc


def _confinement_from(sec: dict, base: Path | None) -> ConfinementSpec:
    try:
        if sec["kind"] == "tabulated":
            table = sec.get("table", "")
            if not table:
                raise ConfigError("[confinement] tabulated kind needs table = <file>")
            path = Path(table)
            if base is not None and not path.is_absolute():
                path = base / path
            if not path.exists():
                raise ConfigError(f"[confinement] table file {path} does not exist")
            return load_tabulated_confinement(
                path, nu=float(sec["nu"]), amplitude=float(sec["amplitude"])
            )
        return ConfinementSpec(
            kind=sec["kind"], amplitude=float(sec["amplitude"]), nu=float(sec["nu"])
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"[confinement] {exc}") from exc


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Parse an INI file (plus env and explicit overrides) into a RunConfig.

    Raises ConfigError naming the violated constraint on any invalid value.
    """
    cfg = _merged(path)
    if overrides:
        for sec, vals in overrides.items():
            if sec not in cfg:
                raise ConfigError(f"unknown config section [{sec}]")
            for key, val in vals.items():
                if key not in cfg[sec]:
                    raise ConfigError(f"unknown key '{key}' in section [{sec}]")
                cfg[sec][key] = str(val)
    base = Path(path).parent if path is not None else None

    g = cfg["grid"]
    try:
        grid = Grid(
            d=int(g["dimension"]),
            n=_ints(g["cells"]),
            extent=_floats(g["extent"]),
            domain_kind=g["domain"],
            ball_radius=float(g["ball_radius"]) if g["ball_radius"] else None,
        )
    except ValueError as exc:
        raise ConfigError(f"[grid] {exc}") from exc

    kernel = _kernel_from(cfg["kernel"], "kernel")
    confinement = _confinement_from(cfg["confinement"], base)
    psi = _kernel_from(cfg["alignment"], "alignment")

    mdl = cfg["model"]
    try:
        params = ModelParams(
            mu=float(mdl["mu"]),
            lam=float(mdl["lambda"]),
            a=float(mdl["a"]),
            m=float(mdl["m"]),
            eps=float(mdl["eps"]),
            delta=float(mdl["delta"]),
            beta=float(mdl["beta"]),
            damping=mdl["damping"],
            kernel=kernel,
            confinement=confinement,
            psi=None if psi.is_zero else psi,
        )
        params.validate_for_dimension(grid.d)
    except ValueError as exc:
        raise ConfigError(f"[model] {exc}") from exc

    num = cfg["numerics"]
    thr = cfg["thresholds"]
    try:
        opts = SolverOptions(
            cfl_safety=float(num["cfl_safety"]),
            dt_min=float(num["dt_min"]),
            dt_max=float(num["dt_max"]),
            vacuum_factor=float(num["vacuum_factor"]),
            steady_gradu=float(thr["steady_gradu"]),
            steady_rhouu=float(thr["steady_rhouu"]),
            steady_rows=int(thr["steady_rows"]),
            output_every=float(cfg["run"]["output_every"]),
            max_steps=int(cfg["run"]["max_steps"]),
        )
    except ValueError as exc:
        raise ConfigError(f"[numerics] {exc}") from exc

    init = dict(cfg["initial"])
    if init["kind"] == "from-snapshot":
        if not init.get("file"):
            raise ConfigError("[initial] from-snapshot needs file = <snapshot>")
        snap = Path(init["file"])
        if base is not None and not snap.is_absolute():
            snap = base / snap
        if not snap.exists():
            raise ConfigError(f"[initial] snapshot {snap} does not exist")
        init["file"] = str(snap)
    elif init["kind"] not in ("gaussian-blob", "two-bumps", "uniform-disk"):
        raise ConfigError(f"[initial] unknown initial-data kind {init['kind']!r}")

    return RunConfig(
        name=cfg["scenario"]["name"],
        grid=grid,
        params=params,
        opts=opts,
        initial=init,
        t_end=float(cfg["run"]["t_end"]),
        dt_override=float(num["dt"]) if num["dt"] else None,
        steady=dict(cfg["steady"]),
        verify=dict(cfg["verify"]),
        sweep=dict(cfg["sweep"]),
        output=dict(cfg["output"]),
        seed=int(cfg["seed"]["value"]),
        raw=cfg,
    )


def _per_axis(value: str, d: int) -> np.ndarray:
    vals = _floats(value)
    if len(vals) == 1:
        vals = vals * d
    if len(vals) != d:
        raise ConfigError(f"expected 1 or {d} values, got {value!r}")
    return np.asarray(vals)


def initial_state(config: RunConfig) -> State:
    """Catalog initial data on the configured grid, mass-normalized exactly."""
    grid = config.grid
    init = config.initial
    x = grid.centers()
    mass = float(init["mass"])
    if mass <= 0:
        raise ConfigError(f"[initial] mass = {mass} must be positive")
    center = _per_axis(init["center"], grid.d)
    kind = init["kind"]
    if kind == "gaussian-blob":
        width = float(init["width"])
        if width <= 0:
            raise ConfigError("[initial] width must be positive")
        r2 = sum((x[k] - center[k]) ** 2 for k in range(grid.d))
        rho = np.exp(-r2 / (2.0 * width**2))
    elif kind == "two-bumps":
        width = float(init["width"])
        sep = float(init["separation"])
        if width <= 0 or sep <= 0:
            raise ConfigError("[initial] width and separation must be positive")
        rho = np.zeros(grid.shape)
        for sign in (-0.5, 0.5):
            c = center.copy()
            c[0] += sign * sep
            r2 = sum((x[k] - c[k]) ** 2 for k in range(grid.d))
            rho += np.exp(-r2 / (2.0 * width**2))
    elif kind == "uniform-disk":
        radius = float(init["radius"])
        if radius <= 0:
            raise ConfigError("[initial] radius must be positive")
        r2 = sum((x[k] - center[k]) ** 2 for k in range(grid.d))
        rho = (r2 < radius**2).astype(float)
    elif kind == "from-snapshot":
        fld, t0 = read_field(init["file"])
        if not isinstance(fld, ScalarField):
            raise ConfigError("[initial] snapshot must hold a scalar density field")
        if not fld.grid.compatible(grid):
            raise ConfigError("[initial] snapshot grid does not match configured grid")
        rho = fld.values.copy()
    else:  # pragma: no cover - guarded in load_config
        raise ConfigError(f"[initial] unknown kind {kind!r}")

    rho = np.where(grid.interior_mask(), rho, 0.0)
    total = rho.sum() * grid.cell_volume
    if total <= 0:
        raise ConfigError("[initial] density vanishes on the domain")
    if kind != "from-snapshot":
        rho *= mass / total

    u0 = _per_axis(init["velocity"], grid.d)
    mom = rho[None] * u0.reshape((grid.d,) + (1,) * grid.d)
    return State(0.0, ScalarField(grid, rho), VectorField(grid, mom))
