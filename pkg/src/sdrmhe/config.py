"""Scenario configuration files (TOML) with strict key checking.

Schema (every table optional except ``[scenario]``)::

    [scenario]
    grid = "builtin:case6ww"     # or a case file path, relative to this file
    horizon = 40                 # number of time steps, k = 0..horizon-1
    window = 2                   # M
    mu = 1.0
    lambda = 0.0075
    replications = 100
    seed = 0
    estimators = ["mhe", "ekf"]
    output = "results"
    initial_prior = "flat"       # "flat" or "truth"
    workers = 1

    [transition]
    diagonal = [1.0, 1.05, ...]  # constant F_k = diag(...)
    # per_step = [[...], ...]    # or one diagonal per step (horizon - 1 rows)

    [noise]                      # NoiseModel fields
    [measurements]
    flow_lines = [1, 2, 3]       # active + reactive from-end flows, by line position
    voltage_magnitudes = [1, 2]
    active_injections = []
    reactive_injections = []
    extra = [{kind = "ActiveFlow", buses = [2, 1], weight = 1.0}]

    [solver]                     # SolverConfig fields
    [extraction]
    method = "eig"               # or "randomized"
    count = 100

    [ekf]
    init_std = 0.1
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from sdrmhe.dynamics import NoiseModel
from sdrmhe.grid import (
    GridModel,
    MeasurementDescriptor,
    ModelValidationError,
    active_injection,
    flow_plan,
    load_grid,
    reactive_injection,
    validate_descriptor,
    voltage_magnitude,
)
from sdrmhe.sdr import SolverConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ESTIMATORS = ("mhe", "ekf")


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    grid: GridModel
    plan: list[MeasurementDescriptor]
    transition: np.ndarray  # (N, N) or (horizon-1, N, N)
    noise: NoiseModel = NoiseModel()
    horizon: int = 40
    window: int = 2
    mu: float = 1.0
    lam: float = 0.0075
    replications: int = 100
    seed: int = 0
    estimators: tuple[str, ...] = ESTIMATORS
    output: Path = Path("results")
    initial_prior: str = "flat"
    solver: SolverConfig = SolverConfig()
    extraction: str = "eig"
    random_count: int = 100
    ekf_init_std: float = 0.1
    workers: int = 1
    source: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        N = self.grid.bus_count
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if self.horizon < 1:
            raise ConfigError("horizon must be at least 1")
        if self.window < 0 or self.window >= self.horizon:
            raise ConfigError("window must satisfy 0 <= window < horizon")
        if self.mu < 0 or self.lam < 0:
            raise ConfigError("mu and lambda must be nonnegative")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise ConfigError(f"unknown estimators {sorted(unknown)}")
        if self.initial_prior not in ("flat", "truth"):
            raise ConfigError("initial_prior must be 'flat' or 'truth'")
        if self.extraction not in ("eig", "randomized"):
            raise ConfigError("extraction method must be 'eig' or 'randomized'")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        for d in self.plan:
            try:
                validate_descriptor(self.grid, d)
            except ModelValidationError as exc:
                raise ConfigError(str(exc)) from None
        F = np.asarray(self.transition)
        ok = F.shape == (N, N) or (F.ndim == 3 and F.shape[1:] == (N, N)
                                   and F.shape[0] >= self.horizon - 1)
        if not ok:
            raise ConfigError(f"transition shape {F.shape} does not fit {N} buses")
        if not np.all(np.isfinite(F)):
            raise ConfigError("transition matrices must be finite")


def _check_keys(table: dict, allowed, where: str) -> None:
    unknown = set(table) - set(allowed)
    if unknown:
        raise ConfigError(f"[{where}]: unknown keys {sorted(unknown)}")


def _plan(grid: GridModel, m: dict) -> list[MeasurementDescriptor]:
    _check_keys(m, {"flow_lines", "voltage_magnitudes", "active_injections",
                    "reactive_injections", "extra"}, "measurements")
    plan = [active_injection(n) for n in m.get("active_injections", [])]
    plan += [reactive_injection(n) for n in m.get("reactive_injections", [])]
    lines = m.get("flow_lines", [])
    for i in lines:
        if not 1 <= i <= len(grid.lines):
            raise ConfigError(f"flow line {i} out of range 1..{len(grid.lines)}")
    plan += flow_plan(grid, lines)
    plan += [voltage_magnitude(n) for n in m.get("voltage_magnitudes", [])]
    for e in m.get("extra", []):
        _check_keys(e, {"kind", "buses", "weight"}, "measurements.extra")
        try:
            plan.append(MeasurementDescriptor(e["kind"], tuple(e["buses"]), e.get("weight", 1.0)))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad extra measurement {e}: {exc}") from None
    return plan


def _transition(t: dict, N: int) -> np.ndarray:
    _check_keys(t, {"diagonal", "per_step"}, "transition")
    if ("diagonal" in t) == ("per_step" in t):
        raise ConfigError("[transition] needs exactly one of 'diagonal' or 'per_step'")
    if "diagonal" in t:
        d = np.asarray(t["diagonal"], dtype=float)
        if d.shape != (N,):
            raise ConfigError(f"transition diagonal needs {N} entries")
        return np.diag(d).astype(complex)
    rows = np.asarray(t["per_step"], dtype=float)
    if rows.ndim != 2 or rows.shape[1] != N:
        raise ConfigError(f"per_step rows need {N} entries each")
    return np.stack([np.diag(r) for r in rows]).astype(complex)


def config_from_dict(data: dict, base: Path = Path(".")) -> ScenarioConfig:
    _check_keys(data, {"scenario", "transition", "noise", "measurements", "solver",
                       "extraction", "ekf"}, "top level")
    if "scenario" not in data:
        raise ConfigError("missing [scenario] table")
    sc = dict(data["scenario"])
    _check_keys(sc, {"grid", "horizon", "window", "mu", "lambda", "replications", "seed",
                     "estimators", "output", "initial_prior", "workers"}, "scenario")
    grid_ref = sc.pop("grid", "builtin:case6ww")
    if not grid_ref.startswith("builtin:") and not Path(grid_ref).is_absolute():
        grid_ref = str(base / grid_ref)
    try:
        grid = load_grid(grid_ref)
    except (OSError, ModelValidationError) as exc:
        raise ConfigError(f"cannot load grid {grid_ref!r}: {exc}") from None

    noise_tab = data.get("noise", {})
    _check_keys(noise_tab, [f.name for f in fields(NoiseModel)], "noise")
    solver_tab = data.get("solver", {})
    _check_keys(solver_tab, [f.name for f in fields(SolverConfig)], "solver")
    ext = data.get("extraction", {})
    _check_keys(ext, {"method", "count"}, "extraction")
    ekf = data.get("ekf", {})
    _check_keys(ekf, {"init_std"}, "ekf")
    if "transition" not in data:
        raise ConfigError("missing [transition] table")

    try:
        return ScenarioConfig(
            grid=grid,
            plan=_plan(grid, data.get("measurements", {})),
            transition=_transition(data["transition"], grid.bus_count),
            noise=NoiseModel(**noise_tab),
            horizon=int(sc.get("horizon", 40)),
            window=int(sc.get("window", 2)),
            mu=float(sc.get("mu", 1.0)),
            lam=float(sc.get("lambda", 0.0075)),
            replications=int(sc.get("replications", 100)),
            seed=int(sc.get("seed", 0)),
            estimators=tuple(sc.get("estimators", ESTIMATORS)),
            output=Path(sc.get("output", "results")),
            initial_prior=sc.get("initial_prior", "flat"),
            solver=SolverConfig(**solver_tab),
            extraction=ext.get("method", "eig"),
            random_count=int(ext.get("count", 100)),
            ekf_init_std=float(ekf.get("init_std", 0.1)),
            workers=int(sc.get("workers", 1)),
            source=base,
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data, path.parent)
