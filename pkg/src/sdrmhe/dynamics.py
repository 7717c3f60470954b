"""Linear state evolution with bounded noise and synthetic measurements.

Random draws for one trajectory come from a single generator in a fixed
order: the initial state, then every process-noise vector, then every
measurement-noise vector.  Changing the order changes every seeded result.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from sdrmhe.grid import GridModel, MeasurementDescriptor, measurement_matrices, evaluate_measurement


@dataclass(frozen=True)
class NoiseModel:
    process_mag_bound: float = 0.05
    process_angle_bound: float = 0.05
    meas_bound: float = 0.05
    init_mag_mean: float = 1.0
    init_mag_std: float = 0.1
    init_angle_bound: float = 0.5 * np.pi

    def __post_init__(self):
        for name in ("process_mag_bound", "process_angle_bound", "meas_bound",
                     "init_mag_std", "init_angle_bound"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @classmethod
    def noiseless(cls, **kw) -> "NoiseModel":
        base = dict(process_mag_bound=0.0, process_angle_bound=0.0, meas_bound=0.0)
        base.update(kw)
        return cls(**base)


@dataclass
class Trajectory:
    """Ground truth ``v_0..v_{K-1}``, measurements ``z_0..z_{K-1}``, ``F_0..F_{K-2}``."""

    states: np.ndarray        # (K, N) complex
    measurements: np.ndarray  # (K, L) real
    transitions: np.ndarray   # (K-1, N, N) complex
    plan: list[MeasurementDescriptor] = field(default_factory=list)

    def __post_init__(self):
        K = self.states.shape[0]
        if self.measurements.shape[0] != K or self.transitions.shape[0] != K - 1:
            raise ValueError("inconsistent trajectory lengths")
        if self.measurements.shape[1] != len(self.plan):
            raise ValueError("measurement count does not match the plan")

    @property
    def horizon(self) -> int:
        return self.states.shape[0]


def propagate(F: np.ndarray, v: np.ndarray, xi: np.ndarray | None = None) -> np.ndarray:
    F = np.asarray(F)
    v = np.asarray(v)
    if F.shape != (v.shape[0], v.shape[0]):
        raise ValueError(f"dimension mismatch: F {F.shape}, v {v.shape}")
    out = F @ v
    if xi is not None:
        if np.shape(xi) != v.shape:
            raise ValueError("noise has the wrong shape")
        out = out + xi
    return out


def sample_initial_state(noise: NoiseModel, N: int, rng: np.random.Generator,
                         reference_bus: int = 1) -> np.ndarray:
    mag = rng.normal(noise.init_mag_mean, noise.init_mag_std, size=N)
    ang = rng.uniform(-noise.init_angle_bound, noise.init_angle_bound, size=N)
    ang[reference_bus - 1] = 0.0
    return mag * np.exp(1j * ang)


def sample_process_noise(noise: NoiseModel, N: int, rng: np.random.Generator) -> np.ndarray:
    # signed magnitude: a negative draw flips the phasor
    mag = rng.uniform(-noise.process_mag_bound, noise.process_mag_bound, size=N)
    ang = rng.uniform(-noise.process_angle_bound, noise.process_angle_bound, size=N)
    xi = mag * np.exp(1j * ang)
    assert np.all(np.abs(xi) <= noise.process_mag_bound + 1e-15)
    return xi


def sample_measurement_noise(noise: NoiseModel, L: int, rng: np.random.Generator) -> np.ndarray:
    eta = rng.uniform(-noise.meas_bound, noise.meas_bound, size=L)
    assert np.all(np.abs(eta) <= noise.meas_bound)
    return eta


def transition_sequence(F: np.ndarray | Sequence[np.ndarray], count: int) -> np.ndarray:
    """Broadcast a single ``(N, N)`` matrix, or check a per-step stack, to ``count`` steps."""
    F = np.asarray(F, dtype=complex)
    if F.ndim == 2:
        return np.broadcast_to(F, (count,) + F.shape).copy()
    if F.ndim != 3 or F.shape[0] < count:
        raise ValueError(f"need {count} transition matrices, got shape {F.shape}")
    return F[:count].copy()


def simulate(
    grid: GridModel,
    plan: Sequence[MeasurementDescriptor],
    F: np.ndarray | Sequence[np.ndarray],
    noise: NoiseModel,
    horizon: int,
    rng: np.random.Generator,
    v0: np.ndarray | None = None,
) -> Trajectory:
    """Simulate ``horizon`` time steps of ``v_{k+1} = F_k v_k + xi_k``, ``z_k = h(v_k) + eta_k``.

    The initial state is still drawn when ``v0`` is given, so that the rest
    of the random stream does not depend on whether it was supplied.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    N = grid.bus_count
    plan = list(plan)
    H = measurement_matrices(grid, plan)
    Fs = transition_sequence(F, horizon - 1)

    drawn = sample_initial_state(noise, N, rng)
    v = drawn if v0 is None else np.asarray(v0, dtype=complex)
    xis = [sample_process_noise(noise, N, rng) for _ in range(horizon - 1)]
    etas = [sample_measurement_noise(noise, len(plan), rng) for _ in range(horizon)]

    states = np.empty((horizon, N), dtype=complex)
    states[0] = v
    for k in range(horizon - 1):
        states[k + 1] = propagate(Fs[k], states[k], xis[k])
    z = np.empty((horizon, len(plan)))
    for k in range(horizon):
        z[k] = evaluate_measurement(H, states[k]) + etas[k] if plan else etas[k]
    return Trajectory(states, z, Fs, plan)


def write_trajectory_csv(traj: Trajectory, states_path: str | Path, meas_path: str | Path) -> None:
    """Dump states as ``k,bus,re,im`` and measurements as ``k,descriptor,value``."""
    with open(states_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "bus", "re", "im"])
        for k, v in enumerate(traj.states):
            for n, x in enumerate(v, start=1):
                w.writerow([k, n, f"{x.real:.17g}", f"{x.imag:.17g}"])
    with open(meas_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "descriptor", "value"])
        for k, z in enumerate(traj.measurements):
            for i, x in enumerate(z, start=1):
                w.writerow([k, i, f"{x:.17g}"])
