"""Moving-horizon estimation through the relaxed window problem.

At time ``k`` the window holds ``z_{k-M}..z_k`` and ``F_{k-M}..F_{k-1}``.
Every in-window state is a known linear image ``T_s v_{k-M}`` of the window
origin, so each measurement of time ``k-M+s`` is linear in the origin lift
``V = v_{k-M} v_{k-M}^H`` through ``T_s^H H T_s``.  Only the origin is
estimated; later states follow by noise-free propagation.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from sdrmhe.grid import GridModel, MeasurementDescriptor, measurement_matrices
from sdrmhe.sdr import (
    LiftedEstimate,
    SdrProblem,
    SolverConfig,
    align_phase,
    rank1_extract_eig,
    rank1_extract_randomized,
    solve_relaxed,
)


@dataclass(frozen=True)
class Window:
    k: int
    measurements: np.ndarray  # (M+1, L): z_{k-M}..z_k
    transitions: np.ndarray   # (M, N, N): F_{k-M}..F_{k-1}

    def __post_init__(self):
        if self.measurements.shape[0] != self.transitions.shape[0] + 1:
            raise ValueError("a window needs exactly one more measurement vector than transitions")

    @property
    def M(self) -> int:
        return self.transitions.shape[0]


@dataclass(frozen=True)
class MheConfig:
    M: int = 2
    mu: float = 1.0
    lam: float = 0.0075
    solver: SolverConfig = SolverConfig()
    extraction: str = "eig"
    random_count: int = 100
    reference_bus: int = 1

    def __post_init__(self):
        if self.M < 0:
            raise ValueError("window length M must be nonnegative")
        if self.mu < 0 or self.lam < 0:
            raise ValueError("mu and lambda must be nonnegative")
        if self.extraction not in ("eig", "randomized"):
            raise ValueError(f"unknown extraction {self.extraction!r}")


@dataclass(frozen=True)
class MheState:
    prior_vec: np.ndarray
    prior_lift: np.ndarray
    last_smoothed: np.ndarray | None = None

    @classmethod
    def from_prior(cls, v: np.ndarray) -> "MheState":
        v = np.asarray(v, dtype=complex)
        return cls(v, np.outer(v, v.conj()))


def build_T(transitions: np.ndarray | Sequence[np.ndarray], n: int | None = None) -> list[np.ndarray]:
    """``T_0 = I`` and ``T_s = F_{k-M+s-1} T_{s-1}`` for ``s = 1..M``."""
    Fs = [np.asarray(F, dtype=complex) for F in transitions]
    if n is None:
        if not Fs:
            raise ValueError("bus count needed when there are no transitions")
        n = Fs[0].shape[0]
    T = [np.eye(n, dtype=complex)]
    for F in Fs:
        if F.shape != (n, n):
            raise ValueError(f"transition of shape {F.shape}, expected {(n, n)}")
        T.append(F @ T[-1])
    return T


def build_lifted_H(H: np.ndarray, T: np.ndarray) -> np.ndarray:
    """``T^H H T`` for one matrix or a stack ``(L, N, N)``."""
    H = np.asarray(H)
    if H.shape[-1] != T.shape[0] or H.shape[-2] != T.shape[0]:
        raise ValueError(f"dimension mismatch: H {H.shape}, T {T.shape}")
    return T.conj().T @ H @ T


def propagate_prior(state: MheState, F: np.ndarray) -> MheState:
    """Next window's prior from the last smoothed estimate."""
    if state.last_smoothed is None:
        raise ValueError("no smoothed estimate to propagate")
    v = np.asarray(F) @ state.last_smoothed
    return MheState(v, np.outer(v, v.conj()), state.last_smoothed)


def window_problem(H: np.ndarray, window: Window, state: MheState, cfg: MheConfig) -> SdrProblem:
    L = H.shape[0]
    T = build_T(window.transitions, H.shape[-1] if L else state.prior_vec.shape[0])
    Hs = np.concatenate([build_lifted_H(H, Ts) for Ts in T]) if L else H
    z = window.measurements.reshape(-1)
    return SdrProblem(Hs, z, cfg.lam if cfg.lam > 0 else 1.0, state.prior_lift, cfg.mu,
                      state.prior_vec)


@dataclass
class StepResult:
    estimates: np.ndarray   # (M+1, N): v_{k-M|k} .. v_{k|k}
    state: MheState
    lifted: LiftedEstimate


def mhe_step(
    grid: GridModel,
    plan: Sequence[MeasurementDescriptor] | np.ndarray,
    window: Window,
    state: MheState,
    cfg: MheConfig,
    next_transition: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> StepResult:
    """Solve one window and propagate the prior with ``F_{k-M}``.

    ``plan`` may be the descriptor list or its precomputed matrix stack.  When
    ``next_transition`` is omitted it is taken from the window (``M >= 1``);
    with ``M = 0`` and no transition the returned state keeps its prior.
    """
    H = plan if isinstance(plan, np.ndarray) else measurement_matrices(grid, plan)
    if cfg.lam == 0:
        # data term switched off entirely
        H = H[:0]
        window = Window(window.k, window.measurements[:, :0], window.transitions)
    problem = window_problem(H, window, state, cfg)
    lifted = solve_relaxed(problem, cfg.solver)
    if cfg.extraction == "randomized":
        if rng is None:
            rng = np.random.default_rng(window.k)
        origin = rank1_extract_randomized(lifted, problem, cfg.random_count, rng, cfg.reference_bus)
    else:
        origin = rank1_extract_eig(lifted, cfg.reference_bus)

    est = np.empty((window.M + 1, origin.shape[0]), dtype=complex)
    est[0] = origin
    for s in range(window.M):
        est[s + 1] = window.transitions[s] @ est[s]

    new_state = replace(state, last_smoothed=origin)
    F_next = next_transition if next_transition is not None else (
        window.transitions[0] if window.M else None)
    if F_next is not None:
        new_state = propagate_prior(new_state, F_next)
    return StepResult(est, new_state, lifted)


@dataclass
class MheRun:
    ks: np.ndarray           # time indices M..K-1
    filtered: np.ndarray     # (len(ks), N): v_{k|k}
    smoothed: np.ndarray     # (len(ks), N): v_{k-M|k}
    converged: np.ndarray
    iterations: np.ndarray
    seconds: np.ndarray = field(default_factory=lambda: np.zeros(0))


def run_mhe(
    grid: GridModel,
    plan: Sequence[MeasurementDescriptor],
    measurements: np.ndarray,
    transitions: np.ndarray,
    prior0: np.ndarray,
    cfg: MheConfig,
    rng: np.random.Generator | None = None,
) -> MheRun:
    """Slide the window over ``z_0..z_{K-1}``; one solve per ``k = M..K-1``.

    ``prior0`` is the prior for ``v_0``.  Nothing is emitted for ``k < M``.
    """
    measurements = np.asarray(measurements, dtype=float)
    K = measurements.shape[0]
    M = cfg.M
    if K < M + 1:
        raise ValueError(f"need at least M+1={M + 1} measurement vectors, got {K}")
    transitions = np.asarray(transitions, dtype=complex)
    if transitions.shape[0] < K - 1:
        raise ValueError(f"need {K - 1} transition matrices, got {transitions.shape[0]}")
    H = measurement_matrices(grid, plan)
    if rng is None and cfg.extraction == "randomized":
        rng = np.random.default_rng(0)

    state = MheState.from_prior(align_phase(prior0, cfg.reference_bus))
    ks = np.arange(M, K)
    n = grid.bus_count
    filtered = np.empty((len(ks), n), dtype=complex)
    smoothed = np.empty((len(ks), n), dtype=complex)
    converged = np.zeros(len(ks), dtype=bool)
    iterations = np.zeros(len(ks), dtype=int)
    seconds = np.zeros(len(ks))
    for i, k in enumerate(ks):
        t0 = time.perf_counter()
        win = Window(k, measurements[k - M:k + 1], transitions[k - M:k])
        F_next = transitions[k - M] if k - M < K - 1 else None
        step = mhe_step(grid, H, win, state, cfg, next_transition=F_next, rng=rng)
        seconds[i] = time.perf_counter() - t0
        filtered[i] = step.estimates[-1]
        smoothed[i] = step.estimates[0]
        converged[i] = step.lifted.converged
        iterations[i] = step.lifted.iterations
        state = step.state
    return MheRun(ks, filtered, smoothed, converged, iterations, seconds)


def write_estimates_csv(path: str | Path, ks, estimates, tag: str, append: bool = False) -> None:
    """Rows ``k,bus,re,im,estimator``."""
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh)
        if not append:
            w.writerow(["k", "bus", "re", "im", "estimator"])
        for k, v in zip(ks, estimates):
            for n, x in enumerate(v, start=1):
                w.writerow([int(k), n, f"{x.real:.17g}", f"{x.imag:.17g}", tag])
