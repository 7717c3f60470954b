"""Monte Carlo driver, RMSE evaluation and CSV reports.

Error definition used throughout: truth and estimate are both rotated so bus
1 has zero phase, then the per-step error is ``||v_hat - v|| / sqrt(N)``.  The
aggregate RMSE at step ``k`` is the root of the mean squared per-replication
error, taken over replications whose estimator did not diverge.
"""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from sdrmhe.config import ScenarioConfig
from sdrmhe.dynamics import simulate, transition_sequence
from sdrmhe.ekf import EkfState, default_covariances, ekf_run, to_real
from sdrmhe.grid import measurement_matrices
from sdrmhe.mhe import MheConfig, run_mhe
from sdrmhe.sdr import align_phase

log = logging.getLogger(__name__)

REFERENCE_BUS = 1


def _aligned(states: np.ndarray, reference_bus: int | None) -> np.ndarray:
    if reference_bus is None:
        return np.asarray(states, dtype=complex)
    return np.array([align_phase(v, reference_bus) for v in states])


def rmse(truth, estimates, reference_bus: int | None = REFERENCE_BUS) -> np.ndarray:
    """Per-step error ``||align(v_hat_k) - align(v_k)|| / sqrt(N)``.

    ``reference_bus=None`` compares raw phasors without alignment.
    """
    truth = np.asarray(truth, dtype=complex)
    estimates = np.asarray(estimates, dtype=complex)
    if truth.shape != estimates.shape:
        raise ValueError(f"length mismatch: {truth.shape} vs {estimates.shape}")
    diff = _aligned(estimates, reference_bus) - _aligned(truth, reference_bus)
    return np.linalg.norm(diff, axis=1) / np.sqrt(truth.shape[1])


def aggregate_rmse(errors: np.ndarray, keep: np.ndarray | None = None) -> np.ndarray:
    """Root-mean over replications (rows) of squared per-step errors."""
    errors = np.asarray(errors, dtype=float)
    if keep is not None:
        errors = errors[np.asarray(keep, dtype=bool)]
    if errors.shape[0] == 0:
        return np.full(errors.shape[1], np.nan)
    return np.sqrt(np.mean(errors ** 2, axis=0))


@dataclass
class ReplicationResult:
    truth: np.ndarray                  # (K-M, N) aligned truth for k = M..K-1
    estimates: dict[str, np.ndarray]   # tag -> (K-M, N) aligned estimates
    diverged: dict[str, bool]
    seconds: dict[str, float]          # mean wall-clock per time step
    mhe_unconverged: int = 0


@dataclass
class RunResult:
    ks: np.ndarray
    estimators: tuple[str, ...]
    truth: np.ndarray                          # (R, K-M, N)
    estimates: dict[str, np.ndarray]           # tag -> (R, K-M, N)
    errors: dict[str, np.ndarray]              # tag -> (R, K-M)
    diverged: dict[str, np.ndarray]            # tag -> (R,) bool
    rmse: dict[str, np.ndarray]                # tag -> (K-M,)
    seconds: dict[str, np.ndarray] = field(default_factory=dict)

    def mean_rmse(self, tag: str) -> float:
        return float(np.mean(self.rmse[tag]))

    def divergence_rate(self, tag: str) -> float:
        return float(np.mean(self.diverged[tag]))


def run_replication(cfg: ScenarioConfig, rep: int) -> ReplicationResult:
    """One trajectory and every requested estimator on it (seed = base seed + rep)."""
    rng = np.random.default_rng(cfg.seed + rep)
    N = cfg.grid.bus_count
    K, M = cfg.horizon, cfg.window
    Fs = transition_sequence(cfg.transition, K - 1)
    traj = simulate(cfg.grid, cfg.plan, Fs, cfg.noise, K, rng)
    flat = np.ones(N, dtype=complex)
    prior0 = flat if cfg.initial_prior == "flat" else traj.states[0]

    estimates, diverged, seconds = {}, {}, {}
    unconverged = 0
    nk = K - M
    for tag in cfg.estimators:
        t0 = time.perf_counter()
        est = np.full((nk, N), np.nan + 1j * np.nan)
        bad = False
        try:
            if tag == "mhe":
                mcfg = MheConfig(M=M, mu=cfg.mu, lam=cfg.lam, solver=cfg.solver,
                                 extraction=cfg.extraction, random_count=cfg.random_count,
                                 reference_bus=REFERENCE_BUS)
                run = run_mhe(cfg.grid, cfg.plan, traj.measurements, Fs, prior0, mcfg, rng=rng)
                est = run.filtered
                unconverged = int(np.sum(~run.converged))
            else:
                H = measurement_matrices(cfg.grid, cfg.plan)
                Q, R = default_covariances(cfg.noise, N, len(cfg.plan))
                init = EkfState(to_real(prior0), cfg.ekf_init_std ** 2 * np.eye(2 * N))
                run = ekf_run(H, traj.measurements, Fs, init, Q, R)
                est = run.estimates[M:]
                bad = run.diverged
        except (ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
            log.warning("replication %d: %s failed: %s", rep, tag, exc)
            bad = True
        bad = bad or not np.all(np.isfinite(est))
        if bad:
            log.info("replication %d: %s diverged", rep, tag)
        estimates[tag] = _aligned(est, REFERENCE_BUS) if not bad else est
        diverged[tag] = bool(bad)
        seconds[tag] = (time.perf_counter() - t0) / max(nk, 1)
    truth = _aligned(traj.states[M:], REFERENCE_BUS)
    return ReplicationResult(truth, estimates, diverged, seconds, unconverged)


def _run_one(args):
    cfg, rep = args
    return run_replication(cfg, rep)


def run_scenario(cfg: ScenarioConfig, workers: int | None = None) -> RunResult:
    """All replications, reduced in replication order (so the worker count never matters)."""
    workers = cfg.workers if workers is None else workers
    jobs = [(cfg, r) for r in range(cfg.replications)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reps = list(pool.map(_run_one, jobs))
    else:
        reps = [_run_one(j) for j in jobs]

    ks = np.arange(cfg.window, cfg.horizon)
    truth = np.stack([r.truth for r in reps])
    tags = tuple(cfg.estimators)
    estimates, errors, diverged, agg, seconds = {}, {}, {}, {}, {}
    for tag in tags:
        estimates[tag] = np.stack([r.estimates[tag] for r in reps])
        diverged[tag] = np.array([r.diverged[tag] for r in reps])
        errors[tag] = np.array([
            rmse(r.truth, r.estimates[tag]) if not r.diverged[tag] else np.full(len(ks), np.nan)
            for r in reps
        ])
        agg[tag] = aggregate_rmse(errors[tag], ~diverged[tag])
        seconds[tag] = np.array([r.seconds[tag] for r in reps])
    if "mhe" in tags:
        n_unconv = sum(r.mhe_unconverged for r in reps)
        if n_unconv:
            log.warning("%d MHE windows hit the iteration limit", n_unconv)
    return RunResult(ks, tags, truth, estimates, errors, diverged, agg, seconds)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


README = """\
Files
  rmse.csv              k, estimator, rmse  (aggregate over non-diverged replications)
  trajectory_bus<i>.csv rep, k, truth_re, truth_im, <estimator>_re, <estimator>_im
  summary.csv           estimator, mean_rmse, divergence_rate, replications
  timing.csv            estimator, mean_step_seconds (wall clock; not reproducible)

Error definition
  Truth and estimates are rotated so that bus 1 has zero phase.  Per replication
  and step, error = ||v_hat_k - v_k|| / sqrt(N).  rmse(k) = sqrt(mean over
  non-diverged replications of error^2).  mean_rmse averages rmse(k) over k.
  A replication diverges for an estimator when any estimate is non-finite;
  its trajectory values are then written as nan.
"""


def summary_rows(result: RunResult) -> list[list[str]]:
    R = result.truth.shape[0]
    return [[tag, _fmt(result.mean_rmse(tag)), _fmt(result.divergence_rate(tag)), str(R)]
            for tag in result.estimators]


def emit_reports(result: RunResult, out: str | Path) -> list[Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def open_csv(name):
        p = out / name
        written.append(p)
        return open(p, "w", newline="")

    with open_csv("rmse.csv") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "estimator", "rmse"])
        for tag in result.estimators:
            for k, e in zip(result.ks, result.rmse[tag]):
                w.writerow([int(k), tag, _fmt(e)])

    R, nk, N = result.truth.shape
    for bus in range(1, N + 1):
        with open_csv(f"trajectory_bus{bus}.csv") as fh:
            w = csv.writer(fh)
            header = ["rep", "k", "truth_re", "truth_im"]
            for tag in result.estimators:
                header += [f"{tag}_re", f"{tag}_im"]
            w.writerow(header)
            if not result.estimators:
                continue
            for r in range(R):
                for i, k in enumerate(result.ks):
                    t = result.truth[r, i, bus - 1]
                    row = [r, int(k), _fmt(t.real), _fmt(t.imag)]
                    for tag in result.estimators:
                        e = result.estimates[tag][r, i, bus - 1]
                        row += [_fmt(e.real), _fmt(e.imag)]
                    w.writerow(row)

    with open_csv("summary.csv") as fh:
        w = csv.writer(fh)
        w.writerow(["estimator", "mean_rmse", "divergence_rate", "replications"])
        w.writerows(summary_rows(result))

    with open_csv("timing.csv") as fh:
        w = csv.writer(fh)
        w.writerow(["estimator", "mean_step_seconds"])
        for tag in result.estimators:
            w.writerow([tag, _fmt(float(np.mean(result.seconds[tag])))])

    p = out / "README.txt"
    p.write_text(README)
    written.append(p)
    return written


def read_trajectories(out: str | Path):
    """Re-read ``trajectory_bus*.csv`` into ``(truth, {tag: estimates})`` arrays of shape (R, nk, N)."""
    out = Path(out)
    files = sorted(out.glob("trajectory_bus*.csv"), key=lambda p: int(p.stem[14:]))
    cols, per_bus = None, []
    for f in files:
        with open(f, newline="") as fh:
            rows = list(csv.reader(fh))
        cols = rows[0]
        per_bus.append(rows[1:])
    tags = [c[:-3] for c in cols[4::2]] if cols else []
    if not per_bus or not per_bus[0]:
        return np.zeros((0, 0, len(files))), {t: np.zeros((0, 0, len(files))) for t in tags}
    reps = sorted({int(r[0]) for r in per_bus[0]})
    ks = sorted({int(r[1]) for r in per_bus[0]})
    shape = (len(reps), len(ks), len(files))
    truth = np.empty(shape, dtype=complex)
    est = {t: np.empty(shape, dtype=complex) for t in tags}
    for b, rows in enumerate(per_bus):
        for row in rows:
            r, i = reps.index(int(row[0])), ks.index(int(row[1]))
            vals = [float(x) for x in row[2:]]
            truth[r, i, b] = complex(vals[0], vals[1])
            for j, t in enumerate(tags):
                est[t][r, i, b] = complex(vals[2 + 2 * j], vals[3 + 2 * j])
    return truth, est


def summary_from_reports(out: str | Path) -> list[list[str]]:
    """Recompute summary rows from ``rmse.csv`` and the trajectory files."""
    out = Path(out)
    with open(out / "rmse.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    truth, est = read_trajectories(out)
    R = truth.shape[0]
    result = []
    for tag in est:
        series = [float(r["rmse"]) for r in rows if r["estimator"] == tag]
        div = ~np.all(np.isfinite(est[tag]), axis=(1, 2))
        result.append([tag, _fmt(float(np.mean(series))), _fmt(float(np.mean(div))), str(R)])
    return result
