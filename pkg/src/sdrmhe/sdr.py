"""Convex quadratic problems over the Hermitian PSD cone and rank-one recovery.

The relaxed objective is

    f(V) = mu * ||V - P||_F^2 + sum_l w_l * (z_l - Tr(H_l V))^2,   V >= 0,

with ``P`` an optional Hermitian prior.  For Hermitian ``H`` and ``V`` the
trace ``Tr(H V)`` is the real inner product ``<H, V> = Re sum(conj(H) * V)``,
so the solver works on the real coordinates ``[Re V, Im V]`` where the data
term is an ordinary least-squares map and the Frobenius norm is Euclidean.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DegenerateLiftWarning(RuntimeWarning):
    pass


def hermitian(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.conj().swapaxes(-1, -2))


def psd_project(A: np.ndarray) -> np.ndarray:
    """Frobenius-nearest PSD matrix to the Hermitian part of ``A``."""
    A = np.asarray(A, dtype=complex)
    if not np.all(np.isfinite(A)):
        raise ValueError("cannot project a matrix with non-finite entries")
    w, Q = np.linalg.eigh(hermitian(A))
    w = np.clip(w, 0.0, None)
    return hermitian((Q * w) @ Q.conj().T)


def psd_sqrt(V: np.ndarray) -> np.ndarray:
    w, Q = np.linalg.eigh(hermitian(V))
    return Q * np.sqrt(np.clip(w, 0.0, None))


def align_phase(v: np.ndarray, reference_bus: int = 1) -> np.ndarray:
    """Rotate ``v`` by a unit scalar so its reference entry is real and positive.

    A (numerically) zero reference entry falls back to the largest-magnitude
    entry.  The zero vector is returned unchanged.
    """
    v = np.asarray(v, dtype=complex)
    mags = np.abs(v)
    peak = mags.max(initial=0.0)
    if not np.isfinite(peak) or peak == 0.0:
        return v.copy()
    i = reference_bus - 1
    if mags[i] <= 1e-12 * peak:
        i = int(np.argmax(mags))
    return v * (np.conj(v[i]) / mags[i])


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 50_000
    rel_tolerance: float = 1e-9
    abs_tolerance: float = 1e-26
    patience: int = 5
    acceleration: bool = True
    record_trace: bool = False

    def __post_init__(self):
        if not self.rel_tolerance > 0:
            raise ValueError("rel_tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass
class SdrProblem:
    """Data of one relaxed problem.

    ``H`` is a stack ``(L, N, N)`` of Hermitian matrices with targets ``z`` and
    positive ``weights``.  ``prior`` may be ``None`` (static estimation);
    ``prior_vec`` is the vector whose outer product is ``prior``, used only
    when scoring unlifted candidates.
    """

    H: np.ndarray
    z: np.ndarray
    weights: np.ndarray
    prior: np.ndarray | None = None
    prior_weight: float = 0.0
    prior_vec: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=complex)
        if self.H.ndim == 2:
            self.H = self.H[None]
        self.z = np.atleast_1d(np.asarray(self.z, dtype=float))
        self.weights = np.broadcast_to(
            np.asarray(self.weights, dtype=float), self.z.shape
        ).copy()
        L = self.z.shape[0]
        if self.H.shape[0] != L:
            raise ValueError(f"{self.H.shape[0]} matrices but {L} targets")
        if L and np.any(self.weights <= 0):
            raise ValueError("term weights must be positive")
        if self.prior_weight < 0:
            raise ValueError("prior weight must be nonnegative")
        if self.prior_weight > 0 and self.prior is None:
            raise ValueError("positive prior weight needs a prior matrix")
        if L == 0 and self.prior_weight == 0:
            raise ValueError("problem has neither terms nor a weighted prior")
        if L and np.max(np.abs(self.H - hermitian(self.H))) > 1e-10:
            raise ValueError("measurement matrices must be Hermitian")

    @property
    def n(self) -> int:
        if self.H.shape[0]:
            return self.H.shape[-1]
        return self.prior.shape[0]

    def lifted_cost(self, V: np.ndarray) -> float:
        r = self.z - np.einsum("lij,ij->l", self.H.conj(), V).real
        cost = float(np.sum(self.weights * r * r))
        if self.prior_weight:
            d = V - self.prior
            cost += self.prior_weight * float(np.vdot(d, d).real)
        return cost

    def prior_vector(self, reference_bus: int = 1) -> np.ndarray | None:
        if self.prior is None or self.prior_weight == 0:
            return None
        if self.prior_vec is not None:
            return align_phase(self.prior_vec, reference_bus)
        return _leading_vector(self.prior, reference_bus)

    def vector_cost(self, v: np.ndarray, reference_bus: int = 1) -> float:
        """Cost of a state vector in the original (unlifted) least-squares form."""
        v = align_phase(v, reference_bus)
        h = np.einsum("i,lij,j->l", v.conj(), self.H, v).real
        r = self.z - h
        cost = float(np.sum(self.weights * r * r))
        vbar = self.prior_vector(reference_bus)
        if vbar is not None:
            cost += self.prior_weight * float(np.sum(np.abs(v - vbar) ** 2))
        return cost


@dataclass
class LiftedEstimate:
    V: np.ndarray
    cost: float
    iterations: int
    converged: bool
    trace: list[tuple[int, float, float]] = field(default_factory=list)


class _RealForm:
    """Problem data in real coordinates ``x = [Re V.ravel(), Im V.ravel()]``."""

    def __init__(self, p: SdrProblem):
        self.N = p.n
        L = p.z.shape[0]
        Hf = p.H.reshape(L, self.N * self.N)
        self.A = np.hstack([Hf.real, Hf.imag])
        self.z = p.z
        self.w = p.weights
        self.mu = float(p.prior_weight)
        if p.prior is not None and self.mu:
            self.p = self.to_x(hermitian(np.asarray(p.prior, dtype=complex)))
        else:
            self.p = np.zeros(2 * self.N * self.N)
        sqrt_w = np.sqrt(self.w)[:, None]
        data_curv = np.linalg.norm(sqrt_w * self.A, 2) ** 2 if L else 0.0
        self.lipschitz = 2.0 * self.mu + 2.0 * data_curv

    def to_x(self, V):
        f = V.ravel()
        return np.concatenate([f.real, f.imag])

    def to_V(self, x):
        n2 = self.N * self.N
        return (x[:n2] + 1j * x[n2:]).reshape(self.N, self.N)

    def value_and_grad(self, x):
        r = self.z - self.A @ x
        wr = self.w * r
        d = x - self.p
        f = float(r @ wr) + self.mu * float(d @ d)
        g = 2.0 * self.mu * d - 2.0 * (self.A.T @ wr)
        return f, g

    def value(self, x):
        r = self.z - self.A @ x
        d = x - self.p
        return float(r @ (self.w * r)) + self.mu * float(d @ d)

    def project(self, x):
        return self.to_x(psd_project(self.to_V(x)))


def solve_relaxed(
    p: SdrProblem, cfg: SolverConfig = SolverConfig(), V0: np.ndarray | None = None
) -> LiftedEstimate:
    """Minimize the relaxed objective over the PSD cone.

    Projected gradient with step ``1/L`` (``L`` the exact curvature bound of
    the quadratic), optionally accelerated in the monotone FISTA form with
    gradient-based restart.  The accepted cost never increases.  Running out
    of iterations is reported through ``converged=False`` with the best iterate.
    """
    rf = _RealForm(p)
    if V0 is None:
        V0 = p.prior if (p.prior is not None and p.prior_weight) else np.zeros((rf.N, rf.N))
    x = rf.project(rf.to_x(np.asarray(V0, dtype=complex)))
    fx = rf.value(x)
    step = 1.0 / rf.lipschitz if rf.lipschitz > 0 else 0.0
    trace = []
    if cfg.record_trace:
        trace.append((0, fx, float(np.linalg.eigvalsh(rf.to_V(x))[0])))

    y, t = x.copy(), 1.0
    quiet = 0
    converged = fx <= cfg.abs_tolerance or step == 0.0
    it = 0
    while not converged and it < cfg.max_iterations:
        it += 1
        fy, gy = rf.value_and_grad(y)
        cand = rf.project(y - step * gy)
        fc = rf.value(cand)
        if cfg.acceleration:
            if fc <= fx:
                x_new, f_new = cand, fc
            else:
                x_new, f_new = x, fx
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            # restart momentum when the generalized gradient opposes the last move
            if fc > fx or float((y - cand) @ (cand - x)) < 0:
                y, t = x_new.copy(), 1.0
            else:
                y = x_new + (t / t_new) * (cand - x_new) + ((t - 1.0) / t_new) * (x_new - x)
                t = t_new
        else:
            x_new, f_new = (cand, fc) if fc <= fx else (x, fx)
            y = x_new
        if f_new > fx:
            raise AssertionError(f"cost increased at iteration {it}: {fx!r} -> {f_new!r}")
        change = (fx - f_new) / max(abs(fx), 1e-300)
        quiet = quiet + 1 if change <= cfg.rel_tolerance else 0
        x, fx = x_new, f_new
        if cfg.record_trace:
            trace.append((it, fx, float(np.linalg.eigvalsh(rf.to_V(x))[0])))
        if fx <= cfg.abs_tolerance or quiet >= cfg.patience:
            converged = True

    V = hermitian(rf.to_V(x))
    return LiftedEstimate(V, p.lifted_cost(V), it, converged, trace)


def _leading_vector(V: np.ndarray, reference_bus: int) -> np.ndarray:
    w, Q = np.linalg.eigh(hermitian(np.asarray(V, dtype=complex)))
    sigma = max(float(w[-1]), 0.0)
    return align_phase(math.sqrt(sigma) * Q[:, -1], reference_bus)


def _as_matrix(V) -> np.ndarray:
    return V.V if isinstance(V, LiftedEstimate) else np.asarray(V, dtype=complex)


def rank1_extract_eig(V: LiftedEstimate | np.ndarray, reference_bus: int = 1) -> np.ndarray:
    """``sqrt(sigma_1) q_1`` rotated so the reference entry has zero phase."""
    V = _as_matrix(V)
    v = _leading_vector(V, reference_bus)
    if not np.any(v):
        warnings.warn("rank-one extraction from a zero matrix", DegenerateLiftWarning, stacklevel=2)
    return v


def rank1_extract_randomized(
    V: LiftedEstimate | np.ndarray,
    p: SdrProblem,
    count: int,
    rng: np.random.Generator,
    reference_bus: int = 1,
) -> np.ndarray:
    """Gaussian randomization: draw ``count`` vectors from CN(0, V), keep the cheapest.

    The eigenvector candidate is always in the pool (and wins ties), so the
    result never costs more than :func:`rank1_extract_eig`.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    V = _as_matrix(V)
    best = _leading_vector(V, reference_bus)
    best_cost = p.vector_cost(best, reference_bus)
    S = psd_sqrt(V)
    n = V.shape[0]
    g = (rng.standard_normal((count, n)) + 1j * rng.standard_normal((count, n))) / math.sqrt(2.0)
    for xi in g @ S.T:
        c = p.vector_cost(xi, reference_bus)
        if c < best_cost:
            best, best_cost = align_phase(xi, reference_bus), c
    return best


def write_trace_csv(est: LiftedEstimate, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "cost", "min_eigenvalue"])
        for it, cost, lam in est.trace:
            w.writerow([it, f"{cost:.17g}", f"{lam:.17g}"])
