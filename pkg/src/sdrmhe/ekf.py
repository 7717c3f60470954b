"""Extended Kalman filter on the rectangular real state ``x = [Re v; Im v]``.

Each measurement ``v^H H v`` becomes the real quadratic form ``x^T Ht x``
with ``Ht = [[Re H, -Im H], [Im H, Re H]]``, so its gradient is ``2 Ht x``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def real_embedding(H: np.ndarray) -> np.ndarray:
    """``[[Re H, -Im H], [Im H, Re H]]`` for a matrix or a stack of matrices."""
    H = np.asarray(H)
    top = np.concatenate([H.real, -H.imag], axis=-1)
    bottom = np.concatenate([H.imag, H.real], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def to_real(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    return np.concatenate([v.real, v.imag])


def to_complex(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1] // 2
    return x[..., :n] + 1j * x[..., n:]


def measurement_function(Ht: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.einsum("i,lij,j->l", x, Ht, x)


def measurement_jacobian(Ht: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Rows ``2 (Ht_l x)^T``; ``Ht`` is a stack of real embeddings, shape ``(L, 2N, 2N)``."""
    Ht = np.asarray(Ht)
    if Ht.shape[-1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: Ht {Ht.shape}, x {x.shape}")
    return 2.0 * (Ht @ x)


@dataclass
class EkfState:
    mean: np.ndarray  # (2N,)
    cov: np.ndarray   # (2N, 2N)


@dataclass
class EkfRun:
    estimates: np.ndarray   # (K, N) complex, v_{k|k}
    regularized: np.ndarray  # (K,) bool, innovation covariance had to be regularized
    diverged: bool


def _update(state: EkfState, z, Ht, R, linear=None):
    x, P = state.mean, state.cov
    if linear is None:
        h = measurement_function(Ht, x)
        Jm = measurement_jacobian(Ht, x)
    else:
        Jm = linear
        h = Jm @ x
    S = Jm @ P @ Jm.T + R
    S = 0.5 * (S + S.T)
    flagged = False
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        S = S + 1e-10 * np.eye(S.shape[0])
        flagged = True
    G = np.linalg.solve(S, Jm @ P).T
    x = x + G @ (z - h)
    I_GJ = np.eye(P.shape[0]) - G @ Jm
    P = I_GJ @ P @ I_GJ.T + G @ R @ G.T
    return EkfState(x, 0.5 * (P + P.T)), flagged


def ekf_run(
    H: np.ndarray,
    measurements: np.ndarray,
    transitions: np.ndarray,
    init: EkfState,
    Q: np.ndarray,
    R: np.ndarray,
    linear_jacobian: np.ndarray | None = None,
) -> EkfRun:
    """Filter ``z_0..z_{K-1}``; ``init`` is the prior for ``v_0``.

    ``H`` is the complex measurement stack ``(L, N, N)``.  Passing
    ``linear_jacobian`` replaces ``h`` by that constant linear map, turning
    the filter into an ordinary Kalman filter.  Non-finite numbers stop the
    filter; the remaining estimates are NaN and the run is marked diverged.
    """
    measurements = np.asarray(measurements, dtype=float)
    K = measurements.shape[0]
    Ht = real_embedding(np.asarray(H, dtype=complex))
    n = init.mean.shape[0] // 2
    R = np.asarray(R, dtype=float)
    state = EkfState(np.asarray(init.mean, float).copy(), np.asarray(init.cov, float).copy())
    out = np.full((K, n), np.nan + 1j * np.nan)
    flags = np.zeros(K, dtype=bool)
    diverged = False
    with np.errstate(all="ignore"):
        for k in range(K):
            if k > 0:
                Ft = real_embedding(np.asarray(transitions[k - 1], dtype=complex))
                state = EkfState(Ft @ state.mean, Ft @ state.cov @ Ft.T + Q)
            try:
                state, flags[k] = _update(state, measurements[k], Ht, R, linear_jacobian)
            except np.linalg.LinAlgError:
                diverged = True
                break
            if not (np.all(np.isfinite(state.mean)) and np.all(np.isfinite(state.cov))):
                diverged = True
                break
            out[k] = to_complex(state.mean)
    return EkfRun(out, flags, diverged)


# Process noise m*exp(j*theta), m and theta uniform on [-a, a]: E|xi|^2 = a^2/3
# split evenly over the real and imaginary components.
PROCESS_VARIANCE_FACTOR = 0.5


def default_covariances(noise, n: int, L: int) -> tuple[np.ndarray, np.ndarray]:
    """Isotropic ``(Q, R)`` matched to the uniform noise laws of ``noise``."""
    q = noise.process_mag_bound ** 2 / 3.0 * PROCESS_VARIANCE_FACTOR
    r = noise.meas_bound ** 2 / 3.0
    return q * np.eye(2 * n), max(r, 1e-12) * np.eye(L)
