import json
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st

from conftest import random_hermitian, random_psd, random_state
from sdrmhe.grid import evaluate_measurement, full_plan, measurement_matrices
from sdrmhe.sdr import (
    SdrProblem,
    SolverConfig,
    align_phase,
    psd_project,
    rank1_extract_eig,
    rank1_extract_randomized,
    solve_relaxed,
    write_trace_csv,
)

FIXTURES = Path(__file__).parent / "fixtures" / "solver_oracle.json"


def embedded_projection(A):
    """PSD projection through the real 2N x 2N embedding (an independent eigen path)."""
    A = 0.5 * (A + A.conj().T)
    n = A.shape[0]
    R = np.block([[A.real, -A.imag], [A.imag, A.real]])
    w, U = scipy.linalg.eigh(R, driver="evr")
    Rp = (U * np.clip(w, 0, None)) @ U.T
    return Rp[:n, :n] + 1j * Rp[n:, :n]


def noiseless_problem(grid, v):
    H = measurement_matrices(grid, full_plan(grid))
    return SdrProblem(H, evaluate_measurement(H, v), 1.0)


def test_project_psd_is_identity():
    P = random_psd(np.random.default_rng(0), 4)
    np.testing.assert_allclose(psd_project(P), P, atol=1e-10)


def test_project_clamps():
    np.testing.assert_allclose(psd_project(np.diag([1.0, -1.0])), np.diag([1.0, 0.0]), atol=1e-15)


def test_project_matches_embedded_oracle():
    rng = np.random.default_rng(1)
    for _ in range(20):
        A = random_hermitian(rng, 6)
        assert np.linalg.norm(psd_project(A) - embedded_projection(A)) <= 1e-8


def test_project_rejects_nonfinite():
    with pytest.raises(ValueError):
        psd_project(np.array([[np.nan, 0], [0, 1]]))


@given(st.integers(0, 2**32 - 1))
def test_project_idempotent_and_nonexpansive(seed):
    rng = np.random.default_rng(seed)
    A, B = random_hermitian(rng, 5), random_hermitian(rng, 5)
    PA, PB = psd_project(A), psd_project(B)
    np.testing.assert_allclose(psd_project(PA), PA, atol=1e-10)
    assert np.linalg.norm(PA - PB) <= np.linalg.norm(A - B) + 1e-12
    assert np.linalg.eigvalsh(PA)[0] >= -1e-10


def test_problem_validation():
    H = np.eye(2)[None]
    with pytest.raises(ValueError):
        SdrProblem(H[:0], [], 1.0)
    with pytest.raises(ValueError):
        SdrProblem(H, [1.0], 0.0)
    with pytest.raises(ValueError):
        SdrProblem(np.array([[[0, 1], [0, 0]]]), [1.0], 1.0)
    with pytest.raises(ValueError):
        SdrProblem(H, [1.0], 1.0, prior_weight=1.0)
    with pytest.raises(ValueError):
        SolverConfig(rel_tolerance=0.0)


def test_prior_only_returns_prior():
    P = random_psd(np.random.default_rng(2), 3)
    est = solve_relaxed(SdrProblem(np.zeros((0, 3, 3)), [], 1.0, P, 1.0))
    np.testing.assert_allclose(est.V, P, atol=1e-12)
    assert est.cost == pytest.approx(0.0, abs=1e-20)


@pytest.mark.parametrize("grid_name", ["two_bus", "three_bus"])
def test_noiseless_full_measurements_rank_one(request, grid_name):
    grid = request.getfixturevalue(grid_name)
    v = align_phase(np.array([1, 0.9 * np.exp(-0.1j), 1.05 * np.exp(0.2j)])[:grid.bus_count])
    p = noiseless_problem(grid, v)
    assert p.lifted_cost(np.outer(v, v.conj())) <= 1e-20
    est = solve_relaxed(p)
    assert est.converged
    assert est.cost <= 1e-10
    w = np.linalg.eigvalsh(est.V)
    assert w[-2] <= 1e-5 * w[-1]
    assert np.max(np.abs(rank1_extract_eig(est) - v)) <= 1e-4


@pytest.mark.parametrize("case", json.loads(FIXTURES.read_text()), ids=lambda c: f"seed{c['seed']}")
def test_matches_conic_solver_fixture(case):
    H = np.array(case["H_re"]) + 1j * np.array(case["H_im"])
    P = np.array(case["prior_re"]) + 1j * np.array(case["prior_im"])
    est = solve_relaxed(SdrProblem(H, case["z"], case["lam"], P, case["mu"]))
    assert est.converged
    assert abs(est.cost - case["optimum"]) <= 1e-5 * case["optimum"]


def test_cost_trace_monotone():
    rng = np.random.default_rng(4)
    H = np.stack([random_hermitian(rng, 4) for _ in range(6)])
    p = SdrProblem(H, rng.standard_normal(6), 1.0, random_psd(rng, 4), 0.5)
    for accel in (True, False):
        est = solve_relaxed(p, SolverConfig(acceleration=accel, record_trace=True))
        costs = np.array([c for _, c, _ in est.trace])
        assert np.all(np.diff(costs) <= 0)
        assert min(m for _, _, m in est.trace) >= -1e-8


def test_stationary_along_feasible_directions():
    rng = np.random.default_rng(5)
    H = np.stack([random_hermitian(rng, 3) for _ in range(4)])
    p = SdrProblem(H, rng.standard_normal(4) + 3, 1.0, random_psd(rng, 3, rank=1), 0.3)
    est = solve_relaxed(p, SolverConfig(rel_tolerance=1e-13, patience=20))
    V = est.V
    assert np.max(np.abs(V - V.conj().T)) <= 1e-10
    assert np.linalg.eigvalsh(V)[0] >= -1e-8
    eps = 1e-6
    for _ in range(10):
        D = psd_project(V + random_hermitian(rng, 3)) - V
        D /= np.linalg.norm(D)
        deriv = (p.lifted_cost(V + eps * D) - p.lifted_cost(V - eps * D)) / (2 * eps)
        assert deriv >= -1e-4


def test_nonconvergence_is_flagged():
    rng = np.random.default_rng(6)
    H = np.stack([random_hermitian(rng, 3) for _ in range(5)])
    p = SdrProblem(H, rng.standard_normal(5), 1.0)
    est = solve_relaxed(p, SolverConfig(max_iterations=2))
    assert not est.converged and est.iterations == 2
    assert np.linalg.eigvalsh(est.V)[0] >= -1e-10


def test_solver_deterministic():
    rng = np.random.default_rng(7)
    H = np.stack([random_hermitian(rng, 3) for _ in range(4)])
    p = SdrProblem(H, rng.standard_normal(4), 1.0, random_psd(rng, 3), 1.0)
    a, b = solve_relaxed(p), solve_relaxed(p)
    assert np.array_equal(a.V, b.V) and a.iterations == b.iterations


def test_extract_exact_rank_one():
    v = align_phase(random_state(np.random.default_rng(8), 5))
    np.testing.assert_allclose(rank1_extract_eig(np.outer(v, v.conj())), v, atol=1e-8)


def test_extract_diagonal():
    np.testing.assert_allclose(rank1_extract_eig(np.diag([4.0, 1.0])), [2, 0], atol=1e-12)


def test_extract_zero_reference_entry_falls_back():
    v = np.array([0, 1j, 0.5])
    w = rank1_extract_eig(np.outer(v, v.conj()))
    assert abs(w[1].imag) <= 1e-12 and w[1].real > 0
    np.testing.assert_allclose(np.outer(w, w.conj()), np.outer(v, v.conj()), atol=1e-12)


def test_extract_zero_matrix_warns():
    with pytest.warns(RuntimeWarning):
        w = rank1_extract_eig(np.zeros((3, 3)))
    assert not np.any(w)


def test_extract_is_best_rank_one_probe():
    rng = np.random.default_rng(9)
    for _ in range(5):
        V = random_psd(rng, 4)
        w = rank1_extract_eig(V)
        best = np.linalg.norm(V - np.outer(w, w.conj()))
        U = rng.standard_normal((1000, 4)) + 1j * rng.standard_normal((1000, 4))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        for u in U:
            s = max((u.conj() @ V @ u).real, 0.0)  # optimal nonnegative scale for u u^H
            assert best <= np.linalg.norm(V - s * np.outer(u, u.conj())) + 1e-12


def test_randomized_on_rank_one(two_bus):
    v = align_phase(np.array([1, 0.9 * np.exp(-0.1j)]))
    p = noiseless_problem(two_bus, v)
    w = rank1_extract_randomized(np.outer(v, v.conj()), p, 50, np.random.default_rng(0))
    assert p.vector_cost(w) == pytest.approx(p.vector_cost(v), abs=1e-20)


def test_randomized_never_worse_than_eig():
    rng = np.random.default_rng(10)
    H = np.stack([random_hermitian(rng, 3) for _ in range(5)])
    p = SdrProblem(H, rng.standard_normal(5), 1.0)
    for count in (1, 20):
        V = random_psd(rng, 3)
        w = rank1_extract_randomized(V, p, count, rng)
        assert p.vector_cost(w) <= p.vector_cost(rank1_extract_eig(V))
    with pytest.raises(ValueError):
        rank1_extract_randomized(V, p, 0, rng)


def test_randomized_close_to_eig_on_noiseless(two_bus):
    v = align_phase(np.array([1, 0.9 * np.exp(-0.1j)]))
    p = noiseless_problem(two_bus, v)
    est = solve_relaxed(p)
    a = rank1_extract_eig(est)
    b = rank1_extract_randomized(est, p, 100, np.random.default_rng(1))
    assert np.linalg.norm(a - b) <= 1e-3


def test_trace_csv(tmp_path):
    rng = np.random.default_rng(11)
    p = SdrProblem(random_hermitian(rng, 2), [1.0], 1.0)
    est = solve_relaxed(p, SolverConfig(record_trace=True))
    write_trace_csv(est, tmp_path / "trace.csv")
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == "iteration,cost,min_eigenvalue"
    assert len(lines) == len(est.trace) + 1
