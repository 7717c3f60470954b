"""Freeze reference optima of small relaxed problems using an off-the-shelf conic solver.

Writes tests/fixtures/solver_oracle.json.  Needs cvxpy (``pip install .[oracle]``);
the test suite only reads the JSON.
"""

import json
from pathlib import Path

import cvxpy as cp
import numpy as np

OUT = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "solver_oracle.json"


def random_hermitian(rng, n):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (A + A.conj().T)


def instance(seed, n, terms, mu, lam):
    rng = np.random.default_rng(seed)
    H = [random_hermitian(rng, n) for _ in range(terms)]
    z = rng.standard_normal(terms)
    B = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    prior = B @ B.conj().T / n

    V = cp.Variable((n, n), hermitian=True)
    resid = [z[i] - cp.real(cp.trace(H[i] @ V)) for i in range(terms)]
    obj = lam * cp.sum_squares(cp.hstack(resid)) + mu * cp.sum_squares(V - prior)
    prob = cp.Problem(cp.Minimize(obj), [V >> 0])
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10)
    return {
        "seed": seed, "n": n, "mu": mu, "lam": lam,
        "H_re": [h.real.tolist() for h in H], "H_im": [h.imag.tolist() for h in H],
        "z": z.tolist(), "prior_re": prior.real.tolist(), "prior_im": prior.imag.tolist(),
        "optimum": float(prob.value),
    }


def main():
    cases = [
        instance(1, 2, 3, 1.0, 1.0),
        instance(2, 2, 3, 1.0, 1.0),
        instance(3, 3, 5, 1.0, 1.0),
        instance(4, 3, 4, 0.1, 2.0),
    ]
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(cases, indent=1))
    for c in cases:
        print(c["seed"], c["n"], c["optimum"])


if __name__ == "__main__":
    main()
