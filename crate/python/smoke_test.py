"""Smoke test for the cbmm_py extension module."""

import json
import math

import cbmm_py


def main():
    m, truth = cbmm_py.simulate(n_models=80, n_items=60, rho=0.3, sparsity=0.2, seed=5)
    assert (m.n_models, m.n_items) == (80, 60)
    assert abs(m.missing_rate - 0.3) < 0.05

    r = cbmm_py.fit(m, seed=1)
    assert r.converged
    trace = r.loss_trace
    assert all(b <= a + 1e-10 for a, b in zip(trace, trace[1:]))
    assert min(r.a) >= 0.0

    ell = cbmm_py.loss(m, r.theta, r.a, r.b)
    assert math.isclose(ell, r.final_loss, rel_tol=1e-9)

    scores = cbmm_py.metrics(r, truth["theta"], truth["a"], truth["b"], scores=truth["scores"])
    assert scores["spearman_theta"] > 0.5, scores
    assert "hellinger" in scores

    again = cbmm_py.fit(m, seed=1)
    assert again.theta == r.theta
    assert cbmm_py.equivalence_check(r, again) == (1.0, 1.0, 1.0)

    small = cbmm_py.ResponseMatrix.from_rows([[1, -1, None], [1, 1, -1], [-1, 0, 1]])
    assert small.n_observed == 7
    o = cbmm_py.fit_oracle(small, max_iter=200)
    assert len(o.theta) == 3

    payload = json.loads(r.to_json())
    assert payload["theta"] == r.theta

    try:
        cbmm_py.fit(m, sigma=0.0)
    except ValueError:
        pass
    else:
        raise AssertionError("sigma 0 accepted")

    print(f"ok: {r.iterations} sweeps, loss {r.final_loss:.3f}, rho_theta {scores['spearman_theta']:.3f}")


if __name__ == "__main__":
    main()
