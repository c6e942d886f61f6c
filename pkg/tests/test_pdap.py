import numpy as np
import pytest

from sparseheat import (
    DiscreteMeasure,
    NodalField,
    build_uniform,
    l2_inner,
    l2_norm,
)
from sparseheat import pdap
from sparseheat.pdap import (
    PdapConfig,
    _subgradient_residual,
    primal_dual_gap,
    select_candidate,
    solve_subproblem,
)
from sparseheat.timestepping import HeatModel, TimeGrid, forward_dirac


def make_model(n=8, M=8, r=0):
    return HeatModel(build_uniform(n), TimeGrid.uniform(0.1, M), r)


def test_config_validation():
    with pytest.raises(ValueError):
        PdapConfig(alpha=0.0)
    with pytest.raises(ValueError):
        PdapConfig(alpha=1.0, tol=-1.0)
    with pytest.raises(ValueError):
        PdapConfig(alpha=1.0, tol_mode="weird")


def test_subproblem_1d_shrinkage():
    beta, _ = solve_subproblem(np.array([[1.0]]), np.array([2.0]), 0.5,
                               np.zeros(1), 1e-12, 50)
    assert beta[0] == pytest.approx(1.5, abs=1e-12)


def test_subproblem_1d_dead_zone():
    beta, _ = solve_subproblem(np.array([[1.0]]), np.array([0.4]), 0.5,
                               np.zeros(1), 1e-12, 50)
    assert beta[0] == 0.0


def test_subproblem_2d_separable():
    G = np.eye(2)
    c = np.array([3.0, -0.2])
    beta, _ = solve_subproblem(G, c, 1.0, np.zeros(2), 1e-12, 50)
    assert np.allclose(beta, [2.0, 0.0], atol=1e-12)


def test_subproblem_2d_against_grid_search():
    # Blockwise exhaustive search over [-4, 4]^2 at resolution 1e-3.
    G = np.eye(2)
    c = np.array([3.0, -0.2])
    alpha = 1.0
    grid = np.arange(-4.0, 4.0 + 1e-9, 1e-3)
    best_val, best_pt = np.inf, None
    for chunk_start in range(0, grid.size, 500):
        b1 = grid[chunk_start : chunk_start + 500][:, None]
        b2 = grid[None, :]
        vals = (
            0.5 * (b1**2 + b2**2)
            - c[0] * b1
            - c[1] * b2
            + alpha * (np.abs(b1) + np.abs(b2))
        )
        k = np.unravel_index(np.argmin(vals), vals.shape)
        if vals[k] < best_val:
            best_val = vals[k]
            best_pt = (float(b1[k[0], 0]), float(b2[0, k[1]]))
    beta, _ = solve_subproblem(G, c, alpha, np.zeros(2), 1e-12, 50)
    assert abs(beta[0] - best_pt[0]) <= 1e-3
    assert abs(beta[1] - best_pt[1]) <= 1e-3


def test_subproblem_handles_near_collinear_columns():
    # Column pairs from neighboring mesh nodes are almost identical; the
    # solver must still reach the first-order tolerance.
    rng = np.random.default_rng(9)
    for _ in range(25):
        m = int(rng.integers(2, 7))
        base = rng.standard_normal((40, m))
        base[:, 1:] = base[:, [0]] + 10.0 ** (-rng.uniform(2, 7)) * base[:, 1:]
        G = base.T @ base
        c = base.T @ rng.standard_normal(40)
        alpha = 10.0 ** (-rng.uniform(0.5, 3)) * np.abs(c).max()
        tol = 1e-10 * max(1.0, np.abs(c).max())
        beta, _ = solve_subproblem(G, c, alpha, np.zeros(m), tol, 100)
        assert _subgradient_residual(G, c, alpha, beta) <= tol


def test_subproblem_warm_start_noop():
    G = np.array([[2.0]])
    c = np.array([3.0])
    beta0 = np.array([(3.0 - 0.5) / 2.0])
    beta, iters = solve_subproblem(G, c, 0.5, beta0, 1e-12, 50)
    assert iters == 0
    assert beta[0] == beta0[0]


def test_select_candidate_prefers_largest_and_lowest():
    mesh = build_uniform(4)
    interior = mesh.interior_nodes()
    z = NodalField(mesh, np.zeros(mesh.num_nodes))
    z.values[interior[3]] = -2.0
    z.values[interior[5]] = 1.5
    assert select_candidate(z, interior) == interior[3]
    # Exact tie: the lower node index wins.
    z.values[interior[5]] = 2.0
    z.values[interior[3]] = -2.0
    assert select_candidate(z, interior) == interior[3]
    zero = NodalField(mesh, np.zeros(mesh.num_nodes))
    assert select_candidate(zero, interior) == interior[0]


def test_gap_forms_agree_after_subproblem():
    # Use a weight small enough that the solution keeps a nonzero support,
    # so the closed gap form applies at the final iterate.
    model = make_model(n=8, M=4)
    rng = np.random.default_rng(1)
    u_d = NodalField(model.mesh, rng.standard_normal(model.mesh.num_nodes))
    cfg = PdapConfig(alpha=0.01, tol=1e-10, max_outer_iterations=60)
    res = pdap.run(model, u_d, cfg)
    assert len(res.measure) > 0
    z = pdap.adjoint_state(model, u_d, res.measure)
    ident = primal_dual_gap(res.measure, z, cfg.alpha, res.m0, form="identity")
    general = primal_dual_gap(res.measure, z, cfg.alpha, res.m0, form="general")
    assert ident == pytest.approx(general, abs=1e-10 * max(res.m0, 1.0))
    assert all(r.phi >= -1e-12 for r in res.log.records)


def test_gap_zero_when_max_equals_alpha():
    mesh = build_uniform(4)
    z = NodalField(mesh, np.zeros(mesh.num_nodes))
    z.values[mesh.interior_nodes()[0]] = 0.05
    assert primal_dual_gap(DiscreteMeasure(), z, 0.05, 3.0) == pytest.approx(0.0)


def test_run_zero_data_converges_immediately():
    model = make_model(n=4, M=2)
    u_d = NodalField(model.mesh, np.zeros(model.mesh.num_nodes))
    res = pdap.run(model, u_d, PdapConfig(alpha=1e-3, tol=1e-8))
    assert res.converged
    assert len(res.measure) == 0
    assert res.gap == 0.0
    assert len(res.log) == 1


def test_run_recovers_single_source_structure():
    model = make_model(n=8, M=8)
    node = model.interior[24]
    truth = DiscreteMeasure([model.mesh.nodes[node]], [4.0])
    u_d = forward_dirac(model, truth)
    alpha = 1e-3
    res = pdap.run(model, u_d, PdapConfig(alpha=alpha, tol=1e-9))
    assert res.converged
    zi = res.adjoint.values
    assert np.abs(zi).max() <= alpha + 1e-8
    for n_, b in zip(res.active_nodes, res.coefficients):
        assert zi[n_] + alpha * np.sign(b) == pytest.approx(0.0, abs=1e-8)
    # The dominant recovered atom sits at the true node.
    dominant = res.active_nodes[int(np.argmax(np.abs(res.coefficients)))]
    assert dominant == node


def test_run_monotone_and_gap_bounds():
    model = make_model(n=8, M=8)
    rng = np.random.default_rng(2)
    u_d = NodalField(model.mesh, rng.standard_normal(model.mesh.num_nodes))
    res = pdap.run(model, u_d, PdapConfig(alpha=0.02, tol=1e-10))
    assert res.converged
    records = res.log.records
    for a, b in zip(records, records[1:]):
        assert b.objective <= a.objective + 1e-12
    for r in records[1:]:
        assert r.phi >= -1e-12
        # The gap bounds the distance to the final objective.
        assert r.objective - res.objective <= r.phi + 1e-10


def test_run_objective_matches_recompute():
    model = make_model(n=8, M=4)
    rng = np.random.default_rng(3)
    u_d = NodalField(model.mesh, rng.standard_normal(model.mesh.num_nodes))
    cfg = PdapConfig(alpha=0.05, tol=1e-9)
    res = pdap.run(model, u_d, cfg)
    recomputed = pdap.objective(model, u_d, res.measure, cfg.alpha)
    assert res.objective == pytest.approx(recomputed, rel=1e-10, abs=1e-12)


def test_run_flags_non_convergence():
    model = make_model(n=8, M=4)
    rng = np.random.default_rng(4)
    u_d = NodalField(model.mesh, rng.standard_normal(model.mesh.num_nodes))
    res = pdap.run(model, u_d, PdapConfig(alpha=1e-4, tol=1e-12, max_outer_iterations=1))
    assert not res.converged
    assert len(res.measure) >= 1


def test_run_accepts_nodal_warm_start():
    model = make_model(n=8, M=4)
    node = model.interior[10]
    truth = DiscreteMeasure([model.mesh.nodes[node]], [2.0])
    u_d = forward_dirac(model, truth)
    q0 = DiscreteMeasure([model.mesh.nodes[node]], [1.0])
    res = pdap.run(model, u_d, PdapConfig(alpha=1e-3, tol=1e-9), q0=q0)
    assert res.converged
    with pytest.raises(ValueError):
        pdap.run(model, u_d, PdapConfig(alpha=1e-3), q0=DiscreteMeasure([(0.33, 0.41)], [1.0]))


def test_objective_of_empty_measure():
    model = make_model(n=4, M=2)
    rng = np.random.default_rng(8)
    u_d = NodalField(model.mesh, rng.standard_normal(model.mesh.num_nodes))
    val = pdap.objective(model, u_d, DiscreteMeasure(), alpha=0.3)
    assert val == pytest.approx(0.5 * l2_norm(model.mass, u_d) ** 2, rel=1e-12)
    assert val >= 0.0


def test_adjoint_state_zero_control():
    model = make_model(n=4, M=2)
    rng = np.random.default_rng(5)
    u_d = NodalField(model.mesh, rng.standard_normal(model.mesh.num_nodes))
    z = pdap.adjoint_state(model, u_d, DiscreteMeasure())
    from sparseheat.timestepping import adjoint_dirac

    minus = NodalField(model.mesh, -u_d.values)
    assert np.allclose(z.values, adjoint_dirac(model, minus).values, atol=1e-14)


def test_iteration_log_csv(tmp_path):
    model = make_model(n=4, M=2)
    rng = np.random.default_rng(6)
    u_d = NodalField(model.mesh, rng.standard_normal(model.mesh.num_nodes))
    res = pdap.run(model, u_d, PdapConfig(alpha=0.05, tol=1e-8))
    path = tmp_path / "log.csv"
    res.log.write_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "n,phi,objective,support_size,new_node,subproblem_iters"
    assert len(lines) == len(res.log) + 1
