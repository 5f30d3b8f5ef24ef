import itertools

import numpy as np
import pytest

from edgesplit.errors import InfeasibleDecisionError
from edgesplit.fpcore import AuxVars, aux_optimal, grad_surrogate, surrogate_value
from edgesplit.inner_solver import (
    InnerConfig,
    ao_solve,
    default_init,
    kkt_residual,
    solve_alpha,
    solve_bandwidth,
    solve_edge_freq,
    solve_inner,
    solve_power,
    solve_user_freq,
)
from edgesplit.model import (
    Channel,
    Decision,
    EdgeServer,
    LlmConfig,
    Scenario,
    UserDevice,
    Weights,
    Workspace,
    check_decision,
    random_interior_decision,
)

from conftest import toy_scenario


def _scenario_32_layers(n=1, m=1, ws_weight=0.0):
    llm = LlmConfig(total_layers=32, batch_size=1, hidden_dim=1, lipschitz=1.0)
    users = tuple(UserDevice(tokens=1, cores=2.0, flops_per_cycle=1.0, f_max=3.0,
                             p_max=2.0, kappa1=0.1, dataset_size=100.0)
                  for _ in range(n))
    servers = tuple(EdgeServer(cores=4.0, flops_per_cycle=1.0, f_max=10.0,
                               b_max=5.0, kappa2=0.05) for _ in range(m))
    gain = np.full((n, m), 1.5)
    w = Weights(1.0, 1.0, ws_weight) if ws_weight else Weights(1.0, 1.0, 1e-300)
    if ws_weight == 0.0:
        w = Weights(1.0, 1.0, 0.0)
    return Scenario(llm, users, servers, Channel(gain, 0.5), w)


class TestAlphaBlock:
    def test_symmetric_midpoint(self):
        sc = _scenario_32_layers(ws_weight=0.0)
        ws = Workspace(sc)
        dec = random_interior_decision(sc, np.random.default_rng(0),
                                       chi=np.array([[1.0]]))
        aux = AuxVars(np.array([1.0]), np.array([[1.0]]), np.array([[1.0]]))
        assert solve_alpha(ws, dec, aux)[0] == pytest.approx(16.0, rel=1e-12)

    def test_clamps_to_lower_bound(self):
        sc = _scenario_32_layers(ws_weight=0.0)
        ws = Workspace(sc)
        dec = random_interior_decision(sc, np.random.default_rng(0),
                                       chi=np.array([[1.0]]))
        aux = AuxVars(np.array([1e6]), np.array([[1.0]]), np.array([[1.0]]))
        assert solve_alpha(ws, dec, aux)[0] == 1.0

    def test_stability_weight_pushes_left(self):
        ws0 = Workspace(_scenario_32_layers(ws_weight=0.0))
        ws1 = Workspace(_scenario_32_layers(ws_weight=5.0))
        dec = random_interior_decision(_scenario_32_layers(), np.random.default_rng(0),
                                       chi=np.array([[1.0]]))
        aux = AuxVars(np.array([1.0]), np.array([[1.0]]), np.array([[1.0]]))
        a0 = solve_alpha(ws0, dec, aux)[0]
        a1 = solve_alpha(ws1, dec, aux)[0]
        assert a1 < a0

    def test_block_optimality_first_order(self):
        sc = toy_scenario(n=4, m=2, seed=1)
        ws = Workspace(sc)
        rng = np.random.default_rng(2)
        dec = random_interior_decision(sc, rng)
        aux = aux_optimal(ws, dec)
        dec.alpha = solve_alpha(ws, dec, aux)
        g = grad_surrogate(ws, dec, aux).d_alpha
        for i in range(ws.n):
            if 1.0 + 1e-9 < dec.alpha[i] < ws.alpha_cap - 1e-9:
                assert abs(g[i]) < 1e-8
            elif dec.alpha[i] <= 1.0 + 1e-9:
                assert g[i] >= -1e-8
            else:
                assert g[i] <= 1e-8


class TestUserFreqBlock:
    def test_cube_root(self):
        # wt=2, kappa1=1, we=1  ->  f* = (2 / (2*1*1))^(1/3) = 1
        llm = LlmConfig(total_layers=4, batch_size=1, hidden_dim=1, lipschitz=1.0)
        user = UserDevice(tokens=1, cores=1.0, flops_per_cycle=1.0, f_max=3.0,
                          p_max=1.0, kappa1=1.0, dataset_size=5.0)
        server = EdgeServer(cores=1.0, flops_per_cycle=1.0, f_max=3.0, b_max=1.0,
                            kappa2=1.0)
        sc = Scenario(llm, (user,), (server,), Channel(np.array([[1.0]]), 1.0),
                      Weights(2.0, 1.0, 1.0))
        ws = Workspace(sc)
        dec = random_interior_decision(sc, np.random.default_rng(0))
        assert solve_user_freq(ws, dec, InnerConfig())[0] == pytest.approx(1.0, rel=1e-12)

    def test_projection_to_cap(self):
        llm = LlmConfig(total_layers=4, batch_size=1, hidden_dim=1, lipschitz=1.0)
        user = UserDevice(tokens=1, cores=1.0, flops_per_cycle=1.0, f_max=0.5,
                          p_max=1.0, kappa1=1.0, dataset_size=5.0)
        server = EdgeServer(cores=1.0, flops_per_cycle=1.0, f_max=3.0, b_max=1.0,
                            kappa2=1.0)
        sc = Scenario(llm, (user,), (server,), Channel(np.array([[1.0]]), 1.0),
                      Weights(2.0, 1.0, 1.0))
        ws = Workspace(sc)
        dec = random_interior_decision(sc, np.random.default_rng(0))
        assert solve_user_freq(ws, dec, InnerConfig())[0] == 0.5

    def test_no_energy_weight_goes_to_cap(self):
        sc = toy_scenario(n=3, m=2, seed=3, weights=(1.0, 0.0, 1.0))
        ws = Workspace(sc)
        dec = random_interior_decision(sc, np.random.default_rng(1))
        np.testing.assert_allclose(solve_user_freq(ws, dec, InnerConfig()),
                                   ws.f_max_user)


class TestEdgeFreqBlock:
    def test_single_user_takes_everything(self):
        sc = toy_scenario(n=1, m=1, seed=4)
        ws = Workspace(sc)
        dec = random_interior_decision(sc, np.random.default_rng(2),
                                       chi=np.array([[1.0]]))
        aux = aux_optimal(ws, dec)
        f = solve_edge_freq(ws, dec, aux, InnerConfig(), dec.chi > 0)
        assert f[0, 0] == pytest.approx(ws.f_max_edge[0], rel=1e-12)

    def test_identical_users_split_evenly(self):
        sc = toy_scenario(n=2, m=1, seed=5)
        ws = Workspace(sc)
        chi = np.ones((2, 1))
        dec = default_init(sc, chi)
        aux = AuxVars(np.ones(2), np.ones((2, 1)), np.full((2, 1), 0.7))
        dec.alpha = np.array([3.0, 3.0])
        f = solve_edge_freq(ws, dec, aux, InnerConfig(), chi > 0)
        # identical q and identical psi would split evenly; users differ in psi
        aux_eq = AuxVars(np.ones(2), np.ones((2, 1)), np.full((2, 1), 0.7))
        ws.psi = np.full(2, ws.psi[0])
        f = solve_edge_freq(ws, dec, aux_eq, InnerConfig(), chi > 0)
        assert f[0, 0] == pytest.approx(f[1, 0], rel=1e-10)
        assert f[0, 0] + f[1, 0] == pytest.approx(ws.f_max_edge[0], rel=1e-12)

    def test_heavier_q_gets_more_in_surplus_regime(self):
        # two identical users, q1 = 4 q2, budget forcing over-allocation
        llm = LlmConfig(total_layers=8, batch_size=1, hidden_dim=1, lipschitz=1.0)
        users = tuple(UserDevice(tokens=1, cores=84.0, flops_per_cycle=1.0,
                                 f_max=4.0, p_max=2.0, kappa1=1.0,
                                 dataset_size=10.0) for _ in range(2))
        server = EdgeServer(cores=84.0, flops_per_cycle=1.0, f_max=4.0, b_max=4.0,
                            kappa2=1.0)
        sc = Scenario(llm, users, (server,), Channel(np.ones((2, 1)), 1.0),
                      Weights(1.0, 1.0, 1.0))
        ws = Workspace(sc)
        chi = np.ones((2, 1))
        dec = default_init(sc, chi)
        q = np.array([[0.8], [0.2]])
        aux = AuxVars(np.ones(2), np.ones((2, 1)), q)
        f = solve_edge_freq(ws, dec, aux, InnerConfig(), chi > 0)
        assert f[0, 0] > f[1, 0]
        # brute-force 2-D oracle over the equality segment
        grid = np.linspace(1e-3, ws.f_max_edge[0] - 1e-3, 4001)

        def seg_cost(f1):
            f2 = ws.f_max_edge[0] - f1
            b1 = ws.wt * ws.psi[0] / (f1 * 84.0) + ws.we * 1.0 * f1**2 * ws.psi[0] / 84.0
            b2 = ws.wt * ws.psi[1] / (f2 * 84.0) + ws.we * 1.0 * f2**2 * ws.psi[1] / 84.0
            return b1**2 / (4 * q[0, 0]) + b2**2 / (4 * q[1, 0])

        best = grid[np.argmin([seg_cost(x) for x in grid])]
        assert f[0, 0] == pytest.approx(best, abs=2e-3)


class TestPowerAndBandwidth:
    def test_interior_power_stationary(self):
        sc = toy_scenario(n=1, m=1, seed=6)
        ws = Workspace(sc)
        dec = random_interior_decision(sc, np.random.default_rng(3),
                                       chi=np.array([[1.0]]))
        # choose aux so the optimum is interior, then check stationarity by FD
        aux = AuxVars(np.ones(1), np.array([[0.05]]), np.ones((1, 1)))
        dec.p = solve_power(ws, dec, aux, InnerConfig())
        if 1e-9 < dec.p[0] < ws.p_max[0] * (1 - 1e-9):
            h = 1e-7
            up, dn = dec.copy(), dec.copy()
            up.p = dec.p + h
            dn.p = dec.p - h
            fd = (surrogate_value(ws, up, aux) - surrogate_value(ws, dn, aux)) / (2 * h)
            scale = 1 + abs(surrogate_value(ws, dec, aux))
            assert abs(fd) <= 1e-8 * scale

    def test_power_cap_binds_when_rate_term_dominates(self):
        sc = toy_scenario(n=1, m=1, seed=7)
        ws = Workspace(sc)
        dec = random_interior_decision(sc, np.random.default_rng(4),
                                       chi=np.array([[1.0]]))
        aux = AuxVars(np.ones(1), np.array([[1e-9]]), np.ones((1, 1)))
        p = solve_power(ws, dec, aux, InnerConfig())
        assert p[0] == pytest.approx(ws.p_max[0])

    def test_power_floor_binds_when_quadratic_dominates(self):
        sc = toy_scenario(n=1, m=1, seed=7)
        ws = Workspace(sc)
        dec = random_interior_decision(sc, np.random.default_rng(4),
                                       chi=np.array([[1.0]]))
        aux = AuxVars(np.ones(1), np.array([[1e9]]), np.ones((1, 1)))
        cfg = InnerConfig()
        p = solve_power(ws, dec, aux, cfg)
        assert p[0] == pytest.approx(cfg.p_min_frac * ws.p_max[0])

    def test_identical_users_equal_bandwidth(self):
        llm = LlmConfig(total_layers=8, batch_size=1, hidden_dim=1, lipschitz=1.0)
        users = tuple(UserDevice(tokens=3, cores=2.0, flops_per_cycle=1.0,
                                 f_max=3.0, p_max=2.0, kappa1=0.1,
                                 dataset_size=10.0) for _ in range(2))
        server = EdgeServer(cores=4.0, flops_per_cycle=1.0, f_max=8.0, b_max=6.0,
                            kappa2=0.1)
        sc = Scenario(llm, users, (server,), Channel(np.ones((2, 1)), 0.5),
                      Weights(1.0, 1.0, 1.0))
        ws = Workspace(sc)
        chi = np.ones((2, 1))
        dec = default_init(sc, chi)
        dec.p = np.array([1.0, 1.0])
        aux = aux_optimal(ws, dec)
        b = solve_bandwidth(ws, dec, aux, InnerConfig())
        assert b[0, 0] == pytest.approx(b[1, 0], rel=1e-9)
        assert b[:, 0].sum() == pytest.approx(6.0, rel=1e-12)


class TestSolveInner:
    def test_fixed_point_returns_in_one_sweep(self):
        sc = toy_scenario(n=2, m=2, seed=8)
        ws = Workspace(sc)
        dec = random_interior_decision(sc, np.random.default_rng(5))
        aux = aux_optimal(ws, dec)
        first, _ = solve_inner(ws, dec, aux, InnerConfig())
        again, sweeps = solve_inner(ws, first, aux, InnerConfig())
        assert sweeps == 1
        assert surrogate_value(ws, again, aux) == pytest.approx(
            surrogate_value(ws, first, aux), rel=1e-12)

    def test_1x1_matches_grid_search(self):
        sc = toy_scenario(n=1, m=1, seed=9)
        ws = Workspace(sc)
        chi = np.array([[1.0]])
        dec = default_init(sc, chi)
        aux = aux_optimal(ws, dec)
        out, _ = solve_inner(ws, dec, aux, InnerConfig())
        k_solver = surrogate_value(ws, out, aux)

        cfg = InnerConfig()
        best = np.inf
        # b and f_edge are pinned by the single-user equalities
        for a in np.linspace(1.0, ws.alpha_cap, 24):
            for p in np.linspace(cfg.p_min_frac * ws.p_max[0], ws.p_max[0], 24):
                for f in np.linspace(0.05 * ws.f_max_user[0], ws.f_max_user[0], 24):
                    cand = Decision([a], [p], [[ws.b_max[0]]], [f],
                                    [[ws.f_max_edge[0]]], chi)
                    best = min(best, surrogate_value(ws, cand, aux))
        assert k_solver <= best * (1 + 5e-3)

    def test_descent_on_random_instance(self):
        sc = toy_scenario(n=3, m=2, seed=10)
        ws = Workspace(sc)
        dec = random_interior_decision(sc, np.random.default_rng(6))
        aux = aux_optimal(ws, dec)
        k0 = surrogate_value(ws, dec, aux)
        out, _ = solve_inner(ws, dec, aux, InnerConfig())
        assert surrogate_value(ws, out, aux) <= k0 + 1e-12

    def test_infeasible_init_rejected(self):
        sc = toy_scenario(n=2, m=2, seed=11)
        dec = random_interior_decision(sc, np.random.default_rng(7))
        dec.p[0] = 100.0
        with pytest.raises(InfeasibleDecisionError):
            ao_solve(sc, dec.chi, init=dec)


class TestAoSolve:
    def test_surrogate_sequence_monotone_many_scenarios(self):
        # descent property only, so a looser stop keeps 20 solves quick
        cfg = InnerConfig(ao_tol=1e-8)
        for seed in range(20):
            sc = toy_scenario(n=3, m=2, seed=100 + seed)
            chi = random_interior_decision(sc, np.random.default_rng(seed)).chi
            dec, trace, resid = ao_solve(sc, chi, cfg=cfg)
            ks = np.array(trace.k_values)
            assert np.all(np.diff(ks) <= 1e-10), f"seed {seed}"
            assert trace.converged

    def test_final_surrogate_gap_closed(self):
        sc = toy_scenario(n=4, m=2, seed=12)
        ws = Workspace(sc)
        chi = random_interior_decision(sc, np.random.default_rng(8)).chi
        dec, trace, _ = ao_solve(sc, chi)
        h = ws.objective(dec)
        k = surrogate_value(ws, dec, aux_optimal(ws, dec))
        assert abs(k - h) <= 1e-9 * (1 + abs(h))

    def test_objective_non_increasing(self):
        sc = toy_scenario(n=3, m=2, seed=13)
        chi = random_interior_decision(sc, np.random.default_rng(9)).chi
        _, trace, _ = ao_solve(sc, chi)
        hs = np.array(trace.h_values)
        assert np.all(np.diff(hs) <= 1e-10)

    def test_feasibility_preserved(self):
        sc = toy_scenario(n=4, m=3, seed=14)
        ws = Workspace(sc)
        chi = random_interior_decision(sc, np.random.default_rng(10)).chi
        dec, _, _ = ao_solve(sc, chi)
        assert not check_decision(sc, dec)
        for m in range(ws.m):
            if not np.any(dec.chi[:, m] > 0):
                continue   # the equality is vacuous on a server nobody uses
            used = float(np.dot(dec.chi[:, m], dec.b[:, m]))
            assert used == pytest.approx(ws.b_max[m], rel=1e-8)
            used_f = float(np.dot(dec.chi[:, m], dec.f_edge[:, m]))
            assert used_f == pytest.approx(ws.f_max_edge[m], rel=1e-8)

    def test_two_user_single_server_near_grid_optimum(self):
        from grid_oracle import grid_min_fixed_chi

        sc = toy_scenario(n=2, m=1, seed=15)
        ws = Workspace(sc)
        chi = np.ones((2, 1))
        dec, _, _ = ao_solve(sc, chi)
        h_solver = ws.objective(dec)
        best = grid_min_fixed_chi(ws, chi, pts=20)
        assert h_solver <= best * 1.05

    def test_oracle_equivalence_over_seeds(self):
        from edgesplit.scenario_io import GenParams, generate
        from grid_oracle import grid_min_fixed_chi

        chi = np.ones((2, 1))
        hits = 0
        for seed in range(50):
            sc = generate(GenParams(n_users=2, n_servers=1, rng_seed=500 + seed))
            ws = Workspace(sc)
            dec, _, _ = ao_solve(sc, chi)
            hits += ws.objective(dec) <= 1.05 * grid_min_fixed_chi(ws, chi, pts=20)
        assert hits >= 45


class TestKktResidual:
    def test_tiny_at_converged_point(self):
        sc = toy_scenario(n=2, m=2, seed=16)
        chi = random_interior_decision(sc, np.random.default_rng(11)).chi
        dec, _, resid = ao_solve(sc, chi)
        ws = Workspace(sc)
        assert resid <= 1e-5 * (1 + abs(ws.objective(dec)))

    def test_increases_under_perturbation(self):
        sc = toy_scenario(n=2, m=2, seed=17)
        chi = random_interior_decision(sc, np.random.default_rng(12)).chi
        dec, _, resid = ao_solve(sc, chi)
        pert = dec.copy()
        interior = (pert.alpha > 1.01) & (pert.alpha < Workspace(sc).alpha_cap - 0.01)
        if not interior.any():
            pert.f_user = pert.f_user * 0.99
        else:
            pert.alpha = np.where(interior, pert.alpha * 1.01, pert.alpha)
        assert kkt_residual(sc, pert) > resid

    def test_exact_zero_at_analytic_single_variable_optimum(self):
        # delay-only instance: every variable rails at a bound or equality
        sc = toy_scenario(n=1, m=1, seed=18, weights=(1.0, 1e-300, 1e-300))
        ws = Workspace(sc)
        chi = np.array([[1.0]])
        dec, _, resid = ao_solve(sc, chi)
        assert resid <= 1e-10
