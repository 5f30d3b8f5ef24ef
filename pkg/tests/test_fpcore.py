import numpy as np
import pytest

from edgesplit.errors import DomainError, PoleError
from edgesplit.fpcore import (
    AuxVars,
    a_of,
    aux_optimal,
    b_of,
    grad_objective,
    grad_surrogate,
    surrogate_value,
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
    random_interior_decision,
)

from conftest import toy_scenario, unit_1x1_scenario
from fd import BLOCKS, finite_diff, max_rel_err


def _psi_cancelling_scenario(wt, we, kappa1=1.0, kappa2=1.0):
    """cores*flops_per_cycle = 84 cancels psi(d=1,B=1,h=1), so the per-layer
    cost is literally wt/f + we*kappa*f^2."""
    llm = LlmConfig(total_layers=8, batch_size=1, hidden_dim=1, lipschitz=1.0)
    user = UserDevice(tokens=1, cores=84.0, flops_per_cycle=1.0, f_max=4.0,
                      p_max=2.0, kappa1=kappa1, dataset_size=10.0)
    server = EdgeServer(cores=84.0, flops_per_cycle=1.0, f_max=8.0, b_max=4.0,
                        kappa2=kappa2)
    return Scenario(llm, (user,), (server,), Channel(np.array([[1.0]]), 1.0),
                    Weights(wt, we, 1.0))


class TestPerLayerCosts:
    def test_delay_only(self):
        sc = _psi_cancelling_scenario(1.0, 1e-300)
        assert a_of(sc.users[0], 2.0, sc.llm, sc.weights) == pytest.approx(0.5)

    def test_energy_only(self):
        sc = _psi_cancelling_scenario(1e-300, 1.0, kappa1=1.0)
        assert a_of(sc.users[0], 2.0, sc.llm, sc.weights) == pytest.approx(4.0)

    def test_edge_mirror(self):
        sc = _psi_cancelling_scenario(1.0, 1e-300)
        assert b_of(sc.servers[0], 2.0, 1, sc.llm, sc.weights) == pytest.approx(0.5)

    def test_rejects_nonpositive_f(self):
        sc = _psi_cancelling_scenario(1.0, 1.0)
        with pytest.raises(DomainError):
            a_of(sc.users[0], 0.0, sc.llm, sc.weights)

    def test_strictly_convex_in_f(self):
        sc = _psi_cancelling_scenario(1.0, 1.0)
        f = np.linspace(0.2, 4.0, 80)
        vals = np.array([a_of(sc.users[0], x, sc.llm, sc.weights) for x in f])
        assert np.all(vals[:-2] + vals[2:] > 2 * vals[1:-1])


class TestAuxOptimal:
    def test_z_formula(self):
        # A(f) = 2 at f = 0.5 under delay-only weights; z = A / (2 alpha) = 1
        sc = _psi_cancelling_scenario(1.0, 1e-300)
        dec = Decision([1.0], [1.0], [[4.0]], [0.5], [[4.0]], [[1.0]])
        aux = aux_optimal(sc, dec)
        assert aux.z[0] == pytest.approx(1.0, rel=1e-12)

    def test_nu_formula_and_am_gm(self):
        # payload*p = 3, rate = 2 -> nu = 1/12 and the split term equals p*s/r
        sc = toy_scenario(n=1, m=1, seed=0)
        ws = Workspace(sc)
        dec = random_interior_decision(sc, np.random.default_rng(0),
                                       chi=np.array([[1.0]]))
        aux = aux_optimal(ws, dec)
        r = ws.rates(dec.p, dec.b)[0, 0]
        ps = dec.p[0] * ws.payload[0]
        assert aux.nu[0, 0] == pytest.approx(1.0 / (2 * ps * r), rel=1e-12)
        nu = aux.nu[0, 0]
        split = ps**2 * nu + 1.0 / (4 * r**2 * nu)
        assert split == pytest.approx(ps / r, rel=1e-12)
        # the numeric microcase from first principles
        nu0 = 1.0 / (2 * 3.0 * 2.0)
        assert nu0 == pytest.approx(1 / 12)
        assert 9 * nu0 + 1 / (4 * 4 * nu0) == pytest.approx(1.5)

    def test_q_formula(self):
        # B(f) = 4 at f = 2 under energy-only weights; layers - alpha = 2 -> q = 1
        sc = _psi_cancelling_scenario(1e-300, 1.0)
        dec = Decision([6.0], [1.0], [[4.0]], [1.0], [[2.0]], [[1.0]])
        aux = aux_optimal(sc, dec)
        assert aux.q[0, 0] == pytest.approx(1.0, rel=1e-12)

    def test_boundary_rejected(self):
        sc = toy_scenario(n=1, m=1, seed=0)
        dec = random_interior_decision(sc, np.random.default_rng(0),
                                       chi=np.array([[1.0]]))
        dec.p[0] = 0.0
        with pytest.raises((PoleError, DomainError)):
            aux_optimal(sc, dec)


class TestSurrogateIdentity:
    def test_equals_objective_at_optimal_aux(self):
        sc = toy_scenario(n=5, m=3, seed=2)
        ws = Workspace(sc)
        rng = np.random.default_rng(7)
        for _ in range(1000):
            dec = random_interior_decision(sc, rng)
            h = ws.objective(dec)
            k = surrogate_value(ws, dec, aux_optimal(ws, dec))
            assert abs(k - h) <= 1e-9 * (1 + abs(h))

    def test_majorizes_for_any_aux(self):
        sc = toy_scenario(n=4, m=2, seed=3)
        ws = Workspace(sc)
        rng = np.random.default_rng(8)
        for _ in range(300):
            dec = random_interior_decision(sc, rng)
            aux = AuxVars(z=rng.uniform(0.05, 5, ws.n),
                          nu=rng.uniform(0.05, 5, (ws.n, ws.m)),
                          q=rng.uniform(0.05, 5, (ws.n, ws.m)))
            assert surrogate_value(ws, dec, aux) >= ws.objective(dec) - 1e-12

    def test_perturbed_aux_strictly_above(self):
        sc = toy_scenario(n=3, m=2, seed=4)
        ws = Workspace(sc)
        dec = random_interior_decision(sc, np.random.default_rng(9))
        aux = aux_optimal(ws, dec)
        aux.z = aux.z * 2.0
        assert surrogate_value(ws, dec, aux) > ws.objective(dec)

    def test_hand_expansion_1x1(self):
        sc = unit_1x1_scenario()
        dec = Decision([1.0], [2.0], [[50.0]], [2.0], [[3.0]], [[1.0]])
        z, nu, q = 0.7, 0.013, 1.1
        aux = AuxVars(np.array([z]), np.array([[nu]]), np.array([[q]]))
        a_val = 1.0 * 84.0 / 2.0 + 1.0 * 1.0 * 4.0 * 84.0   # wt psi/f + we k1 f^2 psi
        b_val = 1.0 * 84.0 / 3.0 + 1.0 * 1.0 * 9.0 * 84.0
        r = 50.0 * np.log2(1 + 25.0 * 2.0 / (1.0 * 50.0))
        ps = 2.0 * 1.0
        pole = 2.0 / (4.0 * 0.5)
        expected = (1.0 * z + a_val**2 / (4 * z)
                    + 1.0 * (ps**2 * nu + 1.0 / (4 * r**2 * nu))
                    + 1.0 * q + b_val**2 / (4 * q)
                    + pole)
        assert surrogate_value(sc, dec, aux) == pytest.approx(expected, rel=1e-12)

    def test_nonpositive_aux_rejected(self):
        sc = toy_scenario(n=2, m=2, seed=5)
        ws = Workspace(sc)
        dec = random_interior_decision(sc, np.random.default_rng(10))
        aux = aux_optimal(ws, dec)
        aux.q = aux.q * 0.0
        with pytest.raises(DomainError):
            surrogate_value(ws, dec, aux)


class TestGradients:
    def test_user_freq_component_vanishes_at_balance(self):
        sc = toy_scenario(n=1, m=1, seed=6, weights=(1.0, 1.0, 1.0), kappa1=0.5)
        ws = Workspace(sc)
        dec = random_interior_decision(sc, np.random.default_rng(11),
                                       chi=np.array([[1.0]]))
        f_star = (ws.wt / (2 * ws.kappa1[0] * ws.we)) ** (1 / 3)
        dec.f_user[0] = f_star
        aux = aux_optimal(ws, dec)
        g = grad_surrogate(ws, dec, aux)
        assert abs(g.d_f_user[0]) < 1e-12

    def test_alpha_component_zero_when_costs_balance(self):
        # same per-layer cost locally and at the server, no stability weight
        llm = LlmConfig(total_layers=8, batch_size=1, hidden_dim=1, lipschitz=1.0)
        user = UserDevice(tokens=1, cores=84.0, flops_per_cycle=1.0, f_max=4.0,
                          p_max=2.0, kappa1=1.0, dataset_size=10.0)
        server = EdgeServer(cores=84.0, flops_per_cycle=1.0, f_max=8.0,
                            b_max=4.0, kappa2=1.0)
        sc = Scenario(llm, (user,), (server,),
                      Channel(np.array([[1.0]]), 1.0), Weights(1.0, 1.0, 1e-300))
        dec = Decision([3.0], [1.0], [[4.0]], [1.7], [[1.7]], [[1.0]])
        g = grad_objective(sc, dec)
        assert abs(g.d_alpha[0]) < 1e-12

    def test_finite_difference_certification(self):
        sc = toy_scenario(n=3, m=2, seed=7)
        ws = Workspace(sc)
        rng = np.random.default_rng(13)
        for _ in range(25):
            dec = random_interior_decision(sc, rng)
            aux = aux_optimal(ws, dec)
            fd_h = finite_diff(lambda d: ws.objective(d), dec)
            fd_k = finite_diff(lambda d: surrogate_value(ws, d, aux), dec)
            gh = grad_objective(ws, dec)
            gk = grad_surrogate(ws, dec, aux)
            for name in BLOCKS:
                mask = None if fd_h[name].ndim == 1 else dec.chi > 0
                assert max_rel_err(getattr(gh, "d_" + name), fd_h[name], mask) < 1e-5
                assert max_rel_err(getattr(gk, "d_" + name), fd_k[name], mask) < 1e-5

    def test_gradient_identity_at_optimal_aux(self):
        sc = toy_scenario(n=4, m=3, seed=8)
        ws = Workspace(sc)
        rng = np.random.default_rng(14)
        for _ in range(200):
            dec = random_interior_decision(sc, rng)
            gh = grad_objective(ws, dec)
            gk = grad_surrogate(ws, dec, aux_optimal(ws, dec))
            scale = 1.0 + gh.max_abs()
            for name in BLOCKS:
                diff = np.max(np.abs(getattr(gh, "d_" + name) - getattr(gk, "d_" + name)))
                assert diff <= 1e-8 * scale

    def test_boundary_point_rejected(self):
        sc = toy_scenario(n=2, m=2, seed=9)
        dec = random_interior_decision(sc, np.random.default_rng(15))
        dec.f_user[0] = 0.0
        with pytest.raises(DomainError):
            grad_objective(sc, dec)


class TestConvexity:
    def test_midpoint_convexity_along_segments(self):
        sc = toy_scenario(n=3, m=2, seed=10)
        ws = Workspace(sc)
        rng = np.random.default_rng(16)
        chi = random_interior_decision(sc, rng).chi
        for _ in range(200):
            d1 = random_interior_decision(sc, rng, chi=chi)
            d2 = random_interior_decision(sc, rng, chi=chi)
            aux = aux_optimal(ws, d1)
            mid = d1.copy()
            for name in BLOCKS:
                setattr(mid, name, 0.5 * (getattr(d1, name) + getattr(d2, name)))
            k1 = surrogate_value(ws, d1, aux)
            k2 = surrogate_value(ws, d2, aux)
            km = surrogate_value(ws, mid, aux)
            assert km <= 0.5 * (k1 + k2) + 1e-10 * (1 + abs(k1) + abs(k2))
