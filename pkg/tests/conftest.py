import numpy as np
import pytest

from edgesplit.model import (
    Channel,
    EdgeServer,
    LlmConfig,
    Scenario,
    UserDevice,
    Weights,
)


def toy_scenario(n=3, m=2, seed=0, weights=(1.0, 1.0, 1.0), layers=8,
                 kappa1=0.05, kappa2=0.02, eta=1.0):
    """Small scenario with O(1) parameter magnitudes for tight tolerance tests."""
    rng = np.random.default_rng(seed)
    llm = LlmConfig(total_layers=layers, batch_size=2, hidden_dim=3, lipschitz=1.0)
    users = tuple(
        UserDevice(tokens=int(rng.integers(2, 6)), cores=2.0, flops_per_cycle=1.5,
                   f_max=float(rng.uniform(2, 4)), p_max=float(rng.uniform(1, 2)),
                   kappa1=kappa1, dataset_size=float(rng.integers(50, 200)))
        for _ in range(n)
    )
    servers = tuple(
        EdgeServer(cores=float(rng.uniform(4, 8)), flops_per_cycle=2.0,
                   f_max=float(rng.uniform(8, 12)), b_max=float(rng.uniform(4, 8)),
                   kappa2=kappa2)
        for _ in range(m)
    )
    gain = rng.uniform(0.5, 2.0, (n, m))
    return Scenario(llm, users, servers, Channel(gain, 0.3, eta), Weights(*weights))


def unit_1x1_scenario(weights=(1.0, 1.0, 1.0)):
    """The hand-checked single-user single-server instance.

    psi = 84 (d=1, B=1, h=1); user: C=D=1, kappa1=1, f_max 2, p_max 2;
    server: C=D=1, kappa2=1, f_max 3, b_max 50; channel g=25, sigma2=1;
    layers 2; dataset size 4.
    """
    llm = LlmConfig(total_layers=2, batch_size=1, hidden_dim=1, lipschitz=1.0)
    user = UserDevice(tokens=1, cores=1.0, flops_per_cycle=1.0, f_max=2.0,
                      p_max=2.0, kappa1=1.0, dataset_size=4.0)
    server = EdgeServer(cores=1.0, flops_per_cycle=1.0, f_max=3.0, b_max=50.0,
                        kappa2=1.0)
    return Scenario(llm, (user,), (server,), Channel(np.array([[25.0]]), 1.0),
                    Weights(*weights))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
