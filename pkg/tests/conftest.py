import numpy as np
import pytest

from shuttlesim.model import EngineParams, build_operator_set


@pytest.fixture(scope="session")
def small_params():
    return EngineParams(dim=10, gamma=1.5)


@pytest.fixture(scope="session")
def small_ops(small_params):
    return build_operator_set(small_params)


@pytest.fixture(scope="session")
def fixed_ops():
    return build_operator_set(EngineParams(dim=16, gamma=0.8, model="fixed_charge", n_e=1))


def random_density(n, seed, rank=None):
    """Random full-rank density matrix (Wishart normalised)."""
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, rank or n)) + 1j * rng.normal(size=(n, rank or n))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240811)
