import numpy as np
import pytest

from spinldp import chain_algebra as ca
from spinldp import states as st

SZ = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SY = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
ID2 = np.eye(2, dtype=complex)


def rand_herm(dim, rng, norm=1.0):
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    h = (g + g.conj().T) / 2.0
    return h * (norm / np.linalg.norm(h, 2))


def rand_psd(dim, rng, trace=1.0):
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    p = g @ g.conj().T
    return p * (trace / np.trace(p).real)


@pytest.fixture(scope="session")
def sigma_z_interaction():
    return ca.one_site(SZ)


@pytest.fixture(scope="session")
def ising_pair():
    return ca.Interaction(2, (((0, 1), np.kron(SZ, SZ)),))


@pytest.fixture(scope="session")
def tfi():
    """Transverse-field Ising: sigma_z x sigma_z pair term plus sigma_x field."""
    return ca.Interaction(2, (((0, 1), np.kron(SZ, SZ)), ((0,), SX)))


@pytest.fixture(scope="session")
def nn_pair_half():
    return ca.Interaction(2, (((0, 1), 0.5 * np.kron(SZ, SZ)),))


@pytest.fixture(scope="session")
def primitive_triple():
    """Frozen random primitive triple, b = d = 2, channel gap about 0.49."""
    return st.random_triple(2, 2, 3, np.random.default_rng(7))


@pytest.fixture(scope="session")
def product_half_triple():
    return st.product_triple(ID2 / 2.0)
