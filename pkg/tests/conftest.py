import numpy as np
import pytest

from gfgr.core import EnergyBasis, random_density_matrix, random_hermitian


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_instance(rng, dim, scale=0.3, energy_span=2.0):
    """Sorted random energies, random Hermitian coupling and a random full-rank state."""
    basis = EnergyBasis(tuple(np.sort(rng.uniform(0.0, energy_span, size=dim))))
    return basis, random_hermitian(dim, rng, scale), random_density_matrix(dim, rng)


def report(label, ok, detail=""):
    """One status line per acceptance criterion."""
    print(f"\n{label}: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
