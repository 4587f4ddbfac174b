"""Shared fixtures. Expensive objects (spectra, mode families) are built once per session."""
import pytest

from pipeflow.model import validate_params
from pipeflow.modes import biorthogonal_duals, modal_family
from pipeflow.spectrum import find_spectrum


@pytest.fixture(scope="session")
def default_params():
    return validate_params(10.0, 1.0, 1.0, 0.5)


@pytest.fixture(scope="session")
def conservative_params():
    return validate_params(10.0, 0.0, 0.0, 0.5)


@pytest.fixture(scope="session")
def default_spectrum(default_params):
    return find_spectrum(default_params, 40)


@pytest.fixture(scope="session")
def conservative_spectrum(conservative_params):
    return find_spectrum(conservative_params, 22)


@pytest.fixture(scope="session")
def default_family(default_params, default_spectrum):
    return modal_family(default_spectrum, default_params, 20)


@pytest.fixture(scope="session")
def default_basis(default_params, default_family):
    return biorthogonal_duals(default_family, default_params)


@pytest.fixture(scope="session")
def conservative_family(conservative_params, conservative_spectrum):
    return modal_family(conservative_spectrum, conservative_params, 20)


@pytest.fixture(scope="session")
def conservative_basis(conservative_params, conservative_family):
    return biorthogonal_duals(conservative_family, conservative_params)


@pytest.fixture(scope="session")
def default_profile(default_family):
    from pipeflow.evolution import modal_profile
    return modal_profile(default_family, 20)


@pytest.fixture(scope="session")
def default_mol(default_params, default_profile):
    """Method-of-lines run from the 20-mode profile to t = 1."""
    from pipeflow.evolution import evolve_mol
    return evolve_mol(default_profile, default_params, 1.0, 1e-5)


@pytest.fixture(scope="session")
def conservative_mol(conservative_params, conservative_family):
    """Method-of-lines run at eta = kappa = 0 to t = 5."""
    from pipeflow.evolution import evolve_mol, modal_profile
    x0 = modal_profile(conservative_family, 20, decay=3.0)
    return evolve_mol(x0, conservative_params, 5.0, 1e-4)
