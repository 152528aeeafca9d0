import pytest

from hover_es.species import BUNDLED_SPECIES, load_species


@pytest.fixture(scope="session")
def all_species():
    return {name: load_species(name) for name in BUNDLED_SPECIES}


@pytest.fixture(scope="session")
def hawkmoth(all_species):
    return all_species["hawkmoth"]


@pytest.fixture(scope="session")
def bumblebee(all_species):
    return all_species["bumblebee"]
