import os

import pytest
from hypothesis import HealthCheck, settings

from wgchaos.params import generate_scatterers, params_for_model
from wgchaos.spectrum import SolverConfig, load_or_scan

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=400)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def unit_cache(tmp_path_factory):
    return tmp_path_factory.mktemp("spectra")


def _spectrum(cache, model, s, v, seed, alpha_max):
    params = params_for_model(model)
    scat = generate_scatterers(model, s, v, seed)
    return load_or_scan(params, scat, alpha_max, SolverConfig(), cache)


@pytest.fixture(scope="session")
def make_spectrum(unit_cache):
    def make(model="nonsym", s=3, v=1e6, seed=1003, alpha_max=400):
        return _spectrum(unit_cache, model, s, v, seed, alpha_max)
    return make


@pytest.fixture(scope="session")
def nonsym4(make_spectrum):
    return make_spectrum("nonsym", 4, 1e6, 1004, 1200)
