import numpy as np
import pytest
from hypothesis import settings

from levicore import dangelo, distributions, examples, hypersurface

settings.register_profile("ci", max_examples=25, deadline=None)
settings.load_profile("ci")

WORM_SAMPLES = 6000
WORM_OPT = dangelo.OptimizerConfig(starts=2, max_evals=500, seed=0)


@pytest.fixture(scope="session")
def worm_domain():
    return examples.make_domain("worm", {"beta": 1.0})


@pytest.fixture(scope="session")
def worm_pipeline(worm_domain):
    f = worm_domain.f
    sample = hypersurface.sample_boundary(f, "param", WORM_SAMPLES)
    null = distributions.levi_null(f, sample)
    core = distributions.iterate_to_core(null)
    return {"f": f, "sample": sample, "null": null, "core": core}


@pytest.fixture(scope="session")
def quartic_pipeline():
    dom = examples.make_domain("quartic")
    sample = hypersurface.sample_boundary(dom.f, "param", 400)
    null = distributions.levi_null(dom.f, sample)
    return {"dom": dom, "f": dom.f, "sample": sample, "null": null}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
