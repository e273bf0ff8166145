import numpy as np
import pytest

from darkbell.qops import HilbertSpec
from darkbell.scheme import SchemeParams

# reference coupling set used throughout: carrier 26 krad/s, sideband
# 20 krad/s, temporary-level sideband 1e6 rad/s decaying at 1e8 /s
REF = dict(omega=26e3, omega_r=20e3, omega_rp=1e6, gamma_s=1.0, gamma_sp=1e8)


def ref_params(**overrides) -> SchemeParams:
    kw = dict(REF)
    kw.update(overrides)
    return SchemeParams(**kw)


@pytest.fixture
def small_spec() -> HilbertSpec:
    return HilbertSpec(internal_levels=2, n_motional=6)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240811)
