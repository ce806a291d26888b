import numpy as np
import pytest

from beliefsynth.models import Box, GaussianDist, LtiSystem, rediscretize


@pytest.fixture(scope="session")
def di_raw():
    """Unmerged double integrator with the canonical noise."""
    return LtiSystem(
        A=[[1.0, 1.0], [0.0, 1.0]],
        B=[[0.5], [1.0]],
        C=[[1.0, 0.0]],
        process_noise=GaussianDist([0.0, 0.0], np.diag([0.25, 0.25])),
        meas_noise_cov=[[0.25]],
        control_box=Box([-5.0], [5.0]),
        state_domain=Box([-21.0, -21.0], [21.0, 21.0]),
    )


@pytest.fixture(scope="session")
def di_merged(di_raw):
    return rediscretize(di_raw, 2)


@pytest.fixture(scope="session")
def di_merged_sys(di_merged):
    return di_merged.as_system()
