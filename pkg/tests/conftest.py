"""Shared fixtures: one small simulated ensemble reused across test modules."""

import numpy as np
import pytest

from kpzlab.initial import StepFunction
from kpzlab.simulate import make_geometry, observable_plan, simulate_ensemble

SMALL_BETA = 2.0 ** 0.5


@pytest.fixture(scope="session")
def small_geom():
    return make_geometry(128, z_window=2.0, z_step=0.05,
                         x_min=-0.75, x_max=0.75, x_step=0.25)


@pytest.fixture(scope="session")
def small_plan(small_geom):
    phi1 = StepFunction([0.0, 0.5], [1.0])
    phi2 = StepFunction([0.0, 0.5], [1.0])
    return observable_plan(phi1, phi2, [1.0], small_geom.z_grid, small_geom.x_grid)


@pytest.fixture(scope="session")
def small_store(small_geom, small_plan):
    return simulate_ensemble(small_geom, SMALL_BETA, n_slices=60,
                             paths_per_slice=20, seed=777, plan=small_plan)
