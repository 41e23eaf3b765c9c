"""Shared fixtures.  The expensive runs (reference trajectories, batched
sensitivity integrals) are session-scoped and reused by the unit tests and
the acceptance suite alike."""

from __future__ import annotations

import numpy as np
import pytest

from oscerr.estimator import (
    elementary_integrals_numeric,
    measure_global_error,
    reference_trajectory,
)
from oscerr.oscillators import EmdenFowlerProblem, ef_system, fit_action_angle, wn_build
from oscerr.rk import get_method, integrate
from oscerr.trees import trees_upto


@pytest.fixture(scope="session")
def ef_prob():
    return EmdenFowlerProblem(3, 1.0, 1.0, 0.0)


@pytest.fixture(scope="session")
def ef_sys(ef_prob):
    return ef_system(ef_prob)


@pytest.fixture(scope="session")
def wn3():
    return wn_build(3)


@pytest.fixture(scope="session")
def elint_batch(ef_prob, ef_sys):
    """Trajectory plus elementary integrals for all trees of order 2..6,
    integrated to t = 1000 at a fine step."""
    trees = [t for t in trees_upto(6) if t.order >= 2]
    traj, integrals = elementary_integrals_numeric(
        ef_sys, trees, ef_prob.n, ef_prob.nu, ef_prob.initial_state(),
        0.0, 1000.0, 5e-4, 0.01,
    )
    return traj, integrals


@pytest.fixture(scope="session")
def fitted_ref(ef_prob, wn3, elint_batch):
    """Reference oscillation with (c1, c2) fitted from the fine trajectory."""
    traj, _ = elint_batch
    c1, c2 = fit_action_angle(ef_prob, traj, wn3)
    return wn3.with_fit(c1, c2)


@pytest.fixture(scope="session")
def ef_reference_2000(ef_sys, ef_prob):
    """Fourth-order reference run to t = 2000 at h = 1e-4, sampled at 0.02."""
    return reference_trajectory(ef_sys, ef_prob.initial_state(), 0.0, 2000.0, 0.02)


@pytest.fixture(scope="session")
def runge2_measurement_2000(ef_sys, ef_prob, ef_reference_2000):
    """Global error of the second-order Runge method at h = 1/1000 on [0, 2000]."""
    return measure_global_error(
        get_method("runge2"), ef_sys, ef_prob.initial_state(),
        0.0, 1e-3, 2000.0, 0.02, ref_traj=ef_reference_2000,
    )
