from __future__ import annotations

import numpy as np
import pytest

from junctionforge.field import DriveConfig, VoltageAssignment, build_basis
from junctionforge.layout import LayoutDims, build_x_junction
from junctionforge.pseudo import IonSpecies


@pytest.fixture(scope="session")
def dims():
    return LayoutDims()


@pytest.fixture(scope="session")
def baseline_layout(dims):
    return build_x_junction(dims)


@pytest.fixture(scope="session")
def basis(baseline_layout):
    return build_basis(baseline_layout)


@pytest.fixture(scope="session")
def drive():
    return DriveConfig.from_mhz(30.0)


@pytest.fixture(scope="session")
def ion():
    return IonSpecies()


@pytest.fixture(scope="session")
def uniform_100(baseline_layout, drive):
    return VoltageAssignment.uniform(baseline_layout, 100.0, drive)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240601)
