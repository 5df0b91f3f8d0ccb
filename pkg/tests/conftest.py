from __future__ import annotations

import pytest

from ponqkd import calibrate, odn, spectral


@pytest.fixture(scope="session")
def cal():
    return calibrate.load_calibration()


@pytest.fixture(scope="session")
def topo():
    return odn.PonTopology()


@pytest.fixture(scope="session")
def link(cal):
    return cal.link()


@pytest.fixture(scope="session")
def spad(cal):
    return cal.spad()


@pytest.fixture(scope="session")
def profile(cal):
    return cal.profile()


@pytest.fixture(scope="session")
def ngpon2(cal):
    return spectral.build_channel_plan("NGPON2", 1310.55, ngpon2_power_dbm=cal.ngpon2_power_dbm)


@pytest.fixture(scope="session")
def gpon():
    return spectral.build_channel_plan("GPON", 1550.12)
