import time

import pytest

from halodar import orbits
from halodar.params import SystemParams


@pytest.fixture(scope="session")
def timings():
    return {}


@pytest.fixture(scope="session")
def params():
    return SystemParams()


@pytest.fixture(scope="session")
def orbit(timings):
    start = time.perf_counter()
    result = orbits.build_gateway_orbit()
    timings["orbit_build_s"] = time.perf_counter() - start
    return result


@pytest.fixture(scope="session")
def campaign(orbit, timings):
    events = orbits.default_separation_events()
    start = time.perf_counter()
    result = orbits.run_separation_campaign(orbit, events, horizon_days=40.0,
                                            recontact_radius_km=100.0, tol=1e-12)
    timings["campaign_s"] = time.perf_counter() - start
    return result


@pytest.fixture(scope="session")
def campaign_events():
    return orbits.default_separation_events()
