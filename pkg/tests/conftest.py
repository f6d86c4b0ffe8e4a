import warnings

import pytest


@pytest.fixture(autouse=True)
def _quiet_leakage_warnings():
    # individual tests re-enable when the warning itself is under test
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="top-Fock-level population")
        yield
