import logging

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def quiet_library_logs(caplog):
    caplog.set_level(logging.WARNING, logger='bbavector')
