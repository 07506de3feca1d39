# -*- coding: utf-8 -*-
"""

Shared fixtures.

"""

import pytest

from spikeutils.config import reset_config


@pytest.fixture(autouse=True)
def default_config():
    """Run every test with the packaged default config"""
    reset_config()
    yield
    reset_config()
