"""Shared fixtures for the suite: cheap ones only.

The expensive trained-model fixtures live in test_acceptance.py, resolved
through tests/cachelib.py so a populated .cache/acceptance/ makes the whole
suite fast while a cold cache stays correct (just slow).
"""

import numpy as np
import pytest

from soundglyph.core import make_linear_schedule, make_rng


@pytest.fixture(scope="session")
def schedule():
    return make_linear_schedule()


@pytest.fixture()
def rng():
    return make_rng(7)


@pytest.fixture(scope="session")
def tiny_canvas():
    """A fixed (1, 32, 128) canvas in [0, 1] for plumbing tests."""
    g = make_rng(11).random((1, 32, 128))
    g.flags.writeable = False
    return g
