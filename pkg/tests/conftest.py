"""Shared fixtures."""

import pytest

from svdstream.backend import active_backend, set_backend


@pytest.fixture
def restore_backend():
    """Put the kernel backend back no matter what the test did to it."""
    previous = active_backend()
    yield
    set_backend(previous)
