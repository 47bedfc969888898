"""Shared fixtures and the opt-in switch for paper-mode runs."""

import os

import pytest

from acbounds.weight import WeightSpec, build_kernel


def pytest_collection_modifyitems(config, items):
    if os.getenv("ACBOUNDS_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="set ACBOUNDS_RUN_SLOW=1 to run paper-mode tests")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def box():
    return WeightSpec.box()


@pytest.fixture
def gaussian():
    return WeightSpec.gaussian()


@pytest.fixture
def gaussian_kernel(gaussian):
    return build_kernel(gaussian, 0.05, 64)


@pytest.fixture
def box_kernel(box):
    return build_kernel(box, 0.05, 64)
