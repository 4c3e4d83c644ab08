"""
Shared kernels. Small grids are built once per session; the long-horizon ones
only when a slow test asks for them.

"""

import pytest

from src.model.kernel import build_kernel
from src.utils.numerics import TimeGrid


@pytest.fixture(autouse=True)
def _isolated_cache(tmp_path_factory, monkeypatch):
    monkeypatch.setenv("MFOU_CACHE_DIR", str(tmp_path_factory.getbasetemp() / "kernel_cache"))
    monkeypatch.setenv("MFOU_LOG_DIR", str(tmp_path_factory.getbasetemp() / "runs"))


@pytest.fixture(scope="session")
def kernel_h07():
    """H=0.7 on [0, 10], dt=0.05"""
    return build_kernel(TimeGrid(10.0, 200), 0.7)


@pytest.fixture(scope="session")
def kernel_h03():
    return build_kernel(TimeGrid(10.0, 200), 0.3)


@pytest.fixture(scope="session")
def long_kernel_h07():
    """H=0.7 on [0, 200], dt=0.2; restrict() gives the shorter horizons"""
    return build_kernel(TimeGrid(200.0, 1000), 0.7)


@pytest.fixture(scope="session")
def long_kernel_h03():
    return build_kernel(TimeGrid(200.0, 1000), 0.3)
