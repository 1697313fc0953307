import pytest

from dpn.autodiff.tensor import reset_tape
from dpn.config.settings import settings


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: convergence runs, enabled with DPN_RUN_SLOW=1")


def pytest_collection_modifyitems(config, items):
    if settings.run_slow:
        return
    skip = pytest.mark.skip(reason="set DPN_RUN_SLOW=1 to run convergence tests")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(autouse=True)
def clean_tape():
    reset_tape()
    yield
    reset_tape()
