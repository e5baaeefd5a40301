import os
import pathlib

import pytest


@pytest.fixture(scope="session")
def cli():
    path = os.environ.get("RJM_CLI")
    if not path:
        pytest.skip("RJM_CLI not set")
    return path


@pytest.fixture(scope="session")
def fixtures():
    return pathlib.Path(os.environ.get("RJM_FIXTURES", pathlib.Path(__file__).parents[1] / "fixtures"))
