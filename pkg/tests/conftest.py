import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from helpers import keypair_512, keypair_1024, toy_keypair  # noqa: E402


@pytest.fixture(scope="session")
def toy_keys():
    return toy_keypair()


@pytest.fixture(scope="session")
def keys_512():
    return keypair_512()


@pytest.fixture(scope="session")
def keys_1024():
    return keypair_1024()
