import socket
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))


def _collection_reachable() -> bool:
    try:
        with socket.create_connection(("sparse.tamu.edu", 443), timeout=5):
            return True
    except OSError:
        return False


@pytest.fixture(scope="session")
def require_network():
    if not _collection_reachable():
        pytest.skip("SuiteSparse collection not reachable from this host")
