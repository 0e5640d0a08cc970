import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cpmidec import _kernels


@pytest.fixture(scope="session", autouse=True)
def kernel_warmup():
    """Compile JIT kernels once so timed acceptance sections measure work,
    not compilation."""
    _kernels.warmup()
    yield


@pytest.fixture(scope="session")
def repo_root() -> Path:
    return Path(__file__).resolve().parent.parent
