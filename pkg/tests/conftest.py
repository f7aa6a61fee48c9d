import numpy as np
import pytest

from masspart.campaign import stream_index
from masspart.config import SUITE_SEED
from masspart.randkit import make_stream

# Unit tests use fewer replicas than the CLI suite.
N = 20_000


def replicate(fn, n=N, lane=0, seed=SUITE_SEED):
    """Apply ``fn(stream)`` to n independent replica streams and stack the results."""
    return np.array([fn(make_stream(seed, stream_index(lane, i))) for i in range(n)])


@pytest.fixture
def stream():
    return make_stream(SUITE_SEED, 0)
