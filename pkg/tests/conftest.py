import pytest

from specforge.client import BackoffPolicy
from specforge.mock_server import MockInferenceServer


@pytest.fixture
def fast_backoff():
    """Backoff that never actually sleeps, for retry tests."""
    return BackoffPolicy(initial_s=0.001, cap_s=0.002, jitter=False, sleep=lambda _: None)


@pytest.fixture
def echo_server():
    with MockInferenceServer() as server:
        yield server
