import os
import zlib

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

from gwbarrier.rng import rng_stream  # noqa: E402


@pytest.fixture
def rng(request):
    # one stream per test, keyed by the test name
    return rng_stream(20240611, zlib.crc32(request.node.nodeid.encode()))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
