import os

import pytest
from hypothesis import HealthCheck, settings

from remshift.cli import main
from remshift.fixture import fixture_dir

settings.register_profile("default", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=300,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def bike_run(tmp_path_factory):
    """Fit of the bundled bike fixture through the command line, run once per session."""
    out = tmp_path_factory.mktemp("bike_fit")
    code = main(["fit", "--config", str(fixture_dir() / "config.yaml"), "--out-dir", str(out)])
    return code, out
