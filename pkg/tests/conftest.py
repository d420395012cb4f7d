import sys
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent
SAMPLE_SPACES = REPO_ROOT / "sample_spaces"
FIXTURES = REPO_ROOT / "protocol_fixtures"
GOLDEN = Path(__file__).resolve().parent / "golden"
STUB_RUNNER = Path(__file__).resolve().parent / "stub_runner.py"


@pytest.fixture(scope="session")
def sample_spaces_dir():
    return SAMPLE_SPACES


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def golden_dir():
    return GOLDEN


@pytest.fixture(scope="session")
def stub_runner_path():
    return STUB_RUNNER


def stub_runner_argv(mode: str, *args: str) -> list[str]:
    return [sys.executable, str(STUB_RUNNER), mode, *args]


def pytest_runtest_logreport(report):
    # One visible pass/fail line per acceptance criterion.
    if report.when == "call" and "test_acceptance" in report.nodeid:
        status = "PASS" if report.passed else "FAIL"
        name = report.nodeid.split("::")[-1]
        print(f"\nACCEPTANCE {status}: {name}", flush=True)
