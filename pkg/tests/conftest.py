"""Shared fixtures and the acceptance-suite summary hook."""

from __future__ import annotations

import numpy as np
import pytest

from spheresfm.fixtures import write_six_camera_fixture, write_two_view_fixture


@pytest.fixture(scope="session")
def two_view_dir(tmp_path_factory):
    """Rendered two-view fixture project, built once per session."""
    path = tmp_path_factory.mktemp("fixtures") / "two_view"
    write_two_view_fixture(path, seed=5)
    return path


@pytest.fixture(scope="session")
def six_camera_dir(tmp_path_factory):
    """Rendered six-camera fixture project, built once per session."""
    path = tmp_path_factory.mktemp("fixtures") / "six_camera"
    write_six_camera_fixture(path, seed=11)
    return path


@pytest.fixture()
def rng():
    return np.random.default_rng(0)


# -- acceptance summary -------------------------------------------------------

_acceptance_reports: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and report.when == "call":
        _acceptance_reports[report.nodeid] = report.outcome
    elif (
        "test_acceptance.py" in report.nodeid
        and report.when == "setup"
        and report.outcome != "passed"
    ):
        _acceptance_reports[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_reports:
        return
    try:
        from test_acceptance import CRITERIA
    except ImportError:
        CRITERIA = {}
    terminalreporter.section("acceptance criteria")
    for nodeid in sorted(_acceptance_reports):
        outcome = _acceptance_reports[nodeid]
        name = nodeid.split("::")[-1]
        label = ""
        for num, text in CRITERIA.items():
            if f"criterion_{num:02d}" in name:
                label = f"  {text}"
                break
        status = "PASS" if outcome == "passed" else outcome.upper()
        terminalreporter.write_line(f"[{status}] {name}{label}")
